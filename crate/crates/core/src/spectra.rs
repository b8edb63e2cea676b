//! Photoluminescence spectra: synthesis from the coupled model, Lorentzian
//! fitting, Q extraction and anticrossing fits over a temperature series.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cqed::{eigenmodes, rabi_splitting, CoupledSystem, TuningModel};
use crate::error::{Error, Result};
use crate::lm::{self, Problem};

/// Smallest number of samples in a spectrum.
pub const MIN_SAMPLES: usize = 16;

/// `b + A·(Γ/2)² / ((E − E0)² + (Γ/2)²)`.
#[inline]
pub fn lorentzian(e: f64, a: f64, e0: f64, fwhm: f64, b: f64) -> f64 {
    let h = 0.5 * fwhm;
    b + a * h * h / ((e - e0) * (e - e0) + h * h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending photon energies (eV).
    pub energies: Vec<f64>,
    pub intensities: Vec<f64>,
    pub temperature: Option<f64>,
}

impl Spectrum {
    pub fn validate(&self) -> Result<()> {
        let n = self.energies.len();
        if n < MIN_SAMPLES || self.intensities.len() != n {
            return Err(Error::Format(format!(
                "spectrum needs >= {MIN_SAMPLES} samples with matching columns (got {n} energies, {} intensities)",
                self.intensities.len()
            )));
        }
        if self.energies.windows(2).any(|w| !(w[1] > w[0])) || self.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Format("energies must be finite and strictly ascending".into()));
        }
        if self.intensities.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("intensities must be finite".into()));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.energies[self.energies.len() - 1] - self.energies[0]
    }

    /// Median sample spacing.
    pub fn bin(&self) -> f64 {
        let mut d: Vec<f64> = self.energies.windows(2).map(|w| w[1] - w[0]).collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// Branch amplitude proportional to its photonic weight.
    #[default]
    Photonic,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    #[serde(rename = "grid_start_eV")]
    pub grid_start: f64,
    #[serde(rename = "grid_stop_eV")]
    pub grid_stop: f64,
    pub grid_points: usize,
    /// Peak amplitude of a fully photonic branch.
    pub amplitude: f64,
    pub baseline: f64,
    /// Absolute RMS of the additive Gaussian noise.
    pub noise_rms: f64,
    /// FWHM of the Gaussian instrument response; 0 disables it.
    #[serde(rename = "resolution_fwhm_eV")]
    pub resolution_fwhm: f64,
    pub amplitude_model: AmplitudeModel,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            grid_start: 1.2790,
            grid_stop: 1.2815,
            grid_points: 1001,
            amplitude: 1.0,
            baseline: 0.0,
            noise_rms: 0.01,
            resolution_fwhm: 50e-6,
            amplitude_model: AmplitudeModel::Photonic,
            seed: 0,
        }
    }
}

pub fn energy_grid(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if !(stop > start && n >= MIN_SAMPLES) {
        return Err(Error::param(format!("energy grid needs stop > start and >= {MIN_SAMPLES} points")));
    }
    Ok((0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect())
}

/// Two-branch spectra over `temperatures` with exciton and cavity energies
/// from `tuning`; the energies in `sys` are ignored.
pub fn synthesize(sys: &CoupledSystem, tuning: &TuningModel, temperatures: &[f64], opts: &SynthOptions) -> Result<Vec<Spectrum>> {
    tuning.validate()?;
    if temperatures.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("temperatures must be strictly ascending"));
    }
    if !(opts.noise_rms >= 0.0 && opts.resolution_fwhm >= 0.0 && opts.amplitude > 0.0) {
        return Err(Error::param("need noise_rms >= 0, resolution >= 0, amplitude > 0"));
    }
    let grid = energy_grid(opts.grid_start, opts.grid_stop, opts.grid_points)?;
    let noise = Normal::new(0.0, opts.noise_rms).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let s = sys.at(tuning.exciton_energy(t)?, tuning.cavity_energy(t)?);
        s.validate()?;
        let mut y = clean_spectrum(&s, &grid, opts);
        if opts.resolution_fwhm > 0.0 {
            y = gaussian_blur(&grid, &y, opts.resolution_fwhm);
        }
        if opts.noise_rms > 0.0 {
            for v in &mut y {
                *v += noise.sample(&mut rng);
            }
        }
        out.push(Spectrum { energies: grid.clone(), intensities: y, temperature: Some(t) });
    }
    Ok(out)
}

fn clean_spectrum(sys: &CoupledSystem, grid: &[f64], opts: &SynthOptions) -> Vec<f64> {
    let m = eigenmodes(sys);
    let amp = |w: f64| match opts.amplitude_model {
        AmplitudeModel::Photonic => opts.amplitude * w,
        AmplitudeModel::Equal => opts.amplitude,
    };
    let (ap, am) = (amp(m.plus.photon_weight), amp(m.minus.photon_weight));
    grid.iter().map(|&e| lorentzian(e, ap, m.plus.energy, m.plus.fwhm, opts.baseline) + lorentzian(e, am, m.minus.energy, m.minus.fwhm, 0.0)).collect()
}

/// Convolution with a unit-area Gaussian of the given FWHM on a uniform
/// grid; the kernel is renormalized where it overhangs the grid ends.
pub fn gaussian_blur(grid: &[f64], y: &[f64], fwhm: f64) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    Blur::new(grid, fwhm).apply(y, &mut out);
    out
}

struct Blur {
    /// Spectrum of the zero-padded, wrapped kernel (already scaled by 1/len).
    kernel: Vec<Complex64>,
    norm: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: RefCell<(Vec<Complex64>, Vec<Complex64>)>,
}

impl Blur {
    fn new(grid: &[f64], fwhm: f64) -> Self {
        let n = grid.len();
        let de = (grid[n - 1] - grid[0]) / (n - 1) as f64;
        let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt() / de;
        let half = (5.0 * sigma).ceil() as usize;
        // circular convolution is exact once len >= n + half
        let len = smooth_length(n + half);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut kernel = vec![Complex64::new(0.0, 0.0); len];
        for k in 0..=half.min(len / 2) {
            let w = (-0.5 * (k as f64 / sigma).powi(2)).exp() / len as f64;
            kernel[k].re = w;
            if k > 0 {
                kernel[len - k].re = w;
            }
        }
        fwd.process(&mut kernel);
        let scratch = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let buf = RefCell::new((vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); scratch]));
        let mut blur = Self { kernel, norm: vec![1.0; n], fwd, inv, buf };
        let mut norm = vec![0.0; n];
        blur.apply(&vec![1.0; n], &mut norm);
        blur.norm = norm;
        blur
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) {
        self.apply_pair(y, None, out, None);
    }

    /// Blurs two real signals with one complex transform; the kernel is real
    /// and even, so the real and imaginary parts stay separate.
    fn apply_pair(&self, a: &[f64], b: Option<&[f64]>, out_a: &mut [f64], out_b: Option<&mut [f64]>) {
        let mut guard = self.buf.borrow_mut();
        let (buf, scratch) = &mut *guard;
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (v, &x) in buf.iter_mut().zip(a) {
            v.re = x;
        }
        if let Some(b) = b {
            for (v, &x) in buf.iter_mut().zip(b) {
                v.im = x;
            }
        }
        self.fwd.process_with_scratch(buf, scratch);
        for (v, k) in buf.iter_mut().zip(&self.kernel) {
            *v *= k.re;
        }
        self.inv.process_with_scratch(buf, scratch);
        for ((o, v), nrm) in out_a.iter_mut().zip(buf.iter()).zip(&self.norm) {
            *o = v.re / nrm;
        }
        if let Some(out_b) = out_b {
            for ((o, v), nrm) in out_b.iter_mut().zip(buf.iter()).zip(&self.norm) {
                *o = v.im / nrm;
            }
        }
    }
}

/// Smallest integer >= n whose only prime factors are 2, 3 and 5.
fn smooth_length(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut m = m;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("unbounded range")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub amplitude: f64,
    #[serde(rename = "center_eV")]
    pub center: f64,
    #[serde(rename = "fwhm_eV")]
    pub fwhm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Sorted by center energy.
    pub peaks: Vec<Peak>,
    pub baseline: f64,
    /// Parameter order: `(A, E0, Γ)` per peak, then the baseline.
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after every accepted step.
    pub cost_history: Vec<f64>,
}

impl PeakFit {
    pub fn evaluate(&self, e: f64) -> f64 {
        self.peaks.iter().fold(self.baseline, |acc, p| acc + lorentzian(e, p.amplitude, p.center, p.fwhm, 0.0))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Lower bound on fitted FWHM; `None` means one grid bin.
    #[serde(rename = "fwhm_floor_eV")]
    pub fwhm_floor: Option<f64>,
    /// Known Gaussian instrument FWHM. When set, the model is the
    /// Lorentzian sum convolved with it and the fitted widths are intrinsic.
    #[serde(rename = "resolution_fwhm_eV")]
    pub resolution_fwhm: Option<f64>,
}

struct Lorentzians<'a> {
    e: &'a [f64],
    y: &'a [f64],
    n: usize,
    blur: Option<&'a Blur>,
}

impl Problem for Lorentzians<'_> {
    fn n_params(&self) -> usize {
        3 * self.n + 1
    }

    fn n_residuals(&self) -> usize {
        self.e.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let b = p[3 * self.n];
        for (o, &e) in out.iter_mut().zip(self.e) {
            let mut v = b;
            for k in 0..self.n {
                v += lorentzian(e, p[3 * k], p[3 * k + 1], p[3 * k + 2], 0.0);
            }
            *o = v;
        }
        if let Some(blur) = self.blur {
            let model = out.to_vec();
            blur.apply(&model, out);
        }
        for (o, &y) in out.iter_mut().zip(self.y) {
            *o -= y;
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        self.lorentz_jacobian(p, jac);
        if let Some(blur) = self.blur {
            let m = self.e.len();
            let (mut ca, mut cb) = (vec![0.0; m], vec![0.0; m]);
            let cols = 3 * self.n;
            for j in (0..cols).step_by(2) {
                let ra: Vec<f64> = jac.column(j).iter().copied().collect();
                if j + 1 < cols {
                    let rb: Vec<f64> = jac.column(j + 1).iter().copied().collect();
                    blur.apply_pair(&ra, Some(&rb), &mut ca, Some(&mut cb));
                    jac.column_mut(j + 1).copy_from_slice(&cb);
                } else {
                    blur.apply(&ra, &mut ca);
                }
                jac.column_mut(j).copy_from_slice(&ca);
            }
        }
    }
}

impl Lorentzians<'_> {
    fn lorentz_jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        for (i, &e) in self.e.iter().enumerate() {
            for k in 0..self.n {
                let (a, e0, g) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
                let h2 = 0.25 * g * g;
                let d = e - e0;
                let den = d * d + h2;
                let shape = h2 / den;
                jac[(i, 3 * k)] = shape;
                jac[(i, 3 * k + 1)] = a * h2 * 2.0 * d / (den * den);
                jac[(i, 3 * k + 2)] = a * 0.5 * g * d * d / (den * den);
            }
            jac[(i, 3 * self.n)] = 1.0;
        }
    }
}

/// Local maxima ranked by topographic prominence, highest first.
pub fn prominent_maxima(y: &[f64]) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        // lowest point on each side before reaching higher ground
        let mut left = y[i];
        let mut j = i;
        while j > 0 {
            j -= 1;
            if y[j] > y[i] {
                break;
            }
            left = left.min(y[j]);
        }
        let mut right = y[i];
        let mut j = i;
        while j + 1 < n {
            j += 1;
            if y[j] > y[i] {
                break;
            }
            right = right.min(y[j]);
        }
        out.push((i, y[i] - left.max(right)));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// Least-squares sum of `n_peaks` Lorentzians on a constant baseline,
/// optionally convolved with a known instrument response.
///
/// Without `init`, peaks start at the most prominent local maxima of a
/// lightly smoothed copy (prominence above three noise RMS) with a FWHM of
/// two bins; the same centers with measured half-maximum widths are tried as
/// well and the lower-cost result is returned. With too few maxima (a
/// shoulder or an unresolved doublet) lines are added one at a time instead.
pub fn fit_peaks(spec: &Spectrum, n_peaks: usize, init: Option<&[Peak]>, opts: &FitOptions) -> Result<PeakFit> {
    spec.validate()?;
    if !(1..=4).contains(&n_peaks) {
        return Err(Error::param(format!("n_peaks must be 1..=4, got {n_peaks}")));
    }
    let y = &spec.intensities;
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateFit("flat spectrum".into()));
    }
    let bin = spec.bin();
    let floor = opts.fwhm_floor.unwrap_or(bin);
    let g_max = spec.span() / 2.0;
    if !(floor > 0.0 && floor < g_max) {
        return Err(Error::param(format!("FWHM floor {floor} must lie in (0, span/2)")));
    }
    let blur = match opts.resolution_fwhm {
        Some(r) if r > 0.0 => Some(Blur::new(&spec.energies, r)),
        Some(r) if r < 0.0 || r.is_nan() => return Err(Error::param("resolution FWHM must be >= 0")),
        _ => None,
    };
    let bounds = FitBounds { floor, g_max, baseline0: lo, blur: blur.as_ref() };
    if let Some(p) = init {
        if p.len() != n_peaks {
            return Err(Error::param(format!("{} initial peaks given for n_peaks = {n_peaks}", p.len())));
        }
        return solve(spec, p, &bounds);
    }

    let e = &spec.energies;
    let smooth = gaussian_blur(e, y, 4.0 * bin);
    let threshold = 3.0 * noise_estimate(y);
    let maxima: Vec<usize> = prominent_maxima(&smooth).into_iter().filter(|&(_, prom)| prom > threshold).map(|(i, _)| i).collect();

    let mut fits = Vec::new();
    if maxima.len() >= n_peaks {
        let two_bin: Vec<Peak> = maxima[..n_peaks].iter().map(|&i| Peak { amplitude: smooth[i] - lo, center: e[i], fwhm: 2.0 * bin }).collect();
        let measured: Vec<Peak> = two_bin.iter().zip(&maxima).map(|(p, &i)| Peak { fwhm: half_max_width(e, &smooth, i, lo).max(2.0 * bin), ..*p }).collect();
        fits.extend(solve(spec, &two_bin, &bounds));
        fits.extend(solve(spec, &measured, &bounds));
    }
    if fits.is_empty() {
        let i = maxima.first().copied().unwrap_or_else(|| argmax(&smooth));
        let first = Peak { amplitude: smooth[i] - lo, center: e[i], fwhm: half_max_width(e, &smooth, i, lo).max(2.0 * bin) };
        match grow(spec, &smooth, vec![first], n_peaks, &bounds) {
            Ok(f) => fits.push(f),
            Err(err) if fits.is_empty() => return Err(err),
            Err(_) => {}
        }
    }
    Ok(fits.into_iter().min_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm)).expect("at least one fit"))
}

/// Full width at half height above `floor`, from the narrower side.
fn half_max_width(e: &[f64], y: &[f64], i: usize, floor: f64) -> f64 {
    let half = floor + 0.5 * (y[i] - floor);
    let mut l = i;
    while l > 0 && y[l - 1] > half {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < y.len() && y[r + 1] > half {
        r += 1;
    }
    let (dl, dr) = (e[i] - e[l], e[r] - e[i]);
    if dl > 0.0 && dr > 0.0 {
        2.0 * dl.min(dr)
    } else {
        2.0 * dl.max(dr)
    }
}

/// Add lines one at a time until there are `n_peaks`, keeping the best of
/// several starts each time: a new line at the largest residual, or an
/// existing line split in two.
fn grow(spec: &Spectrum, smooth: &[f64], mut start: Vec<Peak>, n_peaks: usize, bounds: &FitBounds) -> Result<PeakFit> {
    let e = &spec.energies;
    let bin = spec.bin();
    loop {
        let f = solve(spec, &start, bounds)?;
        if f.peaks.len() == n_peaks {
            return Ok(f);
        }
        let mut model: Vec<f64> = e.iter().map(|&x| f.evaluate(x)).collect();
        if let Some(b) = bounds.blur {
            let raw = model.clone();
            b.apply(&raw, &mut model);
        }
        let resid: Vec<f64> = smooth.iter().zip(&model).map(|(v, m)| v - m).collect();
        let mut candidates = Vec::new();
        let i = argmax(&resid);
        if resid[i] > 0.0 {
            let mut c = f.peaks.clone();
            c.push(Peak { amplitude: resid[i], center: e[i], fwhm: half_max_width(e, &resid, i, 0.0).max(2.0 * bin) });
            candidates.push(c);
        }
        for j in 0..f.peaks.len() {
            let p = f.peaks[j];
            let mut c = f.peaks.clone();
            c[j] = Peak { amplitude: 0.7 * p.amplitude, center: p.center - 0.25 * p.fwhm, fwhm: 0.5 * p.fwhm };
            c.push(Peak { center: p.center + 0.25 * p.fwhm, ..c[j] });
            candidates.push(c);
        }
        let fits: Vec<PeakFit> = candidates.iter().filter_map(|c| solve(spec, c, bounds).ok()).collect();
        let best = fits
            .into_iter()
            .min_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm))
            .ok_or_else(|| Error::DegenerateFit(format!("no start converged for peak {}", start.len() + 1)))?;
        if best.peaks.len() == n_peaks {
            return Ok(best);
        }
        start = best.peaks;
    }
}

struct FitBounds<'a> {
    floor: f64,
    g_max: f64,
    baseline0: f64,
    blur: Option<&'a Blur>,
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
}

fn solve(spec: &Spectrum, start: &[Peak], fb: &FitBounds) -> Result<PeakFit> {
    let n_peaks = start.len();
    let (e_min, e_max) = (spec.energies[0], spec.energies[spec.energies.len() - 1]);
    let mut p0 = Vec::with_capacity(3 * n_peaks + 1);
    let mut bounds = Vec::with_capacity(3 * n_peaks + 1);
    for pk in start {
        p0.extend([pk.amplitude.max(0.0), pk.center, pk.fwhm.clamp(fb.floor, fb.g_max)]);
        bounds.extend([(0.0, f64::INFINITY), (e_min, e_max), (fb.floor, fb.g_max)]);
    }
    p0.push(fb.baseline0);
    bounds.push((f64::NEG_INFINITY, f64::INFINITY));

    let prob = Lorentzians { e: &spec.energies, y: &spec.intensities, n: n_peaks, blur: fb.blur };
    let sol = lm::minimize(&prob, &p0, &bounds, &lm::Options::default())?;
    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| sol.params[3 * a + 1].total_cmp(&sol.params[3 * b + 1]));
    let peaks = order.iter().map(|&k| Peak { amplitude: sol.params[3 * k], center: sol.params[3 * k + 1], fwhm: sol.params[3 * k + 2] }).collect();
    // permute covariance to the sorted order
    let idx: Vec<usize> = order.iter().flat_map(|&k| [3 * k, 3 * k + 1, 3 * k + 2]).chain([3 * n_peaks]).collect();
    let covariance = idx.iter().map(|&i| idx.iter().map(|&j| sol.covariance[i][j]).collect()).collect();
    Ok(PeakFit {
        peaks,
        baseline: sol.params[3 * n_peaks],
        covariance,
        residual_norm: (2.0 * sol.cost).sqrt(),
        converged: sol.converged,
        iterations: sol.iterations,
        cost_history: sol.cost_history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    #[serde(rename = "Q")]
    pub q: f64,
    /// First-order 1σ uncertainty from the fit covariance.
    pub sigma: f64,
}

/// `Q = E0/Γ` of one fitted peak.
pub fn extract_q(fit: &PeakFit, index: usize) -> Result<QEstimate> {
    let p = fit.peaks.get(index).ok_or_else(|| Error::param(format!("no peak {index}")))?;
    let q = p.center / p.fwhm;
    let (ie, ig) = (3 * index + 1, 3 * index + 2);
    let c = &fit.covariance;
    let rel2 = c[ie][ie] / (p.center * p.center) + c[ig][ig] / (p.fwhm * p.fwhm) - 2.0 * c[ie][ig] / (p.center * p.fwhm);
    Ok(QEstimate { q, sigma: q * rel2.max(0.0).sqrt() })
}

/// Per-temperature branch positions (eV); `None` where a branch was not found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branches {
    pub temperatures: Vec<f64>,
    pub upper: Vec<Option<f64>>,
    pub lower: Vec<Option<f64>>,
    /// Temperatures whose fits failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl Branches {
    /// Smallest upper − lower separation over temperatures with both branches.
    pub fn min_separation(&self) -> Option<f64> {
        self.upper.iter().zip(&self.lower).filter_map(|(u, l)| Some((*u)? - (*l)?)).min_by(f64::total_cmp)
    }
}

/// Fit two peaks per spectrum (one as fallback) and sort them into upper and
/// lower branches. A lone peak joins the branch whose last position is
/// closer. Spectra are fitted in parallel on the current rayon pool.
pub fn track_peaks(series: &[Spectrum], opts: &FitOptions) -> Result<Branches> {
    let found: Vec<Result<Found>> = series.par_iter().map(|spec| fit_two_or_one(spec, opts)).collect();
    let mut b = Branches { temperatures: Vec::new(), upper: Vec::new(), lower: Vec::new(), failures: Vec::new() };
    for (k, (spec, found)) in series.iter().zip(found).enumerate() {
        let t = spec.temperature.unwrap_or(k as f64);
        b.temperatures.push(t);
        let (u, l) = match found {
            Ok(Found::Two(lo, hi)) => (Some(hi), Some(lo)),
            Ok(Found::One(e)) => {
                let last_u = b.upper.iter().rev().flatten().next().copied();
                let last_l = b.lower.iter().rev().flatten().next().copied();
                match (last_u, last_l) {
                    (Some(u), Some(l)) if (e - u).abs() < (e - l).abs() => (Some(e), None),
                    (Some(_), Some(_)) => (None, Some(e)),
                    (Some(_), None) => (Some(e), None),
                    _ => (None, Some(e)),
                }
            }
            Err(err) => {
                b.failures.push((t, err.to_string()));
                (None, None)
            }
        };
        b.upper.push(u);
        b.lower.push(l);
    }
    Ok(b)
}

enum Found {
    Two(f64, f64),
    One(f64),
}

fn fit_two_or_one(spec: &Spectrum, opts: &FitOptions) -> Result<Found> {
    let noise = noise_estimate(&spec.intensities);
    if let Ok(f) = fit_peaks(spec, 2, None, opts) {
        let resolved = f.converged
            && f.peaks.iter().all(|p| p.amplitude > 3.0 * noise && p.fwhm > 2.0 * spec.bin())
            && (f.peaks[1].center - f.peaks[0].center) > spec.bin();
        if resolved {
            return Ok(Found::Two(f.peaks[0].center, f.peaks[1].center));
        }
    }
    let f = fit_peaks(spec, 1, None, opts)?;
    if !f.converged {
        return Err(Error::DegenerateFit("single-peak fit did not converge".into()));
    }
    Ok(Found::One(f.peaks[0].center))
}

/// Robust white-noise RMS from second differences (MAD based).
fn noise_estimate(y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
    d.sort_by(f64::total_cmp);
    // second difference of white noise has std σ·√6
    1.4826 * d[d.len() / 2] / 6f64.sqrt()
}

/// Which tuning parameters the anticrossing fit adjusts. `hg`, `Ex0`, `Ec0`
/// and the drift are always free; `β` is always fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreeParams {
    pub alpha: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticrossFit {
    #[serde(rename = "hg_eV")]
    pub hg: f64,
    #[serde(rename = "hg_std_eV")]
    pub hg_std: f64,
    pub tuning: TuningModel,
    #[serde(rename = "zero_detuning_T_K")]
    pub zero_detuning_t: f64,
    /// Splitting at zero detuning from the loss-corrected formula.
    #[serde(rename = "dE_eV")]
    pub splitting: f64,
    #[serde(rename = "rms_residual_eV")]
    pub rms_residual: f64,
    pub converged: bool,
    /// `(T, upper, lower)` model positions.
    pub predicted: Vec<(f64, f64, f64)>,
}

struct Anticross<'a> {
    data: Vec<(f64, Option<f64>, Option<f64>)>,
    gx: f64,
    gc: f64,
    base: &'a TuningModel,
    free: FreeParams,
    m: usize,
}

impl Anticross<'_> {
    fn model(&self, p: &[f64]) -> (f64, TuningModel) {
        let mut t = *self.base;
        let mut it = p.iter().copied();
        let hg = it.next().unwrap();
        t.exciton.e0 = it.next().unwrap();
        if self.free.alpha {
            t.exciton.alpha = it.next().unwrap();
        }
        t.cavity.ec0 = it.next().unwrap();
        t.cavity.drift = it.next().unwrap();
        (hg, t)
    }

    fn branches(&self, hg: f64, tm: &TuningModel, t: f64) -> (f64, f64) {
        let sys = CoupledSystem { ex: tm.exciton_energy(t).unwrap_or(f64::NAN), ec: tm.cavity_energy(t).unwrap_or(f64::NAN), gx: self.gx, gc: self.gc, hg };
        let m = eigenmodes(&sys);
        (m.plus.energy, m.minus.energy)
    }
}

impl Problem for Anticross<'_> {
    fn n_params(&self) -> usize {
        if self.free.alpha {
            5
        } else {
            4
        }
    }

    fn n_residuals(&self) -> usize {
        self.m
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (hg, tm) = self.model(p);
        let mut k = 0;
        for &(t, u, l) in &self.data {
            let (mu, ml) = self.branches(hg, &tm, t);
            match (u, l) {
                (Some(u), Some(l)) => {
                    out[k] = mu - u;
                    out[k + 1] = ml - l;
                    k += 2;
                }
                (Some(e), None) | (None, Some(e)) => {
                    out[k] = if (mu - e).abs() < (ml - e).abs() { mu - e } else { ml - e };
                    k += 1;
                }
                (None, None) => {}
            }
        }
    }

    fn fd_step(&self, index: usize, _value: f64) -> f64 {
        // hg, Ex0, [alpha], Ec0, drift
        let alpha_slot = self.free.alpha && index == 2;
        let drift_slot = index == self.n_params() - 1;
        if alpha_slot {
            1e-11
        } else if drift_slot {
            1e-12
        } else {
            1e-10
        }
    }
}

/// Fit `hg` and the tuning model to tracked branch positions. `init`
/// supplies starting values and the fixed `β` (and `α` when not free).
pub fn fit_anticrossing(branches: &Branches, gx: f64, gc: f64, init: &TuningModel, free: FreeParams) -> Result<AnticrossFit> {
    init.validate()?;
    if !(gx > 0.0 && gc > 0.0) {
        return Err(Error::param("Gx and Gc must be > 0"));
    }
    let data: Vec<(f64, Option<f64>, Option<f64>)> = branches
        .temperatures
        .iter()
        .zip(branches.upper.iter().zip(&branches.lower))
        .map(|(&t, (&u, &l))| (t, u, l))
        .filter(|(_, u, l)| u.is_some() || l.is_some())
        .collect();
    if data.len() < 6 {
        return Err(Error::param(format!("need >= 6 temperatures with peaks, got {}", data.len())));
    }
    let m: usize = data.iter().map(|(_, u, l)| u.is_some() as usize + l.is_some() as usize).sum();
    let (t_lo, t_hi) = (data[0].0, data[data.len() - 1].0);

    let hg0 = branches.min_separation().map_or(50e-6, |s| (s / 2.0).max(1e-6));
    let mut p0 = vec![hg0, init.exciton.e0];
    let mut bounds = vec![(0.0, 0.1), (0.0, f64::INFINITY)];
    if free.alpha {
        p0.push(init.exciton.alpha);
        bounds.push((0.0, 1e-2));
    }
    p0.extend([init.cavity.ec0, init.cavity.drift]);
    bounds.extend([(0.0, f64::INFINITY), (-1e-3, 1e-3)]);

    let prob = Anticross { data, gx, gc, base: init, free, m };
    let sol = lm::minimize(&prob, &p0, &bounds, &lm::Options::default())?;
    let (hg, tuning) = prob.model(&sol.params);
    let zero_t = tuning.zero_detuning_temperature(t_lo, t_hi).ok_or(Error::Unidentifiable)?;
    let predicted = prob
        .data
        .iter()
        .map(|&(t, _, _)| {
            let (u, l) = prob.branches(hg, &tuning, t);
            (t, u, l)
        })
        .collect();
    let splitting = rabi_splitting(&CoupledSystem { ex: 1.0, ec: 1.0, gx, gc, hg });
    Ok(AnticrossFit {
        hg,
        hg_std: sol.std_dev(0),
        tuning,
        zero_detuning_t: zero_t,
        splitting,
        rms_residual: sol.rms_residual(m),
        converged: sol.converged,
        predicted,
    })
}
