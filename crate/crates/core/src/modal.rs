//! Resonance energy, quality factor and mode volume from FDTD output.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::constants::{ev_to_hz, ev_to_nm, ev_to_omega, hz_to_ev};
use crate::error::{Error, Result};
use crate::fdtd::{FieldMap, TimeSeries};
use crate::geometry::DielectricMap;

/// Minimum analysis window for [`resonance_scan`].
pub const MIN_SCAN_SAMPLES: usize = 2048;
/// Zero-padding factor for the periodogram.
pub const PADDING: usize = 8;
/// Q values above this are reported as lower bounds.
pub const Q_CAP: f64 = 1e9;
/// Decay fits below this coefficient of determination are rejected.
pub const MIN_R_SQUARED: f64 = 0.99;
/// Largest envelope-energy rise tolerated before a series is declared multimode.
const MAX_ENVELOPE_RISE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub energy_ev: f64,
    pub freq_hz: f64,
    /// Spectral magnitude at the refined peak (arbitrary units).
    pub amplitude: f64,
}

/// Peaks of the windowed, zero-padded periodogram of `series[t_min..]`,
/// strongest first.
///
/// A peak must exceed ten times the median spectral level; peaks below
/// 1e-6 of the strongest one in power are dropped as window side lobes.
pub fn resonance_scan(series: &TimeSeries, t_min: usize) -> Result<Vec<Resonance>> {
    let window = series
        .samples
        .get(t_min..)
        .filter(|w| w.len() >= MIN_SCAN_SAMPLES)
        .ok_or_else(|| Error::param(format!("need >= {MIN_SCAN_SAMPLES} samples after t_min = {t_min}, series has {}", series.len())))?;
    if !(series.dt > 0.0) {
        return Err(Error::param("series dt must be > 0"));
    }
    let power = periodogram(window);
    let n_fft = (power.len() - 1) * 2;

    let mut sorted = power[1..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    if !(max > 0.0) {
        return Err(Error::NoResonance);
    }

    let mut peaks = Vec::new();
    for k in 2..power.len() - 1 {
        let p = power[k];
        if p > power[k - 1] && p >= power[k + 1] && p > 10.0 * median && p > 1e-6 * max {
            let (l, c, r) = (power[k - 1].ln(), p.ln(), power[k + 1].ln());
            let denom = l - 2.0 * c + r;
            let delta = if denom < 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            let log_peak = c - 0.25 * (l - r) * delta;
            let f = (k as f64 + delta) / (n_fft as f64 * series.dt);
            peaks.push(Resonance { energy_ev: hz_to_ev(f), freq_hz: f, amplitude: (0.5 * log_peak).exp() });
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoResonance);
    }
    peaks.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    Ok(peaks)
}

/// One-sided power spectrum of the mean-removed, Blackman-Harris windowed
/// signal zero-padded to a power of two at least `PADDING` times longer.
fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let n_fft = (n * PADDING).next_power_of_two();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n_fft];
    let (a0, a1, a2, a3) = (0.35875, 0.48829, 0.14128, 0.01168);
    let tau = 2.0 * std::f64::consts::PI / (n as f64 - 1.0);
    for (k, (b, &v)) in buf.iter_mut().zip(x).enumerate() {
        let t = tau * k as f64;
        let w = a0 - a1 * t.cos() + a2 * (2.0 * t).cos() - a3 * (3.0 * t).cos();
        *b = Complex::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub q: f64,
    pub r_squared: f64,
    /// Fitted slope of `ln(envelope²)` (1/s).
    pub slope: f64,
    /// True when the decay is too slow to resolve and `q` is the cap.
    pub lower_bound: bool,
    pub periods: usize,
}

/// Q from a linear fit of `ln(envelope²)` against time, where the envelope
/// is the RMS over consecutive optical periods starting at `t_min`.
/// Energy decays as `exp(-ω0 t/Q)`, so `Q = -ω0/slope`.
pub fn q_from_decay(series: &TimeSeries, e0_ev: f64, t_min: usize) -> Result<DecayFit> {
    if !(e0_ev > 0.0) {
        return Err(Error::param("resonance energy must be > 0"));
    }
    let period = 1.0 / (ev_to_hz(e0_ev) * series.dt);
    if period < 4.0 {
        return Err(Error::param(format!("{period:.2} samples per period; need >= 4")));
    }
    let x = series.samples.get(t_min..).unwrap_or(&[]);
    let env = period_energy(x, period);
    if env.len() < 8 {
        return Err(Error::param(format!("only {} optical periods after t_min; need >= 8", env.len())));
    }
    if env.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::DegenerateFit("envelope vanishes inside the analysis window".into()));
    }
    let logs: Vec<f64> = env.iter().map(|e| e.ln()).collect();
    let mut running_min = f64::INFINITY;
    for &l in &logs {
        if l > running_min + MAX_ENVELOPE_RISE.ln_1p() {
            return Err(Error::Multimode);
        }
        running_min = running_min.min(l);
    }

    let t: Vec<f64> = (0..logs.len()).map(|k| (k as f64 + 0.5) * period * series.dt).collect();
    let (slope, r_squared) = linear_fit(&t, &logs);
    let omega = ev_to_omega(e0_ev);
    let q = -omega / slope;
    if !(slope < 0.0) || q > Q_CAP {
        return Ok(DecayFit { q: Q_CAP, r_squared, slope, lower_bound: true, periods: logs.len() });
    }
    if r_squared < MIN_R_SQUARED {
        return Err(Error::PoorFit { r_squared });
    }
    Ok(DecayFit { q, r_squared, slope, lower_bound: false, periods: logs.len() })
}

/// Mean of `x²` over consecutive windows of exactly `period` samples, with
/// fractional weights for samples straddling a window edge.
fn period_energy(x: &[f64], period: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let count = ((n - 1.0) / period).floor() as usize;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        // sample m covers [m - ½, m + ½)
        let lo = k as f64 * period - 0.5;
        let hi = lo + period;
        let m0 = lo.floor().max(-1.0) as i64;
        let m1 = hi.ceil() as i64;
        let mut acc = 0.0;
        for m in m0..=m1 {
            if m < 0 || m as usize >= x.len() {
                continue;
            }
            let a = (m as f64 - 0.5).max(lo);
            let b = (m as f64 + 0.5).min(hi);
            if b > a {
                acc += (b - a) * x[m as usize] * x[m as usize];
            }
        }
        out.push(acc / period);
    }
    out
}

/// Ordinary least squares slope and r².
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, r2)
}

/// `Q = ω0·U/P` for stored energy `U` and leaked power `P`.
pub fn q_from_flux(stored_energy: f64, leaked_power: f64, e0_ev: f64) -> Result<f64> {
    if !(leaked_power > 0.0) {
        return Err(Error::FluxSign { power: leaked_power });
    }
    if !(stored_energy > 0.0 && e0_ev > 0.0) {
        return Err(Error::param("stored energy and resonance energy must be > 0"));
    }
    Ok(ev_to_omega(e0_ev) * stored_energy / leaked_power)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeVolume {
    /// `∑ ε|E|²·dx² / max(ε|E|²)` (nm²).
    pub v2d_nm2: f64,
    pub v_um3: f64,
    /// In units of `(λ0/n)³`.
    pub v_lambda_n3: f64,
    pub height_eff_nm: f64,
    /// Cell holding the energy-density maximum.
    pub peak_cell: (usize, usize),
    /// Physical position of the maximum (nm).
    pub peak_position_nm: (f64, f64),
    /// Set when the maximum sits on the map boundary.
    pub warning: Option<String>,
}

/// Peak-normalized electric energy integral (Purcell convention), scaled to
/// 3D by an effective height.
pub fn mode_volume(field: &FieldMap, eps: &DielectricMap, height_eff_nm: f64, e0_ev: f64, n: f64) -> Result<ModeVolume> {
    field.validate()?;
    if field.nx != eps.nx || field.ny != eps.ny {
        return Err(Error::param(format!("field map {}x{} does not match dielectric map {}x{}", field.nx, field.ny, eps.nx, eps.ny)));
    }
    if !(height_eff_nm > 0.0 && e0_ev > 0.0 && n > 0.0) {
        return Err(Error::param("height_eff, E0 and n must be > 0"));
    }
    let density: Vec<f64> = field.e_intensity().iter().zip(&eps.eps).map(|(e2, eps)| e2 * eps).collect();
    let (peak, max) = density.iter().copied().enumerate().fold((0, 0.0), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    if !(max > 0.0) {
        return Err(Error::DegenerateFit("field map is identically zero".into()));
    }
    let dx = eps.dx;
    let v2d = density.iter().sum::<f64>() / max * dx * dx;
    let v_nm3 = v2d * height_eff_nm;
    let lambda_n = ev_to_nm(e0_ev) / n;
    let (pi, pj) = (peak % eps.nx, peak / eps.nx);
    let band = (eps.nx.min(eps.ny) / 20).max(1);
    let warning = (pi < band || pj < band || pi + band >= eps.nx || pj + band >= eps.ny)
        .then(|| format!("energy maximum at cell ({pi}, {pj}) lies on the map boundary; mode not confined"));
    Ok(ModeVolume {
        v2d_nm2: v2d,
        v_um3: v_nm3 * 1e-9,
        v_lambda_n3: v_nm3 / lambda_n.powi(3),
        height_eff_nm,
        peak_cell: (pi, pj),
        peak_position_nm: eps.cell_center(pi, pj),
        warning,
    })
}

/// Summary of one cavity mode, serialized with unit-suffixed keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCharacterization {
    #[serde(rename = "E0_eV")]
    pub e0_ev: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub q_method: String,
    #[serde(rename = "V_um3")]
    pub v_um3: f64,
    #[serde(rename = "V_lambda_n3")]
    pub v_lambda_n3: f64,
    pub height_eff_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_r_squared: Option<f64>,
    #[serde(default)]
    pub q_lower_bound: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_flux: Option<f64>,
    #[serde(default = "purcell")]
    pub volume_convention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_position_nm: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_over_a: Option<f64>,
}

fn purcell() -> String {
    "purcell_peak_normalized".into()
}

impl ModeCharacterization {
    pub fn new(e0_ev: f64, decay: &DecayFit, volume: &ModeVolume) -> Self {
        Self {
            e0_ev,
            q: decay.q,
            q_method: "decay".into(),
            v_um3: volume.v_um3,
            v_lambda_n3: volume.v_lambda_n3,
            height_eff_nm: volume.height_eff_nm,
            q_r_squared: Some(decay.r_squared),
            q_lower_bound: decay.lower_bound,
            q_flux: None,
            volume_convention: purcell(),
            peak_position_nm: Some([volume.peak_position_nm.0, volume.peak_position_nm.1]),
            warnings: volume.warning.iter().cloned().collect(),
            a_nm: None,
            r_over_a: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0_ev > 0.0 && self.q > 0.0 && self.v_um3 > 0.0) {
            return Err(Error::Format("mode characterization needs E0, Q, V > 0".into()));
        }
        Ok(())
    }

    /// Mode volume in m³.
    pub fn volume_m3(&self) -> f64 {
        self.v_um3 * 1e-18
    }
}
