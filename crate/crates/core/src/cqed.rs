//! Coupled exciton-photon model.
//!
//! All energies and linewidths are in eV; linewidths are intensity FWHM and
//! enter the Hamiltonian as `-iG/2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, CODATA};
use crate::error::{Error, Result};

/// Fraction of `2ħg` a splitting must reach to count as saturated.
pub const SATURATION_FRACTION: f64 = 0.99;

/// `ħg` (eV) for oscillator strength `f`, mode volume `v_m3` and relative
/// permittivity `eps_r`:
/// `g = sqrt(π e² f / (4π ε0 εr m V))`.
pub fn coupling_constant(f: f64, v_m3: f64, eps_r: f64) -> Result<f64> {
    coupling_constant_with(&CODATA, f, v_m3, eps_r)
}

pub fn coupling_constant_with(k: &PhysicalConstants, f: f64, v_m3: f64, eps_r: f64) -> Result<f64> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::param(format!("oscillator strength must be >= 0, got {f}")));
    }
    if !(v_m3 > 0.0 && v_m3.is_finite()) {
        return Err(Error::param(format!("mode volume must be > 0, got {v_m3} m^3")));
    }
    if !(eps_r >= 1.0) {
        return Err(Error::param(format!("eps_r must be >= 1, got {eps_r}")));
    }
    let e2 = k.elementary_charge * k.elementary_charge;
    let g2 = std::f64::consts::PI * e2 * f / (4.0 * std::f64::consts::PI * k.vacuum_permittivity * eps_r * k.electron_mass * v_m3);
    Ok(k.hbar * g2.sqrt() / k.elementary_charge)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledSystem {
    #[serde(rename = "Ex_eV")]
    pub ex: f64,
    #[serde(rename = "Ec_eV")]
    pub ec: f64,
    /// Exciton FWHM.
    #[serde(rename = "Gx_eV")]
    pub gx: f64,
    /// Cavity FWHM.
    #[serde(rename = "Gc_eV")]
    pub gc: f64,
    #[serde(rename = "hg_eV")]
    pub hg: f64,
}

impl CoupledSystem {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Ex", self.ex), ("Ec", self.ec), ("Gx", self.gx), ("Gc", self.gc)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.hg >= 0.0 && self.hg.is_finite()) {
            return Err(Error::param(format!("hg must be >= 0, got {}", self.hg)));
        }
        Ok(())
    }

    pub fn detuning(&self) -> f64 {
        self.ex - self.ec
    }

    /// The same system with exciton and cavity at `ex` and `ec`.
    pub fn at(&self, ex: f64, ec: f64) -> Self {
        Self { ex, ec, ..*self }
    }
}

/// Loss-corrected splitting at zero detuning:
/// `2·sqrt(hg² − ((Gc − Gx)/4)²)`, or 0 when the radicand is not positive.
pub fn rabi_splitting(sys: &CoupledSystem) -> f64 {
    let d = ((sys.gc - sys.gx) / 4.0).abs();
    if sys.hg <= d {
        return 0.0;
    }
    2.0 * ((sys.hg - d) * (sys.hg + d)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    #[serde(rename = "energy_eV")]
    pub energy: f64,
    #[serde(rename = "fwhm_eV")]
    pub fwhm: f64,
    pub exciton_weight: f64,
    pub photon_weight: f64,
}

/// Polariton branches, `plus` above `minus` in energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenmodes {
    pub plus: Branch,
    pub minus: Branch,
    pub eigenvalues: [(f64, f64); 2],
    /// `plus.energy − minus.energy`, taken from the eigenvalue difference
    /// directly so it does not lose digits against the mean energy.
    #[serde(rename = "splitting_eV")]
    pub splitting: f64,
}

/// Eigenvalues and mixing weights of
/// `[[Ex − iGx/2, hg], [hg, Ec − iGc/2]]`.
pub fn eigenmodes(sys: &CoupledSystem) -> Eigenmodes {
    let a = Complex64::new(sys.ex, -sys.gx / 2.0);
    let d = Complex64::new(sys.ec, -sys.gc / 2.0);
    let hg = Complex64::new(sys.hg, 0.0);
    let mean = (a + d) / 2.0;
    let half = (a - d) / 2.0;
    let root = (hg * hg + half * half).sqrt();
    let (mut l1, mut l2) = if sys.hg == 0.0 { (a, d) } else { (mean + root, mean - root) };
    let gap = if sys.hg == 0.0 { (a - d).re.abs() } else { 2.0 * root.re.abs() };
    if l1.re < l2.re {
        std::mem::swap(&mut l1, &mut l2);
    }
    let branch = |l: Complex64, upper: bool| -> Branch {
        let (x, c) = if sys.hg == 0.0 {
            // bare states; pick the one this eigenvalue equals
            let is_exciton = if (l - a).norm() == (l - d).norm() { upper == (sys.ex >= sys.ec) } else { (l - a).norm() < (l - d).norm() };
            if is_exciton {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            // two equivalent eigenvector forms; use the better conditioned one
            let v1 = (hg, l - a);
            let v2 = (l - d, hg);
            let n1 = v1.0.norm_sqr() + v1.1.norm_sqr();
            let n2 = v2.0.norm_sqr() + v2.1.norm_sqr();
            let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
            (v.0.norm_sqr() / n, v.1.norm_sqr() / n)
        };
        Branch { energy: l.re, fwhm: -2.0 * l.im, exciton_weight: x, photon_weight: c }
    };
    Eigenmodes { plus: branch(l1, true), minus: branch(l2, false), eigenvalues: [(l1.re, l1.im), (l2.re, l2.im)], splitting: gap }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongCoupling {
    pub strong: bool,
    /// `ΔE − Gc/2` (eV).
    #[serde(rename = "margin_eV")]
    pub margin: f64,
}

/// Strict criterion `ΔE > Gc/2`.
pub fn strong_coupling_test(splitting: f64, gc: f64) -> Result<StrongCoupling> {
    if !(splitting > 0.0 && gc > 0.0) {
        return Err(Error::param(format!("splitting and Gc must be > 0 (got {splitting}, {gc})")));
    }
    let margin = splitting - gc / 2.0;
    Ok(StrongCoupling { strong: margin > 0.0, margin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingCurve {
    /// `(Q, ΔE in eV)` with `Gc = E0/Q`.
    pub points: Vec<(f64, f64)>,
    /// Smallest grid Q with a nonzero splitting.
    pub onset_q: Option<f64>,
    /// Smallest grid Q with `ΔE ≥ 0.99·2hg`.
    pub saturation_q: Option<f64>,
    /// `E0/(4hg + Gx)`, below which `Gc − Gx > 4hg` and the splitting vanishes.
    pub onset_q_exact: f64,
    /// Smallest Q reaching the saturation fraction, from the closed form.
    pub saturation_q_exact: Option<f64>,
}

/// Splitting at zero detuning as a function of cavity Q.
pub fn splitting_vs_q(e0: f64, hg: f64, gx: f64, q_grid: &[f64]) -> Result<SplittingCurve> {
    if !(e0 > 0.0 && hg >= 0.0 && gx > 0.0) {
        return Err(Error::param("need E0 > 0, hg >= 0, Gx > 0"));
    }
    if q_grid.is_empty() || q_grid.iter().any(|q| !(*q > 0.0)) || q_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("Q grid must be positive and strictly ascending"));
    }
    let sys = CoupledSystem { ex: e0, ec: e0, gx, gc: e0, hg };
    let points: Vec<(f64, f64)> = q_grid.iter().map(|&q| (q, rabi_splitting(&CoupledSystem { gc: e0 / q, ..sys }))).collect();
    let target = SATURATION_FRACTION * 2.0 * hg;
    let onset_q = points.iter().find(|p| p.1 > 0.0).map(|p| p.0);
    let saturation_q = if hg > 0.0 { points.iter().find(|p| p.1 >= target).map(|p| p.0) } else { None };
    // |Gc − Gx| ≤ 4hg·sqrt(1 − s²) on the high-Q side of Gc = Gx
    let tol = 4.0 * hg * (1.0 - SATURATION_FRACTION * SATURATION_FRACTION).sqrt();
    let saturation_q_exact = (hg > 0.0).then(|| e0 / (gx + tol));
    Ok(SplittingCurve { points, onset_q, saturation_q, onset_q_exact: e0 / (4.0 * hg + gx), saturation_q_exact })
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::param("log grid needs 0 < lo < hi and n >= 2"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect())
}

/// Varshni exciton shift `E(T) = E0 − αT²/(T + β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Varshni {
    #[serde(rename = "E0_eV")]
    pub e0: f64,
    #[serde(rename = "alpha_eV_per_K")]
    pub alpha: f64,
    #[serde(rename = "beta_K")]
    pub beta: f64,
}

/// Linear cavity drift `Ec(T) = Ec0 + drift·T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityDrift {
    #[serde(rename = "Ec0_eV")]
    pub ec0: f64,
    #[serde(rename = "drift_eV_per_K")]
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningModel {
    pub exciton: Varshni,
    pub cavity: CavityDrift,
}

impl Default for TuningModel {
    /// GaAs-like Varshni coefficients; exciton and cavity cross near 11 K.
    fn default() -> Self {
        Self { exciton: Varshni { e0: 1.280_326_2, alpha: 5.405e-4, beta: 204.0 }, cavity: CavityDrift { ec0: 1.28, drift: 2e-6 } }
    }
}

impl TuningModel {
    pub fn validate(&self) -> Result<()> {
        let v = &self.exciton;
        if !(v.e0 > 0.0 && v.alpha >= 0.0 && v.beta > 0.0) {
            return Err(Error::param("Varshni parameters need E0 > 0, alpha >= 0, beta > 0"));
        }
        if !(self.cavity.ec0 > 0.0 && self.cavity.drift.is_finite()) {
            return Err(Error::param("cavity tuning needs Ec0 > 0 and a finite drift"));
        }
        Ok(())
    }

    pub fn exciton_energy(&self, t: f64) -> Result<f64> {
        check_temperature(t)?;
        let v = &self.exciton;
        Ok(v.e0 - v.alpha * t * t / (t + v.beta))
    }

    pub fn cavity_energy(&self, t: f64) -> Result<f64> {
        check_temperature(t)?;
        Ok(self.cavity.ec0 + self.cavity.drift * t)
    }

    pub fn detuning(&self, t: f64) -> Result<f64> {
        Ok(self.exciton_energy(t)? - self.cavity_energy(t)?)
    }

    /// Temperature of zero detuning inside `[lo, hi]`, by bisection.
    pub fn zero_detuning_temperature(&self, lo: f64, hi: f64) -> Option<f64> {
        let f = |t: f64| self.detuning(t).ok();
        let (mut a, mut b) = (lo, hi);
        let (mut fa, fb) = (f(a)?, f(b)?);
        if fa == 0.0 {
            return Some(a);
        }
        if fa * fb > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm == 0.0 || (b - a) < 1e-12 {
                return Some(m);
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        Some(0.5 * (a + b))
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param(format!("temperature must be >= 0 K, got {t}")));
    }
    Ok(())
}

pub fn exciton_energy(t: f64, model: &TuningModel) -> Result<f64> {
    model.exciton_energy(t)
}

pub fn cavity_energy(t: f64, model: &TuningModel) -> Result<f64> {
    model.cavity_energy(t)
}
