use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field component on the 2D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    /// Out-of-plane magnetic field.
    Hz,
    Ex,
    Ey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Waveform {
    /// `exp(-((t - t0)/τ)²)·sin(2π f0 (t - t0))` with `τ = 1/(π df)`,
    /// `t0 = 3τ`, switched off after `t_off` steps.
    GaussianPulse { f0: f64, df: f64, t_off: usize },
    /// `sin(2π f0 t)` under a raised-cosine turn-on lasting `ramp_periods`.
    Continuous { f0: f64, ramp_periods: f64 },
}

impl Waveform {
    /// Gaussian pulse with the shortest cutoff that lets it decay fully.
    pub fn gaussian(f0: f64, df: f64, dt: f64) -> Self {
        let t_off = (6.0 / (std::f64::consts::PI * df) / dt).ceil() as usize;
        Waveform::GaussianPulse { f0, df, t_off }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        match *self {
            Waveform::GaussianPulse { f0, df, t_off } => {
                if !(f0 > 0.0 && df > 0.0) {
                    return Err(Error::param(format!("pulse needs f0 > 0 and df > 0 (got {f0}, {df})")));
                }
                let min_steps = 6.0 / (std::f64::consts::PI * df) / dt;
                if (t_off as f64) < min_steps.ceil() {
                    return Err(Error::param(format!("t_off = {t_off} steps is shorter than 6/(pi df) = {min_steps:.1} steps")));
                }
            }
            Waveform::Continuous { f0, ramp_periods } => {
                if !(f0 > 0.0 && ramp_periods >= 0.0) {
                    return Err(Error::param("continuous source needs f0 > 0 and ramp_periods >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Value at time `t` (s); `step` is the index of the step being taken.
    #[inline]
    pub fn value(&self, t: f64, step: usize) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Waveform::GaussianPulse { f0, df, t_off } => {
                if step >= t_off {
                    return 0.0;
                }
                let tau = 1.0 / (PI * df);
                let u = t - 3.0 * tau;
                (-(u / tau).powi(2)).exp() * (2.0 * PI * f0 * u).sin()
            }
            Waveform::Continuous { f0, ramp_periods } => {
                let ramp_t = ramp_periods / f0;
                let env = if t < ramp_t { 0.5 * (1.0 - (PI * t / ramp_t).cos()) } else { 1.0 };
                env * (2.0 * PI * f0 * t).sin()
            }
        }
    }

    /// Last step at which the source is active, if it switches off.
    pub fn off_step(&self) -> Option<usize> {
        match *self {
            Waveform::GaussianPulse { t_off, .. } => Some(t_off),
            Waveform::Continuous { .. } => None,
        }
    }
}

/// Point source on a map cell. In-plane E components are injected
/// symmetrically on the two Yee edges bounding the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub cell: (usize, usize),
    pub component: Component,
    pub amplitude: f64,
    pub waveform: Waveform,
}
