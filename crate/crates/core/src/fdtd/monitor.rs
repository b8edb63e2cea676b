use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{EPS0, ETA0};
use crate::error::{Error, Result};

use super::{cplx, Component};

/// Field samples recorded at one cell, one per step.
#[derive(Debug, Clone)]
pub struct Probe {
    pub cell: (usize, usize),
    pub component: Component,
    pub samples: Vec<f64>,
}

impl Probe {
    pub(super) fn new(cell: (usize, usize), component: Component) -> Self {
        Self { cell, component, samples: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// Sample spacing (s).
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Line of constant x (a column of Ey nodes); normal along x.
    Vertical,
    /// Line of constant y (a row of Ex nodes); normal along y.
    Horizontal,
}

/// Axis-aligned line on cell edges. `line` is the edge index between cells
/// `line - 1` and `line`; the segment spans cells `start..end` along it.
/// Power is counted positive along `sign`·(+x or +y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSegment {
    pub orientation: Orientation,
    pub line: usize,
    pub start: usize,
    pub end: usize,
    pub sign: f64,
}

/// Box covering cells `i0..i1 × j0..j1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxBox {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl FluxBox {
    /// Box of `half_w × half_h` cells on each side of `center`, inclusive.
    pub fn around(center: (usize, usize), half_w: usize, half_h: usize) -> Result<Self> {
        if center.0 < half_w || center.1 < half_h {
            return Err(Error::param("flux box extends past the map origin"));
        }
        Ok(Self { i0: center.0 - half_w, i1: center.0 + half_w + 1, j0: center.1 - half_h, j1: center.1 + half_h + 1 })
    }

    /// Outward-oriented `[left, right, bottom, top]` faces.
    pub fn faces(&self) -> Result<[FluxSegment; 4]> {
        if self.i0 >= self.i1 || self.j0 >= self.j1 {
            return Err(Error::param(format!("degenerate flux box {self:?}")));
        }
        let v = |line, sign| FluxSegment { orientation: Orientation::Vertical, line, start: self.j0, end: self.j1, sign };
        let h = |line, sign| FluxSegment { orientation: Orientation::Horizontal, line, start: self.i0, end: self.i1, sign };
        Ok([v(self.i0, -1.0), v(self.i1, 1.0), h(self.j0, -1.0), h(self.j1, 1.0)])
    }
}

/// Running DFT `∑ f(t)·exp(-iωt)·dt` of every staggered field array, with H
/// sampled at half-integer and E at integer time levels.
///
/// With `stride > 1` only every `stride`-th step is accumulated (weight
/// `stride·dt`), which is accurate while the sampling stays far above the
/// Nyquist rate of the monitored frequency.
///
/// Accessors return phasors normalized by `2/(samples·stride·dt)`, which is
/// the complex amplitude of a steady time-harmonic field.
#[derive(Debug, Clone)]
pub struct DftMonitor {
    freq_hz: f64,
    dt: f64,
    stride: usize,
    phase: usize,
    samples: usize,
    // interleaved (re, im)
    hz: Vec<f64>,
    ex: Vec<f64>,
    ey: Vec<f64>,
}

impl DftMonitor {
    pub(super) fn new(freq_hz: f64, dt: f64, stride: usize, nx: usize, ny: usize) -> Self {
        Self { freq_hz, dt, stride, phase: 0, samples: 0, hz: vec![0.0; 2 * nx * ny], ex: vec![0.0; 2 * nx * (ny + 1)], ey: vec![0.0; 2 * (nx + 1) * ny] }
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of accumulated samples.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub(super) fn accumulate(&mut self, hz: &[f64], ex: &[f64], ey: &[f64], t_h: f64, t_e: f64) {
        self.phase += 1;
        if self.phase < self.stride {
            return;
        }
        self.phase = 0;
        let w = 2.0 * std::f64::consts::PI * self.freq_hz;
        let weight = self.dt * self.stride as f64;
        let (sh, ch) = (w * t_h).sin_cos();
        let (se, ce) = (w * t_e).sin_cos();
        fn acc(out: &mut [f64], v: &[f64], c: f64, s: f64) {
            for (o, &v) in out.chunks_exact_mut(2).zip(v) {
                o[0] += v * c;
                o[1] -= v * s;
            }
        }
        acc(&mut self.hz, hz, ch * weight, sh * weight);
        acc(&mut self.ex, ex, ce * weight, se * weight);
        acc(&mut self.ey, ey, ce * weight, se * weight);
        self.samples += 1;
    }

    fn norm(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            2.0 / (self.samples as f64 * self.stride as f64 * self.dt)
        }
    }

    pub(super) fn hz_at(&self, k: usize) -> Complex64 {
        self.norm() * cplx(self.hz[2 * k], self.hz[2 * k + 1])
    }

    pub(super) fn ex_at(&self, k: usize) -> Complex64 {
        self.norm() * cplx(self.ex[2 * k], self.ex[2 * k + 1])
    }

    pub(super) fn ey_at(&self, k: usize) -> Complex64 {
        self.norm() * cplx(self.ey[2 * k], self.ey[2 * k + 1])
    }

    /// `½ Re ∑ (E × H*)·n̂ dl` for a segment in grid coordinates (W/m).
    pub(super) fn flux(&self, seg: &FluxSegment, nx: usize, dx: f64) -> f64 {
        let mut sum = 0.0;
        match seg.orientation {
            Orientation::Vertical => {
                let i = seg.line;
                for j in seg.start..seg.end {
                    let e = self.ey_at(j * (nx + 1) + i);
                    let h = 0.5 * (self.hz_at(j * nx + i - 1) + self.hz_at(j * nx + i));
                    sum += (e * h.conj()).re;
                }
            }
            Orientation::Horizontal => {
                let j = seg.line;
                for i in seg.start..seg.end {
                    let e = self.ex_at(j * nx + i);
                    let h = 0.5 * (self.hz_at((j - 1) * nx + i) + self.hz_at(j * nx + i));
                    sum -= (e * h.conj()).re;
                }
            }
        }
        seg.sign * 0.5 * sum * dx / ETA0
    }

    /// Time-averaged energy (J/m) in a box given in grid coordinates.
    /// Edge nodes on the box boundary count with weight ½.
    pub(super) fn box_energy(&self, b: &FluxBox, nx: usize, dx: f64, inv_eps_ex: &[f64], inv_eps_ey: &[f64]) -> f64 {
        let mut sum = 0.0;
        for j in b.j0..b.j1 {
            for i in b.i0..b.i1 {
                sum += self.hz_at(j * nx + i).norm_sqr();
            }
        }
        for j in b.j0..=b.j1 {
            let w = if j == b.j0 || j == b.j1 { 0.5 } else { 1.0 };
            for i in b.i0..b.i1 {
                let k = j * nx + i;
                sum += w * self.ex_at(k).norm_sqr() / inv_eps_ex[k];
            }
        }
        for j in b.j0..b.j1 {
            for i in b.i0..=b.i1 {
                let w = if i == b.i0 || i == b.i1 { 0.5 } else { 1.0 };
                let k = j * (nx + 1) + i;
                sum += w * self.ey_at(k).norm_sqr() / inv_eps_ey[k];
            }
        }
        0.25 * EPS0 * dx * dx * sum
    }
}

/// Cell-centered complex field amplitudes at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub nx: usize,
    pub ny: usize,
    pub dx_nm: f64,
    pub origin_nm: [f64; 2],
    pub freq_hz: f64,
    /// Number of accumulated DFT samples behind the phasors.
    pub samples: usize,
    pub hz: Vec<Complex64>,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
}

impl FieldMap {
    /// `|E|²` per cell.
    pub fn e_intensity(&self) -> Vec<f64> {
        self.ex.iter().zip(&self.ey).map(|(x, y)| x.norm_sqr() + y.norm_sqr()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nx * self.ny;
        if self.hz.len() != n || self.ex.len() != n || self.ey.len() != n {
            return Err(Error::Format(format!("field planes do not match {}x{}", self.nx, self.ny)));
        }
        if self.hz.iter().chain(&self.ex).chain(&self.ey).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Format("non-finite field value".into()));
        }
        Ok(())
    }
}
