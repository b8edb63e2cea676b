//! 2D FDTD solver for the polarization with in-plane E (`Ex`, `Ey`) and
//! out-of-plane H (`Hz`).
//!
//! Fields are stored in normalized form: `E` in V/m and `η0·H` in V/m, so
//! both updates share the Courant number `c·dt/dx`. Yee layout on an
//! `nx × ny` cell grid:
//!
//! - `Hz[j][i]` at cell centers `(i + ½, j + ½)`,
//! - `Ex[j][i]` on horizontal edges `(i + ½, j)`, `j = 0..=ny`,
//! - `Ey[j][i]` on vertical edges `(i, j + ½)`, `i = 0..=nx`.
//!
//! The outermost edges are perfect electric conductors. Absorption uses a
//! convolutional PML (κ = 1, α = 0) whose auxiliary arrays only exist in
//! the boundary strips, so the interior update is a plain Yee stencil.
//!
//! Cells passed to the public API are cells of the [`DielectricMap`]; the
//! PML is appended around the map.

mod monitor;
mod pml;
mod source;

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{C0, EPS0};
use crate::error::{Error, Result};
use crate::geometry::DielectricMap;

pub use monitor::{DftMonitor, FieldMap, FluxBox, FluxSegment, Orientation, Probe, TimeSeries};
pub use pml::PmlProfile;
pub use source::{Component, SourceSpec, Waveform};

/// Fields above this magnitude are treated as a blown-up simulation.
pub const BLOWUP_THRESHOLD: f64 = 1e30;

/// Steps between full-grid stability scans.
const SCAN_INTERVAL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmlConfig {
    pub cells: usize,
    pub order: f64,
    pub reflection: f64,
}

impl Default for PmlConfig {
    fn default() -> Self {
        Self { cells: 16, order: 3.0, reflection: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// PML of the given configuration appended around the map, backed by PEC.
    Pml(PmlConfig),
    /// Perfectly reflecting (PEC) walls directly at the map edge.
    Closed,
}

/// Owned simulation state. See the module docs for the grid layout.
pub struct Simulation {
    nx: usize,
    ny: usize,
    /// Map cells start at this offset in both directions.
    offset: usize,
    map_nx: usize,
    map_ny: usize,
    map_dx_nm: f64,
    map_origin_nm: [f64; 2],
    dx: f64,
    dt: f64,
    courant: f64,
    sc: f64,

    hz: Vec<f64>,
    ex: Vec<f64>,
    ey: Vec<f64>,
    inv_eps_ex: Vec<f64>,
    inv_eps_ey: Vec<f64>,

    pml: PmlProfile,

    step: usize,
    sources: Vec<SourceSpec>,
    probes: Vec<Probe>,
    monitors: Vec<DftMonitor>,
    pool: Option<rayon::ThreadPool>,
    bands: usize,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("pml_cells", &self.pml.cells)
            .field("dx", &self.dx)
            .field("dt", &self.dt)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl Simulation {
    /// PML-terminated simulation with the default grading (order 3, R0 = 1e-8).
    pub fn init(map: &DielectricMap, courant: f64, pml_cells: usize) -> Result<Self> {
        if pml_cells < 8 {
            return Err(Error::param(format!("pml_cells = {pml_cells} must be >= 8")));
        }
        Self::new(map, courant, Boundary::Pml(PmlConfig { cells: pml_cells, ..PmlConfig::default() }))
    }

    /// Closed, perfectly reflecting box around the map.
    pub fn closed(map: &DielectricMap, courant: f64) -> Result<Self> {
        Self::new(map, courant, Boundary::Closed)
    }

    pub fn new(map: &DielectricMap, courant: f64, boundary: Boundary) -> Result<Self> {
        if !(courant > 0.0 && courant <= 1.0) {
            return Err(Error::param(format!("Courant factor S = {courant} must satisfy 0 < S <= 1")));
        }
        Self::build(map, courant, boundary)
    }

    /// Like [`Simulation::new`] but without the Courant bound, for
    /// exercising the instability detector.
    pub fn new_unchecked_courant(map: &DielectricMap, courant: f64, boundary: Boundary) -> Result<Self> {
        if !(courant > 0.0) {
            return Err(Error::param("Courant factor must be > 0"));
        }
        Self::build(map, courant, boundary)
    }

    fn build(map: &DielectricMap, courant: f64, boundary: Boundary) -> Result<Self> {
        map.validate()?;
        if map.nx < 2 || map.ny < 2 {
            return Err(Error::param("map must have at least 2x2 cells"));
        }
        let p = match boundary {
            Boundary::Pml(cfg) => {
                if cfg.cells == 0 || !(cfg.order > 0.0) || !(cfg.reflection > 0.0 && cfg.reflection < 1.0) {
                    return Err(Error::param(format!("invalid PML configuration {cfg:?}")));
                }
                cfg.cells
            }
            Boundary::Closed => 0,
        };
        let nx = map.nx + 2 * p;
        let ny = map.ny + 2 * p;
        let dx = map.dx * 1e-9;
        let dt = courant * dx / (C0 * std::f64::consts::SQRT_2);
        let sc = C0 * dt / dx;

        // Permittivity on the extended grid, replicating the map edge into the PML.
        let eps_cell = |i: usize, j: usize| -> f64 {
            let mi = i.saturating_sub(p).min(map.nx - 1);
            let mj = j.saturating_sub(p).min(map.ny - 1);
            map.at(mi, mj)
        };
        let mut inv_eps_ex = vec![0.0; nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                let below = if j > 0 { Some(eps_cell(i, j - 1)) } else { None };
                let above = if j < ny { Some(eps_cell(i, j)) } else { None };
                let e = match (below, above) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => unreachable!(),
                };
                inv_eps_ex[j * nx + i] = 1.0 / e;
            }
        }
        let mut inv_eps_ey = vec![0.0; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                let left = if i > 0 { Some(eps_cell(i - 1, j)) } else { None };
                let right = if i < nx { Some(eps_cell(i, j)) } else { None };
                let e = match (left, right) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => unreachable!(),
                };
                inv_eps_ey[j * (nx + 1) + i] = 1.0 / e;
            }
        }

        let pml = match boundary {
            Boundary::Pml(cfg) => PmlProfile::new(nx, ny, cfg, dx, dt),
            Boundary::Closed => PmlProfile::none(),
        };

        Ok(Self {
            nx,
            ny,
            offset: p,
            map_nx: map.nx,
            map_ny: map.ny,
            map_dx_nm: map.dx,
            map_origin_nm: map.origin,
            dx,
            dt,
            courant,
            sc,
            hz: vec![0.0; nx * ny],
            ex: vec![0.0; nx * (ny + 1)],
            ey: vec![0.0; (nx + 1) * ny],
            inv_eps_ex,
            inv_eps_ey,
            pml,
            step: 0,
            sources: Vec::new(),
            probes: Vec::new(),
            monitors: Vec::new(),
            pool: None,
            bands: 1,
        })
    }

    /// Split field updates over `threads` row bands. Results do not depend on
    /// the band count.
    pub fn set_threads(&mut self, threads: usize) -> Result<()> {
        let threads = threads.max(1);
        if threads == 1 {
            self.pool = None;
            self.bands = 1;
            return Ok(());
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Internal(e.to_string()))?;
        self.pool = Some(pool);
        self.bands = threads;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Grid pitch in meters.
    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn courant(&self) -> f64 {
        self.courant
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    /// Total grid size including PML.
    pub fn grid_size(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn map_size(&self) -> (usize, usize) {
        (self.map_nx, self.map_ny)
    }

    pub fn pml(&self) -> &PmlProfile {
        &self.pml
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.sources
    }

    fn check_cell(&self, cell: (usize, usize)) -> Result<()> {
        if cell.0 >= self.map_nx || cell.1 >= self.map_ny {
            return Err(Error::param(format!("cell {cell:?} outside the {}x{} map", self.map_nx, self.map_ny)));
        }
        Ok(())
    }

    pub fn add_source(&mut self, src: SourceSpec) -> Result<usize> {
        self.check_cell(src.cell)?;
        src.waveform.validate(self.dt)?;
        self.sources.push(src);
        Ok(self.sources.len() - 1)
    }

    pub fn add_probe(&mut self, cell: (usize, usize), component: Component) -> Result<usize> {
        self.check_cell(cell)?;
        self.probes.push(Probe::new(cell, component));
        Ok(self.probes.len() - 1)
    }

    /// Running DFT of all fields at `freq_hz`, accumulated from the next step on.
    pub fn add_dft_monitor(&mut self, freq_hz: f64) -> Result<usize> {
        self.add_dft_monitor_strided(freq_hz, 1)
    }

    /// As [`Self::add_dft_monitor`], sampling every `stride` steps. At least
    /// eight samples per optical period are required.
    pub fn add_dft_monitor_strided(&mut self, freq_hz: f64, stride: usize) -> Result<usize> {
        if !(freq_hz > 0.0) {
            return Err(Error::param("DFT frequency must be > 0"));
        }
        let per_period = 1.0 / (freq_hz * self.dt * stride as f64);
        if stride == 0 || per_period < 8.0 {
            return Err(Error::param(format!("DFT stride {stride} gives {per_period:.1} samples per period; need >= 8")));
        }
        self.monitors.push(DftMonitor::new(freq_hz, self.dt, stride, self.nx, self.ny));
        Ok(self.monitors.len() - 1)
    }

    pub fn probe(&self, k: usize) -> &Probe {
        &self.probes[k]
    }

    pub fn monitor(&self, k: usize) -> &DftMonitor {
        &self.monitors[k]
    }

    pub fn time_series(&self, k: usize) -> TimeSeries {
        TimeSeries { dt: self.dt, samples: self.probes[k].samples.clone() }
    }

    /// Reserve probe storage for `n` further steps so stepping does not allocate.
    pub fn reserve_steps(&mut self, n: usize) {
        for p in &mut self.probes {
            p.samples.reserve(n);
        }
    }

    /// Collocated (cell-centered) field value on a map cell.
    pub fn field_at(&self, cell: (usize, usize), component: Component) -> f64 {
        let (i, j) = (cell.0 + self.offset, cell.1 + self.offset);
        let nx = self.nx;
        match component {
            Component::Hz => self.hz[j * nx + i],
            Component::Ex => 0.5 * (self.ex[j * nx + i] + self.ex[(j + 1) * nx + i]),
            Component::Ey => 0.5 * (self.ey[j * (nx + 1) + i] + self.ey[j * (nx + 1) + i + 1]),
        }
    }

    /// Raw staggered arrays `(hz, ex, ey)` on the full grid.
    pub fn raw_fields(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.hz, &self.ex, &self.ey)
    }

    /// Advance one time step: H to `n + ½`, then E to `n + 1`.
    pub fn step(&mut self) -> Result<()> {
        let n = self.step;
        let t_h = (n as f64 + 0.5) * self.dt;
        let t_e = (n as f64 + 1.0) * self.dt;

        self.update_h();
        self.inject(t_h, n, true);
        self.update_e();
        self.inject(t_e, n, false);

        for m in &mut self.monitors {
            m.accumulate(&self.hz, &self.ex, &self.ey, t_h, t_e);
        }
        let mut worst = 0.0f64;
        for k in 0..self.probes.len() {
            let p = &self.probes[k];
            let v = self.field_at(p.cell, p.component);
            worst = worst.max(v.abs());
            if !v.is_finite() {
                worst = f64::INFINITY;
            }
            self.probes[k].samples.push(v);
        }
        self.step += 1;
        if worst > BLOWUP_THRESHOLD || (self.step.is_multiple_of(SCAN_INTERVAL) && self.max_field() > BLOWUP_THRESHOLD) {
            return Err(Error::Instability { step: self.step, magnitude: worst.max(self.max_field()) });
        }
        Ok(())
    }

    pub fn run(&mut self, n_steps: usize) -> Result<()> {
        self.reserve_steps(n_steps);
        for _ in 0..n_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Largest absolute field value; NaN maps to infinity.
    pub fn max_field(&self) -> f64 {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |acc, x| if x.is_nan() { f64::INFINITY } else { acc.max(x.abs()) });
        m(&self.hz).max(m(&self.ex)).max(m(&self.ey))
    }

    fn inject(&mut self, t: f64, n: usize, magnetic: bool) {
        let nx = self.nx;
        let off = self.offset;
        for s in &self.sources {
            let (i, j) = (s.cell.0 + off, s.cell.1 + off);
            let v = s.amplitude * s.waveform.value(t, n);
            match (s.component, magnetic) {
                (Component::Hz, true) => self.hz[j * nx + i] += v,
                (Component::Ex, false) => {
                    self.ex[j * nx + i] += 0.5 * v;
                    self.ex[(j + 1) * nx + i] += 0.5 * v;
                }
                (Component::Ey, false) => {
                    self.ey[j * (nx + 1) + i] += 0.5 * v;
                    self.ey[j * (nx + 1) + i + 1] += 0.5 * v;
                }
                _ => {}
            }
        }
    }

    fn band_ranges(&self, rows: Range<usize>) -> Vec<Range<usize>> {
        let len = rows.end - rows.start;
        let bands = self.bands.min(len.max(1));
        let per = len.div_ceil(bands);
        (0..bands).map(|b| (rows.start + b * per).min(rows.end)..(rows.start + (b + 1) * per).min(rows.end)).filter(|r| !r.is_empty()).collect()
    }

    fn update_h(&mut self) {
        let (nx, sc) = (self.nx, self.sc);
        match &self.pool {
            None => h_rows(0..self.ny, &mut self.hz, &self.ex, &self.ey, nx, sc),
            Some(pool) => {
                let bands = self.band_ranges(0..self.ny);
                let (ex, ey) = (&self.ex, &self.ey);
                let chunks = split_rows(&mut self.hz, nx, &bands);
                pool.install(|| {
                    chunks.into_par_iter().for_each(|(rows, hz)| h_rows_band(rows, hz, ex, ey, nx, sc));
                });
            }
        }
        self.pml.correct_h(&mut self.hz, &self.ex, &self.ey, nx, sc);
    }

    fn update_e(&mut self) {
        let (nx, ny, sc) = (self.nx, self.ny, self.sc);
        match &self.pool {
            None => {
                ex_rows(1..ny, &mut self.ex, &self.hz, &self.inv_eps_ex, nx, sc);
                ey_rows(0..ny, &mut self.ey, &self.hz, &self.inv_eps_ey, nx, sc);
            }
            Some(pool) => {
                let ex_bands = self.band_ranges(1..ny);
                let ey_bands = self.band_ranges(0..ny);
                let hz = &self.hz;
                let (ie_x, ie_y) = (&self.inv_eps_ex, &self.inv_eps_ey);
                let ex_chunks = split_rows(&mut self.ex, nx, &ex_bands);
                let ey_chunks = split_rows(&mut self.ey, nx + 1, &ey_bands);
                pool.install(|| {
                    rayon::join(
                        || {
                            ex_chunks.into_par_iter().for_each(|(rows, ex)| {
                                ex_rows_band(rows, ex, hz, ie_x, nx, sc);
                            })
                        },
                        || {
                            ey_chunks.into_par_iter().for_each(|(rows, ey)| {
                                ey_rows_band(rows, ey, hz, ie_y, nx, sc);
                            })
                        },
                    )
                });
            }
        }
        self.pml.correct_e(&mut self.ex, &mut self.ey, &self.hz, &self.inv_eps_ex, &self.inv_eps_ey, nx, sc);
    }

    /// Discrete electromagnetic energy per unit height (J/m) with the H
    /// contribution time-centered on the E time level:
    /// `½ε0·dx²·(∑ ε E² + ∑ Hz^{n+½}·Hz^{n+3/2})`, where `Hz^{n+3/2}` is
    /// the source-free, lossless update of the current state. In a closed
    /// lossless box this quantity is an exact invariant of the scheme.
    pub fn energy(&self) -> f64 {
        let (nx, ny, sc) = (self.nx, self.ny, self.sc);
        let mut e_sum = 0.0;
        for (v, ie) in self.ex.iter().zip(&self.inv_eps_ex) {
            e_sum += v * v / ie;
        }
        for (v, ie) in self.ey.iter().zip(&self.inv_eps_ey) {
            e_sum += v * v / ie;
        }
        let mut h_sum = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let curl = (self.ey[j * (nx + 1) + i + 1] - self.ey[j * (nx + 1) + i]) - (self.ex[(j + 1) * nx + i] - self.ex[j * nx + i]);
                let h = self.hz[j * nx + i];
                h_sum += h * (h - sc * curl);
            }
        }
        0.5 * EPS0 * self.dx * self.dx * (e_sum + h_sum)
    }

    /// Time-averaged Poynting power (W/m) through a segment, from DFT monitor `k`.
    pub fn flux(&self, k: usize, seg: &FluxSegment) -> Result<f64> {
        let m = self.monitors.get(k).ok_or_else(|| Error::param(format!("no DFT monitor {k}")))?;
        let seg = self.grid_segment(seg)?;
        Ok(m.flux(&seg, self.nx, self.dx))
    }

    /// Net outward power through the four faces of a box of map cells.
    pub fn box_flux(&self, k: usize, b: &FluxBox) -> Result<f64> {
        Ok(self.box_face_fluxes(k, b)?.iter().sum())
    }

    /// Outward power through the `[left, right, bottom, top]` faces.
    pub fn box_face_fluxes(&self, k: usize, b: &FluxBox) -> Result<[f64; 4]> {
        let faces = b.faces()?;
        let mut out = [0.0; 4];
        for (o, f) in out.iter_mut().zip(&faces) {
            *o = self.flux(k, f)?;
        }
        Ok(out)
    }

    /// Time-averaged stored energy (J/m) inside a box of map cells, from the
    /// DFT fields of monitor `k`: `¼ε0·∑(ε|E|² + |ηH|²)·dx²`.
    pub fn box_energy(&self, k: usize, b: &FluxBox) -> Result<f64> {
        let m = self.monitors.get(k).ok_or_else(|| Error::param(format!("no DFT monitor {k}")))?;
        b.faces()?;
        if b.i1 > self.map_nx || b.j1 > self.map_ny {
            return Err(Error::param(format!("box {b:?} exceeds the map")));
        }
        let off = self.offset;
        let g = FluxBox { i0: b.i0 + off, i1: b.i1 + off, j0: b.j0 + off, j1: b.j1 + off };
        Ok(m.box_energy(&g, self.nx, self.dx, &self.inv_eps_ex, &self.inv_eps_ey))
    }

    fn grid_segment(&self, seg: &FluxSegment) -> Result<FluxSegment> {
        let (lim_line, lim_span) = match seg.orientation {
            Orientation::Vertical => (self.map_nx, self.map_ny),
            Orientation::Horizontal => (self.map_ny, self.map_nx),
        };
        if seg.line == 0 || seg.line >= lim_line || seg.start >= seg.end || seg.end > lim_span {
            return Err(Error::param(format!("flux segment {seg:?} outside the map interior")));
        }
        let off = self.offset;
        Ok(FluxSegment { orientation: seg.orientation, line: seg.line + off, start: seg.start + off, end: seg.end + off, sign: seg.sign })
    }

    /// Collocated field map of monitor `k` restricted to the map cells.
    pub fn field_map(&self, k: usize) -> FieldMap {
        let m = &self.monitors[k];
        let (nx, off) = (self.nx, self.offset);
        let cells = self.map_nx * self.map_ny;
        let mut hz = Vec::with_capacity(cells);
        let mut ex = Vec::with_capacity(cells);
        let mut ey = Vec::with_capacity(cells);
        for mj in 0..self.map_ny {
            for mi in 0..self.map_nx {
                let (i, j) = (mi + off, mj + off);
                hz.push(m.hz_at(j * nx + i));
                ex.push(0.5 * (m.ex_at(j * nx + i) + m.ex_at((j + 1) * nx + i)));
                ey.push(0.5 * (m.ey_at(j * (nx + 1) + i) + m.ey_at(j * (nx + 1) + i + 1)));
            }
        }
        FieldMap {
            nx: self.map_nx,
            ny: self.map_ny,
            dx_nm: self.map_dx_nm,
            origin_nm: self.map_origin_nm,
            freq_hz: m.freq_hz(),
            samples: m.samples(),
            hz,
            ex,
            ey,
        }
    }
}

fn split_rows<'a>(data: &'a mut [f64], width: usize, bands: &[Range<usize>]) -> Vec<(Range<usize>, &'a mut [f64])> {
    let mut out = Vec::with_capacity(bands.len());
    let mut rest = data;
    let mut consumed = 0;
    for r in bands {
        let skip = (r.start - consumed) * width;
        let tail = std::mem::take(&mut rest);
        let (_, tail) = tail.split_at_mut(skip);
        let (band, tail) = tail.split_at_mut((r.end - r.start) * width);
        out.push((r.clone(), band));
        rest = tail;
        consumed = r.end;
    }
    out
}

#[inline]
fn h_rows(rows: Range<usize>, hz: &mut [f64], ex: &[f64], ey: &[f64], nx: usize, sc: f64) {
    let start = rows.start;
    h_rows_band(rows, &mut hz[start * nx..], ex, ey, nx, sc);
}

/// `hz` starts at row `rows.start`.
#[inline]
fn h_rows_band(rows: Range<usize>, hz: &mut [f64], ex: &[f64], ey: &[f64], nx: usize, sc: f64) {
    let start = rows.start;
    for j in rows {
        let h = &mut hz[(j - start) * nx..(j - start + 1) * nx];
        let e_row = &ey[j * (nx + 1)..(j + 1) * (nx + 1)];
        let ex_lo = &ex[j * nx..(j + 1) * nx];
        let ex_hi = &ex[(j + 1) * nx..(j + 2) * nx];
        for ((((h, &ey_r), &ey_l), &lo), &hi) in h.iter_mut().zip(&e_row[1..]).zip(&e_row[..nx]).zip(ex_lo).zip(ex_hi) {
            *h -= sc * ((ey_r - ey_l) - (hi - lo));
        }
    }
}

#[inline]
fn ex_rows(rows: Range<usize>, ex: &mut [f64], hz: &[f64], inv_eps: &[f64], nx: usize, sc: f64) {
    let start = rows.start;
    ex_rows_band(rows, &mut ex[start * nx..], hz, inv_eps, nx, sc);
}

/// `ex` starts at row `rows.start`; rows are Ex node rows in `1..ny`.
#[inline]
fn ex_rows_band(rows: Range<usize>, ex: &mut [f64], hz: &[f64], inv_eps: &[f64], nx: usize, sc: f64) {
    let start = rows.start;
    for j in rows {
        let e = &mut ex[(j - start) * nx..(j - start + 1) * nx];
        let ie = &inv_eps[j * nx..(j + 1) * nx];
        let h_hi = &hz[j * nx..(j + 1) * nx];
        let h_lo = &hz[(j - 1) * nx..j * nx];
        for (((e, &ie), &hi), &lo) in e.iter_mut().zip(ie).zip(h_hi).zip(h_lo) {
            *e += sc * ie * (hi - lo);
        }
    }
}

#[inline]
fn ey_rows(rows: Range<usize>, ey: &mut [f64], hz: &[f64], inv_eps: &[f64], nx: usize, sc: f64) {
    let start = rows.start;
    ey_rows_band(rows, &mut ey[start * (nx + 1)..], hz, inv_eps, nx, sc);
}

/// `ey` starts at row `rows.start`; interior nodes `1..nx` of each row are updated.
#[inline]
fn ey_rows_band(rows: Range<usize>, ey: &mut [f64], hz: &[f64], inv_eps: &[f64], nx: usize, sc: f64) {
    let start = rows.start;
    let w = nx + 1;
    for j in rows {
        let e = &mut ey[(j - start) * w + 1..(j - start) * w + nx];
        let ie = &inv_eps[j * w + 1..j * w + nx];
        let h = &hz[j * nx..(j + 1) * nx];
        for (((e, &ie), &hr), &hl) in e.iter_mut().zip(ie).zip(&h[1..]).zip(&h[..nx - 1]) {
            *e -= sc * ie * (hr - hl);
        }
    }
}

/// Complex helper used by monitors and post-processing.
pub(crate) fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vacuum(n: usize) -> DielectricMap {
        DielectricMap::uniform(n, n, 12.5, 1.0)
    }

    #[test]
    fn time_step_formula() {
        let sim = Simulation::init(&vacuum(20), 0.5, 8).unwrap();
        let expected = 0.5 * 1.25e-8 / (299_792_458.0 * std::f64::consts::SQRT_2);
        assert!((sim.dt() - expected).abs() < 1e-30);
        assert!((sim.dt() - 1.4741e-17).abs() / 1.4741e-17 < 1e-4);
    }

    #[test]
    fn courant_and_pml_bounds() {
        assert!(matches!(Simulation::init(&vacuum(20), 1.01, 8), Err(Error::Parameter(_))));
        assert!(matches!(Simulation::init(&vacuum(20), 0.0, 8), Err(Error::Parameter(_))));
        assert!(matches!(Simulation::init(&vacuum(20), 0.5, 7), Err(Error::Parameter(_))));
    }

    #[test]
    fn pml_is_appended_outside_the_map() {
        let sim = Simulation::init(&vacuum(20), 0.5, 10).unwrap();
        assert_eq!(sim.grid_size(), (40, 40));
        assert_eq!(sim.pml().cells, 10);
        assert_eq!(sim.pml().sigma_h_x().len(), 20);
        assert_eq!(sim.pml().sigma_h_y().len(), 20);
        // the map interior has no absorption
        assert!(sim.pml().is_interior_lossless(sim.grid_size(), 10));
    }

    #[test]
    fn vacuum_without_sources_stays_zero() {
        let mut sim = Simulation::init(&vacuum(30), 0.5, 8).unwrap();
        sim.run(50).unwrap();
        assert_eq!(sim.max_field(), 0.0);
    }

    #[test]
    fn one_step_is_local() {
        let mut sim = Simulation::closed(&vacuum(11), 0.5).unwrap();
        sim.add_source(SourceSpec { cell: (5, 5), component: Component::Hz, amplitude: 1.0, waveform: Waveform::Continuous { f0: 1e14, ramp_periods: 0.0 } })
            .unwrap();
        sim.step().unwrap();
        let (hz, ex, ey) = sim.raw_fields();
        let nx = 11;
        for (k, v) in hz.iter().enumerate() {
            if *v != 0.0 {
                assert_eq!(k, 5 * nx + 5);
            }
        }
        for j in 0..=11 {
            for i in 0..11 {
                if ex[j * nx + i] != 0.0 {
                    assert!(i == 5 && (j == 5 || j == 6), "ex at {i},{j}");
                }
            }
        }
        for j in 0..11 {
            for i in 0..=11 {
                if ey[j * (nx + 1) + i] != 0.0 {
                    assert!(j == 5 && (i == 5 || i == 6), "ey at {i},{j}");
                }
            }
        }
        assert!(hz[5 * nx + 5] != 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let map = DielectricMap::from_fn(41, 37, 12.5, 4.0, |x, y| if x * x + y * y < 6e4 { 4.0 } else { 1.0 });
        let run = |threads: usize| {
            let mut sim = Simulation::init(&map, 0.5, 8).unwrap();
            sim.set_threads(threads).unwrap();
            let dt = sim.dt();
            sim.add_source(SourceSpec { cell: (13, 17), component: Component::Ey, amplitude: 1.0, waveform: Waveform::gaussian(2e14, 1e14, dt) }).unwrap();
            let p = sim.add_probe((30, 20), Component::Hz).unwrap();
            sim.run(400).unwrap();
            sim.time_series(p).samples
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
    }

    #[test]
    fn segment_validation() {
        let mut sim = Simulation::init(&vacuum(20), 0.5, 8).unwrap();
        let k = sim.add_dft_monitor(1e14).unwrap();
        let bad = FluxSegment { orientation: Orientation::Vertical, line: 25, start: 0, end: 5, sign: 1.0 };
        assert!(sim.flux(k, &bad).is_err());
        let ok = FluxSegment { orientation: Orientation::Vertical, line: 5, start: 2, end: 8, sign: 1.0 };
        assert_eq!(sim.flux(k, &ok).unwrap(), 0.0);
    }
}
