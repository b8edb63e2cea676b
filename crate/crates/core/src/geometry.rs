//! Hole layout of the width-modulated waveguide cavity and its
//! rasterization onto a relative-permittivity grid.
//!
//! Coordinates are in nm with the origin at the cavity center and `x` along
//! the waveguide axis. The waveguide is a missing row in a triangular
//! lattice of air holes; the two rows adjacent to it are `W = w_factor·√3·a`
//! apart (center to center). Rows further out follow at the usual
//! `√3·a/2` spacing with alternating `a/2` offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Subsamples per cell edge used by [`rasterize`].
pub const SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Lattice constant (nm).
    pub a: f64,
    /// Hole radius (nm).
    pub r: f64,
    /// Hole rows on each side of the waveguide.
    pub n_rows: usize,
    /// Holes in each waveguide-adjacent row.
    pub n_cols: usize,
    /// Waveguide width in units of `√3·a`.
    pub w_factor: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self { a: 250.0, r: 70.0, n_rows: 5, n_cols: 20, w_factor: 0.98 }
    }
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::param(format!("lattice constant a = {} must be > 0", self.a)));
        }
        if !(self.r > 0.0 && self.r < self.a / 2.0) {
            return Err(Error::param(format!("hole radius r = {} must satisfy 0 < r < a/2 = {}", self.r, self.a / 2.0)));
        }
        if self.n_rows < 3 {
            return Err(Error::param(format!("n_rows = {} must be >= 3", self.n_rows)));
        }
        if self.n_cols < 9 {
            return Err(Error::param(format!("n_cols = {} must be >= 9", self.n_cols)));
        }
        if !(self.w_factor > 0.5 && self.w_factor < 1.5) {
            return Err(Error::param(format!("w_factor = {} must satisfy 0.5 < w_factor < 1.5", self.w_factor)));
        }
        Ok(())
    }

    /// Center-to-center distance between the two waveguide-adjacent rows (nm).
    pub fn waveguide_width(&self) -> f64 {
        self.w_factor * SQRT3 * self.a
    }

    /// Row spacing of the triangular lattice (nm).
    pub fn row_pitch(&self) -> f64 {
        SQRT3 * self.a / 2.0
    }

    /// Number of holes produced by [`build_lattice`].
    ///
    /// Rows alternate between `n_cols` and `n_cols - 1` holes so that every
    /// row stays centered on `x = 0`.
    pub fn hole_count(&self) -> usize {
        let full = self.n_rows.div_ceil(2);
        let short = self.n_rows / 2;
        2 * (full * self.n_cols + short * (self.n_cols - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    /// Outward displacements (nm), innermost tier first.
    pub shift_tiers: Vec<f64>,
    /// Hole columns per tier on each side of the cavity center.
    pub tier_columns: usize,
}

impl Default for CavitySpec {
    fn default() -> Self {
        Self { shift_tiers: vec![6.0, 4.0, 2.0], tier_columns: 1 }
    }
}

impl CavitySpec {
    pub fn validate(&self, a: f64) -> Result<()> {
        if self.tier_columns == 0 {
            return Err(Error::param("tier_columns must be >= 1"));
        }
        for (k, &s) in self.shift_tiers.iter().enumerate() {
            if !(s >= 0.0) {
                return Err(Error::param(format!("shift tier {k} = {s} nm must be >= 0")));
            }
            if s >= a / 10.0 {
                return Err(Error::param(format!("shift tier {k} = {s} nm must be < a/10 = {} nm", a / 10.0)));
            }
        }
        // An all-zero tier list is the identity and is accepted as such.
        let all_zero = self.shift_tiers.iter().all(|&s| s == 0.0);
        if !all_zero && self.shift_tiers.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param(format!("shift tiers {:?} must be strictly decreasing", self.shift_tiers)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleSet {
    /// Lattice constant the set was generated with (nm).
    pub lattice_constant: f64,
    pub holes: Vec<Hole>,
}

impl HoleSet {
    pub fn len(&self) -> usize {
        self.holes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holes.is_empty()
    }

    /// Axis-aligned bounding box `[x_min, x_max, y_min, y_max]` including radii.
    pub fn bounding_box(&self) -> [f64; 4] {
        let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for h in &self.holes {
            bb[0] = bb[0].min(h.x - h.radius);
            bb[1] = bb[1].max(h.x + h.radius);
            bb[2] = bb[2].min(h.y - h.radius);
            bb[3] = bb[3].max(h.y + h.radius);
        }
        bb
    }

    /// Reflect every hole about `x = 0` (`flip_x`) and/or `y = 0` (`flip_y`).
    pub fn mirrored(&self, flip_x: bool, flip_y: bool) -> HoleSet {
        let sx = if flip_x { -1.0 } else { 1.0 };
        let sy = if flip_y { -1.0 } else { 1.0 };
        HoleSet { lattice_constant: self.lattice_constant, holes: self.holes.iter().map(|h| Hole { x: sx * h.x, y: sy * h.y, radius: h.radius }).collect() }
    }

    /// True if reflecting about the given axes maps the set onto itself
    /// within `tol` nm.
    pub fn is_mirror_symmetric(&self, flip_x: bool, flip_y: bool, tol: f64) -> bool {
        let m = self.mirrored(flip_x, flip_y);
        let mut used = vec![false; self.holes.len()];
        'outer: for h in &m.holes {
            for (k, g) in self.holes.iter().enumerate() {
                if !used[k] && (h.x - g.x).abs() <= tol && (h.y - g.y).abs() <= tol && (h.radius - g.radius).abs() <= tol {
                    used[k] = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }

    /// First pair of overlapping holes, if any.
    pub fn find_overlap(&self) -> Option<(usize, usize)> {
        for i in 0..self.holes.len() {
            for j in i + 1..self.holes.len() {
                let (p, q) = (&self.holes[i], &self.holes[j]);
                let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                if d <= p.radius + q.radius {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// Triangular lattice of `2·n_rows` hole rows with the central row removed.
pub fn build_lattice(spec: &LatticeSpec) -> Result<HoleSet> {
    spec.validate()?;
    let mut holes = Vec::with_capacity(spec.hole_count());
    let half_w = spec.waveguide_width() / 2.0;
    for m in 0..spec.n_rows {
        let y = half_w + m as f64 * spec.row_pitch();
        // Rows adjacent to the waveguide (and every second row beyond) hold
        // n_cols holes; the interleaved rows are shifted by a/2 and hold one
        // fewer so both stay centered.
        let count = if m % 2 == 0 { spec.n_cols } else { spec.n_cols - 1 };
        let center = (count as f64 - 1.0) / 2.0;
        for k in 0..count {
            let x = (k as f64 - center) * spec.a;
            for sy in [-1.0, 1.0] {
                holes.push(Hole { x, y: sy * y, radius: spec.r });
            }
        }
    }
    Ok(HoleSet { lattice_constant: spec.a, holes })
}

/// Displace the waveguide-adjacent holes nearest the cavity center away from
/// the waveguide axis by their tier's magnitude.
///
/// Tier `t` covers the `tier_columns` holes following tier `t-1` on each side
/// of `x = 0`; a hole sitting exactly on `x = 0` (odd `n_cols`) is left in
/// place.
pub fn apply_cavity_shifts(holes: &HoleSet, cav: &CavitySpec) -> Result<HoleSet> {
    cav.validate(holes.lattice_constant)?;
    let tol = 1e-6 * holes.lattice_constant;
    let inner_y = holes.holes.iter().map(|h| h.y.abs()).fold(f64::INFINITY, f64::min);

    // Index holes of one innermost row by distance from the center.
    let mut positive: Vec<f64> = holes.holes.iter().filter(|h| h.y > 0.0 && (h.y - inner_y).abs() <= tol && h.x > tol).map(|h| h.x).collect();
    positive.sort_by(f64::total_cmp);

    let needed = cav.tier_columns * cav.shift_tiers.len();
    if needed > positive.len() {
        return Err(Error::param(format!(
            "{} tiers x {} columns need {needed} holes per side but the waveguide row has {}",
            cav.shift_tiers.len(),
            cav.tier_columns,
            positive.len()
        )));
    }

    let shift_for = |x: f64| -> f64 {
        let ax = x.abs();
        positive.iter().take(needed).position(|&px| (px - ax).abs() <= tol).map(|k| cav.shift_tiers[k / cav.tier_columns]).unwrap_or(0.0)
    };

    let out = holes
        .holes
        .iter()
        .map(|h| {
            if (h.y.abs() - inner_y).abs() <= tol && h.x.abs() > tol {
                let s = shift_for(h.x);
                Hole { x: h.x, y: h.y.signum() * (h.y.abs() + s), radius: h.radius }
            } else {
                *h
            }
        })
        .collect();
    Ok(HoleSet { lattice_constant: holes.lattice_constant, holes: out })
}

/// Summary of the displacement between two hole sets of equal ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftAudit {
    pub displaced: usize,
    pub total_displacement_nm: f64,
    pub max_displacement_nm: f64,
}

pub fn shift_audit(before: &HoleSet, after: &HoleSet) -> ShiftAudit {
    let mut audit = ShiftAudit { displaced: 0, total_displacement_nm: 0.0, max_displacement_nm: 0.0 };
    for (p, q) in before.holes.iter().zip(&after.holes) {
        let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
        if d > 0.0 {
            audit.displaced += 1;
            audit.total_displacement_nm += d;
            audit.max_displacement_nm = audit.max_displacement_nm.max(d);
        }
    }
    audit
}

/// Relative permittivity on a uniform grid.
///
/// `eps` is row-major with `y` outer and `x` inner. `origin` is the physical
/// position of the center of cell `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DielectricMap {
    pub nx: usize,
    pub ny: usize,
    /// Grid pitch (nm).
    pub dx: f64,
    /// Center of cell (0, 0) in nm.
    pub origin: [f64; 2],
    pub eps_background: f64,
    pub eps: Vec<f64>,
}

impl DielectricMap {
    pub fn uniform(nx: usize, ny: usize, dx: f64, eps: f64) -> Self {
        Self { nx, ny, dx, origin: [-(nx as f64 - 1.0) / 2.0 * dx, -(ny as f64 - 1.0) / 2.0 * dx], eps_background: eps, eps: vec![eps; nx * ny] }
    }

    /// Map centered on the origin with `eps(x, y)` sampled at cell centers.
    pub fn from_fn(nx: usize, ny: usize, dx: f64, eps_background: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut map = Self::uniform(nx, ny, dx, eps_background);
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = map.cell_center(i, j);
                map.eps[j * nx + i] = f(x, y);
            }
        }
        map
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.eps[j * self.nx + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dx)
    }

    /// Cell containing the physical point, if inside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin[0]) / self.dx + 0.5).floor();
        let fj = ((y - self.origin[1]) / self.dx + 0.5).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// `∑ (eps - 1)·dx²` in nm².
    pub fn dielectric_area(&self) -> f64 {
        self.eps.iter().map(|e| e - 1.0).sum::<f64>() * self.dx * self.dx
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() != self.nx * self.ny {
            return Err(Error::Format(format!("eps has {} values, expected nx*ny = {}", self.eps.len(), self.nx * self.ny)));
        }
        if !(self.dx > 0.0) {
            return Err(Error::Format(format!("dx = {} must be > 0", self.dx)));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e >= 1.0 - 1e-12 && **e <= self.eps_background.max(1.0) + 1e-12)) {
            return Err(Error::Format(format!("eps value {e} outside [1, eps_background = {}]", self.eps_background)));
        }
        Ok(())
    }
}

/// Area-averaged permittivity of the hole set on a grid of pitch `dx`
/// padded by `pad` on every side of the holes' bounding box.
///
/// The grid has an odd number of cells per axis and is centered on the
/// origin, so a mirror-symmetric hole set yields a mirror-symmetric map.
pub fn rasterize(holes: &HoleSet, dx: f64, eps_background: f64, pad: f64) -> Result<DielectricMap> {
    let a = holes.lattice_constant;
    if !(dx > 0.0) || dx > a / 10.0 {
        return Err(Error::Resolution { dx_nm: dx, limit_nm: a / 10.0 });
    }
    if !(pad >= 2.0 * a) {
        return Err(Error::param(format!("pad = {pad} nm must be >= 2a = {} nm", 2.0 * a)));
    }
    if !(eps_background >= 1.0) {
        return Err(Error::param(format!("eps_background = {eps_background} must be >= 1")));
    }
    if holes.is_empty() {
        return Err(Error::param("hole set is empty"));
    }
    let bb = holes.bounding_box();
    let half_x = bb[0].abs().max(bb[1].abs()) + pad;
    let half_y = bb[2].abs().max(bb[3].abs()) + pad;
    let nx = odd_cells(half_x, dx);
    let ny = odd_cells(half_y, dx);
    Ok(rasterize_on_grid(holes, nx, ny, dx, eps_background))
}

fn odd_cells(half_extent: f64, dx: f64) -> usize {
    2 * (half_extent / dx).ceil() as usize + 1
}

/// Rasterize onto an explicit centered `nx × ny` grid (both odd).
pub fn rasterize_on_grid(holes: &HoleSet, nx: usize, ny: usize, dx: f64, eps_background: f64) -> DielectricMap {
    let s = SUBSAMPLES;
    let ci = (nx / 2) as i64;
    let cj = (ny / 2) as i64;
    // Subsample offsets within a cell, symmetric about the cell center.
    let offsets: Vec<f64> = (0..s).map(|k| (k as f64 + 0.5) / s as f64 - 0.5).collect();
    let mut inside = vec![0u32; nx * ny];

    for h in &holes.holes {
        let r2 = h.radius * h.radius;
        let i_lo = (((h.x - h.radius) / dx).floor() as i64 - 1 + ci).max(0);
        let i_hi = (((h.x + h.radius) / dx).ceil() as i64 + 1 + ci).min(nx as i64 - 1);
        let j_lo = (((h.y - h.radius) / dx).floor() as i64 - 1 + cj).max(0);
        let j_hi = (((h.y + h.radius) / dx).ceil() as i64 + 1 + cj).min(ny as i64 - 1);
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let mut count = 0;
                for oy in &offsets {
                    // (integer + offset)·dx is exactly antisymmetric under mirroring
                    let y = ((j - cj) as f64 + oy) * dx - h.y;
                    for ox in &offsets {
                        let x = ((i - ci) as f64 + ox) * dx - h.x;
                        if x * x + y * y < r2 {
                            count += 1;
                        }
                    }
                }
                inside[j as usize * nx + i as usize] += count;
            }
        }
    }

    let total = (s * s) as f64;
    let eps = inside
        .iter()
        .map(|&n| {
            let frac = (n as f64 / total).min(1.0);
            frac * 1.0 + (1.0 - frac) * eps_background
        })
        .collect();
    DielectricMap { nx, ny, dx, origin: [-(ci as f64) * dx, -(cj as f64) * dx], eps_background, eps }
}

/// Fundamental TE guided-mode effective index of a symmetric slab.
///
/// Solves `tan(κd/2) = γ/κ` with `κ = k0·√(n_core² − n_eff²)` and
/// `γ = k0·√(n_eff² − n_clad²)` by bisection on the fundamental branch
/// (`κd/2 < π/2`).
pub fn effective_index(n_core: f64, n_clad: f64, thickness: f64, lambda0: f64) -> Result<f64> {
    if !(n_clad >= 1.0 && n_core > n_clad) {
        return Err(Error::param(format!("need n_core > n_clad >= 1 (got n_core = {n_core}, n_clad = {n_clad})")));
    }
    if !(thickness > 0.0 && lambda0 > 0.0) {
        return Err(Error::param("thickness and lambda0 must be > 0"));
    }
    let k0 = 2.0 * std::f64::consts::PI / lambda0;
    let half_d = thickness / 2.0;
    // Sign-definite residual equivalent to tan(κd/2) − γ/κ while cos(κd/2) > 0.
    let residual = |n: f64| {
        let kappa = k0 * (n_core * n_core - n * n).max(0.0).sqrt();
        let gamma = k0 * (n * n - n_clad * n_clad).max(0.0).sqrt();
        kappa * (kappa * half_d).sin() - gamma * (kappa * half_d).cos()
    };
    // Restrict to κd/2 <= π/2.
    let kappa_max = std::f64::consts::FRAC_PI_2 / half_d;
    let n_branch = n_core * n_core - (kappa_max / k0).powi(2);
    let mut lo = if n_branch > n_clad * n_clad { n_branch.sqrt() } else { n_clad };
    let mut hi = n_core;
    if residual(lo) < 0.0 || residual(hi) > 0.0 {
        return Err(Error::Internal(format!("no fundamental guided mode bracketed in [{lo}, {hi}]")));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
