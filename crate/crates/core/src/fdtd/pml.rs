use crate::constants::C0;

use super::PmlConfig;

#[derive(Debug, Clone, Copy)]
struct StripCoef {
    /// Grid index along the graded axis.
    idx: usize,
    b: f64,
    c: f64,
}

/// Convolutional PML (κ = 1, α = 0) restricted to the boundary strips.
///
/// The loss rate grows as `σ_max·depth^order` with
/// `σ_max = -(order + 1)·ln(R0)·c / (2·L)`, `L` the PML thickness.
#[derive(Debug, Clone, Default)]
pub struct PmlProfile {
    pub cells: usize,
    hx: Vec<StripCoef>,
    hy: Vec<StripCoef>,
    ex_y: Vec<StripCoef>,
    ey_x: Vec<StripCoef>,
    sigma_hx: Vec<f64>,
    sigma_hy: Vec<f64>,
    psi_hx: Vec<f64>,
    psi_hy: Vec<f64>,
    psi_ex: Vec<f64>,
    psi_ey: Vec<f64>,
}

impl PmlProfile {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(nx: usize, ny: usize, cfg: PmlConfig, dx: f64, dt: f64) -> Self {
        let p = cfg.cells;
        let thickness = p as f64 * dx;
        let sigma_max = -(cfg.order + 1.0) * cfg.reflection.ln() * C0 / (2.0 * thickness);
        let sigma = |depth: f64| sigma_max * depth.powf(cfg.order);
        // depth in [0, 1] of a point at grid coordinate u on an axis of n cells
        let depth = |u: f64, n: usize| {
            let d = (p as f64 - u).max(u - (n - p) as f64).max(0.0);
            d / p as f64
        };
        let coef = |idx: usize, s: f64| {
            let b = (-s * dt).exp();
            StripCoef { idx, b, c: b - 1.0 }
        };

        let cell_strip = |n: usize| -> (Vec<StripCoef>, Vec<f64>) {
            let idx: Vec<usize> = (0..p).chain(n - p..n).collect();
            let sig: Vec<f64> = idx.iter().map(|&i| sigma(depth(i as f64 + 0.5, n))).collect();
            (idx.iter().zip(&sig).map(|(&i, &s)| coef(i, s)).collect(), sig)
        };
        // interior nodes with nonzero loss; the wall nodes 0 and n are PEC
        let node_strip = |n: usize| -> Vec<StripCoef> {
            (1..n)
                .filter_map(|i| {
                    let s = sigma(depth(i as f64, n));
                    (s > 0.0).then(|| coef(i, s))
                })
                .collect()
        };

        let (hx, sigma_hx) = cell_strip(nx);
        let (hy, sigma_hy) = cell_strip(ny);
        let ex_y = node_strip(ny);
        let ey_x = node_strip(nx);
        Self {
            cells: p,
            psi_hx: vec![0.0; ny * hx.len()],
            psi_hy: vec![0.0; hy.len() * nx],
            psi_ex: vec![0.0; ex_y.len() * nx],
            psi_ey: vec![0.0; ny * ey_x.len()],
            hx,
            hy,
            ex_y,
            ey_x,
            sigma_hx,
            sigma_hy,
        }
    }

    /// Loss rates (1/s) at the `2·cells` Hz columns of the x strips.
    pub fn sigma_h_x(&self) -> &[f64] {
        &self.sigma_hx
    }

    /// Loss rates (1/s) at the `2·cells` Hz rows of the y strips.
    pub fn sigma_h_y(&self) -> &[f64] {
        &self.sigma_hy
    }

    /// True when no strip coefficient reaches into the region more than
    /// `margin` cells away from every grid edge.
    pub fn is_interior_lossless(&self, (nx, ny): (usize, usize), margin: usize) -> bool {
        let inside = |i: usize, n: usize| i >= margin && i + margin < n;
        self.hx.iter().all(|s| !inside(s.idx, nx))
            && self.hy.iter().all(|s| !inside(s.idx, ny))
            && self.ey_x.iter().all(|s| !(s.idx > margin && s.idx + margin < nx))
            && self.ex_y.iter().all(|s| !(s.idx > margin && s.idx + margin < ny))
    }

    pub(super) fn correct_h(&mut self, hz: &mut [f64], ex: &[f64], ey: &[f64], nx: usize, sc: f64) {
        let ny = hz.len() / nx.max(1);
        let lx = self.hx.len();
        if lx > 0 {
            for j in 0..ny {
                let e_row = &ey[j * (nx + 1)..(j + 1) * (nx + 1)];
                let h_row = &mut hz[j * nx..(j + 1) * nx];
                let psi = &mut self.psi_hx[j * lx..(j + 1) * lx];
                for (s, psi) in self.hx.iter().zip(psi) {
                    let d = e_row[s.idx + 1] - e_row[s.idx];
                    *psi = s.b * *psi + s.c * d;
                    h_row[s.idx] -= sc * *psi;
                }
            }
        }
        for (k, s) in self.hy.iter().enumerate() {
            let j = s.idx;
            let psi = &mut self.psi_hy[k * nx..(k + 1) * nx];
            let h_row = &mut hz[j * nx..(j + 1) * nx];
            let lo = &ex[j * nx..(j + 1) * nx];
            let hi = &ex[(j + 1) * nx..(j + 2) * nx];
            for (((h, psi), &lo), &hi) in h_row.iter_mut().zip(psi).zip(lo).zip(hi) {
                *psi = s.b * *psi + s.c * (hi - lo);
                *h += sc * *psi;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(super) fn correct_e(&mut self, ex: &mut [f64], ey: &mut [f64], hz: &[f64], inv_eps_ex: &[f64], inv_eps_ey: &[f64], nx: usize, sc: f64) {
        let ny = hz.len() / nx.max(1);
        for (k, s) in self.ex_y.iter().enumerate() {
            let j = s.idx;
            let psi = &mut self.psi_ex[k * nx..(k + 1) * nx];
            let e_row = &mut ex[j * nx..(j + 1) * nx];
            let ie = &inv_eps_ex[j * nx..(j + 1) * nx];
            let hi = &hz[j * nx..(j + 1) * nx];
            let lo = &hz[(j - 1) * nx..j * nx];
            for ((((e, psi), &ie), &hi), &lo) in e_row.iter_mut().zip(psi).zip(ie).zip(hi).zip(lo) {
                *psi = s.b * *psi + s.c * (hi - lo);
                *e += sc * ie * *psi;
            }
        }
        let lx = self.ey_x.len();
        if lx > 0 {
            let w = nx + 1;
            for j in 0..ny {
                let h_row = &hz[j * nx..(j + 1) * nx];
                let e_row = &mut ey[j * w..(j + 1) * w];
                let ie = &inv_eps_ey[j * w..(j + 1) * w];
                let psi = &mut self.psi_ey[j * lx..(j + 1) * lx];
                for (s, psi) in self.ey_x.iter().zip(psi) {
                    let i = s.idx;
                    *psi = s.b * *psi + s.c * (h_row[i] - h_row[i - 1]);
                    e_row[i] -= sc * ie[i] * *psi;
                }
            }
        }
    }
}
