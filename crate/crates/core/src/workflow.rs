//! Desk-scale cavity pipeline: geometry → dielectric map → broadband scan →
//! narrowband ring-down with a late DFT window → Q and mode volume.

use serde::{Deserialize, Serialize};

use crate::constants::{ev_to_hz, ev_to_nm, hz_to_ev};
use crate::error::{Error, Result};
use crate::fdtd::{Component, FieldMap, FluxBox, Simulation, SourceSpec, TimeSeries, Waveform};
use crate::geometry::{
    apply_cavity_shifts, build_lattice, effective_index, rasterize, shift_audit, CavitySpec, DielectricMap, HoleSet, LatticeSpec, ShiftAudit,
};
use crate::modal::{self, DecayFit, ModeCharacterization, Resonance};

/// Slab and discretization parameters of the 2D model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlabSpec {
    pub n_slab: f64,
    pub thickness_nm: f64,
    /// Wavelength at which the slab effective index is evaluated.
    pub design_wavelength_nm: f64,
    /// Grid pitch; `None` means `a/20`.
    pub dx_nm: Option<f64>,
    /// Padding around the holes; `None` means `2a`.
    pub pad_nm: Option<f64>,
}

impl Default for SlabSpec {
    fn default() -> Self {
        Self { n_slab: 3.46, thickness_nm: 180.0, design_wavelength_nm: 968.6, dx_nm: None, pad_nm: None }
    }
}

/// Everything produced by the geometry stage.
#[derive(Debug, Clone)]
pub struct Design {
    pub holes: HoleSet,
    pub audit: ShiftAudit,
    pub n_eff: f64,
    pub map: DielectricMap,
    pub waveguide_width_nm: f64,
}

pub fn design(lattice: &LatticeSpec, cavity: &CavitySpec, slab: &SlabSpec) -> Result<Design> {
    let base = build_lattice(lattice)?;
    let holes = apply_cavity_shifts(&base, cavity)?;
    let audit = shift_audit(&base, &holes);
    let n_eff = effective_index(slab.n_slab, 1.0, slab.thickness_nm, slab.design_wavelength_nm)?;
    let dx = slab.dx_nm.unwrap_or(lattice.a / 20.0);
    let pad = slab.pad_nm.unwrap_or(2.0 * lattice.a);
    let map = rasterize(&holes, dx, n_eff * n_eff, pad)?;
    Ok(Design { holes, audit, n_eff, map, waveguide_width_nm: lattice.waveguide_width() })
}

/// FDTD run settings. Durations are physical times so they do not depend on
/// the grid pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub courant: f64,
    pub pml_cells: usize,
    /// Center of the broadband scan pulse; `None` uses the slab design wavelength.
    #[serde(rename = "scan_center_eV")]
    pub scan_center_ev: Option<f64>,
    /// Scan pulse bandwidth relative to its center frequency.
    pub scan_bandwidth: f64,
    pub scan_time_ps: f64,
    /// Narrowband pulse bandwidth relative to the detected resonance.
    pub bandwidth: f64,
    pub run_time_ps: f64,
    /// The DFT monitor accumulates over the last part of the run, starting at this fraction.
    pub dft_start: f64,
    /// DFT samples per optical period.
    pub dft_samples_per_period: f64,
    /// Source and probe component; both sit at the cavity center.
    pub component: Component,
    /// Flux box = hole bounding box grown by this margin on every side.
    pub flux_margin_nm: Option<f64>,
    pub threads: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            courant: 0.5,
            pml_cells: 16,
            scan_center_ev: None,
            scan_bandwidth: 0.25,
            scan_time_ps: 0.45,
            bandwidth: 0.05,
            run_time_ps: 2.2,
            dft_start: 0.75,
            dft_samples_per_period: 12.0,
            component: Component::Ey,
            flux_margin_nm: None,
            threads: 1,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scan_bandwidth", self.scan_bandwidth),
            ("scan_time_ps", self.scan_time_ps),
            ("bandwidth", self.bandwidth),
            ("run_time_ps", self.run_time_ps),
            ("dft_samples_per_period", self.dft_samples_per_period),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::param(format!("{name} must be > 0 (got {v})")));
            }
        }
        if !(self.dft_start > 0.0 && self.dft_start < 1.0) {
            return Err(Error::param(format!("dft_start must lie in (0, 1), got {}", self.dft_start)));
        }
        if self.dft_samples_per_period < 8.0 {
            return Err(Error::param("dft_samples_per_period must be >= 8"));
        }
        if self.threads == 0 {
            return Err(Error::param("threads must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    /// Box in map cells.
    pub cells: FluxBox,
    /// Stored energy (J/m).
    pub energy: f64,
    /// Outward power through `[left, right, bottom, top]` (W/m).
    pub faces: [f64; 4],
    pub power: f64,
    pub q: Option<f64>,
}

/// Outcome of [`simulate`].
#[derive(Debug, Clone)]
pub struct CavityRun {
    pub dt: f64,
    pub scan_peaks: Vec<Resonance>,
    pub scan_series: TimeSeries,
    /// Narrowband probe series at the cavity center.
    pub series: TimeSeries,
    pub source_off_step: usize,
    pub dft_start_step: usize,
    pub dft_energy_ev: f64,
    pub field: FieldMap,
    pub flux: FluxReport,
}

/// Probe signals after the source must retain at least this fraction of the
/// peak amplitude seen while it was on, otherwise nothing resonates.
const RINGDOWN_FLOOR: f64 = 1e-6;

/// Resonances of a probe series after `t_min`, restricted to the band a
/// Gaussian pulse at `f0` with bandwidth `df` actually excites.
pub fn excited_resonances(series: &TimeSeries, t_min: usize, f0: f64, df: f64) -> Result<Vec<Resonance>> {
    let during = series.samples[..t_min.min(series.len())].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let after = series.samples.get(t_min..).unwrap_or(&[]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(after > RINGDOWN_FLOOR * during) {
        return Err(Error::NoResonance);
    }
    let peaks: Vec<Resonance> = modal::resonance_scan(series, t_min)?.into_iter().filter(|r| (r.freq_hz - f0).abs() < 2.6 * df).collect();
    if peaks.is_empty() {
        return Err(Error::NoResonance);
    }
    Ok(peaks)
}

fn steps_for(ps: f64, dt: f64) -> usize {
    (ps * 1e-12 / dt).round() as usize
}

fn center_cell(map: &DielectricMap) -> Result<(usize, usize)> {
    map.cell_of(0.0, 0.0).ok_or_else(|| Error::param("map does not contain the origin"))
}

fn prepare(map: &DielectricMap, s: &RunSettings, f0: f64, df: f64) -> Result<(Simulation, Waveform, usize)> {
    let mut sim = Simulation::init(map, s.courant, s.pml_cells)?;
    sim.set_threads(s.threads)?;
    let c = center_cell(map)?;
    let w = Waveform::gaussian(f0, df, sim.dt());
    sim.add_source(SourceSpec { cell: c, component: s.component, amplitude: 1.0, waveform: w })?;
    let probe = sim.add_probe(c, s.component)?;
    Ok((sim, w, probe))
}

/// Broadband scan followed by a narrowband run at the strongest resonance.
pub fn simulate(map: &DielectricMap, holes: Option<&HoleSet>, slab: &SlabSpec, s: &RunSettings) -> Result<CavityRun> {
    s.validate()?;
    map.validate()?;

    let f_scan = ev_to_hz(s.scan_center_ev.unwrap_or(hz_to_ev(crate::constants::C0 / (slab.design_wavelength_nm * 1e-9))));
    let df_scan = s.scan_bandwidth * f_scan;
    let (mut sim, w, probe) = prepare(map, s, f_scan, df_scan)?;
    let dt = sim.dt();
    let scan_steps = steps_for(s.scan_time_ps, dt);
    let off = w.off_step().unwrap_or(0);
    if scan_steps < off + modal::MIN_SCAN_SAMPLES {
        return Err(Error::param(format!(
            "scan_time_ps = {} gives {scan_steps} steps; the pulse alone needs {off} plus {} for analysis",
            s.scan_time_ps,
            modal::MIN_SCAN_SAMPLES
        )));
    }
    sim.run(scan_steps)?;
    let scan_series = sim.time_series(probe);
    let scan_peaks = excited_resonances(&scan_series, off, f_scan, df_scan)?;
    drop(sim);

    let f0 = scan_peaks[0].freq_hz;
    let df = s.bandwidth * f0;
    let (mut sim, w, probe) = prepare(map, s, f0, df)?;
    let total = steps_for(s.run_time_ps, dt);
    let off = w.off_step().unwrap_or(0);
    let dft_start = ((total as f64 * s.dft_start) as usize).max(off);
    if dft_start < off + modal::MIN_SCAN_SAMPLES || total <= dft_start {
        return Err(Error::param(format!("run_time_ps = {} ({total} steps) leaves no ring-down before the DFT window at step {dft_start}", s.run_time_ps)));
    }
    sim.reserve_steps(total);
    sim.run(dft_start)?;
    let peaks = excited_resonances(&sim.time_series(probe), off, f0, df)?;
    let f_dft = peaks[0].freq_hz;
    let stride = ((1.0 / (f_dft * dt * s.dft_samples_per_period)).floor() as usize).max(1);
    let mon = sim.add_dft_monitor_strided(f_dft, stride)?;
    sim.run(total - dft_start)?;

    let margin = s.flux_margin_nm.unwrap_or_else(|| holes.map_or(4.0 * map.dx, |h| h.lattice_constant));
    let cells = flux_box(map, holes, margin)?;
    let energy = sim.box_energy(mon, &cells)?;
    let faces = sim.box_face_fluxes(mon, &cells)?;
    let power: f64 = faces.iter().sum();
    let q = modal::q_from_flux(energy, power, hz_to_ev(f_dft)).ok();

    Ok(CavityRun {
        dt,
        scan_peaks,
        scan_series,
        series: sim.time_series(probe),
        source_off_step: off,
        dft_start_step: dft_start,
        dft_energy_ev: hz_to_ev(f_dft),
        field: sim.field_map(mon),
        flux: FluxReport { cells, energy, faces, power, q },
    })
}

/// Map cells of the hole bounding box grown by `margin`, or the map minus a
/// `margin` border when there are no holes.
pub fn flux_box(map: &DielectricMap, holes: Option<&HoleSet>, margin: f64) -> Result<FluxBox> {
    let half = [(map.nx as f64 - 1.0) / 2.0 * map.dx, (map.ny as f64 - 1.0) / 2.0 * map.dx];
    let bb = match holes {
        Some(h) if !h.is_empty() => h.bounding_box(),
        _ => [-half[0] + 2.0 * margin, half[0] - 2.0 * margin, -half[1] + 2.0 * margin, half[1] - 2.0 * margin],
    };
    let lo = map.cell_of(bb[0] - margin, bb[2] - margin);
    let hi = map.cell_of(bb[1] + margin, bb[3] + margin);
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo.0 >= 1 && lo.1 >= 1 && hi.0 + 2 < map.nx && hi.1 + 2 < map.ny => {
            Ok(FluxBox { i0: lo.0, i1: hi.0 + 1, j0: lo.1, j1: hi.1 + 1 })
        }
        _ => Err(Error::param(format!("flux box with margin {margin} nm does not fit inside the map"))),
    }
}

/// Decay fit over the earliest clean tail of the ring-down.
///
/// Candidate windows start at `t_start` and move later in steps of 1/20 of
/// the remaining series while at least `min_periods` optical periods are
/// left. The first window with r² ≥ 0.999 wins; otherwise the best window
/// passing the acceptance threshold; otherwise the last error.
pub fn decay_search(series: &TimeSeries, e0_ev: f64, t_start: usize, min_periods: usize) -> Result<(usize, DecayFit)> {
    let period = 1.0 / (ev_to_hz(e0_ev) * series.dt);
    let span = series.len().saturating_sub(t_start);
    let need = (min_periods as f64 * period).ceil() as usize;
    if span < need {
        return Err(Error::param(format!("{span} samples after step {t_start}; a decay fit needs {min_periods} periods ({need} samples)")));
    }
    let step = ((span - need) / 20).max(1);
    let mut best: Option<(usize, DecayFit)> = None;
    let mut last_err = Error::NoResonance;
    let mut t = t_start;
    while t + need <= series.len() {
        match modal::q_from_decay(series, e0_ev, t) {
            Ok(fit) if fit.r_squared >= 0.999 || fit.lower_bound => return Ok((t, fit)),
            Ok(fit) => {
                if best.as_ref().is_none_or(|(_, b)| fit.r_squared > b.r_squared) {
                    best = Some((t, fit));
                }
            }
            Err(e) => last_err = e,
        }
        t += step;
    }
    best.ok_or(last_err)
}

/// Analysis of a completed run: resonance, Q by both methods and volume.
#[derive(Debug, Clone, Serialize)]
pub struct CavityAnalysis {
    pub mode: ModeCharacterization,
    pub decay: DecayFit,
    pub decay_start_step: usize,
    /// Amplitude of the strongest resonance over the next one in the decay
    /// window; `None` when only one peak is present.
    pub dominance: Option<f64>,
    pub peaks: Vec<Resonance>,
    pub volume: modal::ModeVolume,
}

pub fn analyze(
    series: &TimeSeries,
    t_start: usize,
    field: &FieldMap,
    map: &DielectricMap,
    n: f64,
    height_eff_nm: f64,
    q_flux: Option<f64>,
) -> Result<CavityAnalysis> {
    let coarse = modal::resonance_scan(series, t_start)?;
    let (t0, decay) = decay_search(series, coarse[0].energy_ev, t_start, 100)?;
    let peaks = modal::resonance_scan(series, t0)?;
    let e0 = peaks[0].energy_ev;
    let dominance = peaks.get(1).map(|p| peaks[0].amplitude / p.amplitude);
    let volume = modal::mode_volume(field, map, height_eff_nm, e0, n)?;
    let mut mode = ModeCharacterization::new(e0, &decay, &volume);
    mode.q_flux = q_flux;
    if (field.freq_hz / ev_to_hz(e0) - 1.0).abs() > 1e-3 {
        mode.warnings.push(format!(
            "field map accumulated at {:.2} nm but the resonance is at {:.2} nm",
            crate::constants::C0 / field.freq_hz * 1e9,
            ev_to_nm(e0)
        ));
    }
    Ok(CavityAnalysis { mode, decay, decay_start_step: t0, dominance, peaks, volume })
}
