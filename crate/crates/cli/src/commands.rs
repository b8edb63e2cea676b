use std::fs;
use std::path::{Path, PathBuf};

use phcwg::constants::ev_to_nm;
use phcwg::cqed::{coupling_constant, eigenmodes, log_grid, rabi_splitting, splitting_vs_q, strong_coupling_test, CoupledSystem};
use phcwg::io;
use phcwg::modal::{ModeCharacterization, Resonance};
use phcwg::spectra::{extract_q, fit_anticrossing, fit_peaks, gaussian_blur, synthesize, track_peaks, AnticrossFit};
use phcwg::svg::{Plot, Series};
use phcwg::workflow;
use phcwg::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
    pub seed: Option<u64>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn note(&self, p: &Path) {
        eprintln!("wrote {}", p.display());
    }
}

/// Positional argument, else the config's io entry, else an input error.
fn input(arg: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    arg.or_else(|| fallback.clone()).ok_or_else(|| Error::Parameter(format!("no {what} given (pass it as an argument or set io.{what} in the config)")))
}

#[derive(Serialize)]
struct DesignSummary {
    hole_count: usize,
    #[serde(rename = "W_nm")]
    waveguide_width_nm: f64,
    a_nm: f64,
    r_over_a: f64,
    n_eff: f64,
    eps_background: f64,
    nx: usize,
    ny: usize,
    dx_nm: f64,
    shift_audit: phcwg::geometry::ShiftAudit,
}

pub fn design(ctx: &Ctx) -> Result<()> {
    let g = &ctx.cfg.geometry;
    let d = workflow::design(&g.lattice(), &g.cavity(), &g.slab())?;
    let map_path = ctx.path("cavity.epsmap");
    io::write_epsmap(&map_path, &d.map)?;
    let summary = DesignSummary {
        hole_count: d.holes.len(),
        waveguide_width_nm: d.waveguide_width_nm,
        a_nm: g.a_nm,
        r_over_a: g.r_over_a,
        n_eff: d.n_eff,
        eps_background: d.map.eps_background,
        nx: d.map.nx,
        ny: d.map.ny,
        dx_nm: d.map.dx,
        shift_audit: d.audit,
    };
    let json = ctx.path("design.json");
    io::write_json(&json, &summary)?;
    println!("holes: {}", summary.hole_count);
    println!("W = {:.3} nm ({} x sqrt(3) a)", d.waveguide_width_nm, g.w_factor);
    println!("displaced holes: {} (max {:.3} nm, total {:.3} nm)", d.audit.displaced, d.audit.max_displacement_nm, d.audit.total_displacement_nm);
    println!("n_eff = {:.4}; map {} x {} cells at {} nm", d.n_eff, d.map.nx, d.map.ny, d.map.dx);
    ctx.note(&map_path);
    ctx.note(&json);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Peak {
    #[serde(rename = "E0_eV")]
    energy_ev: f64,
    #[serde(rename = "freq_Hz")]
    freq_hz: f64,
    amplitude: f64,
}

impl From<&Resonance> for Peak {
    fn from(r: &Resonance) -> Self {
        Self { energy_ev: r.energy_ev, freq_hz: r.freq_hz, amplitude: r.amplitude }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FluxSummary {
    /// Map cells `[i0, i1, j0, j1]`.
    box_cells: [usize; 4],
    #[serde(rename = "energy_J_per_m")]
    energy: f64,
    #[serde(rename = "faces_W_per_m")]
    faces: [f64; 4],
    #[serde(rename = "power_W_per_m")]
    power: f64,
    #[serde(rename = "Q_flux")]
    q: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimSummary {
    dt_s: f64,
    steps: usize,
    source_off_step: usize,
    dft_start_step: usize,
    #[serde(rename = "dft_energy_eV")]
    dft_energy_ev: f64,
    scan_peaks: Vec<Peak>,
    flux: FluxSummary,
}

const SIM_SUMMARY: &str = "simulate.json";

pub fn simulate(ctx: &Ctx, epsmap: Option<PathBuf>) -> Result<()> {
    let path = input(epsmap, &ctx.cfg.io.epsmap, "epsmap")?;
    let map = io::read_epsmap(&path)?;
    let g = &ctx.cfg.geometry;
    let mut s = ctx.cfg.fdtd.clone();
    s.threads = ctx.threads;
    s.flux_margin_nm = s.flux_margin_nm.or(Some(g.a_nm));
    let run = workflow::simulate(&map, None, &g.slab(), &s)?;

    let probe = ctx.path("probe.csv");
    io::write_probe_csv(&probe, &run.series, 0)?;
    let scan = ctx.path("scan_probe.csv");
    io::write_probe_csv(&scan, &run.scan_series, 0)?;
    let field = ctx.path("field.fldmap");
    io::write_fldmap(&field, &run.field)?;
    let c = run.flux.cells;
    let summary = SimSummary {
        dt_s: run.dt,
        steps: run.series.len(),
        source_off_step: run.source_off_step,
        dft_start_step: run.dft_start_step,
        dft_energy_ev: run.dft_energy_ev,
        scan_peaks: run.scan_peaks.iter().map(Peak::from).collect(),
        flux: FluxSummary { box_cells: [c.i0, c.i1, c.j0, c.j1], energy: run.flux.energy, faces: run.flux.faces, power: run.flux.power, q: run.flux.q },
    };
    let json = ctx.path(SIM_SUMMARY);
    io::write_json(&json, &summary)?;
    println!("resonance: {:.5} eV ({:.2} nm)", run.dft_energy_ev, ev_to_nm(run.dft_energy_ev));
    match run.flux.q {
        Some(q) => println!("flux Q: {q:.0}"),
        None => println!("flux Q: unavailable (net outward power {:.3e} W/m)", run.flux.power),
    }
    for p in [&probe, &scan, &field, &json] {
        ctx.note(p);
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalysisReport {
    mode: ModeCharacterization,
    decay_start_step: usize,
    decay_r_squared: f64,
    decay_periods: usize,
    /// Strongest over second-strongest spectral peak in the decay window.
    dominance: Option<f64>,
    peaks: Vec<Peak>,
    v2d_nm2: f64,
    peak_cell: (usize, usize),
}

pub fn analyze(ctx: &Ctx, probe: Option<PathBuf>, fldmap: Option<PathBuf>, epsmap: Option<PathBuf>) -> Result<()> {
    let io_cfg = &ctx.cfg.io;
    let probe = input(probe, &io_cfg.probe, "probe")?;
    let fldmap = input(fldmap, &io_cfg.fldmap, "fldmap")?;
    let epsmap = input(epsmap, &io_cfg.epsmap, "epsmap")?;
    let (series, first_step) = io::read_probe_csv(&probe)?;
    let field = io::read_fldmap(&fldmap)?;
    let map = io::read_epsmap(&epsmap)?;

    let sim_path = probe.parent().unwrap_or(Path::new(".")).join(SIM_SUMMARY);
    let sim: Option<SimSummary> = if sim_path.exists() { Some(io::read_json(&sim_path)?) } else { None };
    let start = ctx
        .cfg
        .modal
        .ringdown_start_step
        .or(sim.as_ref().map(|s| s.source_off_step))
        .ok_or_else(|| Error::Parameter(format!("ring-down start unknown: set modal.ringdown_start_step or keep {SIM_SUMMARY} next to the probe")))?;
    let t_start = start.saturating_sub(first_step);
    let q_flux = sim.as_ref().and_then(|s| s.flux.q);

    let g = &ctx.cfg.geometry;
    let n = ctx.cfg.modal.n.unwrap_or(g.n_slab);
    let h = ctx.cfg.modal.height_eff_nm.unwrap_or(g.thickness_nm);
    let a = workflow::analyze(&series, t_start, &field, &map, n, h, q_flux)?;
    let mut mode = a.mode.clone();
    mode.a_nm = Some(g.a_nm);
    mode.r_over_a = Some(g.r_over_a);

    let mode_path = ctx.path("mode.json");
    io::write_json(&mode_path, &mode)?;
    let report = AnalysisReport {
        mode: mode.clone(),
        decay_start_step: a.decay_start_step + first_step,
        decay_r_squared: a.decay.r_squared,
        decay_periods: a.decay.periods,
        dominance: a.dominance,
        peaks: a.peaks.iter().map(Peak::from).collect(),
        v2d_nm2: a.volume.v2d_nm2,
        peak_cell: a.volume.peak_cell,
    };
    let report_path = ctx.path("analysis.json");
    io::write_json(&report_path, &report)?;

    let bound = if mode.q_lower_bound { ">= " } else { "" };
    println!("E0 = {:.5} eV ({:.2} nm)", mode.e0_ev, ev_to_nm(mode.e0_ev));
    println!("Q (decay) = {bound}{:.0}, r^2 = {:.5}", mode.q, a.decay.r_squared);
    if let Some(q) = mode.q_flux {
        println!("Q (flux) = {q:.0}");
    }
    println!("V = {:.4} um^3 = {:.3} (lambda/n)^3", mode.v_um3, mode.v_lambda_n3);
    for w in &mode.warnings {
        eprintln!("warning: {w}");
    }
    ctx.note(&mode_path);
    ctx.note(&report_path);
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    source: &'static str,
    #[serde(rename = "E0_eV")]
    e0_ev: f64,
    #[serde(rename = "V_m3")]
    v_m3: f64,
    #[serde(rename = "V_lambda_n3")]
    v_lambda_n3: f64,
    oscillator_strength: f64,
    n: f64,
    #[serde(rename = "hg_eV")]
    hg: f64,
    #[serde(rename = "two_hg_eV")]
    two_hg: f64,
    #[serde(rename = "Gx_eV")]
    gx: f64,
    #[serde(rename = "Gc_eV")]
    gc: f64,
    #[serde(rename = "Q_cavity")]
    q_cavity: f64,
    #[serde(rename = "dE_eV")]
    splitting: f64,
    strong_coupling: bool,
    #[serde(rename = "margin_eV")]
    margin: f64,
    #[serde(rename = "upper_eV")]
    upper: f64,
    #[serde(rename = "lower_eV")]
    lower: f64,
    #[serde(rename = "onset_Q")]
    onset_q: f64,
    #[serde(rename = "saturation_Q")]
    saturation_q: Option<f64>,
    #[serde(rename = "onset_Q_grid")]
    onset_q_grid: Option<f64>,
    #[serde(rename = "saturation_Q_grid")]
    saturation_q_grid: Option<f64>,
}

pub fn predict(ctx: &Ctx, mode: Option<PathBuf>) -> Result<()> {
    let c = &ctx.cfg.cqed;
    let mode_path = mode.or_else(|| ctx.cfg.io.mode.clone());
    let lambda_n = |e0: f64| ev_to_nm(e0) * 1e-9 / c.n;
    let (source, e0, v_m3) = match &mode_path {
        Some(p) => {
            let m: ModeCharacterization = io::read_json(p)?;
            m.validate()?;
            ("mode", m.e0_ev, m.volume_m3())
        }
        None => ("config", c.e0_ev, c.v_lambda_n3 * lambda_n(c.e0_ev).powi(3)),
    };
    let hg = match c.hg_ev {
        Some(h) => h,
        None => coupling_constant(c.oscillator_strength, v_m3, c.n * c.n)?,
    };
    let sys = CoupledSystem { ex: e0, ec: e0, gx: c.gx_ev, gc: c.gc_ev, hg };
    sys.validate()?;
    let splitting = rabi_splitting(&sys);
    let (strong, margin) = if splitting > 0.0 {
        let s = strong_coupling_test(splitting, c.gc_ev)?;
        (s.strong, s.margin)
    } else {
        (false, -c.gc_ev / 2.0)
    };
    let m = eigenmodes(&sys);
    let grid = log_grid(c.q_min, c.q_max, c.q_points)?;
    let curve = splitting_vs_q(e0, hg, c.gx_ev, &grid)?;

    let report = Prediction {
        source,
        e0_ev: e0,
        v_m3,
        v_lambda_n3: v_m3 / lambda_n(e0).powi(3),
        oscillator_strength: c.oscillator_strength,
        n: c.n,
        hg,
        two_hg: 2.0 * hg,
        gx: c.gx_ev,
        gc: c.gc_ev,
        q_cavity: e0 / c.gc_ev,
        splitting,
        strong_coupling: strong,
        margin,
        upper: m.plus.energy,
        lower: m.minus.energy,
        onset_q: curve.onset_q_exact,
        saturation_q: curve.saturation_q_exact,
        onset_q_grid: curve.onset_q,
        saturation_q_grid: curve.saturation_q,
    };
    let json = ctx.path("predict.json");
    io::write_json(&json, &report)?;
    let csv = ctx.path("splitting_vs_q.csv");
    io::write_csv(&csv, "Q,dE_eV", curve.points.iter().map(|&(q, d)| vec![q, d]))?;
    let svg = ctx.path("splitting_vs_q.svg");
    let um: Vec<(f64, f64)> = curve.points.iter().map(|&(q, d)| (q, d * 1e6)).collect();
    let mut plot = Plot::new("Rabi splitting at zero detuning", "cavity Q", "splitting (ueV)")
        .with(Series::line("dE(Q)", um.clone()))
        .with(Series::line("2hg", vec![(um[0].0, 2e6 * hg), (um[um.len() - 1].0, 2e6 * hg)]));
    plot.log_x = true;
    plot.write(&svg)?;

    println!("hg = {:.2} ueV, 2hg = {:.2} ueV", hg * 1e6, 2e6 * hg);
    println!("dE = {:.2} ueV at Gc = {:.1} ueV (Q = {:.0})", splitting * 1e6, c.gc_ev * 1e6, e0 / c.gc_ev);
    println!("strong coupling: {strong} (dE - Gc/2 = {:.2} ueV)", margin * 1e6);
    println!("splitting onset at Q = {:.1}", curve.onset_q_exact);
    for p in [&json, &csv, &svg] {
        ctx.note(p);
    }
    Ok(())
}

pub fn synthesize_series(ctx: &Ctx) -> Result<()> {
    let s = &ctx.cfg.spectra;
    let c = &ctx.cfg.cqed;
    let mut opts = s.synth.clone();
    if let Some(seed) = ctx.seed {
        opts.seed = seed;
    }
    let ex = s.tuning.exciton.e0;
    let sys = CoupledSystem { ex, ec: ex, gx: c.gx_ev, gc: c.gc_ev, hg: s.hg_ev };
    let series = synthesize(&sys, &s.tuning, &s.temperatures()?, &opts)?;
    let dir = ctx.path("series");
    io::write_series(&dir, &series)?;
    println!("{} spectra from {} K to {} K, seed {}", series.len(), s.t_start, s.t_stop, opts.seed);
    ctx.note(&dir);
    Ok(())
}

#[derive(Serialize)]
struct FittedPeak {
    amplitude: f64,
    #[serde(rename = "center_eV")]
    center: f64,
    #[serde(rename = "fwhm_eV")]
    fwhm: f64,
    #[serde(rename = "Q")]
    q: f64,
    #[serde(rename = "Q_sigma")]
    q_sigma: f64,
}

#[derive(Serialize)]
struct FitReport {
    converged: bool,
    iterations: usize,
    baseline: f64,
    residual_norm: f64,
    #[serde(rename = "resolution_fwhm_eV")]
    resolution: Option<f64>,
    peaks: Vec<FittedPeak>,
}

pub fn fit(ctx: &Ctx, spectrum: Option<PathBuf>, n_peaks: Option<usize>) -> Result<()> {
    let path = input(spectrum, &ctx.cfg.io.spectrum, "spectrum")?;
    let spec = io::read_spectrum_csv(&path)?;
    let n = n_peaks.unwrap_or(ctx.cfg.spectra.n_peaks);
    let opts = ctx.cfg.spectra.fit_options();
    let f = fit_peaks(&spec, n, None, &opts)?;
    let peaks = (0..f.peaks.len())
        .map(|k| {
            let p = f.peaks[k];
            let q = extract_q(&f, k)?;
            Ok(FittedPeak { amplitude: p.amplitude, center: p.center, fwhm: p.fwhm, q: q.q, q_sigma: q.sigma })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = FitReport {
        converged: f.converged,
        iterations: f.iterations,
        baseline: f.baseline,
        residual_norm: f.residual_norm,
        resolution: opts.resolution_fwhm,
        peaks,
    };
    let json = ctx.path("fit.json");
    io::write_json(&json, &report)?;

    let mut model: Vec<f64> = spec.energies.iter().map(|&e| f.evaluate(e)).collect();
    if let Some(r) = opts.resolution_fwhm {
        let lines: Vec<f64> = model.iter().map(|v| v - f.baseline).collect();
        model = gaussian_blur(&spec.energies, &lines, r).iter().map(|v| v + f.baseline).collect();
    }
    let svg = ctx.path("fit.svg");
    Plot::new("Lorentzian fit", "energy (eV)", "intensity")
        .with(Series::markers("data", spec.energies.iter().copied().zip(spec.intensities.iter().copied()).collect()))
        .with(Series::line("fit", spec.energies.iter().copied().zip(model).collect()))
        .write(&svg)?;

    for p in &report.peaks {
        println!("peak at {:.6} eV: FWHM {:.2} ueV, Q = {:.0} +- {:.0}", p.center, p.fwhm * 1e6, p.q, p.q_sigma);
    }
    ctx.note(&json);
    ctx.note(&svg);
    if !f.converged {
        return Err(Error::Internal(format!("fit stopped after {} iterations without converging", f.iterations)));
    }
    Ok(())
}

#[derive(Serialize)]
struct AnticrossReport {
    fit: AnticrossFit,
    strong_coupling: bool,
    #[serde(rename = "margin_eV")]
    margin: f64,
    #[serde(rename = "min_separation_eV")]
    min_separation: Option<f64>,
    failures: Vec<(f64, String)>,
}

pub fn anticross(ctx: &Ctx, dir: Option<PathBuf>) -> Result<()> {
    let dir = input(dir, &ctx.cfg.io.series_dir, "series_dir")?;
    let series = io::read_series(&dir)?;
    let s = &ctx.cfg.spectra;
    let c = &ctx.cfg.cqed;
    let br = track_peaks(&series, &s.fit_options())?;
    let fit = fit_anticrossing(&br, c.gx_ev, c.gc_ev, &s.tuning, s.free)?;
    let (strong, margin) = if fit.splitting > 0.0 {
        let t = strong_coupling_test(fit.splitting, c.gc_ev)?;
        (t.strong, t.margin)
    } else {
        (false, -c.gc_ev / 2.0)
    };

    let csv = ctx.path("anticross.csv");
    let rows = br.temperatures.iter().enumerate().map(|(k, &t)| {
        let (_, mu, ml) = fit.predicted[k];
        vec![t, br.upper[k].unwrap_or(f64::NAN), br.lower[k].unwrap_or(f64::NAN), mu, ml]
    });
    io::write_csv(&csv, "T_K,upper_eV,lower_eV,upper_model_eV,lower_model_eV", rows)?;

    let pts = |v: &[Option<f64>]| -> Vec<(f64, f64)> { br.temperatures.iter().zip(v).filter_map(|(&t, e)| Some((t, (*e)?))).collect() };
    let svg = ctx.path("anticross.svg");
    Plot::new("Anticrossing", "temperature (K)", "energy (eV)")
        .with(Series::markers("upper", pts(&br.upper)))
        .with(Series::markers("lower", pts(&br.lower)))
        .with(Series::line("upper fit", fit.predicted.iter().map(|p| (p.0, p.1)).collect()))
        .with(Series::line("lower fit", fit.predicted.iter().map(|p| (p.0, p.2)).collect()))
        .write(&svg)?;

    println!("hg = {:.2} +- {:.2} ueV", fit.hg * 1e6, fit.hg_std * 1e6);
    println!("dE = {:.2} ueV at T = {:.2} K", fit.splitting * 1e6, fit.zero_detuning_t);
    println!("strong coupling: {strong} (dE - Gc/2 = {:.2} ueV)", margin * 1e6);
    for (t, why) in &br.failures {
        eprintln!("warning: spectrum at {t} K not fitted: {why}");
    }
    let report = AnticrossReport { min_separation: br.min_separation(), failures: br.failures, fit, strong_coupling: strong, margin };
    let json = ctx.path("anticross.json");
    io::write_json(&json, &report)?;
    for p in [&json, &csv, &svg] {
        ctx.note(p);
    }
    Ok(())
}

/// JSON files directly in `dir` and one level below, sorted by path.
fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            for sub in fs::read_dir(&p)? {
                let q = sub?.path();
                if q.extension().is_some_and(|e| e == "json") {
                    out.push(q);
                }
            }
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn qmap(ctx: &Ctx, dir: Option<PathBuf>) -> Result<()> {
    let dir = input(dir, &ctx.cfg.io.results_dir, "results_dir")?;
    // (a, r/a, E0, Q, source)
    let mut rows: Vec<(f64, f64, f64, f64, PathBuf)> = Vec::new();
    for p in json_files(&dir)? {
        let Ok(m) = io::read_json::<ModeCharacterization>(&p) else { continue };
        let (Some(a), Some(r)) = (m.a_nm, m.r_over_a) else {
            eprintln!("warning: {} has no a_nm/r_over_a; skipped", p.display());
            continue;
        };
        if let Some(old) = rows.iter_mut().find(|row| row.0 == a && row.1 == r) {
            eprintln!("warning: duplicate (a_nm, r_over_a) = ({a}, {r}): {} replaces {}", p.display(), old.4.display());
            *old = (a, r, m.e0_ev, m.q, p);
        } else {
            rows.push((a, r, m.e0_ev, m.q, p));
        }
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let csv = ctx.path("qmap.csv");
    io::write_csv(&csv, "a_nm,r_over_a,E0_eV,Q", rows.iter().map(|r| vec![r.0, r.1, r.2, r.3]))?;
    let mut plot = Plot::new("Q map", "lattice constant a (nm)", "Q");
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.1).collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    for ratio in ratios {
        let pts = rows.iter().filter(|r| r.1 == ratio).map(|r| (r.0, r.3)).collect();
        plot = plot.with(Series::markers(format!("r/a = {ratio}"), pts));
    }
    let svg = ctx.path("qmap.svg");
    plot.write(&svg)?;
    println!("{} cavities", rows.len());
    ctx.note(&csv);
    ctx.note(&svg);
    Ok(())
}
