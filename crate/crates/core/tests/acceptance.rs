//! Acceptance run: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the lines always reach stdout; exits nonzero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use phcwg::constants::ev_to_hz;
use phcwg::cqed::*;
use phcwg::fdtd::TimeSeries;
use phcwg::geometry::{CavitySpec, LatticeSpec};
use phcwg::modal::resonance_scan;
use phcwg::spectra::*;
use phcwg::workflow::{self, RunSettings, SlabSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UEV: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// `2ħg` from literal SI values, folded independently of the library.
fn two_hg_oracle() -> f64 {
    let (e, me, eps0, hbar, h, c): (f64, f64, f64, f64, f64, f64) =
        (1.602176634e-19, 9.1093837015e-31, 8.8541878128e-12, 1.054571817e-34, 6.62607015e-34, 299792458.0);
    let (f, n, e0_ev): (f64, f64, f64) = (10.7, 3.46, 1.28);
    let lambda = h * c / (e0_ev * e);
    let v = 1.3 * (lambda / n).powi(3);
    let g = (e * e * f / (4.0 * eps0 * n * n * me * v)).sqrt();
    2.0 * hbar * g / e
}

fn reference_volume_m3() -> f64 {
    let lambda = phcwg::constants::ev_to_nm(1.28) * 1e-9;
    1.3 * (lambda / 3.46).powi(3)
}

fn c1_coupling() -> Outcome {
    let hg = coupling_constant(10.7, reference_volume_m3(), 3.46 * 3.46).unwrap();
    let oracle = two_hg_oracle();
    let rel = (2.0 * hg / oracle - 1.0).abs();
    let two_hg = 2.0 * hg / UEV;
    outcome((two_hg - 200.0).abs() <= 20.0 && rel <= 1e-9, format!("2hg = {two_hg:.3} ueV (target 200 +/- 10%), oracle agreement {rel:.1e}"))
}

fn measured() -> CoupledSystem {
    CoupledSystem { ex: 1.28, ec: 1.28, gx: 78.0 * UEV, gc: 160.0 * UEV, hg: 72.94 * UEV }
}

fn c2_splitting() -> Outcome {
    let de = rabi_splitting(&measured()) / UEV;
    outcome((de - 140.0).abs() <= 0.1, format!("dE = {de:.3} ueV (target 140.0 +/- 0.1)"))
}

fn c3_criterion() -> Outcome {
    let s = strong_coupling_test(140.0 * UEV, 160.0 * UEV).unwrap();
    outcome(s.strong && (s.margin / UEV - 60.0).abs() < 1e-9, format!("strong = {}, margin = {:.3} ueV", s.strong, s.margin / UEV))
}

// The target 2591 is E0/(4hg + Gx) with 2hg rounded to 208 ueV. The unrounded
// coupling, 103.93 ueV, puts the onset at 2592.5; both are reported.
fn c4_versus_q() -> Outcome {
    let hg = coupling_constant(10.7, reference_volume_m3(), 3.46 * 3.46).unwrap();
    let grid = log_grid(100.0, 1e6, 241).unwrap();
    let at = |hg: f64| splitting_vs_q(1.28, hg, 78.0 * UEV, &grid).unwrap();
    let rounded = at(104.0 * UEV).onset_q_exact;
    let exact = at(hg).onset_q_exact;
    let sys = CoupledSystem { ex: 1.28, ec: 1.28, gx: 78.0 * UEV, gc: 1.28 / 1e4, hg };
    let sat = rabi_splitting(&sys) / (2.0 * hg);
    outcome(
        (rounded - 2591.0).abs() <= 1.0 && exact < 3000.0 && sat >= SATURATION_FRACTION,
        format!("Q* = {rounded:.1} at 2hg = 208 ueV (unrounded hg: {exact:.1}), dE(Q=1e4)/2hg = {sat:.4}"),
    )
}

fn c5_eigenmodes() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_split, mut worst_trace) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let ex = rng.random_range(1.0..2.0);
        let sys = CoupledSystem {
            ex,
            ec: ex - rng.random_range(-2e-3..2e-3),
            gx: rng.random_range(1e-6..1e-3),
            gc: rng.random_range(1e-6..1e-3),
            hg: rng.random_range(0.0..1e-3),
        };
        let [(r1, i1), (r2, i2)] = eigenmodes(&sys).eigenvalues;
        worst_trace =
            worst_trace.max((r1 + r2 - (sys.ex + sys.ec)).abs() / (sys.ex + sys.ec)).max((i1 + i2 + (sys.gx + sys.gc) / 2.0).abs() / (sys.gx + sys.gc));
        let zero = sys.at(sys.ex, sys.ex);
        let r = rabi_splitting(&zero);
        let m = eigenmodes(&zero).splitting;
        worst_split = worst_split.max(if r > 0.0 { (m - r).abs() / r } else { m / zero.ex });
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_split <= 1e-12 && worst_trace <= 1e-12 && secs < 1.0,
        format!("10^4 systems: splitting {worst_split:.1e}, trace {worst_trace:.1e} relative, {secs:.2} s"),
    )
}

fn c6_anticrossing() -> Outcome {
    let t = Instant::now();
    let sys = measured();
    let tuning = TuningModel::default();
    let temps: Vec<f64> = (0..=24).map(|k| 5.0 + 0.5 * k as f64).collect();
    let (mut worst_hg, mut worst_de) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let opts = SynthOptions { seed, ..Default::default() };
        let series = synthesize(&sys, &tuning, &temps, &opts).unwrap();
        let fit_opts = FitOptions { resolution_fwhm: Some(opts.resolution_fwhm), ..Default::default() };
        let fit = track_peaks(&series, &fit_opts).and_then(|b| fit_anticrossing(&b, sys.gx, sys.gc, &tuning, FreeParams::default()));
        match fit {
            Ok(f) => {
                worst_hg = worst_hg.max((f.hg / sys.hg - 1.0).abs());
                worst_de = worst_de.max((f.splitting / UEV - 140.0).abs());
            }
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_hg <= 0.02 && worst_de <= 3.0 && secs < 10.0,
        format!("20 seeds: hg within {:.2}%, dE within {worst_de:.2} ueV of 140, {secs:.1} s", 100.0 * worst_hg),
    )
}

fn c7_lorentzian() -> Outcome {
    let e = energy_grid(1.279, 1.281, 801).unwrap();
    let y = e.iter().map(|&x| lorentzian(x, 1.0, 1.28, 160.0 * UEV, 0.0)).collect();
    let spec = Spectrum { energies: e, intensities: y, temperature: None };
    let fit = fit_peaks(&spec, 1, None, &FitOptions::default()).unwrap();
    let q = extract_q(&fit, 0).unwrap().q;
    outcome((q / 8000.0 - 1.0).abs() <= 1e-3, format!("Q = {q:.3} (target 8000 +/- 0.1%)"))
}

fn c8_fdtd() -> Outcome {
    let t = Instant::now();
    let mut checks: Vec<(bool, String)> = Vec::new();

    let drift = common::closed_box_energy_drift();
    checks.push((drift <= 1e-10, format!("energy drift {drift:.1e}")));
    let (delay, expected) = common::pulse_delay();
    checks.push(((delay - expected).abs() <= 2.0, format!("pulse delay {delay:.2} vs {expected:.2} steps")));
    let courant = common::courant_violation_step();
    checks.push((courant.is_ok(), format!("S=1.05 {}", courant.map_or_else(|e| format!("not caught: {e}"), |s| format!("caught at step {s}")))));
    let sym = common::mirror_symmetry_error();
    checks.push((sym <= 1e-10, format!("symmetry {sym:.1e}")));
    let (lx, ly, r) = common::CONVERGENCE_BOX;
    let shift = (common::box_resonance(10.0, lx, ly, r) / common::box_resonance(5.0, lx, ly, r) - 1.0).abs();
    checks.push((shift < 5e-3, format!("dx 10->5 nm shift {:.2}%", 100.0 * shift)));

    let (lattice, cavity, slab) = (LatticeSpec::default(), CavitySpec::default(), SlabSpec::default());
    let cav = workflow::design(&lattice, &cavity, &slab).and_then(|d| {
        let run = workflow::simulate(&d.map, Some(&d.holes), &slab, &RunSettings::default())?;
        let a = workflow::analyze(&run.series, run.source_off_step, &run.field, &d.map, slab.n_slab, slab.thickness_nm, run.flux.q)?;
        Ok((run, a))
    });
    match cav {
        Ok((run, a)) => {
            let (px, py) = a.volume.peak_position_nm;
            let centered = px.abs() <= lattice.a && py.abs() <= lattice.a && a.volume.warning.is_none();
            checks.push((
                centered,
                format!(
                    "cavity E0 {:.4} eV, maximum at ({px:.0}, {py:.0}) nm, dominance {}",
                    a.mode.e0_ev,
                    a.dominance.map_or("single peak".into(), |d| format!("{d:.0}x"))
                ),
            ));
            checks.push((a.decay.q >= 1e3 && a.decay.r_squared >= 0.99, format!("decay Q {:.0} (r2 {:.5})", a.decay.q, a.decay.r_squared)));
            match run.flux.q {
                Some(qf) => checks.push(((qf / a.decay.q - 1.0).abs() <= 0.2, format!("flux Q {qf:.0}"))),
                None => checks.push((false, format!("flux Q unavailable, outward power {:.2e}", run.flux.power))),
            }
        }
        Err(e) => checks.push((false, format!("default cavity: {e}"))),
    }
    let secs = t.elapsed().as_secs_f64();
    checks.push((secs < 600.0, format!("{secs:.0} s")));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
    let all: Vec<&str> = checks.iter().map(|c| c.1.as_str()).collect();
    let mut detail = all.join("; ");
    if !failed.is_empty() {
        detail = format!("failing: {} | {detail}", failed.join("; "));
    }
    outcome(failed.is_empty(), detail)
}

fn c9_injected_q() -> Outcome {
    let t = Instant::now();
    let (e0, dt) = (1.2, 1.4741e-17);
    let w = 2.0 * PI * ev_to_hz(e0);
    let mut parts = Vec::new();
    let mut pass = true;
    for q in [1e3, 8e3, 1e5] {
        let samples = (0..40_000)
            .map(|n| {
                let t = n as f64 * dt;
                (-w * t / (2.0 * q)).exp() * (w * t).sin()
            })
            .collect();
        let series = TimeSeries { dt, samples };
        let got = resonance_scan(&series, 0).and_then(|p| workflow::decay_search(&series, p[0].energy_ev, 0, 100)).map(|(_, f)| f.q);
        match got {
            Ok(fit) => {
                pass &= (fit / q - 1.0).abs() <= 0.01;
                parts.push(format!("{q:.0} -> {fit:.1}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{q:.0} -> {e}"));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(pass && secs < 1.0, format!("{}, {secs:.2} s", parts.join(", ")))
}

fn c10_performance() -> Outcome {
    let rate = common::throughput();
    let allocs = common::steady_state_allocations();
    outcome(rate >= 5e7 && allocs == 0, format!("{rate:.2e} cell-updates/s single-threaded, {allocs} allocations in 2000 steps"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("coupling constant", c1_coupling),
        ("Rabi splitting", c2_splitting),
        ("strong-coupling test", c3_criterion),
        ("splitting versus Q", c4_versus_q),
        ("eigenmodes vs closed form", c5_eigenmodes),
        ("anticrossing round trip", c6_anticrossing),
        ("Lorentzian Q", c7_lorentzian),
        ("FDTD properties", c8_fdtd),
        ("injected decay Q", c9_injected_q),
        ("performance", c10_performance),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {:>2} {}: {name}: {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
