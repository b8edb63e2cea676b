//! FDTD measurements shared by the property tests and the acceptance run.
//! Each returns the measured quantity; callers apply the bounds.
#![allow(dead_code)]

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use phcwg::constants::C0;
use phcwg::fdtd::*;
use phcwg::geometry::DielectricMap;
use phcwg::modal::resonance_scan;
use phcwg::Error;

// Counting is per-thread so the harness's own threads do not interfere.
pub struct Counting;

thread_local! {
    static ARMED: Cell<bool> = const { Cell::new(false) };
    static COUNT: Cell<usize> = const { Cell::new(0) };
}

fn note() {
    // try_with: thread-locals may already be gone during thread teardown
    let _ = ARMED.try_with(|a| {
        if a.get() {
            let _ = COUNT.try_with(|c| c.set(c.get() + 1));
        }
    });
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        note();
        unsafe { System.alloc(layout) }
    }
    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        note();
        unsafe { System.alloc_zeroed(layout) }
    }
    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        note();
        unsafe { System.realloc(ptr, layout, new_size) }
    }
    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

pub fn allocations_during(f: impl FnOnce()) -> usize {
    COUNT.with(|c| c.set(0));
    ARMED.with(|a| a.set(true));
    f();
    ARMED.with(|a| a.set(false));
    COUNT.with(|c| c.get())
}

pub fn vacuum(n: usize, m: usize) -> DielectricMap {
    DielectricMap::uniform(n, m, 20.0, 1.0)
}

/// Disk of eps 4 in vacuum, symmetric about the center cell (odd sizes).
pub fn disk(n: usize, r_cells: f64) -> DielectricMap {
    let mut map = DielectricMap::uniform(n, n, 20.0, 4.0);
    let c = (n / 2) as i64;
    for j in 0..n {
        for i in 0..n {
            let (di, dj) = (i as i64 - c, j as i64 - c);
            map.eps[j * n + i] = if ((di * di + dj * dj) as f64) < r_cells * r_cells { 4.0 } else { 1.0 };
        }
    }
    map
}

/// Frequency with `cells_per_wavelength` vacuum cells per wavelength.
pub fn freq(map: &DielectricMap, cells_per_wavelength: f64) -> f64 {
    C0 / (cells_per_wavelength * map.dx * 1e-9)
}

pub fn pulse(sim: &Simulation, cell: (usize, usize), component: Component, f0: f64, amplitude: f64) -> SourceSpec {
    SourceSpec { cell, component, amplitude, waveform: Waveform::gaussian(f0, 0.5 * f0, sim.dt()) }
}

/// Worst relative energy drift over 10⁴ source-free steps in a closed vacuum box.
pub fn closed_box_energy_drift() -> f64 {
    let map = vacuum(48, 40);
    let mut sim = Simulation::closed(&map, 0.5).unwrap();
    let src = pulse(&sim, (17, 22), Component::Hz, freq(&map, 12.0), 1.0);
    let off = src.waveform.off_step().unwrap();
    sim.add_source(src).unwrap();
    sim.run(off + 1).unwrap();
    let e0 = sim.energy();
    assert!(e0 > 0.0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        sim.run(100).unwrap();
        worst = worst.max((sim.energy() / e0 - 1.0).abs());
    }
    worst
}

/// Plane wave between the top and bottom walls of a closed channel, launched
/// by a column of Ey sources. The arrival time is the centroid of the probe
/// energy. Returns the measured and the expected delay over 100 cells, in steps.
pub fn pulse_delay() -> (f64, f64) {
    let map = vacuum(1200, 4);
    let mut sim = Simulation::closed(&map, 0.5).unwrap();
    let f0 = freq(&map, 40.0);
    for j in 0..4 {
        let src = SourceSpec { cell: (100, j), component: Component::Ey, amplitude: 1.0, waveform: Waveform::GaussianPulse { f0, df: f0, t_off: 400 } };
        sim.add_source(src).unwrap();
    }
    let near = sim.add_probe((200, 2), Component::Ey).unwrap();
    let far = sim.add_probe((300, 2), Component::Ey).unwrap();
    let steps_per_cell = 2f64.sqrt() / sim.courant();
    sim.run(1400).unwrap();
    let centroid = |k: usize, cells: f64| {
        let end = ((cells + 176.0) * steps_per_cell) as usize;
        let s = &sim.probe(k).samples[..end];
        let w: f64 = s.iter().map(|v| v * v).sum();
        s.iter().enumerate().map(|(n, v)| n as f64 * v * v).sum::<f64>() / w
    };
    let delay = centroid(far, 200.0) - centroid(near, 100.0);
    (delay, 100.0 * map.dx * 1e-9 / C0 / sim.dt())
}

/// Step at which a run at S = 1.05 is flagged unstable, or the outcome if it is not.
pub fn courant_violation_step() -> Result<usize, String> {
    let map = vacuum(40, 40);
    let mut sim = Simulation::new_unchecked_courant(&map, 1.05, Boundary::Pml(PmlConfig::default())).unwrap();
    sim.add_source(pulse(&sim, (20, 20), Component::Hz, freq(&map, 10.0), 1.0)).unwrap();
    match sim.run(1000) {
        Err(Error::Instability { step, .. }) => Ok(step),
        other => Err(format!("{other:?}")),
    }
}

/// Largest mirror-symmetry violation, relative to the peak field, for an Ey
/// source at the center of a disk. Ey is even under both mirrors, Hz odd under
/// x and even under y.
pub fn mirror_symmetry_error() -> f64 {
    let n = 41;
    let c = n / 2;
    let map = disk(n, 9.3);
    let mut sim = Simulation::init(&map, 0.5, 10).unwrap();
    sim.add_source(pulse(&sim, (c, c), Component::Ey, freq(&map, 15.0), 1.0)).unwrap();
    let pair_x = [sim.add_probe((c - 6, c + 4), Component::Ey).unwrap(), sim.add_probe((c + 6, c + 4), Component::Ey).unwrap()];
    let pair_y = [sim.add_probe((c - 6, c + 4), Component::Ey).unwrap(), sim.add_probe((c - 6, c - 4), Component::Ey).unwrap()];
    sim.run(1200).unwrap();

    let mut worst = 0.0f64;
    for [a, b] in [pair_x, pair_y] {
        for (x, y) in sim.probe(a).samples.iter().zip(&sim.probe(b).samples) {
            worst = worst.max((x - y).abs());
        }
    }
    for j in 0..n {
        for i in 0..n {
            let (mi, mj) = (n - 1 - i, n - 1 - j);
            let ey = sim.field_at((i, j), Component::Ey);
            let hz = sim.field_at((i, j), Component::Hz);
            worst = worst
                .max((ey - sim.field_at((mi, j), Component::Ey)).abs())
                .max((ey - sim.field_at((i, mj), Component::Ey)).abs())
                .max((hz + sim.field_at((mi, j), Component::Hz)).abs())
                .max((hz - sim.field_at((i, mj), Component::Hz)).abs());
        }
    }
    let peak = sim.max_field();
    assert!(peak > 0.0);
    worst / peak
}

/// Lowest resonance of a PEC box `lx × ly` (nm) holding a disk of eps 4,
/// with the permittivity area-averaged over 8×8 subcells.
pub fn box_resonance(dx: f64, lx: f64, ly: f64, radius: f64) -> f64 {
    let (nx, ny) = ((lx / dx).round() as usize, (ly / dx).round() as usize);
    let sub = 8;
    let map = DielectricMap::from_fn(nx, ny, dx, 4.0, |x, y| {
        let mut inside = 0;
        for a in 0..sub {
            for b in 0..sub {
                let u = x + ((a as f64 + 0.5) / sub as f64 - 0.5) * dx;
                let v = y + ((b as f64 + 0.5) / sub as f64 - 0.5) * dx;
                inside += usize::from(u * u + v * v < radius * radius);
            }
        }
        1.0 + 3.0 * inside as f64 / (sub * sub) as f64
    });
    let mut sim = Simulation::closed(&map, 0.5).unwrap();
    let cell = map.cell_of(0.31 * lx - 0.5 * lx, 0.27 * ly - 0.5 * ly).unwrap();
    let f_guess = C0 / (2.0 * lx * 1e-9);
    let src = SourceSpec { cell, component: Component::Hz, amplitude: 1.0, waveform: Waveform::gaussian(f_guess, f_guess, sim.dt()) };
    let off = src.waveform.off_step().unwrap();
    sim.add_source(src).unwrap();
    let probe = sim.add_probe(map.cell_of(-0.2 * lx, 0.15 * ly).unwrap(), Component::Hz).unwrap();
    let steps = off + (300.0 / (f_guess * sim.dt())) as usize;
    sim.run(steps).unwrap();
    let peaks = resonance_scan(&sim.time_series(probe), off).unwrap();
    let strongest = peaks[0].amplitude;
    peaks.iter().filter(|p| p.amplitude > 1e-2 * strongest).map(|p| p.freq_hz).fold(f64::INFINITY, f64::min)
}

/// Disk-in-box geometry used for the grid-convergence check (nm).
pub const CONVERGENCE_BOX: (f64, f64, f64) = (800.0, 560.0, 190.0);

/// Single-threaded cell-updates per second on a 300×300 vacuum grid with PML.
pub fn throughput() -> f64 {
    let map = vacuum(300, 300);
    let mut sim = Simulation::init(&map, 0.5, 12).unwrap();
    sim.add_source(pulse(&sim, (150, 150), Component::Hz, freq(&map, 20.0), 1.0)).unwrap();
    sim.add_probe((100, 100), Component::Ex).unwrap();
    sim.run(20).unwrap();
    let (gx, gy) = sim.grid_size();
    let steps = 400;
    let t = std::time::Instant::now();
    sim.run(steps).unwrap();
    (gx * gy * steps) as f64 / t.elapsed().as_secs_f64()
}

/// Heap allocations over 2000 steps with sources, probes and DFT monitors attached.
pub fn steady_state_allocations() -> usize {
    let map = DielectricMap::from_fn(61, 41, 20.0, 4.0, |x, y| if x * x + y * y < 150.0 * 150.0 { 4.0 } else { 1.0 });
    let mut sim = Simulation::init(&map, 0.5, 10).unwrap();
    let f0 = C0 / (15.0 * 20e-9);
    let waveform = Waveform::gaussian(f0, 0.5 * f0, sim.dt());
    sim.add_source(SourceSpec { cell: (30, 20), component: Component::Hz, amplitude: 1.0, waveform }).unwrap();
    sim.add_source(SourceSpec { cell: (10, 10), component: Component::Ey, amplitude: 1.0, waveform: Waveform::Continuous { f0, ramp_periods: 3.0 } }).unwrap();
    sim.add_probe((40, 25), Component::Ex).unwrap();
    sim.add_probe((20, 15), Component::Hz).unwrap();
    sim.add_dft_monitor(f0).unwrap();
    sim.add_dft_monitor_strided(f0, 4).unwrap();
    sim.run(50).unwrap();

    let steps = 2000;
    sim.reserve_steps(steps);
    allocations_during(|| {
        for _ in 0..steps {
            sim.step().unwrap();
        }
    })
}
