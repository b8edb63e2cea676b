//! File formats.
//!
//! `.epsmap` and `.fldmap` share one container: a UTF-8 JSON header line
//! terminated by `\n`, then raw little-endian `f64` values in row-major order
//! (y outer, x inner). A field map stores one complex plane per component,
//! real and imaginary parts interleaved, in the order listed in the header.
//!
//! Text outputs are CSV with unit-suffixed headers. Floats are written with
//! Rust's shortest round-trip formatting, so files are lossless and
//! bit-reproducible.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{FieldMap, TimeSeries};
use crate::geometry::DielectricMap;
use crate::spectra::Spectrum;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpsHeader {
    nx: usize,
    ny: usize,
    dx_nm: f64,
    origin_nm: [f64; 2],
    eps_background: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldHeader {
    nx: usize,
    ny: usize,
    dx_nm: f64,
    origin_nm: [f64; 2],
    #[serde(rename = "freq_Hz")]
    freq_hz: f64,
    samples: usize,
    components: Vec<String>,
}

const FIELD_COMPONENTS: [&str; 3] = ["Hz", "Ex", "Ey"];

pub fn encode_epsmap(map: &DielectricMap) -> Result<Vec<u8>> {
    map.validate()?;
    let header = EpsHeader { nx: map.nx, ny: map.ny, dx_nm: map.dx, origin_nm: map.origin, eps_background: map.eps_background };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(8 * map.eps.len());
    for v in &map.eps {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_epsmap(bytes: &[u8]) -> Result<DielectricMap> {
    let (header, body) = split_header(bytes)?;
    let h: EpsHeader = serde_json::from_slice(header).map_err(|e| Error::Format(format!("epsmap header: {e}")))?;
    let eps = read_f64s(body, h.nx.checked_mul(h.ny).ok_or_else(|| Error::Format("epsmap size overflows".into()))?)?;
    let map = DielectricMap { nx: h.nx, ny: h.ny, dx: h.dx_nm, origin: h.origin_nm, eps_background: h.eps_background, eps };
    map.validate().map_err(|e| Error::Format(format!("epsmap: {e}")))?;
    Ok(map)
}

pub fn write_epsmap(path: &Path, map: &DielectricMap) -> Result<()> {
    fs::write(path, encode_epsmap(map)?)?;
    Ok(())
}

pub fn read_epsmap(path: &Path) -> Result<DielectricMap> {
    decode_epsmap(&fs::read(path)?)
}

pub fn encode_fldmap(field: &FieldMap) -> Result<Vec<u8>> {
    let n = field.nx * field.ny;
    if [field.hz.len(), field.ex.len(), field.ey.len()].iter().any(|&l| l != n) {
        return Err(Error::Internal("field planes do not match the grid size".into()));
    }
    let header = FieldHeader {
        nx: field.nx,
        ny: field.ny,
        dx_nm: field.dx_nm,
        origin_nm: field.origin_nm,
        freq_hz: field.freq_hz,
        samples: field.samples,
        components: FIELD_COMPONENTS.iter().map(|s| s.to_string()).collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(3 * 16 * n);
    for plane in [&field.hz, &field.ex, &field.ey] {
        for z in plane.iter() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_fldmap(bytes: &[u8]) -> Result<FieldMap> {
    let (header, body) = split_header(bytes)?;
    let h: FieldHeader = serde_json::from_slice(header).map_err(|e| Error::Format(format!("fldmap header: {e}")))?;
    if h.components != FIELD_COMPONENTS {
        return Err(Error::Format(format!("fldmap components must be {FIELD_COMPONENTS:?}, got {:?}", h.components)));
    }
    if !(h.dx_nm > 0.0 && h.freq_hz > 0.0) {
        return Err(Error::Format("fldmap needs dx_nm > 0 and freq_Hz > 0".into()));
    }
    let n = h.nx.checked_mul(h.ny).ok_or_else(|| Error::Format("fldmap size overflows".into()))?;
    let raw = read_f64s(body, 3 * 2 * n)?;
    let plane = |k: usize| -> Vec<Complex64> { raw[2 * k * n..2 * (k + 1) * n].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect() };
    Ok(FieldMap {
        nx: h.nx,
        ny: h.ny,
        dx_nm: h.dx_nm,
        origin_nm: h.origin_nm,
        freq_hz: h.freq_hz,
        samples: h.samples,
        hz: plane(0),
        ex: plane(1),
        ey: plane(2),
    })
}

pub fn write_fldmap(path: &Path, field: &FieldMap) -> Result<()> {
    fs::write(path, encode_fldmap(field)?)?;
    Ok(())
}

pub fn read_fldmap(path: &Path) -> Result<FieldMap> {
    decode_fldmap(&fs::read(path)?)
}

fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format("missing header line".into()))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

fn read_f64s(body: &[u8], count: usize) -> Result<Vec<f64>> {
    if body.len() != 8 * count {
        return Err(Error::Format(format!("expected {} data bytes, found {}", 8 * count, body.len())));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// Write a header line and rows of numbers.
pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a numeric CSV whose header must equal `header`.
pub fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text, header).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_csv(text: &str, header: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty file".into()))?;
    if first.trim() != header {
        return Err(Error::Format(format!("expected header `{header}`, found `{}`", first.trim())));
    }
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", k + 2)))?;
        if row.len() != cols {
            return Err(Error::Format(format!("line {}: expected {cols} columns, found {}", k + 2, row.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub const PROBE_HEADER: &str = "step,time_s,value";

/// Probe samples; sample `k` is written as step `first_step + k`.
pub fn write_probe_csv(path: &Path, series: &TimeSeries, first_step: usize) -> Result<()> {
    write_csv(
        path,
        PROBE_HEADER,
        series.samples.iter().enumerate().map(|(k, &v)| {
            let step = first_step + k;
            vec![step as f64, step as f64 * series.dt, v]
        }),
    )
}

/// Returns the series and the step of its first sample. Steps must be
/// consecutive.
pub fn read_probe_csv(path: &Path) -> Result<(TimeSeries, usize)> {
    let rows = read_csv(path, PROBE_HEADER)?;
    if rows.len() < 2 {
        return Err(Error::Format(format!("{}: need at least two probe samples", path.display())));
    }
    if rows.windows(2).any(|w| w[1][0] != w[0][0] + 1.0) || rows[0][0] < 0.0 || rows[0][0].fract() != 0.0 {
        return Err(Error::Format(format!("{}: steps must be consecutive non-negative integers", path.display())));
    }
    let (n, first) = (rows.len(), rows[0][0]);
    let dt = (rows[n - 1][1] - rows[0][1]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Format(format!("{}: time_s must increase", path.display())));
    }
    Ok((TimeSeries { dt, samples: rows.iter().map(|r| r[2]).collect() }, first as usize))
}

pub const SPECTRUM_HEADER: &str = "energy_eV,intensity";

pub fn write_spectrum_csv(path: &Path, spec: &Spectrum) -> Result<()> {
    write_csv(path, SPECTRUM_HEADER, spec.energies.iter().zip(&spec.intensities).map(|(&e, &i)| vec![e, i]))
}

pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let rows = read_csv(path, SPECTRUM_HEADER)?;
    let spec = Spectrum { energies: rows.iter().map(|r| r[0]).collect(), intensities: rows.iter().map(|r| r[1]).collect(), temperature: None };
    spec.validate().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(rename = "temperature_K")]
    pub temperature: f64,
}

pub const MANIFEST: &str = "manifest.json";

/// One CSV per spectrum plus `manifest.json`. Every spectrum needs a
/// temperature.
pub fn write_series(dir: &Path, series: &[Spectrum]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut manifest = Vec::with_capacity(series.len());
    let mut paths = Vec::with_capacity(series.len());
    for (k, spec) in series.iter().enumerate() {
        let t = spec.temperature.ok_or_else(|| Error::param(format!("spectrum {k} has no temperature")))?;
        let file = format!("spectrum_{k:03}.csv");
        let path = dir.join(&file);
        write_spectrum_csv(&path, spec)?;
        manifest.push(ManifestEntry { file, temperature: t });
        paths.push(path);
    }
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(paths)
}

/// Spectra in ascending temperature order.
pub fn read_series(dir: &Path) -> Result<Vec<Spectrum>> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    let mut manifest: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    manifest.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    if manifest.windows(2).any(|w| w[0].temperature == w[1].temperature) {
        return Err(Error::Format(format!("{}: duplicate temperatures", manifest_path.display())));
    }
    manifest
        .iter()
        .map(|m| {
            let mut s = read_spectrum_csv(&dir.join(&m.file))?;
            s.temperature = Some(m.temperature);
            Ok(s)
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = BufReader::new(fs::File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// First line of a file, for sniffing container headers.
pub fn header_line(path: &Path) -> Result<String> {
    let mut line = String::new();
    BufReader::new(fs::File::open(path)?).read_line(&mut line)?;
    Ok(line.trim_end().to_string())
}
