//! `RunConfig`: one JSON document with a section per pipeline stage. Every
//! key is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use phcwg::cqed::TuningModel;
use phcwg::geometry::{CavitySpec, LatticeSpec};
use phcwg::spectra::{FitOptions, FreeParams, SynthOptions};
use phcwg::workflow::{RunSettings, SlabSpec};
use phcwg::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub fdtd: RunSettings,
    pub modal: ModalConfig,
    pub cqed: CqedConfig,
    pub spectra: SpectraConfig,
    pub io: IoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub a_nm: f64,
    pub r_over_a: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Waveguide width in units of `√3·a`.
    pub w_factor: f64,
    pub shift_tiers_nm: Vec<f64>,
    pub tier_columns: usize,
    pub n_slab: f64,
    pub thickness_nm: f64,
    pub design_wavelength_nm: f64,
    /// `None` means `a/20`.
    pub dx_nm: Option<f64>,
    /// `None` means `2a`.
    pub pad_nm: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let l = LatticeSpec::default();
        let c = CavitySpec::default();
        let s = SlabSpec::default();
        Self {
            a_nm: l.a,
            r_over_a: l.r / l.a,
            n_rows: l.n_rows,
            n_cols: l.n_cols,
            w_factor: l.w_factor,
            shift_tiers_nm: c.shift_tiers,
            tier_columns: c.tier_columns,
            n_slab: s.n_slab,
            thickness_nm: s.thickness_nm,
            design_wavelength_nm: s.design_wavelength_nm,
            dx_nm: s.dx_nm,
            pad_nm: s.pad_nm,
        }
    }
}

impl GeometryConfig {
    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec { a: self.a_nm, r: self.r_over_a * self.a_nm, n_rows: self.n_rows, n_cols: self.n_cols, w_factor: self.w_factor }
    }

    pub fn cavity(&self) -> CavitySpec {
        CavitySpec { shift_tiers: self.shift_tiers_nm.clone(), tier_columns: self.tier_columns }
    }

    pub fn slab(&self) -> SlabSpec {
        SlabSpec {
            n_slab: self.n_slab,
            thickness_nm: self.thickness_nm,
            design_wavelength_nm: self.design_wavelength_nm,
            dx_nm: self.dx_nm,
            pad_nm: self.pad_nm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModalConfig {
    /// Index for the `(λ0/n)³` volume unit; `None` uses the slab index.
    pub n: Option<f64>,
    /// Height that turns the 2D volume into 3D; `None` uses the slab thickness.
    pub height_eff_nm: Option<f64>,
    /// First ring-down step of the probe series; `None` reads it from the
    /// `simulate.json` next to the probe file.
    pub ringdown_start_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CqedConfig {
    pub oscillator_strength: f64,
    /// Refractive index; `eps_r = n²`.
    pub n: f64,
    #[serde(rename = "E0_eV")]
    pub e0_ev: f64,
    /// Mode volume in units of `(λ0/n)³`.
    pub v_lambda_n3: f64,
    #[serde(rename = "Gx_eV")]
    pub gx_ev: f64,
    #[serde(rename = "Gc_eV")]
    pub gc_ev: f64,
    /// Use this coupling instead of computing it from f and V.
    #[serde(rename = "hg_eV")]
    pub hg_ev: Option<f64>,
    pub q_min: f64,
    pub q_max: f64,
    pub q_points: usize,
}

impl Default for CqedConfig {
    fn default() -> Self {
        Self {
            oscillator_strength: 10.7,
            n: 3.46,
            e0_ev: 1.28,
            v_lambda_n3: 1.3,
            gx_ev: 78e-6,
            gc_ev: 160e-6,
            hg_ev: None,
            q_min: 100.0,
            q_max: 1e6,
            q_points: 241,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraConfig {
    /// Coupling used by `synthesize`.
    #[serde(rename = "hg_eV")]
    pub hg_ev: f64,
    pub tuning: TuningModel,
    #[serde(rename = "t_start_K")]
    pub t_start: f64,
    #[serde(rename = "t_stop_K")]
    pub t_stop: f64,
    #[serde(rename = "t_step_K")]
    pub t_step: f64,
    pub synth: SynthOptions,
    /// Instrument FWHM assumed by the fits; `None` uses `synth.resolution_fwhm_eV`.
    #[serde(rename = "fit_resolution_eV")]
    pub fit_resolution: Option<f64>,
    pub n_peaks: usize,
    pub free: FreeParams,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            hg_ev: 72.94e-6,
            tuning: TuningModel::default(),
            t_start: 5.0,
            t_stop: 17.0,
            t_step: 0.5,
            synth: SynthOptions::default(),
            fit_resolution: None,
            n_peaks: 1,
            free: FreeParams::default(),
        }
    }
}

impl SpectraConfig {
    pub fn temperatures(&self) -> Result<Vec<f64>> {
        if !(self.t_step > 0.0 && self.t_stop >= self.t_start && self.t_start >= 0.0) {
            return Err(Error::Parameter("temperature range needs 0 <= t_start_K <= t_stop_K and t_step_K > 0".into()));
        }
        let n = ((self.t_stop - self.t_start) / self.t_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.t_start + self.t_step * k as f64).collect())
    }

    pub fn fit_options(&self) -> FitOptions {
        let res = self.fit_resolution.unwrap_or(self.synth.resolution_fwhm);
        FitOptions { resolution_fwhm: (res > 0.0).then_some(res), ..Default::default() }
    }
}

/// Default input locations; positional arguments take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub epsmap: Option<PathBuf>,
    pub probe: Option<PathBuf>,
    pub fldmap: Option<PathBuf>,
    pub mode: Option<PathBuf>,
    pub spectrum: Option<PathBuf>,
    pub series_dir: Option<PathBuf>,
    pub results_dir: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
        }
    }
}
