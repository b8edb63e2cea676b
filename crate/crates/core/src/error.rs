use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented invariant.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("grid too coarse: dx = {dx_nm} nm exceeds a/10 = {limit_nm} nm")]
    Resolution { dx_nm: f64, limit_nm: f64 },

    #[error("FDTD instability detected at step {step} (|field| = {magnitude:e})")]
    Instability { step: usize, magnitude: f64 },

    #[error("no resonance above 10x the median spectral floor")]
    NoResonance,

    #[error("envelope is not monotone (multi-mode beating); narrow the source bandwidth")]
    Multimode,

    #[error("decay fit rejected: r^2 = {r_squared:.5} < 0.99")]
    PoorFit { r_squared: f64 },

    #[error("outward flux is {power:e} W/m; flux box too small or inside the PML")]
    FluxSign { power: f64 },

    #[error("degenerate data: {0}")]
    DegenerateFit(String),

    #[error("detuning never changes sign over the temperature range; coupling is unidentifiable")]
    Unidentifiable,

    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// True for errors caused by bad user input rather than a numerical or
    /// model failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Resolution { .. } | Error::Format(_) | Error::Io(_) | Error::Json(_))
    }
}
