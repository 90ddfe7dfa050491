use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter lies outside its admissible range.
    #[error("parameter `{name}` = {value} out of range: {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    /// The degeneracy measure violates the standing hypothesis m_kappa < 2.
    #[error("degeneracy measure m_kappa = {0} violates m_kappa < 2")]
    HypothesisViolation(f64),

    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The shift hits (or numerically touches) the discrete spectrum.
    #[error("spectral collision at shift {shift}: {detail}")]
    SpectralCollision { shift: String, detail: String },

    #[error("near-singular resolvent: |D| = {0:e}")]
    NearSingular(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }

    /// True for failures that originate in the numerics rather than in the
    /// caller's configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SpectralCollision { .. }
                | Error::NearSingular(_)
                | Error::Numerical(_)
                | Error::DegenerateData(_)
                | Error::InsufficientData(_)
        )
    }
}
