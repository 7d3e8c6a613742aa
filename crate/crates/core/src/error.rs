use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step size underflow at x = {x} (h = {step:e}); reduce the energy range or loosen the tolerance")]
    StepUnderflow { x: f64, step: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("alpha inconsistency at E = {energy}: lift {lift} vs zero density {count} (tolerance {tolerance:e})")]
    AlphaInconsistent {
        energy: f64,
        lift: f64,
        count: f64,
        tolerance: f64,
    },

    #[error("root refinement failed in [{lo}, {hi}]: {reason}")]
    Refinement { lo: f64, hi: f64, reason: String },

    #[error("ambiguous curve continuation at xi = {xi} after {halvings} step halvings")]
    AmbiguousContinuation { xi: f64, halvings: usize },

    #[error("phase lift discontinuity at xi = {xi} (jump {jump})")]
    LiftDiscontinuity { xi: f64, jump: f64 },

    #[error("operator dimension {dim} exceeds the configured cap {cap}")]
    ResourceLimit { dim: usize, cap: usize },

    #[error("trace formula residue {imag:e} exceeds 10x the error estimate {estimate:e}")]
    TraceInconsistent { imag: f64, estimate: f64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
