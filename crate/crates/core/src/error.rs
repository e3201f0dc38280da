use thiserror::Error;

pub type Result<T, E = SsvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SsvError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in `{component}` (exp overflow)")]
    Overflow { component: &'static str },

    #[error("path {path} overflowed at step {step} in `{component}`")]
    PathOverflow {
        path: usize,
        step: usize,
        component: &'static str,
    },

    #[error("resonant parameters: denominator `{denominator}` = {value:e} is within tolerance of zero")]
    Resonance { denominator: String, value: f64 },

    #[error("closed-form cross-check failed for {quantity}: closed form {closed:e}, integral chain {chain:e}")]
    CrossCheck {
        quantity: &'static str,
        closed: f64,
        chain: f64,
    },

    #[error("degenerate variance at horizon t = {t}: var_s = {var_s:e}, var_v = {var_v:e}")]
    DegenerateVariance { t: f64, var_s: f64, var_v: f64 },

    #[error("moment integrator failed: {0}")]
    Integrator(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("simulation overflow at bar {bar}: {source}")]
    BarOverflow {
        bar: usize,
        #[source]
        source: Box<SsvError>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("all {0} bootstrap replications failed")]
    AllReplicationsFailed(usize),

    #[error("classifier: {0}")]
    Classifier(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SsvError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        SsvError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn is_data_error(&self) -> bool {
        matches!(self, SsvError::Data(_) | SsvError::Csv(_))
    }
}
