use thiserror::Error;

use crate::perturbation::{Kind, MonomialKey};

/// Errors raised anywhere in the averaging / solving / shooting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed spec document: {0}")]
    Malformed(String),

    #[error("degree violation at {0}")]
    DegreeViolation(MonomialKey),

    #[error("multi-index length {got} at {key} does not match d = {expected}")]
    MultiIndexLength {
        key: MonomialKey,
        got: usize,
        expected: usize,
    },

    #[error("missing table {0}")]
    MissingTable(&'static str),

    #[error("table {0} is only allowed for discontinuous specs")]
    UnexpectedTable(&'static str),

    #[error("invalid coefficient value at {key}: {value}")]
    BadCoefficient { key: MonomialKey, value: f64 },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("operation requires a {expected} spec, got {got}")]
    KindMismatch { expected: Kind, got: Kind },

    #[error("value out of floating-point range: {0}")]
    FloatOverflow(String),

    #[error("first averaged component has a nonzero r^0 part; cannot factor out r")]
    NotFactorable,

    #[error("factored first component is not available for this system")]
    NoFactoredComponent,

    #[error("invalid search box: {0}")]
    InvalidBox(String),

    #[error("invalid generator targets: {0}")]
    Targets(String),

    #[error("singular coefficient solve in generator: {0}")]
    SingularSolve(String),

    #[error("vector field evaluated on the switching manifold y = 0")]
    OnSwitchingManifold,

    #[error("no return to the section within t_max = {t_max}")]
    Timeout { t_max: f64 },

    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("near-tangential crossing of y = 0 at t = {t} (|dy/dt| = {ydot:e}); possible sliding")]
    TangentialCrossing { t: f64, ydot: f64 },

    #[error("refine precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
