use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("tail bound {tolerance:e} not reachable below cutoff {ceiling}")]
    TruncationUnreachable { tolerance: f64, ceiling: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid POVM element: {0}")]
    InvalidPovm(String),

    #[error("trace of the POVM element diverges for attenuation {nu_squared}")]
    Divergent { nu_squared: f64 },

    #[error("the regularized POVM element has zero trace (detector never clicks)")]
    NoClick,

    #[error("estimator undefined: {0}")]
    UndefinedEstimator(String),

    #[error("probe plan rejected: {0}")]
    PlanRejected(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }
}
