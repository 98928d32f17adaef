use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid polygon at vertex {vertex}: {reason}")]
    InvalidPolygon { vertex: usize, reason: String },

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("direction is not strictly interior to the cone (face {face}: theta.n = {dot:e})")]
    NotInterior { face: usize, dot: f64 },

    #[error("planar section is unbounded (direction phi = {phi})")]
    Unbounded { phi: f64 },

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("quadrature failed to reach tolerance {tol:e} (estimate {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("matrix Z is singular at sample {sample}")]
    SingularZ { sample: usize },

    #[error("supplied gradient inconsistent with b at sample {sample} (discrepancy {discrepancy:e})")]
    InconsistentGradient { sample: usize, discrepancy: f64 },

    #[error("no boundary point has positive weight")]
    NoPositiveWeight,

    #[error("Rayleigh quotient is non-negative ({value:e}) at gamma = {gamma}; gamma too small")]
    NonNegativeQuotient { gamma: f64, value: f64 },

    #[error("mesh generation failed at vertex {vertex}: {reason}")]
    MeshFailure { vertex: usize, reason: String },

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by invalid input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidPolygon { .. }
                | Error::InvalidCone(_)
                | Error::NotInterior { .. }
                | Error::Unbounded { .. }
                | Error::NoPositiveWeight
                | Error::InconsistentGradient { .. }
                | Error::Parse(_)
        )
    }
}
