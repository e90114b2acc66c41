use thiserror::Error;

/// Failures raised anywhere in the estimation stack.
///
/// Variants carry the name of the failing condition, not the call site; the
/// CLI prefixes them with the operation that produced them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line passes through the origin (moment/direction ratio {ratio:e})")]
    DegenerateLine { ratio: f64 },
    #[error("camera center lies on the line; angular residual undefined")]
    DegenerateResidual,
    #[error("event ray is parallel to the line")]
    ParallelRay,

    #[error("need at least {required} events, got {got}")]
    TooFewEvents { required: usize, got: usize },
    #[error("design matrix is rank deficient (sigma5/sigma1 = {rank_ratio:e})")]
    SolverDegenerate { rank_ratio: f64 },
    #[error("nullspace vector cannot be decomposed into a line frame")]
    DecompositionDegenerate,
    #[error("numerical decomposition failed: {0}")]
    SolverNumerical(String),

    #[error("need at least 2 lines, got {0}")]
    TooFewLines(usize),
    #[error("partial velocity has zero magnitude")]
    ZeroPartialVelocity,
    #[error("lines are parallel; velocity along their direction is unobservable (sigma2/sigma1 = {conditioning:e})")]
    ParallelLinesDegenerate { conditioning: f64 },

    #[error("zero-length vector")]
    ZeroVector,
    #[error("true projected velocity vanishes (motion along the line)")]
    ProjectionDegenerate,

    #[error("sampling exhausted after {attempts} attempts: {what}")]
    SamplingExhausted { what: &'static str, attempts: usize },

    #[error("no manifold reached the inlier threshold")]
    NoManifoldFound,

    #[error("canonical coordinate undefined at curve pole (1 + u_z t = {denominator:e})")]
    CurvePole { denominator: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("file contains no samples")]
    EmptyFile,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
