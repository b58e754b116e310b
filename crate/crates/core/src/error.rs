use thiserror::Error;

/// Errors raised by the laboratory. Variant names follow the failure modes of
/// each operation so that callers (and reports) can match on them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    PointOutsideDomain { point: Vec<f64> },
    #[error("derivative order {order} is not supported by family `{family}`")]
    OrderUnsupported { family: String, order: usize },
    #[error("metric is degenerate at {point:?} (|det| = {det:e}, cond = {cond:e})")]
    DegenerateMetric {
        point: Vec<f64>,
        det: f64,
        cond: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid family parameters: {0}")]
    InvalidParameters(String),

    #[error("trajectory left the chart domain at t = {t}")]
    LeftDomain { t: f64 },
    #[error("step count {m} is below the minimum of 16")]
    StepCountTooSmall { m: usize },
    #[error("integration did not reach the acceptance tolerance (best error {error:e})")]
    IntegrationNotAccepted { error: f64 },
    #[error("endpoints coincide; set allow_equal to explore this case")]
    EqualEndpoints,
    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(
        "endpoint Jacobian is singular (relative sigma_min {sigma_rel:e}): conjugate endpoints"
    )]
    SingularEndpointJacobian {
        velocity: Vec<f64>,
        sigma_rel: f64,
        residual: f64,
    },
    #[error("no admissible support interval: field is parallel to the velocity everywhere")]
    NoIntervalFound,

    #[error("grid mismatch between curve and field")]
    GridMismatch,
    #[error("curve is not classified periodic")]
    NotPeriodic,
    #[error("point is not critical for the scalar family (|grad| = {grad_norm:e})")]
    NotCriticalPoint { grad_norm: f64 },
    #[error("geodesic is not lightlike (energy {energy:e})")]
    NotLightlike { energy: f64 },

    #[error("curve is not a geodesic of the metric (residual {residual:e})")]
    NotAGeodesic { residual: f64 },

    #[error("bump support tube intersects the curve outside the interval (t = {t})")]
    TubeIntersectsCurve { t: f64 },
    #[error("field is parallel to the velocity inside the interval (t = {t})")]
    VParallel { t: f64 },
    #[error("field is not an endpoint-vanishing Jacobi field (defect {defect:e})")]
    NotJacobi { defect: f64 },
    #[error("both factor velocities vanish at t = {t}")]
    BothVelocitiesVanish { t: f64 },
    #[error("geodesic is not vertical at a critical point")]
    NotVertical,
    #[error("kernel is empty: transversality holds vacuously")]
    EmptyKernel,
    #[error("re-shoot failed for eps = {eps}: {reason}")]
    ReshootFailed { eps: f64, reason: String },

    #[error("alpha is not positive definite at {point:?}")]
    AlphaNotPositive { point: Vec<f64> },
    #[error("beta is not positive at {point:?}")]
    BetaNotPositive { point: Vec<f64> },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
