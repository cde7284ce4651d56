use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shooting did not converge: {0}")]
    NonConvergence(String),
    #[error("tail fit residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    PoorFit { residual: f64, tol: f64 },
    #[error("singular coupling: beta^2 = mu1*mu2 = {product}")]
    SingularBeta { product: f64 },
    #[error("regime {0} carries no synchronized amplitudes")]
    RegimeMismatch(String),
    #[error("box too small: peak margin {margin:.4} below required {required:.4}")]
    BoxTooSmall { margin: f64, required: f64 },
    #[error("grid spacing {h:.4e} coarser than limit {limit:.4e}")]
    ResolutionTooCoarse { h: f64, limit: f64 },
    #[error("separation d/eps = {ratio:.3} below the asymptotic threshold 4")]
    TooClose { ratio: f64 },
    #[error("no interior minimum: minimizer {at:.6e} sits on the boundary of [{low:.6e}, {high:.6e}]")]
    NoInteriorMin { at: f64, low: f64, high: f64 },
    #[error("Newton iteration did not converge: final residual {residual:.3e} after {iterations} steps")]
    DidNotConverge { residual: f64, iterations: usize },
    #[error("linear solver stalled: relative residual {relative:.3e} after {iterations} iterations")]
    LinearSolveStall { relative: f64, iterations: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
