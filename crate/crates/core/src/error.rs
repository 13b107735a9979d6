use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge after {iterations} operator applications; best relative residuals {residuals:?}")]
    NotConverged { iterations: usize, residuals: Vec<f64> },
    #[error("vector has zero b-seminorm")]
    ZeroBNorm,
    #[error("singular local saddle-point system on the patch of vertex {vertex}")]
    SingularPatch { vertex: usize },
    #[error("shift violates the gap condition: nu = {nu} is not above lambda_s = {lambda_s}")]
    ShiftTooSmall { nu: f64, lambda_s: f64 },
    #[error("estimator unavailable: no finite bound; supply a lower bound for the first eigenvalue or check coefficients")]
    EstimatorUnavailable,
    #[error("homotopy stage {stage}: {message}")]
    Homotopy { stage: usize, message: String },
}

impl Error {
    /// True for errors caused by user input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_)
                | Error::Problem(_)
                | Error::Mesh(_)
                | Error::Config(_)
                | Error::Parse(_)
                | Error::Io(_)
        )
    }
}
