use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("bump {index} leaves the interior of the cube (needs margin {margin})")]
    BumpOutsideOmega { index: usize, margin: f64 },
    #[error("positivity violated: gamma reaches {min} <= 1/M = {floor}")]
    PositivityViolated { min: f64, floor: f64 },
    #[error("near-singular system (condition estimate {estimate:.3e}){}", column.map(|c| format!(" at column {c}")).unwrap_or_default())]
    NearSingularSystem { column: Option<usize>, estimate: f64 },
    #[error("singular matrix")]
    SingularMatrix,
    #[error("infeasible frame: {0}")]
    FrameInfeasible(String),
    #[error("fixed-point iteration stopped contracting after {iterations} iterations (last update {update:.3e})")]
    ContractionFailure { iterations: usize, update: f64 },
    #[error("projection loss: {fraction:.3} of the trace energy lies outside the basis truncation")]
    ProjectionLoss { fraction: f64 },
    #[error("identical boundary data: the DtN gap vanishes")]
    IdenticalData,
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
