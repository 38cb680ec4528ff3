use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage: stage.to_string(), source: Box::new(e) },
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stencil incomplete at node {node}")]
    IncompleteStencil { node: usize },

    #[error("singular complex Hessian at node {node} (det = {det:e})")]
    SingularHessian { node: usize, det: f64 },

    #[error("image escapes domain at target node {node}")]
    ImageEscapes { node: usize },

    #[error("Newton stagnation after {iterations} iterations; residual history {history:?}")]
    Stagnation { iterations: usize, history: Vec<f64> },

    #[error("plurisubharmonicity lost at node {node} (min eigenvalue {min_eig:e})")]
    PshViolation { node: usize, min_eig: f64 },

    #[error("linear solve failed after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("section escapes domain (center {center}, height {height})")]
    SectionEscapes { center: usize, height: f64 },

    #[error("height below grid floor (center {center}, height {height}, floor {floor})")]
    BelowGridFloor { center: usize, height: f64, floor: f64 },

    #[error("degenerate moment matrix")]
    DegenerateMoments,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient scale range: {levels} resolvable levels")]
    InsufficientScales { levels: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
