use thiserror::Error;

/// Errors produced by the pixelfem core.
#[derive(Debug, Error)]
pub enum Error {
    /// A pixel value or phase id has no entry in the material table.
    #[error("unmapped phase: {0}")]
    UnmappedPhase(String),

    /// A grid or material file could not be parsed.
    #[error("parse error in {path}: {message}")]
    ParseError { path: String, message: String },

    /// A synthetic microstructure could not be generated.
    #[error("generation failure: {0}")]
    GenerationFailure(String),

    /// Uniform coarsening requires even pixel counts.
    #[error("odd grid dimension {0}x{1}: uniform coarsening needs even sizes")]
    OddDimension(usize, usize),

    /// Variant-B coarsening accepts discrete cells only.
    #[error("variant B requires a discrete grid (blend cell at pixel {0})")]
    DiscreteOnly(usize),

    /// Poisson ratio too close to the incompressible limit 0.5.
    #[error("incompressible limit: nu = {0} is within 1e-9 of 0.5")]
    IncompressibleLimit(f64),

    /// Element geometry with non-positive Jacobian.
    #[error("degenerate element: {0}")]
    DegenerateElement(String),

    /// The constrained stiffness system is singular.
    #[error("singular system: {message}")]
    SingularSystem { message: String },

    /// Opposite periodic boundaries cannot be coupled.
    #[error("periodic mismatch: {0}")]
    PeriodicMismatch(String),

    /// Meshes passed to error quadrature are not nested in the reference.
    #[error("meshes not nested: {0}")]
    NotNested(String),

    /// Invalid argument outside the documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
