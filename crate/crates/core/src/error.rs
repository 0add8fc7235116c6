use std::path::PathBuf;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum IdpgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid latent vector: {0}")]
    InvalidLatent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Monte Carlo quadrature requested without a seed")]
    MissingSeed,

    #[error("rejection sampler gave up after {0} consecutive rejections")]
    SamplerStalled(u64),

    #[error("model is not a product intensity: {0}")]
    NotProduct(String),

    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("time step {dt} violates the {bound_name} bound dt <= {bound}")]
    Unstable {
        dt: f64,
        bound: f64,
        bound_name: &'static str,
    },

    #[error("empty graph")]
    EmptyGraph,

    #[error("overlapping Dirac boxes: positions {0} and {1} closer than 6 epsilon")]
    OverlappingBoxes(usize, usize),

    #[error("missing restricted moments for {0}")]
    MissingRegion(&'static str),

    #[error("budget of {requested} node-samples exceeds the limit of {limit}")]
    Budget { requested: f64, limit: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IdpgError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(IdpgError::InvalidParameter(msg.into()))
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IdpgError {
    let path = path.into();
    move |source| IdpgError::Io { path, source }
}
