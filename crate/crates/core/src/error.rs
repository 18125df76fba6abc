use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("reflection sign must be +1 or -1, got {0}")]
    InvalidSign(i64),

    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),

    #[error("zero-length direction vector")]
    ZeroVector,

    #[error("matrix is not orthogonal (max |MᵀM - I| = {0:e})")]
    NotOrthogonal(f64),

    #[error("matrix is not a proper rotation (det = {0})")]
    NotRotation(f64),

    #[error("degenerate zero-length path")]
    ZeroLengthPath,

    #[error("route needs at least two vertices, got {0}")]
    RouteTooShort(usize),

    #[error("degenerate route segment {0} (coincident vertices)")]
    DegenerateSegment(usize),

    #[error("grazing or degenerate interaction at vertex {0} (no reflection normal)")]
    DegenerateInteraction(usize),

    #[error("max_bounces {0} exceeds the supported limit of 3")]
    TooManyBounces(usize),

    #[error("endpoint {0:?} lies on facet {1}")]
    EndpointOnFacet([f64; 3], usize),

    #[error("invalid facet {index}: {reason}")]
    InvalidFacet { index: usize, reason: String },

    #[error("route endpoints do not coincide with the reference pair")]
    EndpointMismatch,

    #[error("empty path list")]
    NoPaths,

    #[error("displaced-pairs fit needs at least 2 displaced pairs, got {0}")]
    TooFewDisplacedPairs(usize),

    #[error("exhaustive channel model requires a scene")]
    MissingScene,

    #[error("reference energy is zero")]
    ZeroEnergy,

    #[error("negative SNR {0}")]
    NegativeSnr(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter file is inconsistent: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
