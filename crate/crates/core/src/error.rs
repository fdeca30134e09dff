use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImagingError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("encode failure: {0}")]
    EncodeFailure(String),
    #[error("decode failure: {0}")]
    DecodeFailure(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("lines are parallel or nearly so")]
    ParallelLines,
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(String),
    #[error("homography system is singular")]
    SingularSystem,
    #[error("crop region does not intersect the frame")]
    EmptyRegion,
    #[error("invalid output spec: {0}")]
    InvalidOutput(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DetectError {
    #[error("no edges found")]
    NoEdges,
    #[error("no dominant line in {0} region")]
    NoDominantLine(&'static str),
    #[error("expected 4 light tags, found {0}")]
    TagCountMismatch(usize),
    #[error("no bright blob found")]
    NoBlob,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("stale frame: seq {seq} is not newer than {last}")]
    StaleFrame { seq: u64, last: u64 },
    #[error("candidate source {got} does not match session mode {mode}")]
    ModeMismatch { mode: String, got: String },
    #[error("no candidate to lock")]
    NoCandidate,
    #[error("edit would produce an invalid quad: {0}")]
    InvalidQuadEdit(String),
    #[error("tap at ({x}, {y}) is outside the frame")]
    TapOutOfBounds { x: f64, y: f64 },
    #[error("event time {t_ms} is earlier than the previous event")]
    OutOfOrder { t_ms: u64 },
    #[error("no frame seen yet")]
    NoFrame,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StabilizeError {
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("search radius must be at least 1")]
    BadRadius,
    #[error("image has zero variance in the overlap")]
    FlatImage,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("scene spec out of bounds: {0}")]
    SpecOutOfBounds(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("stale seq {seq}: last accepted is {last}")]
    StaleSeq { seq: u64, last: u64 },
    #[error("malformed packet: {0}")]
    MalformedPacket(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("connection error: {0}")]
    Connection(String),
    #[error("server returned {status}: {body}")]
    Server { status: u16, body: String },
}
