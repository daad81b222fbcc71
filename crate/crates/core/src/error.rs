use thiserror::Error;

/// Errors raised by the core operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain is not convex; flat norms are only computed on convex domains")]
    NonConvexDomain,
    #[error("instance too large: {units} unit atoms exceeds the cap of {cap}")]
    SizeCap { units: usize, cap: usize },
    #[error("under-resolved field: phase jump {jump} within tolerance of pi at {location}")]
    UnderResolved { jump: f64, location: String },
    #[error("non-regular center: a node value lies within 1e-12 of the projection center")]
    NonRegularCenter,
    #[error("no regular projection center among {samples} samples; raise sample_count")]
    NoRegularCenter { samples: usize },
    #[error("singular point on a lattice node: {0}")]
    SingularityOnNode(String),
    #[error("identical fields: continuity ratio denominator {0:e} below 1e-14")]
    IdenticalFields(f64),
    #[error("scale underflow: alpha^(1/(n-p)) is not representable")]
    ScaleUnderflow,
    #[error("parameters are not admissible: lhs {lhs} > rhs {rhs} or alpha/n-p out of range")]
    Inadmissible { lhs: f64, rhs: f64 },
    #[error("curve too close to a vortex or singular set: {0}")]
    TooClose(String),
    #[error("transversality violated: {0}; re-shift grid")]
    NotTransversal(String),
    #[error("pathological curve/grid ratio: {0} rejections")]
    ShiftRejected(usize),
    #[error("sample starvation: only {hits} Monte-Carlo hits (need 1000)")]
    SampleStarvation { hits: usize },
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
