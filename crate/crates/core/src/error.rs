use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gamma has a pole at {0}")]
    PoleArgument(f64),
    #[error("gamma overflows at {0}")]
    Overflow(f64),
    #[error("argument outside the supported domain: {0}")]
    DomainError(String),
    #[error("BDF order {0} is not supported (1..=6)")]
    UnsupportedOrder(usize),
    #[error("contour point maps onto the branch cut of the generating function")]
    BranchCutViolation,
    #[error("finite element degree {0} is not supported (1..=5)")]
    UnsupportedDegree(usize),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("mesh is not planar: {0}")]
    NonPlanar(String),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("refinement budget of {0} triangles exceeded")]
    BudgetExceeded(usize),
    #[error("iterative solver stopped after {iterations} iterations with relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("point ({0}, {1}) lies outside the domain")]
    PointOutsideDomain(f64, f64),
    #[error("segment leaves the domain")]
    SegmentOutsideDomain,
    #[error("meshes are not nested")]
    NonNestedMeshes,
    #[error("strategy does not match the data: {0}")]
    StrategyMismatch(String),
    #[error("singular terms are unbounded at t = 0")]
    SingularAtZero,
    #[error("adaptive quadrature did not reach tolerance: {0}")]
    QuadratureFailure(String),
    #[error("reference solution is only available on the unit square")]
    UnsupportedDomain,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
