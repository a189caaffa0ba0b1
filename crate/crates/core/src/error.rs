use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Every variant maps to a stable
/// machine-readable code (see [`Error::code`]) used by the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("word enumeration exceeded the node budget of {budget}")]
    BudgetExceeded { budget: u64 },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("operation requires dimension {expected}, system has dimension {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("first-level images overlap; gap structure undefined")]
    OverlappingImages,

    #[error("estimated ball measure vanished at x = {x:?} with q = {q} < 0")]
    DegenerateBall { x: Vec<f64>, q: f64 },

    #[error("evaluation point {re}{im:+}i is within {tol:e} of a pole")]
    NearPole { re: f64, im: f64, tol: f64 },

    #[error("consistency condition violated: residual {residual:e}")]
    InconsistentKappa { residual: f64 },

    #[error("beta(q) = {beta} coincides with excluded exponent {exponent}")]
    ExcludedExponent { beta: f64, exponent: f64 },

    #[error("system ratios are not arithmetic")]
    NotArithmetic,

    #[error("polynomial root finding failed: {0}")]
    RootFindingFailure(String),

    #[error("multiple root detected near {re}{im:+}i")]
    MultipleRoot { re: f64, im: f64 },

    #[error("unresolved pole cluster in cell [{re_lo}, {re_hi}] x [{im_lo}, {im_hi}]")]
    UnresolvedCluster { re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64 },

    #[error("non-simple pole at {re}{im:+}i")]
    NonSimplePole { re: f64, im: f64 },

    #[error("residue sum has imaginary part {imag:e} relative to total {total:e}")]
    ImaginaryResidual { imag: f64, total: f64 },

    #[error("contour abscissa {c} must exceed {bound}")]
    BadContour { c: f64, bound: f64 },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSystem(_) => "InvalidSystem",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::OverlappingImages => "OverlappingImages",
            Error::DegenerateBall { .. } => "DegenerateBall",
            Error::NearPole { .. } => "NearPole",
            Error::InconsistentKappa { .. } => "InconsistentKappa",
            Error::ExcludedExponent { .. } => "ExcludedExponent",
            Error::NotArithmetic => "NotArithmetic",
            Error::RootFindingFailure(_) => "RootFindingFailure",
            Error::MultipleRoot { .. } => "MultipleRoot",
            Error::UnresolvedCluster { .. } => "UnresolvedCluster",
            Error::NonSimplePole { .. } => "NonSimplePole",
            Error::ImaginaryResidual { .. } => "ImaginaryResidual",
            Error::BadContour { .. } => "BadContour",
            Error::Io(_) => "Io",
            Error::Parse(_) => "Parse",
        }
    }

    /// Input problems (exit status 2) as opposed to numeric failures (3).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSystem(_)
                | Error::InvalidArgument(_)
                | Error::InconsistentKappa { .. }
                | Error::DimensionMismatch { .. }
                | Error::InsufficientSamples { .. }
                | Error::Io(_)
                | Error::Parse(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
