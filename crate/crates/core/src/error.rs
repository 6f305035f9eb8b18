use alloc::string::String;

use crate::parse::Span;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("class mismatch: {0}")]
    ClassMismatch(String),
    #[error("inverse of a non-matrix expression")]
    InverseOfNonMatrix,
    #[error("inverse of a non-atomic matrix expression {0}")]
    NonAtomicInverse(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("undeclared symbol {name} at {span}")]
    UndeclaredSymbol { name: String, span: Span },
    #[error("syntax error at {span}: {message}")]
    SyntaxError { message: String, span: Span },
    #[error("duplicate name {0}")]
    DuplicateName(String),
    #[error("missing orientation for {0}")]
    MissingOrientation(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("{0} is not polynomial in the parameter")]
    NotPolynomialInParameter(String),
    #[error("characteristic targets differ: {0} vs {1}")]
    TargetMismatch(String, String),
    #[error("symbol {0} is neither the target nor declared constant")]
    NotLieConstant(String),
    #[error("leading derivative {0} enters nonlinearly")]
    NonlinearInLeading(String),
    #[error("leading derivative {0} is absent")]
    LeadingAbsent(String),
    #[error("rule for {0} does not decrease")]
    NonDecreasingRule(String),
    #[error("pass limit {limit} exceeded")]
    PassLimitExceeded { limit: usize },
    #[error("relations are not solvable for {0}")]
    NotSolvable(String),
    #[error("eliminated symbol {symbol} survives in the compatibility condition: {residual}")]
    MixedDerivativeMismatch { symbol: String, residual: String },
    #[error("elimination of the auxiliary field failed: {0}")]
    EliminationFailure(String),
    #[error("series substitution is not Laurent: {0}")]
    NotLaurent(String),
    #[error("target is not in the span of the basis")]
    NotInSpan,
    #[error("basis is linearly dependent (rank {rank} of {size})")]
    RankDeficientBasis { rank: usize, size: usize },
    #[error("bracket [{i}, {j}] leaves the basis: {residual}")]
    NotClosed { i: usize, j: usize, residual: String },
    #[error("Euler operator needs a scalar density")]
    MatrixClassUnsupported,
    #[error("type 4 triviality test needs a scalar density")]
    Type4Unsupported,
    #[error("{0}")]
    Invalid(String),
}
