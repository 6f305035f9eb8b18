use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] jetcheck_core::Error),
    #[error("{file}:{line}: {source}")]
    At { file: String, line: usize, source: Box<Error> },
    #[error("{0}")]
    Format(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown catalog entry {0}")]
    UnknownEntry(String),
    #[error("unknown {kind} {name}")]
    UnknownName { kind: &'static str, name: String },
    #[error("singular sample point: {0}")]
    SingularPoint(String),
    #[error("no value bound for {0}")]
    UnboundSymbol(String),
    #[error("finite differences do not converge: {0}")]
    NoConvergence(String),
    #[error("could not draw an invertible sample after {0} attempts")]
    SingularSample(usize),
    #[error("documentation drift in {page}: {detail}")]
    DocDrift { page: String, detail: String },
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn at(self, file: &str, line: usize) -> Error {
        match self {
            e @ Error::At { .. } => e,
            e => Error::At { file: file.to_string(), line, source: Box::new(e) },
        }
    }
}
