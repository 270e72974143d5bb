use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library error type. `exit_code` gives the CLI contract: 2 for input or
/// usage problems, 3 for numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("rank deficient: sigma_min/sigma_max = {ratio:.3e} is below tolerance {tol:.3e}")]
    RankDeficient { ratio: f64, tol: f64 },

    #[error("SVD did not converge on a {rows}x{cols} matrix")]
    Factorization { rows: usize, cols: usize },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("invalid configuration at {pointer}: {msg}")]
    Config { pointer: String, msg: String },

    #[error(
        "certificate violation (seed {seed}, stream {stream}): equality gap {gap:.6e} exceeds tolerance {tol:.6e}"
    )]
    Certificate {
        seed: u64,
        stream: u64,
        gap: f64,
        tol: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Domain(_)
            | Error::Parse { .. }
            | Error::Config { .. }
            | Error::Io(_) => 2,
            Error::RankDeficient { .. }
            | Error::Factorization { .. }
            | Error::Sampling(_)
            | Error::Certificate { .. } => 3,
        }
    }
}
