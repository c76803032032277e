use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The station's deadline-driven compute demand `sum W_i / D_i` is not
    /// strictly below its capacity.
    #[error("station {station} is infeasible: load {load:.6e} cycles/s vs capacity {capacity:.6e} (slack {slack:.6e})")]
    InfeasibleStation {
        station: usize,
        load: f64,
        capacity: f64,
        slack: f64,
    },

    /// Equal compute split leaves these users with `q_i <= W_i / D_i`.
    #[error("baseline infeasible for users {users:?}")]
    BaselineInfeasible { users: Vec<usize> },

    #[error("could not bracket root of {what}")]
    Bracket { what: &'static str },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that mean "this instance has no feasible point" as
    /// opposed to a bug or an environment failure.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleStation { .. } | Error::BaselineInfeasible { .. }
        )
    }
}
