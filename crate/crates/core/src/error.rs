use std::path::PathBuf;

use thiserror::Error;

use crate::netmodel::BusId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation at {field}: {message}")]
    Schema { field: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{kind} references unknown bus {bus}")]
    DanglingBus { kind: &'static str, bus: BusId },

    #[error("network topology is not a tree rooted at the slack: {0}")]
    NotATree(String),

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("motor stalls at slip step {step}: accelerating torque {t_acc:.6} <= margin {margin}")]
    Stall { step: usize, t_acc: f64, margin: f64 },

    #[error("value {x} outside breakpoint domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("model construction: {0}")]
    Model(String),

    #[error("plan decode mismatch: {0}")]
    Decode(String),

    #[error("network solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("manifest hash mismatch for {path}: recorded {recorded}, found {found}")]
    HashMismatch {
        path: PathBuf,
        recorded: String,
        found: String,
    },
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
