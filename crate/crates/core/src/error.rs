use std::fmt;

use thiserror::Error;

/// A related pair that could not be brought under the kinship ceiling.
#[derive(Clone, Debug, PartialEq)]
pub struct PairViolation {
    pub a: String,
    pub b: String,
    /// Kinship left over after the largest admissible removal, `None` when undefined.
    pub residual: Option<f64>,
}

impl fmt::Display for PairViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.residual {
            Some(phi) => write!(f, "{}~{} (residual kinship {phi:.4})", self.a, self.b),
            None => write!(f, "{}~{} (kinship undefined)", self.a, self.b),
        }
    }
}

fn join_violations(pairs: &[PairViolation]) -> String {
    pairs
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Ingest { line: u64, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("unknown individual '{0}'")]
    UnknownIndividual(String),

    #[error("unknown position '{0}'")]
    UnknownPosition(String),

    #[error("kinship undefined: no heterozygous sites in one of the individuals")]
    UndefinedKinship,

    #[error("infeasible{}: {}", .step.map(|s| format!(" at arrival step {s}")).unwrap_or_default(), join_violations(.pairs))]
    Infeasible {
        step: Option<usize>,
        pairs: Vec<PairViolation>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. })
    }

    /// Stable machine-readable tag for each variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Ingest { .. } => "ingest",
            Error::Validation(_) => "validation",
            Error::UnknownIndividual(_) => "unknown_individual",
            Error::UnknownPosition(_) => "unknown_position",
            Error::UndefinedKinship => "undefined_kinship",
            Error::Infeasible { .. } => "infeasible",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
