//! Minimal SNP hiding that caps the kinship of related individuals.
//!
//! Hiding a position from an individual removes it from every pairwise
//! count involving that individual. The optimizer only ever hides
//! heterozygous cells of the most recently arrived family member, and it
//! picks how many positions of each joint genotype configuration to hide so
//! that the total is minimal while every constrained pair ends at or below
//! the ceiling Φ.

mod closed_form;
mod config;
mod random;
mod select;
mod sequential;
mod solver;

pub use closed_form::closed_form_x11;
pub use config::{family_config_counts, FamilyConfigCounts};
pub use random::random_mask;
pub use select::{select_positions, SelectionPolicy};
pub use sequential::{recheck, sequential_mask, MaskOutcome, SequentialMasker, TraceRow, RECHECK_TOLERANCE};
pub use solver::{solve, solve_hiding_ip, HidingProblem, HidingSolution, PairConstraint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinship::{kinship, PairCounts};

/// Slack for comparing a floating kinship against the ceiling.
pub const KINSHIP_TOLERANCE: f64 = 1e-12;

/// Target kinship ceiling, `0 <= Φ < 0.5`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Phi(f64);

impl Phi {
    pub const DEFAULT: Phi = Phi(0.10);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..0.5).contains(&value) {
            Ok(Phi(value))
        } else {
            Err(Error::validation(format!("phi {value} is outside [0, 0.5)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Phi {
    fn default() -> Self {
        Phi::DEFAULT
    }
}

impl TryFrom<f64> for Phi {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Phi::new(v)
    }
}

impl From<Phi> for f64 {
    fn from(p: Phi) -> f64 {
        p.0
    }
}

/// Whether a pair is at or below the ceiling. Undefined kinship never is.
pub fn within_ceiling(counts: &PairCounts, phi: Phi) -> bool {
    kinship(counts).is_ok_and(|k| k <= phi.0 + KINSHIP_TOLERANCE)
}
