//! Mixed-integer search over conic relaxations and plan extraction.

mod bnb;
mod conic;
mod plan;

use serde::{Deserialize, Serialize};

pub use bnb::{branch_and_bound, BnbResult, Incumbent, NodeStatus, SearchLogEntry, SearchStatus};
pub use conic::{solve_conic, ClarabelBackend, ConicBackend, ConicSolution, SolveStatus};
pub use plan::{decode_tap_bits, extract_plan, DgReference, LoadShift, MotorStart, ObjectiveBreakdown, RestorationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRule {
    /// Binary variable farthest from integrality, ties to the lowest id.
    MostFractional,
    /// First fractional binary by id.
    FirstFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub cone_tol: f64,
    pub int_tol: f64,
    pub node_limit: usize,
    pub time_limit_s: Option<f64>,
    pub branching: BranchRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_gap: 1e-4,
            abs_gap: 1e-6,
            cone_tol: 1e-8,
            int_tol: 1e-6,
            node_limit: 100_000,
            time_limit_s: None,
            branching: BranchRule::MostFractional,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("rel_gap", self.rel_gap),
            ("abs_gap", self.abs_gap),
            ("cone_tol", self.cone_tol),
            ("int_tol", self.int_tol),
        ] {
            if !(v > 0.0) {
                return Err(crate::Error::param(name, "tolerances must be positive"));
            }
        }
        if let Some(t) = self.time_limit_s {
            if !(t > 0.0) {
                return Err(crate::Error::param("time_limit_s", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn backend(&self) -> ClarabelBackend {
        ClarabelBackend {
            feas_tol: (self.cone_tol * 0.1).max(1e-12),
            ..ClarabelBackend::default()
        }
    }
}
