//! Quasi-static time-domain validation: phasor network solves coupled to
//! the rotor slip equation, relay-curve monitoring and comparison with the
//! optimizer's predictions.

mod protection;
mod start;
mod sweep;
mod validate;

use serde::Serialize;

use crate::error::Result;
use crate::netmodel::{BusId, Network};
use crate::solve::RestorationPlan;

pub use protection::{check_curve, check_protection, ElementCheck, ProtectionReport};
pub use start::{initial_state, run_start, simulate_motor_start, SimOptions, SimTrace, SlipCrossing};
pub use sweep::{network_solve_quasi_static, DgMode, MotorElectrical, MotorState, NetworkSolution, SimState};
pub use validate::{
    compare_start, validate_plan, ComparisonReport, StartComparison, StepComparison, ValidationOptions,
};

/// Steady voltages of one horizon step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: usize,
    pub time: String,
    pub buses: Vec<BusId>,
    pub v: Vec<f64>,
}

/// Steady-state solve per horizon step with every energized motor running
/// at rated slip and DGs at their set points.
pub fn steady_snapshots(net: &Network, plan: &RestorationPlan, opts: &SimOptions) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    for (t, label) in plan.horizon.iter().enumerate() {
        let mut state = SimState::new(t);
        for l in &net.static_loads {
            if plan.energized(l.bus, t) {
                state.loads_on.insert(l.bus);
            }
        }
        for m in &net.motors {
            if plan.energized(m.bus, t) {
                state.motors.push(MotorState {
                    bus: m.bus,
                    connected: true,
                    slip: crate::motor::running_slip(&m.params)?,
                    starter_tap: None,
                });
            }
        }
        let sol = network_solve_quasi_static(net, &state, opts.sweep_tol, opts.sweep_max_iter)?;
        out.push(Snapshot {
            t,
            time: label.clone(),
            buses: net.buses.iter().map(|b| b.id).collect(),
            v: sol.v.iter().map(|c| c.norm()).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
