//! Optimizer-versus-simulation comparison of a plan.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_protection, simulate_motor_start, ProtectionReport, SimOptions, SimTrace};
use crate::error::Result;
use crate::netmodel::{BusId, Network};
use crate::solve::RestorationPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    /// Largest accepted `|V|²` deviation after the initial window, p.u.
    pub voltage_tol: f64,
    /// Largest accepted relative acceleration-time error.
    pub accel_tol: f64,
    /// Initial window reported separately, seconds.
    pub initial_window_s: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            voltage_tol: 0.02,
            accel_tol: 0.10,
            initial_window_s: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepComparison {
    pub k: usize,
    pub slip: f64,
    /// Simulated instant of the slip crossing, `None` if never reached.
    pub t: Option<f64>,
    pub initial_window: bool,
    pub u_sim: Option<f64>,
    pub u_opt: f64,
    pub deviation: Option<f64>,
    /// Protected-bus deviations at the same instant.
    pub protected: BTreeMap<BusId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartComparison {
    pub motor: BusId,
    pub t: usize,
    pub steps: Vec<StepComparison>,
    pub max_deviation: f64,
    pub max_deviation_initial: f64,
    pub accel_time_sim_s: Option<f64>,
    pub accel_time_opt_s: f64,
    pub accel_ratio: Option<f64>,
    pub stalled: bool,
    pub protection: ProtectionReport,
    pub pass: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub options: ValidationOptions,
    pub starts: Vec<StartComparison>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Compares one simulated start against the plan's predictions.
pub fn compare_start(
    net: &Network,
    plan: &RestorationPlan,
    motor: BusId,
    trace: &SimTrace,
    vopts: &ValidationOptions,
) -> StartComparison {
    let start = plan.start_of(motor).expect("start exists");
    let mi = trace.bus_position(motor).expect("motor bus in trace");
    let mut steps = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut max_dev_initial: f64 = 0.0;
    let mut failures = Vec::new();
    for (k0, &slip) in start.slips.iter().enumerate() {
        let c = trace.crossing(slip);
        let t = c.map(|c| c.t);
        let initial = t.is_some_and(|t| t < vopts.initial_window_s);
        let u_sim = c.map(|c| c.v[mi] * c.v[mi]);
        let u_opt = start.u_bus[k0];
        let deviation = u_sim.map(|u| (u - u_opt).abs());
        let mut protected = BTreeMap::new();
        if let Some(c) = c {
            for (bus, series) in &start.u_protected {
                if let Some(bi) = trace.bus_position(*bus) {
                    let d = (c.v[bi] * c.v[bi] - series[k0]).abs();
                    protected.insert(*bus, d);
                }
            }
        }
        let worst = protected.values().copied().fold(deviation.unwrap_or(0.0), f64::max);
        if initial {
            max_dev_initial = max_dev_initial.max(worst);
        } else if c.is_some() {
            max_dev = max_dev.max(worst);
        }
        steps.push(StepComparison {
            k: k0 + 1,
            slip,
            t,
            initial_window: initial,
            u_sim,
            u_opt,
            deviation,
            protected,
        });
    }
    if max_dev > vopts.voltage_tol {
        failures.push(format!(
            "squared-voltage deviation {max_dev:.4} exceeds {}",
            vopts.voltage_tol
        ));
    }
    let accel_ratio = trace
        .accel_time_s
        .filter(|_| start.accel_time_s > 0.0)
        .map(|t| t / start.accel_time_s);
    match accel_ratio {
        Some(r) if (r - 1.0).abs() <= vopts.accel_tol => {}
        Some(r) => failures.push(format!("acceleration-time ratio {r:.3} outside 1 ± {}", vopts.accel_tol)),
        None => failures.push("motor did not complete the slip grid".to_string()),
    }
    if trace.stalled {
        failures.push("motor stalled in simulation (model-fidelity failure)".to_string());
    }
    let protection = check_protection(trace, net);
    for e in protection.trips() {
        failures.push(format!(
            "{} trips at {:.3} s",
            e.element,
            e.first_violation.unwrap_or(f64::NAN)
        ));
    }
    StartComparison {
        motor,
        t: start.t,
        steps,
        max_deviation: max_dev,
        max_deviation_initial: max_dev_initial,
        accel_time_sim_s: trace.accel_time_s,
        accel_time_opt_s: start.accel_time_s,
        accel_ratio,
        stalled: trace.stalled,
        protection,
        pass: failures.is_empty(),
        failures,
    }
}

/// Simulates every motor start of the plan and compares it with the
/// optimizer's predictions. Returns the report and the traces.
pub fn validate_plan(
    net: &Network,
    plan: &RestorationPlan,
    opts: &SimOptions,
    vopts: &ValidationOptions,
) -> Result<(ComparisonReport, Vec<SimTrace>)> {
    let mut starts = Vec::new();
    let mut traces = Vec::new();
    for s in &plan.starts {
        let trace = simulate_motor_start(net, plan, s.motor, opts)?;
        starts.push(compare_start(net, plan, s.motor, &trace, vopts));
        traces.push(trace);
    }
    let max_deviation = starts.iter().map(|s| s.max_deviation).fold(0.0, f64::max);
    let pass = starts.iter().all(|s| s.pass);
    Ok((
        ComparisonReport {
            options: vopts.clone(),
            starts,
            max_deviation,
            pass,
        },
        traces,
    ))
}
