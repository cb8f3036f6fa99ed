//! Motor-start time-domain run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sweep::{network_solve_quasi_static, DgMode, MotorState, NetworkSolution, SimState};
use crate::error::{Error, Result};
use crate::motor::{electrical_torque, thevenin_at_slip, TheveninEquivalent};
use crate::netmodel::{BusId, Motor, Network};
use crate::solve::RestorationPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Integration step, seconds.
    pub dt: f64,
    /// Trace sample period, seconds; rounded to a multiple of `dt`.
    pub sample_period: f64,
    /// Longest simulated window after energization, seconds.
    pub window_s: f64,
    /// DG leaves saturation once its bus voltage stays above this value...
    pub dg_exit_voltage: f64,
    /// ...for this long, seconds.
    pub dg_exit_hold_s: f64,
    /// Stall is declared when slip has not decreased for this long.
    pub stall_window_s: f64,
    /// Settled when `|T_acc|` falls below this value.
    pub settle_torque: f64,
    pub sweep_tol: f64,
    pub sweep_max_iter: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-3,
            sample_period: 1e-2,
            window_s: 30.0,
            dg_exit_voltage: 0.95,
            dg_exit_hold_s: 0.1,
            stall_window_s: 0.5,
            settle_torque: 1e-6,
            sweep_tol: 1e-8,
            sweep_max_iter: 200,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("sample_period", self.sample_period),
            ("window_s", self.window_s),
            ("dg_exit_voltage", self.dg_exit_voltage),
            ("stall_window_s", self.stall_window_s),
            ("settle_torque", self.settle_torque),
            ("sweep_tol", self.sweep_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if !(self.dg_exit_hold_s >= 0.0) {
            return Err(Error::param("dg_exit_hold_s", "must be non-negative"));
        }
        if self.sweep_max_iter == 0 {
            return Err(Error::param("sweep_max_iter", "must be positive"));
        }
        Ok(())
    }
}

/// Instant at which the slip crosses a given value, with the bus voltages
/// at that instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlipCrossing {
    pub slip: f64,
    pub t: f64,
    /// `|V|` per bus in `SimTrace::buses` order.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub motor: BusId,
    pub dt: f64,
    pub sample_period: f64,
    pub buses: Vec<BusId>,
    pub lines: Vec<(BusId, BusId)>,
    pub dg_buses: Vec<BusId>,
    pub time: Vec<f64>,
    /// `|V|` per sample, per bus.
    pub v: Vec<Vec<f64>>,
    /// `|I|` per sample, per line, network p.u.
    pub line_current: Vec<Vec<f64>>,
    pub slip: Vec<f64>,
    pub t_ele: Vec<f64>,
    pub t_load: Vec<f64>,
    /// Stator current magnitude, motor p.u.
    pub i_motor: Vec<f64>,
    /// DG current components aligned with / leading the bus voltage, amperes.
    pub dg_ip_a: Vec<Vec<f64>>,
    pub dg_iq_a: Vec<Vec<f64>>,
    pub crossings: Vec<SlipCrossing>,
    /// Time at which slip reached the last crossing value.
    pub accel_time_s: Option<f64>,
    pub stalled: bool,
    pub settled: bool,
    pub end_time: f64,
}

impl SimTrace {
    pub fn bus_position(&self, bus: BusId) -> Option<usize> {
        self.buses.iter().position(|&b| b == bus)
    }

    pub fn crossing(&self, slip: f64) -> Option<&SlipCrossing> {
        self.crossings.iter().find(|c| (c.slip - slip).abs() < 1e-12)
    }

    /// Plot-ready CSV, one block of rows per bus.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,bus,v_pu,slip,t_ele_pu,t_load_pu,i_motor_pu,i_dg_p_a,i_dg_q_a\n");
        for (bi, bus) in self.buses.iter().enumerate() {
            let dg = self.dg_buses.iter().position(|b| b == bus);
            for (n, t) in self.time.iter().enumerate() {
                let (ip, iq) = match dg {
                    Some(d) => (format!("{:.6}", self.dg_ip_a[n][d]), format!("{:.6}", self.dg_iq_a[n][d])),
                    None => (String::new(), String::new()),
                };
                s.push_str(&format!(
                    "{t:.4},{bus},{:.6},{:.6},{:.6},{:.6},{:.6},{ip},{iq}\n",
                    self.v[n][bi], self.slip[n], self.t_ele[n], self.t_load[n], self.i_motor[n]
                ));
            }
        }
        s
    }

    /// Line-current CSV, one block of rows per line.
    pub fn line_csv(&self) -> String {
        let mut s = String::from("t_s,line,i_pu\n");
        for (li, (a, b)) in self.lines.iter().enumerate() {
            for (n, t) in self.time.iter().enumerate() {
                s.push_str(&format!("{t:.4},{a}-{b},{:.6}\n", self.line_current[n][li]));
            }
        }
        s
    }
}

struct MotorDynamics {
    th: TheveninEquivalent,
    motor: Motor,
}

impl MotorDynamics {
    fn t_ele(&self, s: f64, u: f64) -> f64 {
        electrical_torque(&self.th, self.motor.params.xlr, self.motor.params.rr, s.clamp(1e-9, 1.0), u)
            .unwrap_or(0.0)
    }

    fn t_load(&self, s: f64) -> f64 {
        self.motor.params.mech.torque(s) + self.motor.params.kd * (1.0 - s)
    }
}

/// Network state at the start instant of `motor` under `plan`.
pub fn initial_state(net: &Network, plan: &RestorationPlan, motor: BusId) -> Result<SimState> {
    let start = plan
        .start_of(motor)
        .ok_or_else(|| Error::Model(format!("plan does not start motor {motor}")))?;
    let t = start.t;
    let mut state = SimState::new(t);
    for l in &net.static_loads {
        if plan.energized(l.bus, t) {
            state.loads_on.insert(l.bus);
        }
    }
    for m in &net.motors {
        if m.bus == motor {
            state.motors.push(MotorState {
                bus: m.bus,
                connected: true,
                slip: 1.0,
                starter_tap: start.tap,
            });
        } else if plan.energized(m.bus, t) {
            state.motors.push(MotorState {
                bus: m.bus,
                connected: true,
                slip: crate::motor::running_slip(&m.params)?,
                starter_tap: None,
            });
        }
    }
    for d in net.dgs.iter().filter(|d| d.frt) {
        if let Some(r) = plan.dg_reference(d.bus, motor) {
            state.dg_modes.insert(d.bus, DgMode::Saturated { ip: r.ip_pu, iq: r.iq_pu });
        }
    }
    Ok(state)
}

/// Integrates the start of `motor` from standstill with the network state
/// prescribed by `plan` at its start instant.
pub fn simulate_motor_start(
    net: &Network,
    plan: &RestorationPlan,
    motor: BusId,
    opts: &SimOptions,
) -> Result<SimTrace> {
    let start = plan
        .start_of(motor)
        .ok_or_else(|| Error::Model(format!("plan does not start motor {motor}")))?;
    let mut marks: Vec<f64> = start.slips.clone();
    if let Some(&last) = start.slips.last() {
        marks.push(last - start.slip_step);
    }
    let state = initial_state(net, plan, motor)?;
    run_start(net, state, motor, &marks, opts)
}

/// Integrates a start from an explicit initial state, recording the
/// instants at which slip crosses each value of `marks` (descending).
pub fn run_start(
    net: &Network,
    mut state: SimState,
    motor: BusId,
    marks: &[f64],
    opts: &SimOptions,
) -> Result<SimTrace> {
    opts.validate()?;
    let m = net
        .motor_at(motor)
        .ok_or_else(|| Error::Model(format!("no motor at bus {motor}")))?
        .clone();
    let dyn_ = MotorDynamics { th: thevenin_at_slip(&m.params)?, motor: m.clone() };
    let starter = net.autotransformer_at(motor).cloned();
    let h = m.params.h;
    let i_base = net.bases.current_a();
    let dt = opts.dt;
    let sample_every = ((opts.sample_period / dt).round() as usize).max(1);
    let n_max = (opts.window_s / dt).ceil() as usize;
    let stall_steps = (opts.stall_window_s / dt).ceil() as usize;
    let buses: Vec<BusId> = net.buses.iter().map(|b| b.id).collect();
    let dg_buses: Vec<BusId> = net.dgs.iter().map(|d| d.bus).collect();

    let mut trace = SimTrace {
        motor,
        dt,
        sample_period: sample_every as f64 * dt,
        buses: buses.clone(),
        lines: net.lines.iter().map(|l| (l.from, l.to)).collect(),
        dg_buses: dg_buses.clone(),
        time: Vec::new(),
        v: Vec::new(),
        line_current: Vec::new(),
        slip: Vec::new(),
        t_ele: Vec::new(),
        t_load: Vec::new(),
        i_motor: Vec::new(),
        dg_ip_a: Vec::new(),
        dg_iq_a: Vec::new(),
        crossings: Vec::new(),
        accel_time_s: None,
        stalled: false,
        settled: false,
        end_time: 0.0,
    };

    let solve = |st: &SimState, slip: f64| -> Result<NetworkSolution> {
        let mut s = st.clone();
        if let Some(ms) = s.motor_mut(motor) {
            ms.slip = slip;
        }
        network_solve_quasi_static(net, &s, opts.sweep_tol, opts.sweep_max_iter)
    };
    let accel = |sol: &NetworkSolution, s: f64| -> (f64, f64) {
        let u = sol.motors[&motor].terminal_v.norm_sqr();
        (dyn_.t_ele(s, u), dyn_.t_load(s))
    };
    let deriv = |st: &SimState, s: f64| -> Result<f64> {
        let sol = solve(st, s)?;
        let (te, tl) = accel(&sol, s);
        let d = -(te - tl) / (2.0 * h);
        Ok(if s >= 1.0 && d > 0.0 { 0.0 } else { d })
    };

    let mut s = 1.0;
    let mut sol = solve(&state, s)?;
    state.v = sol.v.clone();
    let mut mark_idx = 0;
    let mut best_slip = s;
    let mut since_progress = 0usize;
    let mut above: BTreeMap<BusId, usize> = BTreeMap::new();
    let record_crossing = |trace: &mut SimTrace, slip: f64, t: f64, v: Vec<f64>| {
        trace.crossings.push(SlipCrossing { slip, t, v });
    };
    while mark_idx < marks.len() && marks[mark_idx] >= s - 1e-12 {
        record_crossing(&mut trace, marks[mark_idx], 0.0, sol.v.iter().map(|c| c.norm()).collect());
        mark_idx += 1;
    }

    let mut n = 0usize;
    loop {
        let t = n as f64 * dt;
        let (te, tl) = accel(&sol, s);
        if n % sample_every == 0 {
            trace.time.push(t);
            trace.v.push(sol.v.iter().map(|c| c.norm()).collect());
            trace.line_current.push(sol.line_current.iter().map(|c| c.norm()).collect());
            trace.slip.push(s);
            trace.t_ele.push(te);
            trace.t_load.push(tl);
            trace.i_motor.push(sol.motors[&motor].stator_current.norm());
            let (mut ips, mut iqs) = (Vec::new(), Vec::new());
            for (di, d) in net.dgs.iter().enumerate() {
                let vb = sol.v[net.buses.iter().position(|b| b.id == d.bus).unwrap()];
                let c = sol.dg_current.get(&dg_buses[di]).copied().unwrap_or_default();
                let comp = if vb.norm() > 1e-12 { c * (vb / vb.norm()).conj() } else { c };
                ips.push(comp.re * i_base);
                iqs.push(-comp.im * i_base);
            }
            trace.dg_ip_a.push(ips);
            trace.dg_iq_a.push(iqs);
        }
        trace.end_time = t;
        if s < 0.5 && (te - tl).abs() < opts.settle_torque {
            trace.settled = true;
            break;
        }
        if since_progress >= stall_steps {
            trace.stalled = true;
            break;
        }
        if n >= n_max {
            break;
        }

        let k1 = deriv(&state, s)?;
        let k2 = deriv(&state, s + 0.5 * dt * k1)?;
        let k3 = deriv(&state, s + 0.5 * dt * k2)?;
        let k4 = deriv(&state, s + dt * k3)?;
        let s_next = (s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).min(1.0);
        let prev_v: Vec<f64> = sol.v.iter().map(|c| c.norm()).collect();
        let prev_s = s;
        s = s_next;
        n += 1;
        state.time = n as f64 * dt;
        sol = solve(&state, s)?;
        state.v = sol.v.clone();

        // starter bypass before sampling crossings
        let mut bypass: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        if let Some(a) = &starter {
            if 1.0 - s >= a.bypass_speed {
                if let Some(ms) = state.motor_mut(motor) {
                    if ms.starter_tap.take().is_some() {
                        let before: Vec<f64> = sol.v.iter().map(|c| c.norm()).collect();
                        let after_prev: Vec<f64> =
                            solve(&state, prev_s)?.v.iter().map(|c| c.norm()).collect();
                        sol = solve(&state, s)?;
                        state.v = sol.v.clone();
                        bypass = Some((1.0 - a.bypass_speed, before, after_prev));
                    }
                }
            }
        }

        let end_v: Vec<f64> = sol.v.iter().map(|c| c.norm()).collect();
        while mark_idx < marks.len() && s <= marks[mark_idx] {
            let target = marks[mark_idx];
            let w = if (prev_s - s).abs() > 0.0 { (prev_s - target) / (prev_s - s) } else { 1.0 };
            let (lo, hi) = match &bypass {
                Some((s_byp, before, _)) if target > s_byp + 1e-12 => (&prev_v, before),
                Some((_, _, after_prev)) => (after_prev, &end_v),
                None => (&prev_v, &end_v),
            };
            let v: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a + w * (b - a)).collect();
            record_crossing(&mut trace, target, (n as f64 - 1.0 + w) * dt, v);
            mark_idx += 1;
        }

        if s < best_slip - 1e-12 {
            best_slip = s;
            since_progress = 0;
        } else {
            since_progress += 1;
        }

        // DG saturation exit
        let mut changed = false;
        for d in &net.dgs {
            if !matches!(state.dg_modes.get(&d.bus), Some(DgMode::Saturated { .. })) {
                continue;
            }
            let vb = sol.v[net.buses.iter().position(|b| b.id == d.bus).unwrap()].norm();
            let c = above.entry(d.bus).or_default();
            if vb > opts.dg_exit_voltage {
                *c += 1;
            } else {
                *c = 0;
            }
            if *c as f64 * dt >= opts.dg_exit_hold_s - 1e-12 {
                state.dg_modes.insert(d.bus, DgMode::Normal);
                changed = true;
            }
        }
        if changed {
            sol = solve(&state, s)?;
            state.v = sol.v.clone();
        }
    }
    if let (Some(&last), true) = (marks.last(), mark_idx == marks.len()) {
        trace.accel_time_s = trace.crossing(last).map(|c| c.t);
    }
    Ok(trace)
}
