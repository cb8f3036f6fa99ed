use std::collections::BTreeMap;


use super::*;
use crate::fixtures::*;
use crate::motor::{input_admittance, SlipGrid};
use crate::netmodel::*;
use crate::solve::{DgReference, MotorStart, ObjectiveBreakdown, RestorationPlan};

fn plan_for(motor: u32, k_max: usize, tap: Option<i32>, dg: Vec<DgReference>) -> RestorationPlan {
    let grid = SlipGrid::new(0.05, k_max).unwrap();
    RestorationPlan {
        horizon: vec!["08:00".into()],
        step_hours: 1.0,
        l0: BTreeMap::new(),
        l: BTreeMap::new(),
        shifts: Vec::new(),
        starts: vec![MotorStart {
            motor: BusId(motor),
            t: 0,
            time: "08:00".into(),
            tap,
            tap_bits: None,
            slips: grid.slips.clone(),
            slip_step: 0.05,
            starter_active: vec![false; k_max],
            u_bus: vec![1.0; k_max],
            u_terminal: vec![1.0; k_max],
            u_protected: BTreeMap::new(),
            step_time_s: Vec::new(),
            accel_time_s: 0.0,
        }],
        dg_references: dg,
        objective: ObjectiveBreakdown { reliability: 0.0, operational: 0.0, w_re: 1.0, w_op: 1e-4, total: 0.0 },
        exactness: "exact".into(),
    }
}

fn solve(net: &Network, state: &SimState) -> NetworkSolution {
    network_solve_quasi_static(net, state, 1e-10, 200).unwrap()
}

fn motor_state(bus: u32, slip: f64, tap: Option<i32>) -> MotorState {
    MotorState { bus: BusId(bus), connected: true, slip, starter_tap: tap }
}

/// Closed-form `|V₂|²` of a two-bus feeder with a constant-power load.
fn two_bus_closed_form(v1: f64, p: f64, q: f64, r: f64, x: f64) -> f64 {
    let a = v1 * v1 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    (a + (a * a - 4.0 * c).sqrt()) / 2.0
}

#[test]
fn no_load_keeps_slack_voltage() {
    let mut net = two_bus_with_motor();
    net.slack_voltage = 1.02;
    let sol = solve(&net, &SimState::new(0));
    for v in &sol.v {
        assert!((v.norm() - 1.02).abs() < 1e-12);
    }
    assert!(sol.energy_mismatch() < 1e-12);
}

#[test]
fn two_bus_constant_power_matches_closed_form() {
    let net = two_bus_with_motor();
    let mut st = SimState::new(0);
    st.loads_on.insert(BusId(2));
    let sol = solve(&net, &st);
    let oracle = two_bus_closed_form(1.0, 0.5, 0.2, 0.01, 0.01);
    assert!((sol.v[1].norm_sqr() - oracle).abs() < 1e-9, "{} vs {oracle}", sol.v[1].norm_sqr());
    assert!(sol.energy_mismatch() < 1e-9);
}

#[test]
fn locked_rotor_current_and_voltage_profile() {
    let mut net = network(3, vec![line(1, 2, 0.01, 0.02, 50.0), line(2, 3, 0.01, 0.02, 50.0)]);
    net.motors.push(motor(3, reference_motor(0.1, MechLoadKind::Linear, 4000.0)));
    let mut st = SimState::new(0);
    st.motors.push(motor_state(3, 1.0, None));
    let sol = solve(&net, &st);
    let v: Vec<f64> = sol.v.iter().map(|c| c.norm()).collect();
    assert!(v[2] < v[1] && v[1] < v[0]);
    let (g, b) = input_admittance(&net.motors[0].params, 1.0).unwrap();
    let expect = v[2] * (g * g + b * b).sqrt();
    let got = sol.motors[&BusId(3)].stator_current.norm();
    assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
}

#[test]
fn energy_balance_holds_for_mixed_states() {
    let mut net = network(
        4,
        vec![line(1, 2, 0.01, 0.02, 8.0), line(2, 3, 0.02, 0.01, 8.0), line(2, 4, 0.01, 0.03, 8.0)],
    );
    net.static_loads.push(static_load(3, vec![0.3], vec![0.1], 1.5, 2.0));
    net.motors.push(motor(4, reference_motor(0.3, MechLoadKind::Constant, 1000.0)));
    net.dgs.push(DgParams { bus: BusId(3), f_max: 0.3, frt: true, p_set: 0.1, q_set: 0.0 });
    net.dgs.push(DgParams { bus: BusId(2), f_max: 0.3, frt: false, p_set: 0.05, q_set: 0.02 });
    net.autotransformers.push(AutotransformerParams {
        bus: BusId(4),
        sigma: 0.1,
        taps: 4,
        zp: Impedance { r: 0.002, x: 0.02 },
        zs: Impedance { r: 0.002, x: 0.02 },
        bypass_speed: 0.8,
    });
    for slip in [1.0, 0.5, 0.05] {
        for tap in [None, Some(-2), Some(1)] {
            for mode in [DgMode::Normal, DgMode::Saturated { ip: 0.2, iq: 0.22 }] {
                let mut st = SimState::new(0);
                st.loads_on.insert(BusId(3));
                st.motors.push(motor_state(4, slip, tap));
                st.dg_modes.insert(BusId(3), mode);
                let sol = solve(&net, &st);
                assert!(sol.energy_mismatch() < 1e-6, "{}", sol.energy_mismatch());
            }
        }
    }
}

#[test]
fn starter_terminal_voltage_follows_exact_ratio() {
    let mut net = network(2, vec![line(1, 2, 1e-4, 1e-4, 50.0)]);
    net.motors.push(motor(2, reference_motor(0.1, MechLoadKind::Linear, 4.0)));
    net.autotransformers.push(AutotransformerParams {
        bus: BusId(2),
        sigma: 0.1,
        taps: 4,
        zp: Impedance { r: 0.0, x: 0.0 },
        zs: Impedance { r: 0.0, x: 0.0 },
        bypass_speed: 0.8,
    });
    let mut st = SimState::new(0);
    st.motors.push(motor_state(2, 1.0, Some(-1)));
    let sol = solve(&net, &st);
    let ratio = sol.motors[&BusId(2)].terminal_v.norm_sqr() / sol.v[1].norm_sqr();
    assert!((ratio - 0.81).abs() < 1e-12);
}

fn stiff_net(t_nom: f64, kind: MechLoadKind) -> Network {
    let mut net = network(2, vec![line(1, 2, 1e-5, 1e-5, 1e3)]);
    net.motors.push(motor(2, reference_motor(t_nom, kind, 4.0)));
    net
}

/// Fine explicit Euler on the same slip equation at `U = 1`.
fn euler_accel_time(p: &MotorParams, s_end: f64) -> f64 {
    let th = crate::motor::thevenin_at_slip(p).unwrap();
    let (mut s, mut t, dt) = (1.0, 0.0, 1e-6);
    while s > s_end {
        let te = crate::motor::electrical_torque(&th, p.xlr, p.rr, s, 1.0).unwrap();
        s -= dt * (te - p.mech.torque(s)) / (2.0 * p.h);
        t += dt;
    }
    t
}

#[test]
fn stiff_source_start_settles() {
    let net = stiff_net(0.0864, MechLoadKind::Linear);
    let plan = plan_for(2, 19, None, Vec::new());
    let trace = simulate_motor_start(&net, &plan, BusId(2), &SimOptions::default()).unwrap();
    assert!(trace.settled && !trace.stalled);
    let t_acc = trace.accel_time_s.unwrap();
    let oracle = euler_accel_time(&net.motors[0].params, 0.05);
    assert!((t_acc - oracle).abs() < 2e-3 * oracle, "{t_acc} vs {oracle}");
    let s_rated = crate::motor::rated_slip(&net.motors[0].params).unwrap();
    assert!((trace.slip.last().unwrap() - s_rated).abs() < 1e-4);
    for w in trace.slip.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    for w in trace.time.windows(2) {
        assert!((w[1] - w[0] - trace.sample_period).abs() < 1e-9);
    }
}

#[test]
fn overloaded_motor_stalls() {
    let net = stiff_net(3.0, MechLoadKind::Constant);
    let plan = plan_for(2, 19, None, Vec::new());
    let trace = simulate_motor_start(&net, &plan, BusId(2), &SimOptions::default()).unwrap();
    assert!(trace.stalled);
    assert!(trace.slip.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    assert!(trace.accel_time_s.is_none());
}

#[test]
fn halving_the_step_barely_moves_the_trajectory() {
    let net = stiff_net(0.3, MechLoadKind::Constant);
    let plan = plan_for(2, 19, None, Vec::new());
    let a = SimOptions { sample_period: 0.01, ..SimOptions::default() };
    let b = SimOptions { dt: 5e-4, ..a.clone() };
    let ta = simulate_motor_start(&net, &plan, BusId(2), &a).unwrap();
    let tb = simulate_motor_start(&net, &plan, BusId(2), &b).unwrap();
    let n = ta.slip.len().min(tb.slip.len());
    for i in 0..n {
        assert!((ta.time[i] - tb.time[i]).abs() < 1e-12);
        assert!((ta.slip[i] - tb.slip[i]).abs() < 1e-6, "t={} {} {}", ta.time[i], ta.slip[i], tb.slip[i]);
    }
}

#[test]
fn saturated_dg_holds_its_current_limit_during_the_dip() {
    let mut net = network(3, vec![line(1, 2, 0.05, 0.1, 50.0), line(2, 3, 0.01, 0.02, 50.0)]);
    net.motors.push(motor(3, reference_motor(0.0864, MechLoadKind::Linear, 1000.0)));
    net.dgs.push(DgParams { bus: BusId(2), f_max: 0.365, frt: true, p_set: 0.0, q_set: 0.0 });
    let fp: f64 = 0.06;
    let fq = 0.365f64.powi(2) - fp;
    let dg = DgReference {
        bus: BusId(2),
        motor: BusId(3),
        fp_pu2: fp,
        fq_pu2: fq,
        ip_pu: fp.sqrt(),
        iq_pu: fq.sqrt(),
        ip_a: fp.sqrt() * 10.0,
        iq_a: fq.sqrt() * 10.0,
        f_max_pu: 0.365,
    };
    let plan = plan_for(3, 19, None, vec![dg]);
    let opts = SimOptions { sample_period: 1e-3, ..SimOptions::default() };
    let trace = simulate_motor_start(&net, &plan, BusId(3), &opts).unwrap();
    let di = trace.dg_buses.iter().position(|&b| b == BusId(2)).unwrap();
    let bi = trace.bus_position(BusId(2)).unwrap();
    assert!(trace.v[0][bi] < 0.95);
    let f_max_a = 0.365 * net.bases.current_a();
    let mut dip = 0;
    for n in 0..trace.time.len() {
        if trace.v[n][bi] >= 0.95 {
            break;
        }
        let mag = trace.dg_ip_a[n][di].hypot(trace.dg_iq_a[n][di]);
        assert!((mag - f_max_a).abs() <= 0.01 * f_max_a, "{mag}");
        dip += 1;
    }
    assert!(dip > 10);
    assert_eq!(trace.dg_ip_a.last().unwrap()[di], 0.0);
}

fn synthetic(time: Vec<f64>, v: Vec<f64>) -> SimTrace {
    let n = time.len();
    SimTrace {
        motor: BusId(2),
        dt: 0.5,
        sample_period: 0.5,
        buses: vec![BusId(2)],
        lines: vec![(BusId(1), BusId(2))],
        dg_buses: Vec::new(),
        time,
        v: v.iter().map(|&x| vec![x]).collect(),
        line_current: vec![vec![1.0]; n],
        slip: vec![1.0; n],
        t_ele: vec![0.0; n],
        t_load: vec![0.0; n],
        i_motor: vec![0.0; n],
        dg_ip_a: vec![Vec::new(); n],
        dg_iq_a: vec![Vec::new(); n],
        crossings: Vec::new(),
        accel_time_s: None,
        stalled: false,
        settled: true,
        end_time: 0.0,
    }
}

fn protected_net(points: &[(f64, f64)]) -> Network {
    let mut net = network(2, vec![line(1, 2, 0.01, 0.01, 5.0)]);
    net.buses[1].protected = true;
    net.node_protection.push(NodeProtection {
        bus: BusId(2),
        curve: ProtectionCurve::from_magnitudes(ProtectionKind::UnderVoltage, points),
    });
    net
}

#[test]
fn flat_curve_pass_and_trip() {
    let net = protected_net(&[(0.0, 0.7)]);
    let ok = check_protection(&synthetic(vec![0.0, 0.5, 1.0, 1.5], vec![0.9, 0.75, 0.8, 0.95]), &net);
    assert!(ok.pass);
    assert!((ok.elements[0].min_margin - 0.05).abs() < 1e-12);
    let bad = check_protection(&synthetic(vec![0.0, 0.5, 1.0, 1.5], vec![0.9, 0.75, 0.65, 0.95]), &net);
    assert!(!bad.pass);
    assert_eq!(bad.elements[0].first_violation, Some(1.0));
}

#[test]
fn staircase_curve_semantics() {
    let net = protected_net(&[(0.0, 0.6), (2.0, 0.6), (2.0, 0.9)]);
    let r = check_protection(
        &synthetic(vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5], vec![0.62, 0.65, 0.8, 0.92, 0.93, 0.95]),
        &net,
    );
    assert!(r.pass, "{:?}", r.elements[0].margins);
}

#[test]
fn plan_without_starts_validates_trivially() {
    let net = two_bus_with_motor();
    let mut plan = plan_for(3, 3, None, Vec::new());
    plan.starts.clear();
    let (rep, traces) = validate_plan(&net, &plan, &SimOptions::default(), &ValidationOptions::default()).unwrap();
    assert!(rep.pass && rep.starts.is_empty() && traces.is_empty());
}

#[test]
fn trace_csv_has_one_block_per_bus() {
    let net = stiff_net(0.0864, MechLoadKind::Linear);
    let plan = plan_for(2, 19, None, Vec::new());
    let trace = simulate_motor_start(&net, &plan, BusId(2), &SimOptions::default()).unwrap();
    let csv = trace.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t_s,bus,v_pu,slip,t_ele_pu,t_load_pu,i_motor_pu,i_dg_p_a,i_dg_q_a"
    );
    assert_eq!(lines.count(), 2 * trace.time.len());
}
