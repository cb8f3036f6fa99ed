#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use motorstart::cli::RunConfig;
use motorstart::mip::{build_model, slip_models, MipModel, Node, Symbol, Branch};
use motorstart::motor::SlipStepModel;
use motorstart::netmodel::{BusId, Network, ScenarioInput};
use motorstart::solve::{branch_and_bound, extract_plan, BnbResult, RestorationPlan, SearchStatus, SolverConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const REFERENCE_MOTOR_OHM: [f64; 5] = [1.44, 2.56, 1.37, 2.56, 56.17];

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load(network: &str, scenario: &str) -> (Network, ScenarioInput, RunConfig) {
    let cfg = RunConfig::default();
    let net = Network::from_path(data(network)).unwrap();
    let sc = ScenarioInput::from_path(data(scenario), &cfg.scenario_defaults).unwrap();
    (net, sc, cfg)
}

pub struct Solved {
    pub model: MipModel,
    pub result: BnbResult,
    pub plan: RestorationPlan,
}

pub fn solve_with(
    net: &Network,
    sc: &ScenarioInput,
    models: &BTreeMap<BusId, SlipStepModel>,
    cfg: &RunConfig,
) -> Solved {
    let model = build_model(net, sc, models, &cfg.model).unwrap();
    let result = branch_and_bound(&model.program, &cfg.solver.backend(), &cfg.solver);
    assert_eq!(result.status, SearchStatus::Optimal, "search did not close the gap");
    let plan = extract_plan(&model, result.incumbent.as_ref().unwrap()).unwrap();
    Solved { model, result, plan }
}

pub fn solve(net: &Network, sc: &ScenarioInput, cfg: &RunConfig) -> Solved {
    let models = slip_models(net, sc).unwrap();
    solve_with(net, sc, &models, cfg)
}

pub fn solve_replica(network: &str, scenario: &str) -> (Network, Solved, RunConfig) {
    let (net, sc, cfg) = load(network, scenario);
    let s = solve(&net, &sc, &cfg);
    (net, s, cfg)
}

pub fn tight_solver() -> SolverConfig {
    SolverConfig { rel_gap: 1e-9, abs_gap: 1e-9, ..SolverConfig::default() }
}

/// Largest `|F·U − (p² + q²)| / max(1, p² + q²)` over the cones of started
/// motors, recomputed from the raw solution.
pub fn max_cone_residual(model: &MipModel, x: &[f64]) -> f64 {
    let last = model.horizon.steps - 1;
    let mut worst: f64 = 0.0;
    for (sym, id) in model.map.iter() {
        let Symbol::F { branch, k, motor } = sym else { continue };
        let started = model
            .map
            .value(x, &Symbol::L { bus: *motor, t: last })
            .is_some_and(|v| v > 0.5);
        if !started {
            continue;
        }
        let node = match branch {
            Branch::Line(from, _) => Node::Bus(*from),
            Branch::StarterPrimary(m) => Node::Bus(*m),
            Branch::StarterSecondary(m) => Node::StarterOut(*m),
        };
        let u = model.map.value(x, &Symbol::U { node, k: *k, motor: *motor }).unwrap();
        let p = model.map.value(x, &Symbol::P { branch: *branch, k: *k, motor: *motor }).unwrap();
        let q = model.map.value(x, &Symbol::Q { branch: *branch, k: *k, motor: *motor }).unwrap();
        let s2 = p * p + q * q;
        worst = worst.max((x[id.0] * u - s2).abs() / s2.max(1.0));
    }
    worst
}

/// Random radial instance: slack bus 1 feeding a 4-bus tree, one motor and
/// either two static loads (direct-on-line) or one static load and a
/// tapped starter. Three hourly steps, no protection curves.
pub fn toy_instance(rng: &mut ChaCha8Rng) -> (Network, ScenarioInput) {
    let with_starter = rng.gen_bool(0.4);
    let parents = [1u32, 2, rng.gen_range(2..=3), rng.gen_range(2..=4)];
    let lines: Vec<_> = (0..4)
        .map(|i| {
            let r = rng.gen_range(0.005..0.03);
            json!({"from": parents[i], "to": i as u32 + 2, "r_pu": r, "x_pu": r * rng.gen_range(1.0..3.0), "ampacity_pu": 20.0})
        })
        .collect();
    let mut buses: Vec<u32> = vec![2, 3, 4, 5];
    let motor_bus = buses.remove(rng.gen_range(0..buses.len()));
    let n_loads = if with_starter { 1 } else { 2 };
    let mut loads = Vec::new();
    for _ in 0..n_loads {
        let b = buses.remove(rng.gen_range(0..buses.len()));
        let p = rng.gen_range(0.5..3.0);
        loads.push(json!({
            "bus": b,
            "p0_profile": [p, p, p],
            "q0_profile": [0.3 * p, 0.3 * p, 0.3 * p],
            "kp": 1.0,
            "kq": 2.0,
            "priority": rng.gen_range(1..=3) as f64,
        }));
    }
    let torque = rng.gen_range(0.2..0.9);
    let mut net = json!({
        "base": {"power_va": 4000.0, "voltage_v": 400.0},
        "buses": (1..=5).map(|b| if b == 1 { json!({"id": 1, "slack": true}) } else { json!({"id": b}) }).collect::<Vec<_>>(),
        "lines": lines,
        "static_loads": loads,
        "motors": [{
            "bus": motor_bus, "rs": REFERENCE_MOTOR_OHM[0], "xls": REFERENCE_MOTOR_OHM[1], "rr": REFERENCE_MOTOR_OHM[2],
            "xlr": REFERENCE_MOTOR_OHM[3], "xm": REFERENCE_MOTOR_OHM[4], "unit": "ohm", "h_s": 0.198, "kd_pu": 0.0,
            "rated_va": 4000.0, "mech": {"kind": "constant", "t_nom_pu": torque}, "priority": 5.0
        }],
    });
    if with_starter {
        net["autotransformers"] = json!([{
            "bus": motor_bus, "sigma": 0.1, "taps": 4,
            "zp": {"r": 0.002, "x": 0.006}, "zs": {"r": 0.002, "x": 0.006}, "bypass_speed": 0.8
        }]);
    }
    let mut l0 = serde_json::Map::new();
    for l in net["static_loads"].as_array().unwrap() {
        let first = rng.gen_range(0..2usize);
        l0.insert(l["bus"].to_string(), json!((0..3).map(|t| u8::from(t >= first)).collect::<Vec<_>>()));
    }
    l0.insert(motor_bus.to_string(), json!([1, 1, 1]));
    let sc = json!({
        "horizon": {"start": "08:00", "end": "11:00", "step_minutes": 60},
        "l0": l0,
    });
    let cfg = RunConfig::default();
    (
        Network::from_json(&net.to_string()).unwrap(),
        ScenarioInput::from_json(&sc.to_string(), &cfg.scenario_defaults).unwrap(),
    )
}
