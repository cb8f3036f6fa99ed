mod common;

use std::collections::BTreeMap;

use motorstart::mip::{check_exactness, slip_models, Symbol};
use motorstart::program::{ConicProgram, LinExpr, VarId};
use motorstart::simulate::validate_plan;
use motorstart::solve::{branch_and_bound, BnbResult, SearchStatus};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn remap(e: &LinExpr, perm: &[usize]) -> LinExpr {
    LinExpr {
        terms: e.terms.iter().map(|(v, c)| (VarId(perm[v.0]), *c)).collect(),
        constant: e.constant,
    }
}

/// Copy of `p` whose variable `i` is stored at position `perm[i]`.
fn permuted(p: &ConicProgram, perm: &[usize]) -> ConicProgram {
    let mut vars = p.vars.clone();
    for (i, v) in p.vars.iter().enumerate() {
        vars[perm[i]] = v.clone();
    }
    let mut q = p.clone();
    q.vars = vars;
    for c in &mut q.linear {
        c.expr = remap(&c.expr, perm);
    }
    for c in &mut q.cones {
        c.lhs = c.lhs.iter().map(|e| remap(e, perm)).collect();
        c.rhs = remap(&c.rhs, perm);
    }
    for s in &mut q.sos2 {
        s.lambdas = s.lambdas.iter().map(|v| VarId(perm[v.0])).collect();
        if let Some((v, _)) = &mut s.reference {
            *v = VarId(perm[v.0]);
        }
        if let Some((v, _)) = &mut s.value {
            *v = VarId(perm[v.0]);
        }
    }
    q.objective = remap(&p.objective, perm);
    q
}

fn assert_search_log_consistent(r: &BnbResult) {
    let bound: BTreeMap<usize, f64> = r.log.iter().map(|e| (e.id, e.bound)).collect();
    for e in &r.log {
        let tol = 1e-7 * e.bound.abs().max(1.0);
        if let Some(p) = e.parent {
            if e.bound.is_finite() && bound[&p].is_finite() {
                assert!(e.bound >= bound[&p] - tol, "node {} bound {} below parent {}", e.id, e.bound, bound[&p]);
            }
        }
        if let Some(inc) = e.incumbent {
            assert!(e.global_bound <= inc + tol, "global bound {} above incumbent {inc}", e.global_bound);
        }
    }
}

#[test]
fn halving_w_op_keeps_the_energization_matrix() {
    for (n, s) in [
        ("dg_feeder.json", "dg_feeder_scenario.json"),
        ("autotransformer_replica.json", "autotransformer_scenario.json"),
    ] {
        let (net, _, mut cfg) = load(n, s);
        let base = solve(&net, &load(n, s).1, &cfg);
        cfg.scenario_defaults.w_op *= 0.5;
        let sc = motorstart::netmodel::ScenarioInput::from_path(data(s), &cfg.scenario_defaults).unwrap();
        let half = solve(&net, &sc, &cfg);
        assert_eq!(base.plan.l, half.plan.l, "{n}");
        assert!((half.plan.objective.w_op - 0.5 * base.plan.objective.w_op).abs() < 1e-15);
    }
}

#[test]
fn halved_torque_coefficients_fail_validation() {
    let (net, sc, cfg) = load("dg_feeder.json", "dg_feeder_scenario.json");
    let mut models = slip_models(&net, &sc).unwrap();
    for m in models.values_mut() {
        for c in &mut m.c {
            *c *= 0.5;
        }
    }
    let s = solve_with(&net, &sc, &models, &cfg);
    let (report, _) = validate_plan(&s.model.net, &s.plan, &cfg.simulation, &cfg.validation).unwrap();
    assert!(!report.pass);
    let st = &report.starts[0];
    assert!((st.accel_ratio.unwrap() - 1.0).abs() > cfg.validation.accel_tol, "{:?}", st.accel_ratio);
    assert!(st.failures.iter().any(|f| f.contains("acceleration")));
}

#[test]
fn permuted_variable_order_keeps_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let solver = tight_solver();
    for _ in 0..3 {
        let (net, sc) = toy_instance(&mut rng);
        let models = slip_models(&net, &sc).unwrap();
        let model = motorstart::mip::build_model(&net, &sc, &models, &Default::default()).unwrap();
        let a = branch_and_bound(&model.program, &solver.backend(), &solver);
        let mut perm: Vec<usize> = (0..model.program.vars.len()).collect();
        perm.shuffle(&mut rng);
        let q = permuted(&model.program, &perm);
        let b = branch_and_bound(&q, &solver.backend(), &solver);
        assert_eq!(a.status, SearchStatus::Optimal);
        assert_eq!(b.status, SearchStatus::Optimal);
        let (oa, ob) = (a.incumbent.unwrap().objective, b.incumbent.unwrap().objective);
        assert!((oa - ob).abs() <= 1e-6, "{oa} vs {ob}");
    }
}

#[test]
fn replica_search_logs_keep_bounds_below_incumbents() {
    let (_, s, _) = solve_replica("dg_feeder.json", "dg_feeder_scenario.json");
    assert!(s.result.nodes > 1);
    assert_search_log_consistent(&s.result);
    let csv = s.result.log_csv();
    assert_eq!(csv.lines().count(), s.result.log.len() + 1);
    assert!(csv.starts_with("id,parent,depth,relaxation,bound,status,decision,global_bound,incumbent\n"));
}

#[test]
fn simulated_slip_never_increases_on_replica_starts() {
    for (n, s) in [
        ("dg_feeder.json", "dg_feeder_scenario.json"),
        ("autotransformer_replica.json", "autotransformer_scenario.json"),
    ] {
        let (_, solved, cfg) = solve_replica(n, s);
        let (report, traces) = validate_plan(&solved.model.net, &solved.plan, &cfg.simulation, &cfg.validation).unwrap();
        assert!(report.pass, "{n}");
        for t in &traces {
            assert!(!t.stalled && t.settled);
            let saturated = |i: usize| {
                t.dg_ip_a[i].iter().zip(&t.dg_ip_a[0]).all(|(a, b)| (a - b).abs() < 1e-9)
                    && t.dg_iq_a[i].iter().zip(&t.dg_iq_a[0]).all(|(a, b)| (a - b).abs() < 1e-9)
            };
            let exit = (0..t.time.len()).find(|&i| !saturated(i)).unwrap_or(t.time.len());
            for w in t.slip[..exit].windows(2).skip(1) {
                assert!(w[1] <= w[0] + 1e-12, "{n}: slip rose from {} to {}", w[0], w[1]);
            }
            if exit < t.time.len() {
                let before = t.slip[exit - 1];
                let after = t.slip[exit..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(after - before < 1e-4, "{n}: slip shift {} after DG exit", after - before);
            }
            let dt = t.sample_period;
            for w in t.time.windows(2) {
                assert!((w[1] - w[0] - dt).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn plans_of_random_instances_respect_model_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, sc) = toy_instance(&mut rng);
        let cfg = motorstart::cli::RunConfig::default();
        let s = solve(&net, &sc, &cfg);
        let x = &s.result.incumbent.as_ref().unwrap().x;
        assert_search_log_consistent(&s.result);

        for (bus, row) in &s.plan.l {
            let l0 = &sc.l0[bus];
            for t in 0..row.len() {
                prop_assert!(row[t] <= l0[t]);
                if t > 0 {
                    prop_assert!(row[t] >= row[t - 1]);
                }
            }
        }
        prop_assert!(s.plan.starts.len() <= 1);

        let o = &s.plan.objective;
        prop_assert!((o.total - (o.w_re * o.reliability + o.w_op * o.operational)).abs() <= 1e-9 * o.total.abs().max(1.0));

        for st in &s.plan.starts {
            for l in &net.static_loads {
                if s.plan.l[&l.bus][st.t] == 0 {
                    for k in 1..=st.slips.len() {
                        let pd = s.model.map.value(x, &Symbol::PD { bus: l.bus, k, motor: st.motor }).unwrap();
                        prop_assert!(pd.abs() <= 1e-7, "unrestored load {} draws {pd}", l.bus);
                    }
                }
            }
        }

        let report = check_exactness(&s.model, x);
        if report.conditions_hold() {
            prop_assert!(max_cone_residual(&s.model, x) <= 1e-6);
            prop_assert!(report.exact);
        }
    }
}
