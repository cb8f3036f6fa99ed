mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use motorstart::mip::{build_model, check_exactness, Symbol};
use motorstart::motor::{electrical_torque, thevenin_at_slip};
use motorstart::netmodel::{MechLoad, MechLoadKind, MotorParams};
use motorstart::program::{ConicProgram, Relation};
use motorstart::pwl::{encode_product_bin_cont, encode_pwl};
use motorstart::simulate::{check_protection, simulate_motor_start, validate_plan};
use motorstart::solve::{branch_and_bound, solve_conic, SearchStatus, SolveStatus};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn params(z: [f64; 5]) -> MotorParams {
    MotorParams {
        rs: z[0],
        xls: z[1],
        rr: z[2],
        xlr: z[3],
        xm: z[4],
        h: 0.198,
        kd: 0.0,
        rated_va: 4000.0,
        mech: MechLoad { kind: MechLoadKind::Linear, t_nom: 0.0 },
    }
}

fn reference_motor_pu() -> MotorParams {
    params(REFERENCE_MOTOR_OHM).to_per_unit(400.0, 4000.0).unwrap()
}

/// `|I_r|²·R_r/s` from the full equivalent circuit at unit stator voltage.
fn airgap_torque(p: &MotorParams, s: f64) -> f64 {
    let zm = Complex64::new(0.0, p.xm);
    let zr = Complex64::new(p.rr / s, p.xlr);
    let zin = Complex64::new(p.rs, p.xls) + zm * zr / (zm + zr);
    let is = Complex64::new(1.0, 0.0) / zin;
    let ir = is * zm / (zm + zr);
    ir.norm_sqr() * p.rr / s
}

fn library_torque(p: &MotorParams, s: f64) -> f64 {
    electrical_torque(&thevenin_at_slip(p).unwrap(), p.xlr, p.rr, s, 1.0).unwrap()
}

fn motor_math_oracle() -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sets = vec![reference_motor_pu()];
    for _ in 0..20 {
        sets.push(params([
            rng.gen_range(0.005..0.1),
            rng.gen_range(0.02..0.2),
            rng.gen_range(0.005..0.1),
            rng.gen_range(0.02..0.2),
            rng.gen_range(1.0..5.0),
        ]));
    }
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for p in &sets {
        for i in 0..20 {
            let s = 1.0 - 0.05 * i as f64;
            let oracle = airgap_torque(p, s);
            worst = worst.max((library_torque(p, s) - oracle).abs() / oracle);
            n += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-9 && secs < 1.0,
        format!("max relative error {worst:.1e} over {n} evaluations (tol 1e-9), {secs:.3} s (limit 1 s)"),
    )
}

fn reference_motor_conversion() -> Result<String, String> {
    let p = reference_motor_pu();
    let rs_ok = (p.rs - 0.036).abs() <= 1e-15;
    let xm_ok = (p.xm - 1.40425).abs() <= 1e-14;
    let lib = library_torque(&p, 1.0);
    let oracle = airgap_torque(&p, 1.0);
    let rel = (lib - oracle).abs() / oracle;
    ensure(
        rs_ok && xm_ok && rel <= 0.01,
        format!(
            "R_s = {} p.u., X_m = {} p.u.; locked-rotor torque {lib:.4} p.u. vs circuit {oracle:.4} p.u. (rel {rel:.1e}, tol 1%)",
            p.rs, p.xm
        ),
    )
}

/// Interval of `y` allowed by the rows of `p` at a point whose other
/// coordinates are fixed.
fn feasible_interval(p: &ConicProgram, y: usize, point: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (p.vars[y].lb, p.vars[y].ub);
    for c in &p.linear {
        let a: f64 = c.expr.terms.iter().filter(|(v, _)| v.0 == y).map(|(_, c)| c).sum();
        if a == 0.0 {
            continue;
        }
        let mut x = point.to_vec();
        x[y] = 0.0;
        let bound = -c.expr.eval(&x) / a;
        match (c.rel, a > 0.0) {
            (Relation::Eq, _) => {
                lo = lo.max(bound);
                hi = hi.min(bound);
            }
            (Relation::Le, true) | (Relation::Ge, false) => hi = hi.min(bound),
            (Relation::Le, false) | (Relation::Ge, true) => lo = lo.max(bound),
        }
    }
    (lo, hi)
}

fn encoding_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut product_worst: f64 = 0.0;
    for _ in 0..1000 {
        let u = rng.gen_range(1e-3..100.0);
        let mut p = ConicProgram::new();
        let b = p.add_binary("b");
        let x = p.add_var("x", 0.0, u);
        let y = encode_product_bin_cont(&mut p, "product", "y", b, x, u).unwrap();
        for bv in [0.0, 1.0] {
            for xv in [0.0, rng.gen_range(0.0..u), u] {
                let mut pt = vec![0.0; p.vars.len()];
                pt[b.0] = bv;
                pt[x.0] = xv;
                let (lo, hi) = feasible_interval(&p, y.0, &pt);
                product_worst = product_worst.max((lo - bv * xv).abs()).max((hi - bv * xv).abs());
            }
        }
    }

    let (net, sc, cfg) = load("dg_feeder.json", "dg_feeder_scenario.json");
    let models = motorstart::mip::slip_models(&net, &sc).unwrap();
    let model = build_model(&net, &sc, &models, &cfg.model).unwrap();
    let bp = model.blocks[0].dt_breakpoints.clone().expect("reciprocal breakpoints");
    let (dlo, dhi) = bp.domain();
    let mut p = ConicProgram::new();
    let xv = p.add_var("x", dlo, dhi);
    let enc = encode_pwl(&mut p, "pwl", "f", xv, &bp).unwrap();
    let mut pwl_worst: f64 = 0.0;
    let mut vertices = 0;
    for i in 0..bp.len() {
        for theta in [0.0, 0.25, 0.5, 0.75] {
            if i + 1 == bp.len() && theta > 0.0 {
                continue;
            }
            let mut pt = vec![0.0; p.vars.len()];
            pt[enc.lambdas[i].0] = 1.0 - theta;
            if theta > 0.0 {
                pt[enc.lambdas[i + 1].0] = theta;
            }
            pt[xv.0] = (1.0 - theta) * bp.x[i] + if theta > 0.0 { theta * bp.x[i + 1] } else { 0.0 };
            let (lo, hi) = feasible_interval(&p, enc.value.0, &pt);
            let f = bp.evaluate(pt[xv.0]).unwrap();
            pwl_worst = pwl_worst.max((lo - f).abs()).max((hi - f).abs());
            pt[enc.value.0] = f;
            let v = p.violations(&pt);
            pwl_worst = pwl_worst.max(v.linear).max(v.sos2);
            vertices += 1;
        }
    }

    let mut chord_ratio: f64 = 0.0;
    for w in bp.x.windows(2) {
        let (a, b) = (w[0], w[1]);
        let bound = (2.0 / a.powi(3)) * (b - a).powi(2) / 8.0;
        for j in 1..200 {
            let x = a + (b - a) * j as f64 / 200.0;
            let err = (bp.evaluate(x).unwrap() - 1.0 / x).abs();
            chord_ratio = chord_ratio.max(err / bound);
        }
    }
    ensure(
        product_worst <= 1e-9 && pwl_worst <= 1e-9 && chord_ratio <= 1.0,
        format!(
            "product max error {product_worst:.1e} on 6000 points; pwl max error {pwl_worst:.1e} on {vertices} weight vertices (tol 1e-9); reciprocal chord error at {:.1}% of the analytic bound",
            100.0 * chord_ratio
        ),
    )
}

fn relaxation_exactness() -> Result<String, String> {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut audited = 0;
    for (net_file, sc_file) in [
        ("dg_feeder.json", "dg_feeder_scenario.json"),
        ("autotransformer_replica.json", "autotransformer_scenario.json"),
        ("autotransformer_removed.json", "autotransformer_scenario.json"),
    ] {
        let (net, s, _) = solve_replica(net_file, sc_file);
        let x = &s.result.incumbent.as_ref().unwrap().x;
        let report = check_exactness(&s.model, x);
        if !report.conditions_hold() {
            lines.push(format!("{net_file}: conditions do not hold, skipped"));
            continue;
        }
        audited += 1;
        let cone = max_cone_residual(&s.model, x);
        let mut refs: f64 = 0.0;
        for d in net.dgs.iter().filter(|d| d.frt) {
            for st in &s.plan.starts {
                let fp = s.model.map.value(x, &Symbol::FpDg { bus: d.bus, motor: st.motor }).unwrap();
                let fq = s.model.map.value(x, &Symbol::FqDg { bus: d.bus, motor: st.motor }).unwrap();
                refs = refs.max((fp + fq - d.f_max * d.f_max).abs());
            }
        }
        ok &= cone <= 1e-6 && report.max_dg_residual <= 1e-6 && refs <= 1e-9;
        lines.push(format!(
            "{net_file}: cone {cone:.1e}, dg {:.1e}, Fp+Fq-f_max^2 {refs:.1e}",
            report.max_dg_residual
        ));
        for r in &s.plan.dg_references {
            lines.push(format!(
                "dg {} references {:.4} A / {:.4} A, sum of squares {:.6} A^2",
                r.bus,
                r.ip_a,
                r.iq_a,
                r.ip_a * r.ip_a + r.iq_a * r.iq_a
            ));
        }
    }
    ensure(ok && audited > 0, lines.join("; "))
}

fn branch_and_bound_optimality() -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let solver = tight_solver();
    let backend = solver.backend();
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    let mut max_bin = 0;
    let mut shifted = 0;
    for _ in 0..10 {
        let (net, sc) = toy_instance(&mut rng);
        let models = motorstart::mip::slip_models(&net, &sc).unwrap();
        let model = build_model(&net, &sc, &models, &Default::default()).unwrap();
        let free_binaries = model
            .program
            .binaries()
            .iter()
            .filter(|v| model.program.vars[v.0].lb < model.program.vars[v.0].ub)
            .count();
        max_bin = max_bin.max(free_binaries);
        let r = branch_and_bound(&model.program, &backend, &solver);
        if r.status != SearchStatus::Optimal {
            return Err(format!("search ended with {:?}", r.status));
        }
        let inc = r.incumbent.unwrap();
        let bnb = inc.objective;
        if model.reliability.eval(&inc.x) > 1e-9 {
            shifted += 1;
        }

        let rows: Vec<(usize, Vec<usize>)> = sc
            .l0
            .iter()
            .map(|(b, row)| {
                let first = row.iter().position(|&v| v == 1).unwrap_or(row.len());
                let vars = (0..row.len()).map(|t| model.map.get(&Symbol::L { bus: *b, t }).unwrap().0).collect();
                (first, vars)
            })
            .collect();
        let bits: Vec<usize> = model
            .map
            .iter()
            .filter(|(s, _)| matches!(s, Symbol::TapBit { .. }))
            .map(|(_, v)| v.0)
            .collect();
        let mut choice = vec![0usize; rows.len()];
        for (i, (first, _)) in rows.iter().enumerate() {
            choice[i] = *first;
        }
        let mut best = f64::INFINITY;
        loop {
            for tap in 0..(1usize << bits.len()) {
                let mut p = model.program.clone();
                p.sos2.clear();
                for (i, (_, vars)) in rows.iter().enumerate() {
                    for (t, v) in vars.iter().enumerate() {
                        let on = if t >= choice[i] { 1.0 } else { 0.0 };
                        p.vars[*v].lb = on;
                        p.vars[*v].ub = on;
                    }
                }
                for (j, v) in bits.iter().enumerate() {
                    let on = (tap >> j & 1) as f64;
                    p.vars[*v].lb = on;
                    p.vars[*v].ub = on;
                }
                let sol = solve_conic(&p, &backend);
                evaluated += 1;
                if sol.status == SolveStatus::Optimal {
                    best = best.min(p.objective_value(&sol.x));
                }
            }
            let mut i = 0;
            loop {
                if i == rows.len() {
                    break;
                }
                let len = rows[i].1.len();
                if choice[i] < len {
                    choice[i] += 1;
                    break;
                }
                choice[i] = rows[i].0;
                i += 1;
            }
            if i == rows.len() {
                break;
            }
        }
        worst = worst.max((bnb - best).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-6 && secs < 60.0 && max_bin <= 10,
        format!(
            "max |B&B - enumeration| {worst:.1e} (tol 1e-6) over 10 instances ({shifted} with load shifting) with at most {max_bin} free binaries, {evaluated} fixed relaxations, {secs:.1} s (limit 60 s)"
        ),
    )
}

fn semi_static_fidelity() -> Result<String, String> {
    let (_, s, cfg) = solve_replica("dg_feeder.json", "dg_feeder_scenario.json");
    let (report, traces) = validate_plan(&s.model.net, &s.plan, &cfg.simulation, &cfg.validation).unwrap();
    let st = &report.starts[0];
    let dev = st
        .steps
        .iter()
        .filter(|c| !c.initial_window)
        .map(|c| c.deviation.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let predicted = s.plan.starts[0].accel_time_s;
    let simulated = st.accel_time_sim_s.unwrap_or(f64::INFINITY);
    let ratio = simulated / predicted;
    let trips = check_protection(&traces[0], &s.model.net).trips().len();
    ensure(
        dev <= 0.02 && (ratio - 1.0).abs() <= 0.1 && trips == 0,
        format!(
            "max |U_sim - U_opt| {dev:.4} after 100 ms (tol 0.02); acceleration {simulated:.4} s vs {predicted:.4} s (ratio {ratio:.3}, tol 10%); {trips} trips"
        ),
    )
}

fn autotransformer_direction() -> Result<String, String> {
    let (_, with, cfg) = solve_replica("autotransformer_replica.json", "autotransformer_scenario.json");
    let (_, without, _) = solve_replica("autotransformer_removed.json", "autotransformer_scenario.json");
    let tap = with.plan.starts.first().and_then(|s| s.tap);
    let (report, traces) = validate_plan(&with.model.net, &with.plan, &cfg.simulation, &cfg.validation).unwrap();
    let trips = traces.iter().map(|t| check_protection(t, &with.model.net).trips().len()).sum::<usize>();

    let mut dol = with.plan.clone();
    dol.starts[0].tap = None;
    let motor = dol.starts[0].motor;
    let trace = simulate_motor_start(&without.model.net, &dol, motor, &cfg.simulation).unwrap();
    let dol_trips = check_protection(&trace, &without.model.net).trips().len();

    let (re_with, re_without) = (with.plan.objective.reliability, without.plan.objective.reliability);
    let (sh_with, sh_without) = (with.plan.shifts.len(), without.plan.shifts.len());
    ensure(
        tap.is_some_and(|t| t < 0)
            && report.pass
            && trips == 0
            && dol_trips > 0
            && re_without > re_with + 1e-9
            && sh_without > sh_with,
        format!(
            "tap {tap:?}, validation {}, {trips} trips; same loads started direct-on-line trip {dol_trips} relay(s); without starter F_re {re_without:.4} ({sh_without} shifts) vs {re_with:.4} ({sh_with} shifts)",
            if report.pass { "pass" } else { "fail" }
        ),
    )
}

fn run_cli(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_motorstart"))
        .args(["solve", "--network"])
        .arg(data("dg_feeder.json"))
        .arg("--scenario")
        .arg(data("dg_feeder_scenario.json"))
        .arg("--out")
        .arg(out)
        .arg("--validate")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_cli(&a);
    run_cli(&b);
    let (fa, fb) = (outputs(&a), outputs(&b));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let manifest = |d: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap();
        v["outputs"].clone()
    };
    ensure(
        differing.is_empty() && fa.len() == fb.len() && manifest(&a) == manifest(&b),
        format!("{} artifacts compared byte for byte, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("motor-math oracle equivalence", motor_math_oracle),
        ("reference motor conversion", reference_motor_conversion),
        ("encoding exactness", encoding_exactness),
        ("relaxation exactness", relaxation_exactness),
        ("branch-and-bound optimality", branch_and_bound_optimality),
        ("semi-static fidelity", semi_static_fidelity),
        ("autotransformer direction", autotransformer_direction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
