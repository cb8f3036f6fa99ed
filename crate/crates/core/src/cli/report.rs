use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::netmodel::BusId;
use crate::solve::RestorationPlan;

/// Search outcome and raw solution vector of a solve run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: String,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub relaxations: usize,
    pub x: Vec<f64>,
}

/// Fields of `comparison.json` that the summary reports.
#[derive(Debug, Clone, Deserialize)]
pub struct ComparisonDigest {
    pub max_deviation: f64,
    pub pass: bool,
    pub starts: Vec<StartDigest>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StartDigest {
    pub motor: BusId,
    pub accel_time_sim_s: Option<f64>,
    pub accel_time_opt_s: f64,
    pub failures: Vec<String>,
}

/// Gantt-style table: one row per off-outage bus, one 0/1 column per step.
pub fn energization_csv(plan: &RestorationPlan, kinds: &dyn Fn(BusId) -> &'static str) -> String {
    let mut s = String::from("bus,kind,planned_start,restored_start");
    for h in &plan.horizon {
        s.push(',');
        s.push_str(h);
    }
    s.push('\n');
    let label = |row: Option<&Vec<u8>>| {
        row.and_then(|r| r.iter().position(|&v| v == 1))
            .map(|t| plan.horizon[t].clone())
            .unwrap_or_default()
    };
    for (bus, row) in &plan.l {
        let _ = write!(s, "{bus},{},{},{}", kinds(*bus), label(plan.l0.get(bus)), label(Some(row)));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Predicted squared voltages along each start, long format.
pub fn voltages_csv(plan: &RestorationPlan) -> String {
    let mut s = String::from("motor,start,k,slip,t_cum_s,node,u_pu2,v_pu\n");
    for st in &plan.starts {
        let mut t_cum = 0.0;
        for (k0, &slip) in st.slips.iter().enumerate() {
            t_cum += st.step_time_s.get(k0).copied().unwrap_or(f64::NAN);
            let mut rows: Vec<(String, f64)> = Vec::new();
            if let Some(&u) = st.u_bus.get(k0) {
                rows.push((st.motor.to_string(), u));
            }
            if st.starter_active.get(k0).copied().unwrap_or(false) {
                if let Some(&u) = st.u_terminal.get(k0) {
                    rows.push((format!("{}m", st.motor), u));
                }
            }
            for (bus, series) in &st.u_protected {
                if *bus != st.motor {
                    if let Some(&u) = series.get(k0) {
                        rows.push((bus.to_string(), u));
                    }
                }
            }
            for (node, u) in rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{slip:.4},{t_cum:.6},{node},{u:.8},{:.8}",
                    st.motor,
                    st.time,
                    k0 + 1,
                    u.max(0.0).sqrt()
                );
            }
        }
    }
    s
}

pub fn dg_refs_csv(plan: &RestorationPlan) -> String {
    let mut s = String::from("dg_bus,motor,fp_pu2,fq_pu2,ip_pu,iq_pu,ip_a,iq_a,f_max_pu\n");
    for d in &plan.dg_references {
        let _ = writeln!(
            s,
            "{},{},{:.9},{:.9},{:.9},{:.9},{:.6},{:.6},{}",
            d.bus, d.motor, d.fp_pu2, d.fq_pu2, d.ip_pu, d.iq_pu, d.ip_a, d.iq_a, d.f_max_pu
        );
    }
    s
}

pub fn summary_txt(
    plan: &RestorationPlan,
    solution: Option<&SolutionFile>,
    comparison: Option<&ComparisonDigest>,
) -> String {
    let mut s = String::new();
    let o = &plan.objective;
    let _ = writeln!(s, "horizon: {} ({} steps of {} h)", plan.horizon.join(" "), plan.horizon.len(), plan.step_hours);
    if let Some(sol) = solution {
        let _ = writeln!(
            s,
            "search: {} after {} nodes, objective {:.9}, bound {:.9}, gap {:.3e}",
            sol.status, sol.nodes, sol.objective, sol.best_bound, sol.gap
        );
    }
    let _ = writeln!(
        s,
        "objective: {:.9} = {} x reliability {:.9} + {} x losses {:.9}",
        o.total, o.w_re, o.reliability, o.w_op, o.operational
    );
    let _ = writeln!(s, "exactness: {}", plan.exactness);
    let _ = writeln!(s, "energization:");
    for (bus, row) in &plan.l {
        let bar: String = row.iter().map(|&v| if v == 1 { '#' } else { '.' }).collect();
        let _ = writeln!(s, "  {bus:>6} {bar}");
    }
    if plan.shifts.is_empty() {
        let _ = writeln!(s, "shifted loads: none");
    } else {
        let _ = writeln!(s, "shifted loads:");
        let at = |t: Option<usize>| t.map_or("never".to_string(), |t| plan.horizon[t].clone());
        for sh in &plan.shifts {
            let _ = writeln!(s, "  bus {}: planned {}, restored {}", sh.bus, at(sh.planned), at(sh.restored));
        }
    }
    for st in &plan.starts {
        let tap = st.tap.map_or("direct-on-line".to_string(), |t| format!("tap {t}"));
        let u_min = st.u_bus.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            s,
            "start: motor {} at {}, {tap}, predicted acceleration {:.4} s, minimum bus voltage {:.4} p.u.",
            st.motor,
            st.time,
            st.accel_time_s,
            u_min.max(0.0).sqrt()
        );
    }
    for d in &plan.dg_references {
        let _ = writeln!(
            s,
            "dg reference: bus {} during start of {}: Ip = {:.4} A, Iq = {:.4} A",
            d.bus, d.motor, d.ip_a, d.iq_a
        );
    }
    if let Some(c) = comparison {
        let _ = writeln!(
            s,
            "validation: {} (max squared-voltage deviation {:.4})",
            if c.pass { "pass" } else { "FAIL" },
            c.max_deviation
        );
        for st in &c.starts {
            let sim = st.accel_time_sim_s.map_or("n/a".to_string(), |t| format!("{t:.4} s"));
            let _ = writeln!(
                s,
                "  motor {}: simulated acceleration {sim} vs predicted {:.4} s",
                st.motor, st.accel_time_opt_s
            );
            for f in &st.failures {
                let _ = writeln!(s, "    {f}");
            }
        }
    }
    s
}
