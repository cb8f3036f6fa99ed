use serde::Serialize;

use super::{Branch, MipModel, Node, Symbol};
use crate::netmodel::BusId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineResidual {
    pub motor: BusId,
    pub k: usize,
    pub branch: String,
    /// `|F·U − (p² + q²)| / max(1, p² + q²)`.
    pub residual: f64,
    /// `F^th − F`; infinite for starter windings.
    pub current_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgResidual {
    pub bus: BusId,
    pub motor: BusId,
    pub k: usize,
    pub p_residual: f64,
    pub q_residual: f64,
    /// `v_max² − U` at the DG bus.
    pub voltage_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceResidual {
    pub bus: BusId,
    pub motor: BusId,
    /// `|Fp + Fq − f_max²|`.
    pub residual: f64,
}

/// Linearized versus exact squared ratio of a chosen tap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TapAudit {
    pub motor: BusId,
    pub tap: i32,
    pub linear_ratio_sq: f64,
    pub exact_ratio_sq: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// Elements at which the condition is binding or violated.
    pub binding: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactnessReport {
    pub tolerance: f64,
    /// No DG bus sits at the upper voltage limit during a start.
    pub condition_i: ConditionReport,
    /// No line sits at its thermal limit.
    pub condition_ii: ConditionReport,
    /// The objective strictly increases with every branch current.
    pub condition_iii: ConditionReport,
    pub max_line_residual: f64,
    pub max_dg_residual: f64,
    pub max_reference_residual: f64,
    pub min_voltage_margin: f64,
    pub min_current_margin: f64,
    pub lines: Vec<LineResidual>,
    pub dgs: Vec<DgResidual>,
    pub references: Vec<ReferenceResidual>,
    pub taps: Vec<TapAudit>,
    pub exact: bool,
    pub verdict: String,
}

impl ExactnessReport {
    pub fn conditions_hold(&self) -> bool {
        self.condition_i.holds && self.condition_ii.holds && self.condition_iii.holds
    }

    pub fn residuals_within_tolerance(&self) -> bool {
        self.max_line_residual <= self.tolerance && self.max_dg_residual <= self.tolerance
    }
}

fn from_node(model: &MipModel, br: Branch) -> Node {
    match br {
        Branch::Line(from, _) => Node::Bus(from),
        Branch::StarterPrimary(m) => Node::Bus(m),
        Branch::StarterSecondary(m) => {
            let _ = model;
            Node::StarterOut(m)
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Audits the cone relaxations at a solution `x` of `model.program`.
pub fn check_exactness(model: &MipModel, x: &[f64]) -> ExactnessReport {
    let tol = model.config.exactness_tol;
    let vmax2 = model.config.v_max_sq();
    let margin_tol = 1e-6;
    let val = |s: &Symbol| model.map.value(x, s);

    let mut lines = Vec::new();
    let mut dgs = Vec::new();
    let mut references = Vec::new();
    let mut taps = Vec::new();
    let mut cond1 = Vec::new();
    let mut cond2 = Vec::new();
    let mut cond3 = Vec::new();

    if !(model.w_op > 0.0) {
        cond3.push("w_op is not positive".to_string());
    }
    for l in &model.net.lines {
        if !(l.r > 0.0) {
            cond3.push(format!("line {} has zero resistance", l.label()));
        }
    }

    for block in &model.blocks {
        let m = block.motor;
        let last = model.horizon.steps.saturating_sub(1);
        if val(&Symbol::L { bus: m, t: last }).is_none_or(|v| v < 0.5) {
            continue;
        }
        let mut branches: Vec<(Branch, f64)> = model
            .net
            .lines
            .iter()
            .map(|l| (Branch::Line(l.from, l.to), l.thermal_limit_sq()))
            .collect();
        if let Some(a) = &block.starter {
            for (br, z) in [(Branch::StarterPrimary(m), a.zp), (Branch::StarterSecondary(m), a.zs)] {
                if !(z.r > 0.0) {
                    cond3.push(format!("starter branch {br} has zero resistance"));
                }
                branches.push((br, f64::INFINITY));
            }
        }
        for k in 1..=block.k_max() {
            for &(br, fth) in &branches {
                let (Some(p), Some(q), Some(f)) = (
                    val(&Symbol::P { branch: br, k, motor: m }),
                    val(&Symbol::Q { branch: br, k, motor: m }),
                    val(&Symbol::F { branch: br, k, motor: m }),
                ) else {
                    continue;
                };
                let u = val(&Symbol::U { node: from_node(model, br), k, motor: m }).unwrap_or(0.0);
                let s2 = p * p + q * q;
                let residual = (f * u - s2).abs() / s2.max(1.0);
                let current_margin = fth - f;
                if fth.is_finite() && current_margin <= margin_tol * fth.max(1.0) {
                    cond2.push(format!("{br} at k={k}, motor {m}"));
                }
                lines.push(LineResidual {
                    motor: m,
                    k,
                    branch: br.to_string(),
                    residual,
                    current_margin,
                });
            }
            for d in model.net.dgs.iter().filter(|d| d.frt) {
                let u = val(&Symbol::U { node: Node::Bus(d.bus), k, motor: m }).unwrap_or(0.0);
                let pd = val(&Symbol::PDg { bus: d.bus, k, motor: m }).unwrap_or(0.0);
                let qd = val(&Symbol::QDg { bus: d.bus, k, motor: m }).unwrap_or(0.0);
                let fp = val(&Symbol::FpDg { bus: d.bus, motor: m }).unwrap_or(0.0);
                let fq = val(&Symbol::FqDg { bus: d.bus, motor: m }).unwrap_or(0.0);
                let voltage_margin = vmax2 - u;
                if voltage_margin <= margin_tol {
                    cond1.push(format!("DG bus {} at k={k}, motor {m}", d.bus));
                }
                dgs.push(DgResidual {
                    bus: d.bus,
                    motor: m,
                    k,
                    p_residual: rel(pd * pd, fp * u),
                    q_residual: rel(qd * qd, fq * u),
                    voltage_margin,
                });
            }
        }
        for d in model.net.dgs.iter().filter(|d| d.frt) {
            let fp = val(&Symbol::FpDg { bus: d.bus, motor: m }).unwrap_or(0.0);
            let fq = val(&Symbol::FqDg { bus: d.bus, motor: m }).unwrap_or(0.0);
            references.push(ReferenceResidual {
                bus: d.bus,
                motor: m,
                residual: (fp + fq - d.f_max * d.f_max).abs(),
            });
        }
        if let (Some(a), Some(dr)) = (&block.starter, val(&Symbol::Tap { motor: m })) {
            let tap = dr.round() as i32;
            let lin = a.linear_ratio_sq(tap);
            let exact = a.exact_ratio_sq(tap);
            taps.push(TapAudit {
                motor: m,
                tap,
                linear_ratio_sq: lin,
                exact_ratio_sq: exact,
                gap: (exact - lin).abs(),
            });
        }
    }

    let max_line_residual = lines.iter().map(|l| l.residual).fold(0.0, f64::max);
    let max_dg_residual = dgs
        .iter()
        .map(|d| d.p_residual.max(d.q_residual))
        .fold(0.0, f64::max);
    let max_reference_residual = references.iter().map(|r| r.residual).fold(0.0, f64::max);
    let min_voltage_margin = dgs.iter().map(|d| d.voltage_margin).fold(f64::INFINITY, f64::min);
    let min_current_margin = lines
        .iter()
        .map(|l| l.current_margin)
        .fold(f64::INFINITY, f64::min);

    let condition = |binding: Vec<String>| ConditionReport { holds: binding.is_empty(), binding };
    let mut report = ExactnessReport {
        tolerance: tol,
        condition_i: condition(cond1),
        condition_ii: condition(cond2),
        condition_iii: condition(cond3),
        max_line_residual,
        max_dg_residual,
        max_reference_residual,
        min_voltage_margin,
        min_current_margin,
        lines,
        dgs,
        references,
        taps,
        exact: false,
        verdict: String::new(),
    };
    let within = report.residuals_within_tolerance();
    report.exact = within && report.conditions_hold();
    report.verdict = if !report.conditions_hold() {
        "exactness not guaranteed".to_string()
    } else if within {
        "exact".to_string()
    } else {
        format!(
            "relaxation not tight: residual {:.3e} exceeds tolerance {:.1e}",
            max_line_residual.max(max_dg_residual),
            tol
        )
    };
    report
}
