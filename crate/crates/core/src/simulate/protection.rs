//! Relay-curve monitoring of a simulated trace.

use serde::Serialize;

use super::SimTrace;
use crate::netmodel::{Network, ProtectionCurve, ProtectionKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementCheck {
    pub element: String,
    pub kind: ProtectionKind,
    /// Smallest signed distance to the limit (positive is safe), p.u.
    pub min_margin: f64,
    pub min_margin_at: f64,
    pub first_violation: Option<f64>,
    /// `(t, margin)` per trace sample.
    #[serde(skip_serializing)]
    pub margins: Vec<(f64, f64)>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtectionReport {
    pub elements: Vec<ElementCheck>,
    pub pass: bool,
}

impl ProtectionReport {
    pub fn trips(&self) -> Vec<&ElementCheck> {
        self.elements.iter().filter(|e| !e.pass).collect()
    }
}

/// Margin series of one quantity against one curve; elapsed time is the
/// trace time, measured from energization.
pub fn check_curve(element: String, curve: &ProtectionCurve, time: &[f64], value: &[f64]) -> ElementCheck {
    let mut margins = Vec::with_capacity(time.len());
    let mut min_margin = f64::INFINITY;
    let mut min_margin_at = 0.0;
    let mut first_violation = None;
    for (&t, &x) in time.iter().zip(value) {
        let limit = curve.limit(t);
        let m = match curve.kind {
            ProtectionKind::UnderVoltage => x - limit,
            ProtectionKind::OverCurrent => limit - x,
        };
        if m < min_margin {
            min_margin = m;
            min_margin_at = t;
        }
        if m < 0.0 && first_violation.is_none() {
            first_violation = Some(t);
        }
        margins.push((t, m));
    }
    ElementCheck {
        element,
        kind: curve.kind,
        min_margin,
        min_margin_at,
        pass: first_violation.is_none(),
        first_violation,
        margins,
    }
}

/// Compares every protected bus voltage and line current in the trace
/// against its curve.
pub fn check_protection(trace: &SimTrace, net: &Network) -> ProtectionReport {
    let mut elements = Vec::new();
    for np in &net.node_protection {
        if let Some(bi) = trace.bus_position(np.bus) {
            let v: Vec<f64> = trace.v.iter().map(|row| row[bi]).collect();
            elements.push(check_curve(format!("bus {}", np.bus), &np.curve, &trace.time, &v));
        }
    }
    for lp in &net.line_protection {
        let li = trace
            .lines
            .iter()
            .position(|&(a, b)| (a, b) == (lp.from, lp.to) || (b, a) == (lp.from, lp.to));
        if let Some(li) = li {
            let i: Vec<f64> = trace.line_current.iter().map(|row| row[li]).collect();
            elements.push(check_curve(format!("line {}-{}", lp.from, lp.to), &lp.curve, &trace.time, &i));
        }
    }
    ProtectionReport {
        pass: elements.iter().all(|e| e.pass),
        elements,
    }
}
