use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{BusId, Network, ProtectionCurve, ProtectionKind};

/// One failed invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    fn require(&mut self, ok: bool, field: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.push(field, message);
        }
    }
}

fn nonneg(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn check_curve(r: &mut Report, field: &str, curve: &ProtectionCurve) {
    if curve.points.is_empty() {
        r.push(field, "curve has no breakpoints");
        return;
    }
    if curve.points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        r.push(field, "breakpoint times must be strictly increasing");
    }
    if curve.points.iter().any(|p| !nonneg(p.0) || !nonneg(p.1)) {
        r.push(field, "times and limits must be finite and non-negative");
    }
    let monotone = match curve.kind {
        ProtectionKind::UnderVoltage => curve.points.windows(2).all(|w| w[1].1 >= w[0].1),
        ProtectionKind::OverCurrent => curve.points.windows(2).all(|w| w[1].1 <= w[0].1),
    };
    if !monotone {
        let what = match curve.kind {
            ProtectionKind::UnderVoltage => "under-voltage limits must be non-decreasing in time",
            ProtectionKind::OverCurrent => "over-current limits must be non-increasing in time",
        };
        r.push(field, what);
    }
}

/// Checks every structural and parametric invariant of a network. An empty
/// result means the network is valid.
pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut r = Report(Vec::new());
    let ids: BTreeSet<BusId> = net.buses.iter().map(|b| b.id).collect();
    let exists = |r: &mut Report, field: String, bus: BusId| {
        if !ids.contains(&bus) {
            r.push(field, format!("unknown bus {bus}"));
        }
    };

    r.require(
        positive(net.bases.power_va) && positive(net.bases.voltage_v),
        "base",
        "power and voltage bases must be positive",
    );
    r.require(positive(net.slack_voltage), "slack_voltage_pu", "must be positive");
    if ids.len() != net.buses.len() {
        r.push("buses", "duplicate bus ids");
    }
    let lines_ok = net.lines.iter().all(|l| ids.contains(&l.from) && ids.contains(&l.to));
    if let (true, Err(e)) = (lines_ok, net.tree()) {
        r.push("lines", e.to_string());
    }

    for l in &net.lines {
        let f = format!("lines[{}]", l.label());
        exists(&mut r, f.clone(), l.from);
        exists(&mut r, f.clone(), l.to);
        r.require(nonneg(l.r) && nonneg(l.x), &f, "impedance must be non-negative");
        r.require(positive(l.ampacity), &f, "ampacity must be positive");
    }

    let horizon = net.horizon_len();
    let mut load_count: BTreeMap<BusId, usize> = BTreeMap::new();
    for l in &net.static_loads {
        let f = format!("static_loads[bus={}]", l.bus);
        exists(&mut r, f.clone(), l.bus);
        *load_count.entry(l.bus).or_default() += 1;
        if Some(l.p0.len()) != horizon || l.q0.len() != l.p0.len() {
            r.push(&f, "profiles must all have the same horizon length");
        }
        if l.p0.is_empty() {
            r.push(&f, "profiles must not be empty");
        }
        r.require(
            l.p0.iter().chain(&l.q0).all(|v| v.is_finite()),
            &f,
            "profile values must be finite",
        );
        r.require(l.kp.is_finite() && l.kq.is_finite(), &f, "kp and kq must be finite");
        r.require(nonneg(l.priority), &f, "priority must be non-negative");
    }
    for m in &net.motors {
        let f = format!("motors[bus={}]", m.bus);
        exists(&mut r, f.clone(), m.bus);
        *load_count.entry(m.bus).or_default() += 1;
        let p = &m.params;
        r.require(
            [p.rs, p.xls, p.rr, p.xlr, p.xm].iter().all(|&v| positive(v)),
            &f,
            "equivalent-circuit impedances must be positive",
        );
        r.require(positive(p.h), &f, "inertia constant H must be positive");
        r.require(nonneg(p.kd), &f, "Kd must be non-negative");
        r.require(positive(p.rated_va), &f, "rated power must be positive");
        r.require(nonneg(p.mech.t_nom), &f, "nominal load torque must be non-negative");
        r.require(nonneg(m.priority), &f, "priority must be non-negative");
    }
    for (bus, n) in load_count {
        r.require(n == 1, format!("bus {bus}"), "at most one load or motor per bus");
    }

    let mut dg_buses = BTreeSet::new();
    for d in &net.dgs {
        let f = format!("dgs[bus={}]", d.bus);
        exists(&mut r, f.clone(), d.bus);
        r.require(positive(d.f_max), &f, "f_max must be positive");
        r.require(d.p_set.is_finite() && d.q_set.is_finite(), &f, "set points must be finite");
        r.require(dg_buses.insert(d.bus), &f, "duplicate DG at bus");
    }

    let mut at_buses = BTreeSet::new();
    for a in &net.autotransformers {
        let f = format!("autotransformers[bus={}]", a.bus);
        exists(&mut r, f.clone(), a.bus);
        r.require(net.motor_at(a.bus).is_some(), &f, "no motor at bus");
        r.require(positive(a.sigma), &f, "sigma must be positive");
        r.require(a.taps > 0, &f, "tap count must be positive");
        r.require(
            a.bypass_speed > 0.0 && a.bypass_speed < 1.0,
            &f,
            "bypass speed must lie in (0, 1)",
        );
        r.require(
            nonneg(a.zp.r) && nonneg(a.zp.x) && nonneg(a.zs.r) && nonneg(a.zs.x),
            &f,
            "impedances must be non-negative",
        );
        r.require(at_buses.insert(a.bus), &f, "duplicate autotransformer at bus");
    }

    let mut curve_buses = BTreeSet::new();
    for p in &net.node_protection {
        let f = format!("protection.nodes[bus={}]", p.bus);
        exists(&mut r, f.clone(), p.bus);
        r.require(p.curve.kind == ProtectionKind::UnderVoltage, &f, "node curves are under-voltage");
        check_curve(&mut r, &f, &p.curve);
        r.require(curve_buses.insert(p.bus), &f, "duplicate curve");
    }
    for b in &net.buses {
        r.require(
            b.protected == curve_buses.contains(&b.id),
            format!("buses[id={}]", b.id),
            "protected flag and under-voltage curve must come together",
        );
    }

    let mut curve_lines = BTreeSet::new();
    for p in &net.line_protection {
        let f = format!("protection.lines[{}-{}]", p.from, p.to);
        r.require(p.curve.kind == ProtectionKind::OverCurrent, &f, "line curves are over-current");
        check_curve(&mut r, &f, &p.curve);
        match net.line_between(p.from, p.to) {
            Some(li) => {
                r.require(curve_lines.insert(li), &f, "duplicate curve");
            }
            None => r.push(&f, "no such line"),
        }
    }
    for (li, l) in net.lines.iter().enumerate() {
        r.require(
            l.protected == curve_lines.contains(&li),
            format!("lines[{}]", l.label()),
            "protected flag and over-current curve must come together",
        );
    }
    r.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::*;

    fn base() -> Network {
        Network::from_json(
            r#"{
            "base": {"power_va": 1000000, "voltage_v": 11400},
            "buses": [{"id": 1, "slack": true}, {"id": 2, "protected": true}, {"id": 3}],
            "lines": [
                {"from": 1, "to": 2, "r_pu": 0.01, "x_pu": 0.02, "ampacity_pu": 3, "protected": true},
                {"from": 2, "to": 3, "r_pu": 0.01, "x_pu": 0.02, "ampacity_pu": 3}
            ],
            "static_loads": [
                {"bus": 2, "p0_profile": [0.1, 0.1], "q0_profile": [0.05, 0.05], "kp": 2, "kq": 2, "priority": 1}
            ],
            "motors": [
                {"bus": 3, "rs": 0.036, "xls": 0.064, "rr": 0.03425, "xlr": 0.064, "xm": 1.40425,
                 "unit": "pu", "h_s": 0.198, "kd_pu": 0, "rated_va": 100000,
                 "mech": {"kind": "linear", "t_nom_pu": 0.5}}
            ],
            "dgs": [{"bus": 2, "f_max_pu": 1.5, "frt": true}],
            "autotransformers": [
                {"bus": 3, "sigma": 0.1, "taps": 4, "zp": {"r": 0.001, "x": 0.01}, "zs": {"r": 0.001, "x": 0.01}, "bypass_speed": 0.8}
            ],
            "protection": {
                "nodes": [{"bus": 2, "curve": [[0, 0.7], [1, 0.8]]}],
                "lines": [{"from": 1, "to": 2, "curve": [[0, 5], [1, 3]]}]
            }
        }"#,
        )
        .unwrap()
    }

    fn fields(net: &Network) -> Vec<String> {
        validate_network(net).into_iter().map(|v| v.field).collect()
    }

    #[test]
    fn valid_network_has_no_findings() {
        assert_eq!(validate_network(&base()), vec![]);
    }

    type Mutation = (&'static str, fn(&mut Network), &'static str);

    #[test]
    fn each_mutation_flags_exactly_its_invariant() {
        let cases: Vec<Mutation> = vec![
            ("zero inertia", |n| n.motors[0].params.h = 0.0, "motors[bus=3]"),
            ("negative kd", |n| n.motors[0].params.kd = -0.1, "motors[bus=3]"),
            ("zero xm", |n| n.motors[0].params.xm = 0.0, "motors[bus=3]"),
            ("negative r", |n| n.lines[1].r = -0.01, "lines[2-3]"),
            ("zero ampacity", |n| n.lines[1].ampacity = 0.0, "lines[2-3]"),
            (
                "time axis decreasing",
                |n| n.node_protection[0].curve.points = vec![(1.0, 0.49), (0.5, 0.64)],
                "protection.nodes[bus=2]",
            ),
            (
                "under-voltage limit decreasing",
                |n| n.node_protection[0].curve.points = vec![(0.0, 0.64), (1.0, 0.49)],
                "protection.nodes[bus=2]",
            ),
            (
                "over-current limit increasing",
                |n| n.line_protection[0].curve.points = vec![(0.0, 1.0), (1.0, 4.0)],
                "protection.lines[1-2]",
            ),
            ("zero f_max", |n| n.dgs[0].f_max = 0.0, "dgs[bus=2]"),
            ("zero sigma", |n| n.autotransformers[0].sigma = 0.0, "autotransformers[bus=3]"),
            ("bypass at 1", |n| n.autotransformers[0].bypass_speed = 1.0, "autotransformers[bus=3]"),
            ("short profile", |n| n.static_loads[0].q0.pop().map(|_| ()).unwrap(), "static_loads[bus=2]"),
            ("dangling dg", |n| n.dgs[0].bus = BusId(99), "dgs[bus=99]"),
            ("non-positive slack voltage", |n| n.slack_voltage = 0.0, "slack_voltage_pu"),
            (
                "cycle",
                |n| {
                    let mut l = n.lines[1].clone();
                    l.from = BusId(3);
                    l.to = BusId(1);
                    l.protected = false;
                    n.lines.push(l)
                },
                "lines",
            ),
        ];
        for (name, mutate, expected) in cases {
            let mut net = base();
            mutate(&mut net);
            assert_eq!(fields(&net), vec![expected.to_string()], "mutation {name}");
        }
    }

    #[test]
    fn protected_flag_without_curve() {
        let mut net = base();
        net.buses[2].protected = true;
        assert_eq!(fields(&net), vec!["buses[id=3]".to_string()]);
    }
}
