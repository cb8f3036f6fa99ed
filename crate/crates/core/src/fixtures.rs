//! Small hand-built networks shared by unit tests.

use std::collections::BTreeMap;

use crate::netmodel::*;

pub fn reference_motor(t_nom: f64, kind: MechLoadKind, rated_va: f64) -> MotorParams {
    MotorParams {
        rs: 0.036,
        xls: 0.064,
        rr: 0.03425,
        xlr: 0.064,
        xm: 1.40425,
        h: 0.198,
        kd: 0.0,
        rated_va,
        mech: MechLoad { kind, t_nom },
    }
}

pub fn line(from: u32, to: u32, r: f64, x: f64, ampacity: f64) -> Line {
    Line {
        from: BusId(from),
        to: BusId(to),
        r,
        x,
        ampacity,
        protected: false,
    }
}

/// Buses `1..=n` with bus 1 as slack, on a 4 kVA / 400 V base.
pub fn network(n: u32, lines: Vec<Line>) -> Network {
    Network {
        bases: Bases {
            power_va: 4000.0,
            voltage_v: 400.0,
        },
        buses: (1..=n)
            .map(|i| Bus {
                id: BusId(i),
                slack: i == 1,
                protected: false,
            })
            .collect(),
        lines,
        static_loads: Vec::new(),
        motors: Vec::new(),
        dgs: Vec::new(),
        autotransformers: Vec::new(),
        node_protection: Vec::new(),
        line_protection: Vec::new(),
        slack_voltage: 1.0,
    }
}

pub fn static_load(bus: u32, p: Vec<f64>, q: Vec<f64>, k: f64, priority: f64) -> StaticLoad {
    StaticLoad {
        bus: BusId(bus),
        p0: p,
        q0: q,
        kp: k,
        kq: k,
        priority,
    }
}

pub fn motor(bus: u32, params: MotorParams) -> Motor {
    Motor {
        bus: BusId(bus),
        params,
        priority: 1.0,
    }
}

pub fn scenario(steps: usize, l0: &[(u32, Vec<u8>)], k_max: Option<usize>) -> ScenarioInput {
    ScenarioInput {
        horizon: Horizon {
            start_minute: 8 * 60,
            step_minutes: 60,
            steps,
        },
        l0: l0.iter().map(|(b, r)| (BusId(*b), r.clone())).collect::<BTreeMap<_, _>>(),
        open_lines: Vec::new(),
        w_re: 1.0,
        w_op: 1e-4,
        slip_step: 0.05,
        k_max,
        one_motor_per_step: true,
    }
}

/// Slack 1 feeding a constant-power load at 2 and a small linear-load motor
/// at 3 over separate lines.
pub fn two_bus_with_motor() -> Network {
    let mut net = network(
        3,
        vec![line(1, 2, 0.01, 0.01, 5.0), line(1, 3, 0.002, 0.004, 20.0)],
    );
    net.static_loads.push(static_load(2, vec![0.5], vec![0.2], 0.0, 1.0));
    net.motors
        .push(motor(3, reference_motor(0.0864, MechLoadKind::Linear, 400.0)));
    net
}
