//! Backward-forward sweep on the radial network.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::motor::input_impedance;
use crate::netmodel::{BusId, Network};

/// Operating mode of an inverter-interfaced DG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DgMode {
    /// Constant-power injection at the DG's set points.
    Normal,
    /// Current source with components aligned with (`ip`) and leading
    /// (`iq`) the local voltage phasor, p.u.
    Saturated { ip: f64, iq: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotorState {
    pub bus: BusId,
    pub connected: bool,
    pub slip: f64,
    /// Autotransformer tap while the starter is in circuit.
    pub starter_tap: Option<i32>,
}

/// Electrical state fed to one network solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Horizon step selecting static-load profile values.
    pub step: usize,
    pub loads_on: BTreeSet<BusId>,
    pub motors: Vec<MotorState>,
    pub dg_modes: BTreeMap<BusId, DgMode>,
    pub time: f64,
    /// Last converged voltages, used as the starting point.
    pub v: Vec<Complex64>,
}

impl SimState {
    pub fn new(step: usize) -> Self {
        SimState {
            step,
            loads_on: BTreeSet::new(),
            motors: Vec::new(),
            dg_modes: BTreeMap::new(),
            time: 0.0,
            v: Vec::new(),
        }
    }

    pub fn motor_mut(&mut self, bus: BusId) -> Option<&mut MotorState> {
        self.motors.iter_mut().find(|m| m.bus == bus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotorElectrical {
    /// Current drawn at the network bus, network p.u.
    pub bus_current: Complex64,
    /// Terminal voltage (after the starter when in circuit).
    pub terminal_v: Complex64,
    /// Stator current, motor p.u.
    pub stator_current: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    /// Bus voltages in `Network::buses` order.
    pub v: Vec<Complex64>,
    /// Branch currents in `Network::lines` order, flowing from `from` to `to`.
    pub line_current: Vec<Complex64>,
    pub iterations: usize,
    pub slack_power: Complex64,
    pub load_power: Complex64,
    pub dg_power: Complex64,
    pub losses: Complex64,
    pub motors: BTreeMap<BusId, MotorElectrical>,
    /// Injected DG current per DG bus, network p.u.
    pub dg_current: BTreeMap<BusId, Complex64>,
}

impl NetworkSolution {
    /// `|S_slack + S_dg − S_load − S_loss|`.
    pub fn energy_mismatch(&self) -> f64 {
        (self.slack_power + self.dg_power - self.load_power - self.losses).norm()
    }
}

struct MotorBranch {
    bus: usize,
    /// Motor-base admittance scaled to the network base.
    y: Complex64,
    starter: Option<(Complex64, Complex64, f64)>,
}

impl MotorBranch {
    fn equivalent(&self) -> Complex64 {
        match self.starter {
            None => self.y,
            Some((zp, zs, a)) => 1.0 / (zp + (zs + 1.0 / self.y) / (a * a)),
        }
    }

    fn terminal(&self, v: Complex64) -> Complex64 {
        match self.starter {
            None => v,
            Some((zp, zs, a)) => {
                let i_in = self.equivalent() * v;
                (v - zp * i_in) * a - zs * i_in / a
            }
        }
    }
}

/// Solves bus voltages for the given state.
pub fn network_solve_quasi_static(
    net: &Network,
    state: &SimState,
    tol: f64,
    max_iter: usize,
) -> Result<NetworkSolution> {
    let tree = net.tree()?;
    let n = net.buses.len();
    let slack_v = Complex64::new(net.slack_voltage, 0.0);
    let step = state.step;

    let mut statics = Vec::new();
    for l in &net.static_loads {
        if state.loads_on.contains(&l.bus) {
            let p = *l.p0.get(step).ok_or_else(|| Error::param("step", "outside load profile"))?;
            let q = *l.q0.get(step).ok_or_else(|| Error::param("step", "outside load profile"))?;
            statics.push((tree.index[&l.bus], p, q, l.kp, l.kq));
        }
    }
    let mut motors = Vec::new();
    for ms in state.motors.iter().filter(|m| m.connected) {
        let motor = net
            .motor_at(ms.bus)
            .ok_or_else(|| Error::Model(format!("no motor at bus {}", ms.bus)))?;
        let s = ms.slip.clamp(1e-9, 1.0);
        let y = net.motor_scale(motor) / input_impedance(&motor.params, s);
        let starter = match ms.starter_tap {
            Some(tap) => {
                let a = net
                    .autotransformer_at(ms.bus)
                    .ok_or_else(|| Error::Model(format!("no starter at bus {}", ms.bus)))?;
                Some((
                    Complex64::new(a.zp.r, a.zp.x),
                    Complex64::new(a.zs.r, a.zs.x),
                    1.0 + a.sigma * tap as f64,
                ))
            }
            None => None,
        };
        motors.push((ms.bus, MotorBranch { bus: tree.index[&ms.bus], y, starter }));
    }
    let dgs: Vec<_> = net
        .dgs
        .iter()
        .map(|d| {
            let mode = state.dg_modes.get(&d.bus).copied().unwrap_or(DgMode::Normal);
            (d.bus, tree.index[&d.bus], d.p_set, d.q_set, mode)
        })
        .collect();

    let draw = |v: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut inj = vec![Complex64::new(0.0, 0.0); n];
        for &(i, p, q, kp, kq) in &statics {
            let vm = v[i].norm();
            if vm < 1e-9 {
                return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
            }
            let s = Complex64::new(p * vm.powf(kp), q * vm.powf(kq));
            inj[i] += (s / v[i]).conj();
        }
        for (_, m) in &motors {
            inj[m.bus] += m.equivalent() * v[m.bus];
        }
        for &(_, i, p, q, mode) in &dgs {
            inj[i] -= dg_current(v[i], p, q, mode)?;
        }
        Ok(inj)
    };

    let mut v = if state.v.len() == n {
        state.v.clone()
    } else {
        vec![slack_v; n]
    };
    v[tree.slack] = slack_v;
    let mut j = vec![Complex64::new(0.0, 0.0); net.lines.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let inj = draw(&v)?;
        for &b in tree.order.iter().rev() {
            if let Some(li) = tree.parent_line[b] {
                let mut c = inj[b];
                for &ch in &tree.child_lines[b] {
                    c += j[ch];
                }
                j[li] = c;
            }
        }
        let mut next = v.clone();
        for &b in &tree.order {
            if let Some(li) = tree.parent_line[b] {
                let line = &net.lines[li];
                let from = tree.index[&line.from];
                next[b] = next[from] - Complex64::new(line.r, line.x) * j[li];
            }
        }
        residual = next.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        v = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            break;
        }
    }
    if !(residual <= tol) {
        return Err(Error::NoConvergence { iterations, residual });
    }

    // currents consistent with the final voltages
    let inj = draw(&v)?;
    for &b in tree.order.iter().rev() {
        if let Some(li) = tree.parent_line[b] {
            let mut c = inj[b];
            for &ch in &tree.child_lines[b] {
                c += j[ch];
            }
            j[li] = c;
        }
    }
    let mut slack_current = inj[tree.slack];
    for &ch in &tree.child_lines[tree.slack] {
        slack_current += j[ch];
    }
    let slack_power = v[tree.slack] * slack_current.conj();
    let mut load_power = Complex64::new(0.0, 0.0);
    for &(i, p, q, kp, kq) in &statics {
        let vm = v[i].norm();
        load_power += Complex64::new(p * vm.powf(kp), q * vm.powf(kq));
    }
    let mut motor_out = BTreeMap::new();
    for (bus, m) in &motors {
        let vb = v[m.bus];
        let i_bus = m.equivalent() * vb;
        load_power += vb * i_bus.conj();
        let vt = m.terminal(vb);
        let scale = net.motor_scale(net.motor_at(*bus).unwrap());
        motor_out.insert(
            *bus,
            MotorElectrical {
                bus_current: i_bus,
                terminal_v: vt,
                stator_current: m.y * vt / scale,
            },
        );
    }
    let mut dg_power = Complex64::new(0.0, 0.0);
    let mut dg_out = BTreeMap::new();
    for &(bus, i, p, q, mode) in &dgs {
        let c = dg_current(v[i], p, q, mode)?;
        dg_power += v[i] * c.conj();
        *dg_out.entry(bus).or_insert(Complex64::new(0.0, 0.0)) += c;
    }
    let mut losses = Complex64::new(0.0, 0.0);
    for (li, line) in net.lines.iter().enumerate() {
        losses += Complex64::new(line.r, line.x) * j[li].norm_sqr();
    }
    Ok(NetworkSolution {
        v,
        line_current: j,
        iterations,
        slack_power,
        load_power,
        dg_power,
        losses,
        motors: motor_out,
        dg_current: dg_out,
    })
}

fn dg_current(v: Complex64, p: f64, q: f64, mode: DgMode) -> Result<Complex64> {
    let vm = v.norm();
    match mode {
        DgMode::Normal => {
            if p == 0.0 && q == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            if vm < 1e-9 {
                return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
            }
            Ok((Complex64::new(p, q) / v).conj())
        }
        DgMode::Saturated { ip, iq } => {
            if vm < 1e-12 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            Ok(Complex64::new(ip, -iq) * (v / vm))
        }
    }
}
