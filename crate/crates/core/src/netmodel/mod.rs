//! Network data model: buses, oriented radial lines, loads, motors, DGs,
//! autotransformers and protection curves.
//!
//! Every electrical quantity held here is per-unit on the network base,
//! except motor equivalent-circuit parameters which are per-unit on the
//! motor's own rating (`rated_va`, network voltage base). Protection limits
//! are stored squared so they compare directly against the squared voltage
//! and current variables of the branch-flow model.

mod file;
mod scenario;
mod tree;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::NetworkFile;
pub use scenario::{Horizon, ScenarioDefaults, ScenarioFile, ScenarioInput};
pub use tree::Tree;
pub use validate::{validate_network, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bases {
    pub power_va: f64,
    pub voltage_v: f64,
}

impl Bases {
    pub fn impedance_ohm(&self) -> f64 {
        self.voltage_v * self.voltage_v / self.power_va
    }

    /// Current base in amperes, single-phase-equivalent convention `S / V`.
    pub fn current_a(&self) -> f64 {
        self.power_va / self.voltage_v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    pub id: BusId,
    pub slack: bool,
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Ampacity magnitude, p.u.
    pub ampacity: f64,
    pub protected: bool,
}

impl Line {
    /// Squared ampacity `F^th`.
    pub fn thermal_limit_sq(&self) -> f64 {
        self.ampacity * self.ampacity
    }

    pub fn impedance_sq(&self) -> f64 {
        self.r * self.r + self.x * self.x
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticLoad {
    pub bus: BusId,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    pub kp: f64,
    pub kq: f64,
    pub priority: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechLoadKind {
    Linear,
    Constant,
    Quadratic,
}

/// Shaft load torque law; `t_nom` is the torque at synchronous speed in
/// per-unit of the motor's rated torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechLoad {
    pub kind: MechLoadKind,
    #[serde(rename = "t_nom_pu")]
    pub t_nom: f64,
}

impl MechLoad {
    pub fn torque(&self, slip: f64) -> f64 {
        let speed = 1.0 - slip;
        match self.kind {
            MechLoadKind::Linear => self.t_nom * speed,
            MechLoadKind::Constant => self.t_nom,
            MechLoadKind::Quadratic => self.t_nom * speed * speed,
        }
    }
}

/// Induction machine equivalent circuit (stator `rs + j xls`, magnetizing
/// `xm`, rotor `rr/s + j xlr`) plus mechanical data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotorParams {
    pub rs: f64,
    pub xls: f64,
    pub rr: f64,
    pub xlr: f64,
    pub xm: f64,
    /// Inertia constant, seconds.
    pub h: f64,
    /// Friction and windage coefficient, p.u. torque.
    pub kd: f64,
    pub rated_va: f64,
    pub mech: MechLoad,
}

impl MotorParams {
    /// Converts impedances given in ohms to per-unit on `Z_base = v_base² / s_base`.
    pub fn to_per_unit(&self, v_base: f64, s_base: f64) -> Result<MotorParams> {
        if !(v_base > 0.0) || !(s_base > 0.0) {
            return Err(Error::param(
                "base",
                format!("voltage and power bases must be positive (got {v_base}, {s_base})"),
            ));
        }
        let z_base = v_base * v_base / s_base;
        Ok(MotorParams {
            rs: self.rs / z_base,
            xls: self.xls / z_base,
            rr: self.rr / z_base,
            xlr: self.xlr / z_base,
            xm: self.xm / z_base,
            ..*self
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Motor {
    pub bus: BusId,
    pub params: MotorParams,
    pub priority: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgParams {
    pub bus: BusId,
    /// Converter current limit, p.u.
    pub f_max: f64,
    pub frt: bool,
    pub p_set: f64,
    pub q_set: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

impl Impedance {
    pub fn magnitude_sq(&self) -> f64 {
        self.r * self.r + self.x * self.x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutotransformerParams {
    /// Bus hosting the motor this starter serves.
    pub bus: BusId,
    /// Ratio change per tap.
    pub sigma: f64,
    /// Tap count `n`; positions run over `-n/2 ..= n/2`.
    pub taps: u32,
    pub zp: Impedance,
    pub zs: Impedance,
    /// Speed fraction at which the starter is bypassed.
    pub bypass_speed: f64,
}

impl AutotransformerParams {
    pub fn tap_range(&self) -> (i32, i32) {
        let half = (self.taps / 2) as i32;
        (-half, half)
    }

    /// Exact squared-voltage ratio at tap `r`.
    pub fn exact_ratio_sq(&self, tap: i32) -> f64 {
        let a = 1.0 + self.sigma * tap as f64;
        a * a
    }

    /// Binomial (linearized) squared-voltage ratio used by the optimizer.
    pub fn linear_ratio_sq(&self, tap: i32) -> f64 {
        1.0 + 2.0 * self.sigma * tap as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectionKind {
    UnderVoltage,
    OverCurrent,
}

/// Time-dependent protection limit. `points` holds `(seconds, limit²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtectionCurve {
    pub kind: ProtectionKind,
    pub points: Vec<(f64, f64)>,
}

impl ProtectionCurve {
    /// Builds a curve from magnitudes (p.u. voltage or current).
    pub fn from_magnitudes(kind: ProtectionKind, points: &[(f64, f64)]) -> Self {
        ProtectionCurve {
            kind,
            points: points.iter().map(|&(t, v)| (t, v * v)).collect(),
        }
    }

    /// Squared limit at elapsed time `t`: linear between breakpoints, flat
    /// beyond either end.
    pub fn limit_sq(&self, t: f64) -> f64 {
        let pts = &self.points;
        match pts.len() {
            0 => f64::NAN,
            _ if t <= pts[0].0 => pts[0].1,
            _ if t >= pts[pts.len() - 1].0 => pts[pts.len() - 1].1,
            _ => {
                let i = pts.partition_point(|p| p.0 <= t) - 1;
                let (t0, y0) = pts[i];
                let (t1, y1) = pts[i + 1];
                y0 + (y1 - y0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn limit(&self, t: f64) -> f64 {
        self.limit_sq(t).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeProtection {
    pub bus: BusId,
    pub curve: ProtectionCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineProtection {
    pub from: BusId,
    pub to: BusId,
    pub curve: ProtectionCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    pub bases: Bases,
    pub buses: Vec<Bus>,
    /// Oriented away from the slack after ingestion.
    pub lines: Vec<Line>,
    pub static_loads: Vec<StaticLoad>,
    pub motors: Vec<Motor>,
    pub dgs: Vec<DgParams>,
    pub autotransformers: Vec<AutotransformerParams>,
    pub node_protection: Vec<NodeProtection>,
    pub line_protection: Vec<LineProtection>,
    pub slack_voltage: f64,
}

impl Network {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Network> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Network::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| {
            Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        file.into_network()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from_network(self))
            .expect("network serialization is infallible")
    }

    pub fn bus_index(&self) -> BTreeMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack(&self) -> Option<BusId> {
        self.buses.iter().find(|b| b.slack).map(|b| b.id)
    }

    pub fn tree(&self) -> Result<Tree> {
        Tree::build(self)
    }

    pub fn horizon_len(&self) -> Option<usize> {
        self.static_loads.first().map(|l| l.p0.len())
    }

    pub fn motor_at(&self, bus: BusId) -> Option<&Motor> {
        self.motors.iter().find(|m| m.bus == bus)
    }

    pub fn static_load_at(&self, bus: BusId) -> Option<&StaticLoad> {
        self.static_loads.iter().find(|l| l.bus == bus)
    }

    pub fn autotransformer_at(&self, bus: BusId) -> Option<&AutotransformerParams> {
        self.autotransformers.iter().find(|a| a.bus == bus)
    }

    pub fn line_between(&self, a: BusId, b: BusId) -> Option<usize> {
        self.lines
            .iter()
            .position(|l| (l.from == a && l.to == b) || (l.from == b && l.to == a))
    }

    /// Buses that host a static load or a motor, in bus order.
    pub fn load_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .map(|b| b.id)
            .filter(|&id| self.static_load_at(id).is_some() || self.motor_at(id).is_some())
            .collect()
    }

    /// Power scale from a motor's own base to the network base.
    pub fn motor_scale(&self, motor: &Motor) -> f64 {
        motor.params.rated_va / self.bases.power_va
    }

    /// Returns a copy with the given lines removed, re-oriented from the slack.
    pub fn with_open_lines(&self, open: &[(BusId, BusId)]) -> Result<Network> {
        let mut net = self.clone();
        for &(a, b) in open {
            let idx = net.line_between(a, b).ok_or_else(|| {
                Error::schema("open_lines", format!("no line between {a} and {b}"))
            })?;
            net.lines.remove(idx);
        }
        tree::orient(&mut net)?;
        Ok(net)
    }
}
