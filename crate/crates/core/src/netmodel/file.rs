//! JSON document layout of a network file.

use serde::{Deserialize, Serialize};

use super::{
    AutotransformerParams, Bases, Bus, BusId, DgParams, Impedance, Line, LineProtection, MechLoad,
    Motor, MotorParams, Network, NodeProtection, ProtectionCurve, ProtectionKind, StaticLoad,
};
use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

fn default_bypass() -> f64 {
    0.8
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub base: BaseFile,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub slack_voltage_pu: f64,
    pub buses: Vec<BusFile>,
    pub lines: Vec<LineFile>,
    #[serde(default)]
    pub static_loads: Vec<StaticLoadFile>,
    #[serde(default)]
    pub motors: Vec<MotorFile>,
    #[serde(default)]
    pub dgs: Vec<DgFile>,
    #[serde(default)]
    pub autotransformers: Vec<AutotransformerFile>,
    #[serde(default)]
    pub protection: ProtectionFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseFile {
    pub power_va: f64,
    pub voltage_v: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFile {
    pub id: BusId,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub slack: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub protected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineFile {
    pub from: BusId,
    pub to: BusId,
    pub r_pu: f64,
    pub x_pu: f64,
    pub ampacity_pu: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub protected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticLoadFile {
    pub bus: BusId,
    pub p0_profile: Vec<f64>,
    pub q0_profile: Vec<f64>,
    pub kp: f64,
    pub kq: f64,
    pub priority: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpedanceUnit {
    Ohm,
    Pu,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorFile {
    pub bus: BusId,
    pub rs: f64,
    pub xls: f64,
    pub rr: f64,
    pub xlr: f64,
    pub xm: f64,
    pub unit: ImpedanceUnit,
    pub h_s: f64,
    pub kd_pu: f64,
    pub rated_va: f64,
    pub mech: MechLoad,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub priority: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgFile {
    pub bus: BusId,
    pub f_max_pu: f64,
    pub frt: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p_set_pu: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub q_set_pu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutotransformerFile {
    pub bus: BusId,
    pub sigma: f64,
    pub taps: u32,
    pub zp: Impedance,
    pub zs: Impedance,
    #[serde(default = "default_bypass")]
    pub bypass_speed: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectionFile {
    #[serde(default)]
    pub nodes: Vec<NodeCurveFile>,
    #[serde(default)]
    pub lines: Vec<LineCurveFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeCurveFile {
    pub bus: BusId,
    /// `[seconds, p.u. voltage]` pairs.
    pub curve: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineCurveFile {
    pub from: BusId,
    pub to: BusId,
    /// `[seconds, p.u. current]` pairs.
    pub curve: Vec<[f64; 2]>,
}

fn curve_points(curve: &[[f64; 2]]) -> Vec<(f64, f64)> {
    curve.iter().map(|p| (p[0], p[1])).collect()
}

fn curve_magnitudes(curve: &ProtectionCurve) -> Vec<[f64; 2]> {
    curve.points.iter().map(|&(t, y)| [t, y.sqrt()]).collect()
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Network> {
        if !(self.base.power_va > 0.0) || !(self.base.voltage_v > 0.0) {
            return Err(Error::schema("base", "power_va and voltage_v must be positive"));
        }
        let bases = Bases {
            power_va: self.base.power_va,
            voltage_v: self.base.voltage_v,
        };
        let buses: Vec<Bus> = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                slack: b.slack,
                protected: b.protected,
            })
            .collect();
        let mut ids = std::collections::BTreeSet::new();
        for b in &buses {
            if !ids.insert(b.id) {
                return Err(Error::schema(format!("buses[id={}]", b.id), "duplicate bus id"));
            }
        }
        let known = |kind: &'static str, bus: BusId| -> Result<()> {
            if ids.contains(&bus) {
                Ok(())
            } else {
                Err(Error::DanglingBus { kind, bus })
            }
        };

        let mut lines = Vec::with_capacity(self.lines.len());
        for l in &self.lines {
            known("line", l.from)?;
            known("line", l.to)?;
            lines.push(Line {
                from: l.from,
                to: l.to,
                r: l.r_pu,
                x: l.x_pu,
                ampacity: l.ampacity_pu,
                protected: l.protected,
            });
        }

        let mut static_loads = Vec::new();
        for l in self.static_loads {
            known("static load", l.bus)?;
            static_loads.push(StaticLoad {
                bus: l.bus,
                p0: l.p0_profile,
                q0: l.q0_profile,
                kp: l.kp,
                kq: l.kq,
                priority: l.priority,
            });
        }

        let mut motors = Vec::new();
        for m in &self.motors {
            known("motor", m.bus)?;
            let raw = MotorParams {
                rs: m.rs,
                xls: m.xls,
                rr: m.rr,
                xlr: m.xlr,
                xm: m.xm,
                h: m.h_s,
                kd: m.kd_pu,
                rated_va: m.rated_va,
                mech: m.mech,
            };
            let params = match m.unit {
                ImpedanceUnit::Pu => raw,
                ImpedanceUnit::Ohm => raw
                    .to_per_unit(bases.voltage_v, m.rated_va)
                    .map_err(|e| Error::schema(format!("motors[bus={}]", m.bus), e.to_string()))?,
            };
            motors.push(Motor {
                bus: m.bus,
                params,
                priority: m.priority,
            });
        }

        let mut dgs = Vec::new();
        for d in &self.dgs {
            known("dg", d.bus)?;
            dgs.push(DgParams {
                bus: d.bus,
                f_max: d.f_max_pu,
                frt: d.frt,
                p_set: d.p_set_pu,
                q_set: d.q_set_pu,
            });
        }

        let mut autotransformers = Vec::new();
        for a in &self.autotransformers {
            known("autotransformer", a.bus)?;
            if !motors.iter().any(|m| m.bus == a.bus) {
                return Err(Error::schema(
                    format!("autotransformers[bus={}]", a.bus),
                    "autotransformer must sit at a motor bus",
                ));
            }
            autotransformers.push(AutotransformerParams {
                bus: a.bus,
                sigma: a.sigma,
                taps: a.taps,
                zp: a.zp,
                zs: a.zs,
                bypass_speed: a.bypass_speed,
            });
        }

        let mut node_protection = Vec::new();
        for p in &self.protection.nodes {
            known("protected node", p.bus)?;
            node_protection.push(NodeProtection {
                bus: p.bus,
                curve: ProtectionCurve::from_magnitudes(
                    ProtectionKind::UnderVoltage,
                    &curve_points(&p.curve),
                ),
            });
        }
        let mut line_protection = Vec::new();
        for p in &self.protection.lines {
            known("protected line", p.from)?;
            known("protected line", p.to)?;
            if !lines.iter().any(|l| {
                (l.from == p.from && l.to == p.to) || (l.from == p.to && l.to == p.from)
            }) {
                return Err(Error::schema(
                    format!("protection.lines[{}-{}]", p.from, p.to),
                    "no such line",
                ));
            }
            line_protection.push(LineProtection {
                from: p.from,
                to: p.to,
                curve: ProtectionCurve::from_magnitudes(
                    ProtectionKind::OverCurrent,
                    &curve_points(&p.curve),
                ),
            });
        }

        let mut net = Network {
            bases,
            buses,
            lines,
            static_loads,
            motors,
            dgs,
            autotransformers,
            node_protection,
            line_protection,
            slack_voltage: self.slack_voltage_pu,
        };
        super::tree::orient(&mut net)?;
        // protected-line references follow the line orientation
        for p in &mut net.line_protection {
            if let Some(l) = net.lines.iter().find(|l| l.from == p.to && l.to == p.from) {
                p.from = l.from;
                p.to = l.to;
            }
        }
        Ok(net)
    }

    pub fn from_network(net: &Network) -> NetworkFile {
        NetworkFile {
            description: None,
            base: BaseFile {
                power_va: net.bases.power_va,
                voltage_v: net.bases.voltage_v,
            },
            slack_voltage_pu: net.slack_voltage,
            buses: net
                .buses
                .iter()
                .map(|b| BusFile {
                    id: b.id,
                    slack: b.slack,
                    protected: b.protected,
                })
                .collect(),
            lines: net
                .lines
                .iter()
                .map(|l| LineFile {
                    from: l.from,
                    to: l.to,
                    r_pu: l.r,
                    x_pu: l.x,
                    ampacity_pu: l.ampacity,
                    protected: l.protected,
                })
                .collect(),
            static_loads: net
                .static_loads
                .iter()
                .map(|l| StaticLoadFile {
                    bus: l.bus,
                    p0_profile: l.p0.clone(),
                    q0_profile: l.q0.clone(),
                    kp: l.kp,
                    kq: l.kq,
                    priority: l.priority,
                })
                .collect(),
            motors: net
                .motors
                .iter()
                .map(|m| MotorFile {
                    bus: m.bus,
                    rs: m.params.rs,
                    xls: m.params.xls,
                    rr: m.params.rr,
                    xlr: m.params.xlr,
                    xm: m.params.xm,
                    unit: ImpedanceUnit::Pu,
                    h_s: m.params.h,
                    kd_pu: m.params.kd,
                    rated_va: m.params.rated_va,
                    mech: m.params.mech,
                    priority: m.priority,
                })
                .collect(),
            dgs: net
                .dgs
                .iter()
                .map(|d| DgFile {
                    bus: d.bus,
                    f_max_pu: d.f_max,
                    frt: d.frt,
                    p_set_pu: d.p_set,
                    q_set_pu: d.q_set,
                })
                .collect(),
            autotransformers: net
                .autotransformers
                .iter()
                .map(|a| AutotransformerFile {
                    bus: a.bus,
                    sigma: a.sigma,
                    taps: a.taps,
                    zp: a.zp,
                    zs: a.zs,
                    bypass_speed: a.bypass_speed,
                })
                .collect(),
            protection: ProtectionFile {
                nodes: net
                    .node_protection
                    .iter()
                    .map(|p| NodeCurveFile {
                        bus: p.bus,
                        curve: curve_magnitudes(&p.curve),
                    })
                    .collect(),
                lines: net
                    .line_protection
                    .iter()
                    .map(|p| LineCurveFile {
                        from: p.from,
                        to: p.to,
                        curve: curve_magnitudes(&p.curve),
                    })
                    .collect(),
            },
        }
    }
}
