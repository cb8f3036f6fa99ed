//! Decoding an incumbent into a restoration plan.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Incumbent;
use crate::error::{Error, Result};
use crate::mip::{check_exactness, MipModel, Node, Symbol};
use crate::netmodel::BusId;

/// Starting conditions and optimizer predictions for one motor start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorStart {
    pub motor: BusId,
    /// Horizon step at which the motor is energized.
    pub t: usize,
    pub time: String,
    /// Autotransformer tap, `None` for direct-on-line starts.
    #[serde(default)]
    pub tap: Option<i32>,
    /// Tap bits, most significant first.
    #[serde(default)]
    pub tap_bits: Option<String>,
    /// Slip at each step `k = 1..=k_max`.
    #[serde(default)]
    pub slips: Vec<f64>,
    #[serde(default)]
    pub slip_step: f64,
    /// Starter in circuit at each step.
    #[serde(default)]
    pub starter_active: Vec<bool>,
    /// Predicted squared voltage at the motor's network bus per step.
    #[serde(default)]
    pub u_bus: Vec<f64>,
    /// Predicted squared voltage at the motor terminals per step.
    #[serde(default)]
    pub u_terminal: Vec<f64>,
    /// Predicted squared voltage at each protected bus per step.
    #[serde(default)]
    pub u_protected: BTreeMap<BusId, Vec<f64>>,
    /// Predicted step durations, seconds.
    #[serde(default)]
    pub step_time_s: Vec<f64>,
    /// Predicted cumulative time at the last step, seconds.
    #[serde(default)]
    pub accel_time_s: f64,
}

/// Saturation current references of an FRT-capable DG during one start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgReference {
    pub bus: BusId,
    pub motor: BusId,
    pub fp_pu2: f64,
    pub fq_pu2: f64,
    pub ip_pu: f64,
    pub iq_pu: f64,
    pub ip_a: f64,
    pub iq_a: f64,
    pub f_max_pu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// Priority-weighted unserved energy, p.u.·h.
    pub reliability: f64,
    /// Line losses summed over all start blocks, p.u.
    pub operational: f64,
    pub w_re: f64,
    pub w_op: f64,
    pub total: f64,
}

/// A load whose energization differs from the stage-one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadShift {
    pub bus: BusId,
    /// First energized step under `L⁰`.
    pub planned: Option<usize>,
    /// First energized step under the plan.
    pub restored: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationPlan {
    pub horizon: Vec<String>,
    pub step_hours: f64,
    #[serde(default)]
    pub l0: BTreeMap<BusId, Vec<u8>>,
    pub l: BTreeMap<BusId, Vec<u8>>,
    #[serde(default)]
    pub shifts: Vec<LoadShift>,
    #[serde(default)]
    pub starts: Vec<MotorStart>,
    #[serde(default)]
    pub dg_references: Vec<DgReference>,
    #[serde(default)]
    pub objective: ObjectiveBreakdown,
    #[serde(default)]
    pub exactness: String,
}

impl RestorationPlan {
    pub fn start_of(&self, motor: BusId) -> Option<&MotorStart> {
        self.starts.iter().find(|s| s.motor == motor)
    }

    /// `L_{i,t}`; buses outside the off-outage area are always energized.
    pub fn energized(&self, bus: BusId, t: usize) -> bool {
        self.l.get(&bus).is_none_or(|row| row[t] == 1)
    }

    pub fn dg_reference(&self, bus: BusId, motor: BusId) -> Option<&DgReference> {
        self.dg_references.iter().find(|d| d.bus == bus && d.motor == motor)
    }
}

/// Tap position `lo + Σ 2^j b_j` from a most-significant-first bit string.
pub fn decode_tap_bits(lo: i32, bits_msb_first: &str) -> Result<i32> {
    let mut v: i64 = 0;
    for c in bits_msb_first.chars() {
        v = match c {
            '0' => 2 * v,
            '1' => 2 * v + 1,
            _ => return Err(Error::Decode(format!("bad tap bit {c:?}"))),
        };
    }
    i32::try_from(lo as i64 + v).map_err(|_| Error::Decode("tap out of range".into()))
}

fn first_on(row: &[u8]) -> Option<usize> {
    row.iter().position(|&v| v == 1)
}

/// Reads the plan out of an integer-feasible incumbent and checks that the
/// decoded objective reproduces the incumbent's value.
pub fn extract_plan(model: &MipModel, inc: &Incumbent) -> Result<RestorationPlan> {
    let p = &model.program;
    if inc.x.len() != p.vars.len() {
        return Err(Error::Decode(format!(
            "solution has {} entries, model has {} variables",
            inc.x.len(),
            p.vars.len()
        )));
    }
    let mut x = inc.x.clone();
    for b in p.binaries() {
        x[b.0] = x[b.0].round();
    }
    let val = |s: &Symbol| -> Result<f64> {
        model
            .map
            .value(&x, s)
            .ok_or_else(|| Error::Decode(format!("missing variable {s}")))
    };
    let steps = model.horizon.steps;

    let mut l = BTreeMap::new();
    for &bus in model.l0.keys() {
        let row: Vec<u8> = (0..steps)
            .map(|t| val(&Symbol::L { bus, t }).map(|v| v as u8))
            .collect::<Result<_>>()?;
        l.insert(bus, row);
    }
    let shifts = model
        .l0
        .iter()
        .filter(|(b, row)| l[*b] != **row)
        .map(|(b, row)| LoadShift {
            bus: *b,
            planned: first_on(row),
            restored: first_on(&l[b]),
        })
        .collect();

    let i_base = model.net.bases.current_a();
    let mut starts = Vec::new();
    let mut dg_references = Vec::new();
    for block in &model.blocks {
        let m = block.motor;
        let Some(t) = first_on(&l[&m]) else { continue };
        let kmax = block.k_max();
        let (tap, tap_bits) = match &block.starter {
            Some(a) => {
                let (lo, _) = a.tap_range();
                let mut bits = Vec::new();
                let mut j = 0;
                while let Some(v) = model.map.value(&x, &Symbol::TapBit { motor: m, bit: j }) {
                    bits.push(if v > 0.5 { '1' } else { '0' });
                    j += 1;
                }
                let msb: String = bits.iter().rev().collect();
                let tap = decode_tap_bits(lo, &msb)?;
                let dr = val(&Symbol::Tap { motor: m })?;
                if (dr - tap as f64).abs() > 1e-6 {
                    return Err(Error::Decode(format!("tap variable {dr} disagrees with bits {msb}")));
                }
                (Some(tap), Some(msb))
            }
            None => (None, None),
        };
        let mut u_bus = Vec::with_capacity(kmax);
        let mut u_terminal = Vec::with_capacity(kmax);
        let mut step_time_s = Vec::with_capacity(kmax);
        let mut u_protected: BTreeMap<BusId, Vec<f64>> = BTreeMap::new();
        for k in 1..=kmax {
            u_bus.push(val(&Symbol::U { node: Node::Bus(m), k, motor: m })?);
            u_terminal.push(val(&Symbol::U { node: block.terminal(k), k, motor: m })?);
            if block.dt_breakpoints.is_some() {
                step_time_s.push(val(&Symbol::Dt { k, motor: m })?);
            }
            for np in &model.net.node_protection {
                u_protected
                    .entry(np.bus)
                    .or_default()
                    .push(val(&Symbol::U { node: Node::Bus(np.bus), k, motor: m })?);
            }
        }
        let accel_time_s = if block.dt_breakpoints.is_some() {
            val(&Symbol::TCum { k: kmax, motor: m })?
        } else {
            f64::NAN
        };
        starts.push(MotorStart {
            motor: m,
            t,
            time: model.horizon.label(t),
            tap,
            tap_bits,
            slips: block.model.grid.slips.clone(),
            slip_step: block.model.grid.ds,
            starter_active: block.starter_active.clone(),
            u_bus,
            u_terminal,
            u_protected,
            step_time_s,
            accel_time_s,
        });
        for d in model.net.dgs.iter().filter(|d| d.frt) {
            let fp = val(&Symbol::FpDg { bus: d.bus, motor: m })?.max(0.0);
            let fq = val(&Symbol::FqDg { bus: d.bus, motor: m })?.max(0.0);
            dg_references.push(DgReference {
                bus: d.bus,
                motor: m,
                fp_pu2: fp,
                fq_pu2: fq,
                ip_pu: fp.sqrt(),
                iq_pu: fq.sqrt(),
                ip_a: fp.sqrt() * i_base,
                iq_a: fq.sqrt() * i_base,
                f_max_pu: d.f_max,
            });
        }
    }
    starts.sort_by_key(|s| (s.t, s.motor));

    let reliability = model.reliability.eval(&x);
    let operational = model.operational.eval(&x);
    let total = model.w_re * reliability + model.w_op * operational;
    let tol = 1e-6 * inc.objective.abs().max(1.0);
    if (total - inc.objective).abs() > tol {
        return Err(Error::Decode(format!(
            "decoded objective {total} differs from incumbent {}",
            inc.objective
        )));
    }
    let exactness = check_exactness(model, &inc.x);
    let verdict = if exactness.exact {
        exactness.verdict
    } else {
        format!("exactness unverified: {}", exactness.verdict)
    };

    Ok(RestorationPlan {
        horizon: (0..steps).map(|t| model.horizon.label(t)).collect(),
        step_hours: model.horizon.step_hours(),
        l0: model.l0.clone(),
        l,
        shifts,
        starts,
        dg_references,
        objective: ObjectiveBreakdown {
            reliability,
            operational,
            w_re: model.w_re,
            w_op: model.w_op,
            total,
        },
        exactness: verdict,
    })
}
