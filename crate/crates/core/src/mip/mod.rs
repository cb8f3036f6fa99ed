//! Mixed-integer second-order-cone restoration model.
//!
//! The model holds one block per starting motor `m` and slip step `k`: a
//! full branch-flow snapshot of the network in which loads are energized
//! according to the plan at `m`'s start instant, the starting motor is an
//! admittance, saturated DGs inject bounded current and protection limits
//! follow the predicted elapsed time.

mod build;
mod exactness;
mod varmap;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::motor::{input_admittance, running_slip, SlipStepModel};
use crate::netmodel::{AutotransformerParams, BusId, Horizon, Network, ScenarioInput};
use crate::program::{ConicProgram, LinExpr, ProgramStats};
use crate::pwl::Breakpoints;

pub use build::build_model;
pub use exactness::{check_exactness, ExactnessReport, LineResidual, DgResidual};
pub use varmap::{Branch, Node, Symbol, VariableMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Upper voltage magnitude limit, p.u.
    pub v_max: f64,
    /// Minimum accelerating torque, p.u.
    pub stall_margin: f64,
    /// Breakpoints of the reciprocal step-time curve.
    pub pwl_points: usize,
    /// Keep the `(r² + x²)·F` term of the voltage-drop equation.
    pub keep_loss_term: bool,
    /// Optional bound on substation active/reactive injection magnitude.
    pub substation_limit: Option<f64>,
    /// Warn when `|σ·Δr|` may exceed this value.
    pub tap_guard: f64,
    /// Relative residual below which a cone counts as tight.
    pub exactness_tol: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            v_max: 1.05,
            stall_margin: crate::motor::DEFAULT_STALL_MARGIN,
            pwl_points: 20,
            keep_loss_term: true,
            substation_limit: None,
            tap_guard: 0.3,
            exactness_tol: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn v_max_sq(&self) -> f64 {
        self.v_max * self.v_max
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(self.v_max > 0.0) {
            return Err(Error::param("v_max", "must be positive"));
        }
        if !(self.stall_margin > 0.0) {
            return Err(Error::param("stall_margin", "must be positive"));
        }
        if self.pwl_points < 2 {
            return Err(Error::param("pwl_points", "need at least two breakpoints"));
        }
        if !(self.exactness_tol > 0.0) {
            return Err(Error::param("exactness_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Data of one motor-start block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartBlock {
    pub motor: BusId,
    pub model: SlipStepModel,
    /// Motor base to network base power ratio.
    pub scale: f64,
    pub starter: Option<AutotransformerParams>,
    /// Starter in circuit at each step.
    pub starter_active: Vec<bool>,
    pub t_acc_max: f64,
    pub dt_breakpoints: Option<Breakpoints>,
}

impl StartBlock {
    pub fn k_max(&self) -> usize {
        self.model.k_max()
    }

    /// Node whose voltage drives the motor at step `k` (1-based).
    pub fn terminal(&self, k: usize) -> Node {
        if self.starter_active[k - 1] {
            Node::Terminal(self.motor)
        } else {
            Node::Bus(self.motor)
        }
    }
}

/// Proof that a motor cannot accelerate even at the upper voltage limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StallCertificate {
    pub motor: BusId,
    /// 1-based slip step.
    pub step: usize,
    pub slip: f64,
    pub torque_at_v_max: f64,
    pub load_torque: f64,
    pub margin: f64,
}

impl fmt::Display for StallCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "motor at bus {} stalls at slip step {} (s = {:.3}): electrical torque {:.4} at v_max does not exceed load {:.4} + margin {}",
            self.motor, self.step, self.slip, self.torque_at_v_max, self.load_torque, self.margin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStats {
    #[serde(flatten)]
    pub program: ProgramStats,
    /// Simple bounds that carry model meaning, keyed like constraint
    /// families.
    pub bounds: BTreeMap<String, usize>,
    pub blocks: usize,
    pub steps_per_block: Vec<usize>,
}

impl fmt::Display for ModelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.program)?;
        writeln!(f, "bounds:")?;
        for (k, n) in &self.bounds {
            writeln!(f, "  {k:<12} {n:>8}")?;
        }
        writeln!(f, "start blocks: {} (steps {:?})", self.blocks, self.steps_per_block)
    }
}

#[derive(Debug, Clone)]
pub struct MipModel {
    pub program: ConicProgram,
    pub map: VariableMap,
    pub config: ModelConfig,
    /// Network with the scenario's open lines removed.
    pub net: Network,
    pub horizon: Horizon,
    pub l0: BTreeMap<BusId, Vec<u8>>,
    pub blocks: Vec<StartBlock>,
    /// Unweighted reliability term (energy-weighted unserved priority load).
    pub reliability: LinExpr,
    /// Unweighted operational term (line losses summed over blocks).
    pub operational: LinExpr,
    pub w_re: f64,
    pub w_op: f64,
    /// Steady running P/Q of every motor, network base.
    pub running: BTreeMap<BusId, (f64, f64)>,
    pub stall: Option<StallCertificate>,
    pub warnings: Vec<String>,
    pub stats: ModelStats,
}

impl MipModel {
    pub fn off_outage(&self) -> Vec<BusId> {
        self.l0.keys().copied().collect()
    }

    pub fn block(&self, motor: BusId) -> Option<&StartBlock> {
        self.blocks.iter().find(|b| b.motor == motor)
    }
}

/// Running active/reactive demand of a motor at rated slip and nominal
/// voltage, in network p.u.
pub fn running_power(net: &Network, motor: &crate::netmodel::Motor) -> Result<(f64, f64)> {
    let s = running_slip(&motor.params)?;
    let (g, b) = input_admittance(&motor.params, s)?;
    let scale = net.motor_scale(motor);
    Ok((g * scale, b * scale))
}

/// Slip-step models of every motor inside the off-outage area.
pub fn slip_models(net: &Network, sc: &ScenarioInput) -> Result<BTreeMap<BusId, SlipStepModel>> {
    let mut out = BTreeMap::new();
    for m in &net.motors {
        if sc.is_off_outage(m.bus) {
            out.insert(m.bus, SlipStepModel::for_motor(&m.params, sc.slip_step, sc.k_max)?);
        }
    }
    Ok(out)
}
