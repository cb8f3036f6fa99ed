//! Bidirectional map between model symbols and program variables.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::BusId;
use crate::program::{ConicProgram, VarId};

/// Electrical node of a start block. Starter nodes exist only while the
/// motor at `BusId` starts through its autotransformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Node {
    Bus(BusId),
    /// Primary-side winding node.
    StarterIn(BusId),
    /// Secondary-side winding node.
    StarterOut(BusId),
    /// Motor terminal behind the starter.
    Terminal(BusId),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Bus(b) => write!(f, "{b}"),
            Node::StarterIn(b) => write!(f, "{b}'"),
            Node::StarterOut(b) => write!(f, "{b}''"),
            Node::Terminal(b) => write!(f, "{b}m"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Branch {
    Line(BusId, BusId),
    /// Network bus to the primary winding node (`Z_p`).
    StarterPrimary(BusId),
    /// Secondary winding node to the motor terminal (`Z_s`).
    StarterSecondary(BusId),
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Line(a, b) => write!(f, "{a}-{b}"),
            Branch::StarterPrimary(b) => write!(f, "{b}-{b}'"),
            Branch::StarterSecondary(b) => write!(f, "{b}''-{b}m"),
        }
    }
}

/// Model symbol. `k` is the 1-based slip step, `motor` the bus of the motor
/// whose start the block describes, `t` the 0-based horizon step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Symbol {
    L { bus: BusId, t: usize },
    Start { motor: BusId, t: usize },
    /// `L_{i,t} · start_{m,t}`.
    OnAtStart { bus: BusId, motor: BusId, t: usize },
    P0 { bus: BusId, motor: BusId },
    Q0 { bus: BusId, motor: BusId },
    U { node: Node, k: usize, motor: BusId },
    F { branch: Branch, k: usize, motor: BusId },
    P { branch: Branch, k: usize, motor: BusId },
    Q { branch: Branch, k: usize, motor: BusId },
    PSub { k: usize, motor: BusId },
    QSub { k: usize, motor: BusId },
    PDg { bus: BusId, k: usize, motor: BusId },
    QDg { bus: BusId, k: usize, motor: BusId },
    FpDg { bus: BusId, motor: BusId },
    FqDg { bus: BusId, motor: BusId },
    PD { bus: BusId, k: usize, motor: BusId },
    QD { bus: BusId, k: usize, motor: BusId },
    /// On-indicator times squared voltage, for the voltage-dependent load
    /// term.
    OnVoltage { bus: BusId, motor: BusId, t: usize, k: usize },
    /// `L_{m,last} · U` at the starting motor's terminal.
    StartedVoltage { motor: BusId, k: usize },
    TapBit { motor: BusId, bit: usize },
    Tap { motor: BusId },
    TapVoltage { motor: BusId, bit: usize, k: usize },
    TEle { k: usize, motor: BusId },
    InvDt { k: usize, motor: BusId },
    Dt { k: usize, motor: BusId },
    TCum { k: usize, motor: BusId },
    UMin { bus: BusId, k: usize, motor: BusId },
    FMax { branch: Branch, k: usize, motor: BusId },
    Lambda { of: Box<Symbol>, i: usize },
}

impl Symbol {
    pub fn family(&self) -> &'static str {
        match self {
            Symbol::L { .. } => "L",
            Symbol::Start { .. } => "start",
            Symbol::OnAtStart { .. } => "y",
            Symbol::P0 { .. } => "P0",
            Symbol::Q0 { .. } => "Q0",
            Symbol::U { .. } => "U",
            Symbol::F { .. } => "F",
            Symbol::P { .. } => "p",
            Symbol::Q { .. } => "q",
            Symbol::PSub { .. } => "pSub",
            Symbol::QSub { .. } => "qSub",
            Symbol::PDg { .. } => "PDG",
            Symbol::QDg { .. } => "QDG",
            Symbol::FpDg { .. } => "FpDG",
            Symbol::FqDg { .. } => "FqDG",
            Symbol::PD { .. } => "PD",
            Symbol::QD { .. } => "QD",
            Symbol::OnVoltage { .. } => "yU",
            Symbol::StartedVoltage { .. } => "zU",
            Symbol::TapBit { .. } => "dr_bit",
            Symbol::Tap { .. } => "dr",
            Symbol::TapVoltage { .. } => "dr_bitU",
            Symbol::TEle { .. } => "Tele",
            Symbol::InvDt { .. } => "inv_dt",
            Symbol::Dt { .. } => "dt",
            Symbol::TCum { .. } => "t_cum",
            Symbol::UMin { .. } => "Umin",
            Symbol::FMax { .. } => "Fmax",
            Symbol::Lambda { .. } => "lambda",
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = self.family();
        match self {
            Symbol::L { bus, t } => write!(f, "{fam}[{bus},{t}]"),
            Symbol::Start { motor, t } => write!(f, "{fam}[{motor},{t}]"),
            Symbol::OnAtStart { bus, motor, t } => write!(f, "{fam}[{bus},m{motor},{t}]"),
            Symbol::P0 { bus, motor }
            | Symbol::Q0 { bus, motor }
            | Symbol::FpDg { bus, motor }
            | Symbol::FqDg { bus, motor } => write!(f, "{fam}[{bus},m{motor}]"),
            Symbol::U { node, k, motor } => write!(f, "{fam}[{node},k{k},m{motor}]"),
            Symbol::F { branch, k, motor }
            | Symbol::P { branch, k, motor }
            | Symbol::Q { branch, k, motor }
            | Symbol::FMax { branch, k, motor } => write!(f, "{fam}[{branch},k{k},m{motor}]"),
            Symbol::PSub { k, motor }
            | Symbol::QSub { k, motor }
            | Symbol::TEle { k, motor }
            | Symbol::InvDt { k, motor }
            | Symbol::Dt { k, motor }
            | Symbol::TCum { k, motor } => write!(f, "{fam}[k{k},m{motor}]"),
            Symbol::StartedVoltage { motor, k } => write!(f, "{fam}[k{k},m{motor}]"),
            Symbol::PDg { bus, k, motor }
            | Symbol::QDg { bus, k, motor }
            | Symbol::PD { bus, k, motor }
            | Symbol::QD { bus, k, motor }
            | Symbol::UMin { bus, k, motor } => write!(f, "{fam}[{bus},k{k},m{motor}]"),
            Symbol::OnVoltage { bus, motor, t, k } => write!(f, "{fam}[{bus},m{motor},{t},k{k}]"),
            Symbol::TapBit { motor, bit } => write!(f, "{fam}[m{motor},{bit}]"),
            Symbol::Tap { motor } => write!(f, "{fam}[m{motor}]"),
            Symbol::TapVoltage { motor, bit, k } => write!(f, "{fam}[m{motor},{bit},k{k}]"),
            Symbol::Lambda { of, i } => write!(f, "{fam}[{of},{i}]"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableMap {
    by_symbol: BTreeMap<Symbol, VarId>,
    symbols: Vec<Symbol>,
}

impl VariableMap {
    pub fn new() -> Self {
        VariableMap::default()
    }

    pub fn add(&mut self, p: &mut ConicProgram, sym: Symbol, lb: f64, ub: f64) -> Result<VarId> {
        let id = p.add_var(sym.to_string(), lb, ub);
        self.register(id, sym)?;
        Ok(id)
    }

    pub fn add_binary(&mut self, p: &mut ConicProgram, sym: Symbol) -> Result<VarId> {
        let id = p.add_binary(sym.to_string());
        self.register(id, sym)?;
        Ok(id)
    }

    /// Records the symbol of a variable created elsewhere; ids must be
    /// registered in creation order.
    pub fn register(&mut self, id: VarId, sym: Symbol) -> Result<()> {
        if id.0 != self.symbols.len() {
            return Err(Error::Model(format!(
                "variable {id} registered out of order (expected x{})",
                self.symbols.len()
            )));
        }
        if self.by_symbol.insert(sym.clone(), id).is_some() {
            return Err(Error::Model(format!("symbol {sym} declared twice")));
        }
        self.symbols.push(sym);
        Ok(())
    }

    pub fn get(&self, sym: &Symbol) -> Option<VarId> {
        self.by_symbol.get(sym).copied()
    }

    pub fn symbol(&self, id: VarId) -> &Symbol {
        &self.symbols[id.0]
    }

    pub fn value(&self, x: &[f64], sym: &Symbol) -> Option<f64> {
        self.get(sym).map(|v| x[v.0])
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, VarId)> {
        self.by_symbol.iter().map(|(s, &v)| (s, v))
    }
}
