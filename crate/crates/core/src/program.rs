//! Solver-neutral mixed-integer second-order-cone program.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

/// `Σ coef·x + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: VarId, c: f64) -> Self {
        self.add_term(v, c);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_expr(self, s);
        e
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    /// Merges repeated variables and drops zero coefficients; terms end up
    /// sorted by variable id.
    pub fn compact(&self) -> LinExpr {
        let mut m: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *m.entry(v).or_default() += c;
        }
        LinExpr {
            terms: m.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

/// `expr (= | ≤ | ≥) 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub family: String,
    pub expr: LinExpr,
    pub rel: Relation,
}

/// `‖lhs‖₂ ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeConstraint {
    pub family: String,
    pub lhs: Vec<LinExpr>,
    pub rhs: LinExpr,
}

/// Ordered weights of which at most two adjacent ones may be non-zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sos2Set {
    pub family: String,
    pub lambdas: Vec<VarId>,
    /// Variable interpolated by the weights and its breakpoints.
    pub reference: Option<(VarId, Vec<f64>)>,
    /// Interpolated variable and its breakpoint values.
    pub value: Option<(VarId, Vec<f64>)>,
    /// Polishing order: sets of lower stages are confined to a segment
    /// first, so later stages see references computed from them.
    pub stage: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConicProgram {
    pub vars: Vec<VarDef>,
    pub linear: Vec<LinearConstraint>,
    pub cones: Vec<ConeConstraint>,
    pub sos2: Vec<Sos2Set>,
    pub objective: LinExpr,
}

/// Largest violation of each constraint class at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Violations {
    pub bounds: f64,
    pub linear: f64,
    pub cones: f64,
    pub integrality: f64,
    pub sos2: f64,
}

impl Violations {
    pub fn max_continuous(&self) -> f64 {
        self.bounds.max(self.linear).max(self.cones)
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        ConicProgram::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            kind: VarKind::Continuous,
            lb,
            ub,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            kind: VarKind::Binary,
            lb: 0.0,
            ub: 1.0,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn var(&self, v: VarId) -> &VarDef {
        &self.vars[v.0]
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.vars[v.0].lb = value;
        self.vars[v.0].ub = value;
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    pub fn add_linear(&mut self, family: &str, expr: LinExpr, rel: Relation) {
        self.linear.push(LinearConstraint {
            family: family.to_string(),
            expr,
            rel,
        });
    }

    /// `lhs rel rhs`.
    pub fn add_relation(&mut self, family: &str, lhs: LinExpr, rel: Relation, rhs: LinExpr) {
        let mut e = lhs;
        e.add_expr(&rhs, -1.0);
        self.add_linear(family, e, rel);
    }

    pub fn add_cone(&mut self, family: &str, lhs: Vec<LinExpr>, rhs: LinExpr) {
        self.cones.push(ConeConstraint {
            family: family.to_string(),
            lhs,
            rhs,
        });
    }

    pub fn add_sos2(&mut self, set: Sos2Set) -> usize {
        self.sos2.push(set);
        self.sos2.len() - 1
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Checks that every constraint and the objective reference declared
    /// variables.
    pub fn check_references(&self) -> Result<()> {
        let n = self.vars.len();
        let bad = |e: &LinExpr| e.terms.iter().find(|(v, _)| v.0 >= n).map(|(v, _)| *v);
        let mut exprs: Vec<(&str, &LinExpr)> = vec![("objective", &self.objective)];
        for c in &self.linear {
            exprs.push((&c.family, &c.expr));
        }
        for c in &self.cones {
            exprs.push((&c.family, &c.rhs));
            for e in &c.lhs {
                exprs.push((&c.family, e));
            }
        }
        for (family, e) in exprs {
            if let Some(v) = bad(e) {
                return Err(Error::Model(format!("{family} references undeclared {v}")));
            }
        }
        for s in &self.sos2 {
            if let Some(v) = s.lambdas.iter().find(|v| v.0 >= n) {
                return Err(Error::Model(format!("{} references undeclared {v}", s.family)));
            }
        }
        Ok(())
    }

    pub fn violations(&self, x: &[f64]) -> Violations {
        let mut out = Violations::default();
        for (v, d) in self.vars.iter().enumerate() {
            out.bounds = out.bounds.max(d.lb - x[v]).max(x[v] - d.ub);
            if d.kind == VarKind::Binary {
                out.integrality = out.integrality.max((x[v] - x[v].round()).abs());
            }
        }
        for c in &self.linear {
            let r = c.expr.eval(x);
            let viol = match c.rel {
                Relation::Eq => r.abs(),
                Relation::Le => r,
                Relation::Ge => -r,
            };
            out.linear = out.linear.max(viol);
        }
        for c in &self.cones {
            let norm = c.lhs.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            out.cones = out.cones.max(norm - c.rhs.eval(x));
        }
        for s in &self.sos2 {
            out.sos2 = out.sos2.max(sos2_violation(s, x));
        }
        out
    }

    /// Counts per family: variables are keyed by the text before the first
    /// `[` of their names.
    pub fn stats(&self) -> ProgramStats {
        let mut s = ProgramStats::default();
        for v in &self.vars {
            let key = v.name.split('[').next().unwrap_or("").to_string();
            let e = s.variables.entry(key).or_default();
            match v.kind {
                VarKind::Binary => e.binary += 1,
                VarKind::Continuous => e.continuous += 1,
            }
        }
        for c in &self.linear {
            *s.linear.entry(c.family.clone()).or_default() += 1;
        }
        for c in &self.cones {
            *s.cones.entry(c.family.clone()).or_default() += 1;
        }
        for c in &self.sos2 {
            *s.sos2.entry(c.family.clone()).or_default() += 1;
        }
        s.total_binary = self.num_binaries();
        s.total_continuous = self.vars.len() - s.total_binary;
        s
    }
}

/// Total weight outside the best adjacent pair.
pub fn sos2_violation(s: &Sos2Set, x: &[f64]) -> f64 {
    let w: Vec<f64> = s.lambdas.iter().map(|v| x[v.0].abs()).collect();
    if w.len() <= 2 {
        return 0.0;
    }
    let total: f64 = w.iter().sum();
    let best = w.windows(2).map(|p| p[0] + p[1]).fold(0.0, f64::max);
    total - best
}

/// Distance between the interpolated variable and the piecewise-linear
/// function at the reference value, relative to the range of the breakpoint
/// values. `None` for sets without reference and value.
pub fn sos2_value_gap(s: &Sos2Set, x: &[f64]) -> Option<f64> {
    let ((xv, xs), (yv, ys)) = (s.reference.as_ref()?, s.value.as_ref()?);
    let t = x[xv.0].clamp(xs[0], xs[xs.len() - 1]);
    let i = xs.partition_point(|&b| b <= t).clamp(1, xs.len() - 1);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    let f = if x1 > x0 { y0 + (y1 - y0) * (t - x0) / (x1 - x0) } else { y1 };
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((x[yv.0] - f).abs() / (hi - lo).max(1e-12))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VarCount {
    pub continuous: usize,
    pub binary: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProgramStats {
    pub total_continuous: usize,
    pub total_binary: usize,
    pub variables: BTreeMap<String, VarCount>,
    pub linear: BTreeMap<String, usize>,
    pub cones: BTreeMap<String, usize>,
    pub sos2: BTreeMap<String, usize>,
}

impl fmt::Display for ProgramStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "variables: {} continuous, {} binary",
            self.total_continuous, self.total_binary
        )?;
        for (k, c) in &self.variables {
            writeln!(f, "  {k:<12} {:>8} continuous {:>6} binary", c.continuous, c.binary)?;
        }
        writeln!(f, "linear constraints: {}", self.linear.values().sum::<usize>())?;
        for (k, n) in &self.linear {
            writeln!(f, "  {k:<12} {n:>8}")?;
        }
        writeln!(f, "cone constraints: {}", self.cones.values().sum::<usize>())?;
        for (k, n) in &self.cones {
            writeln!(f, "  {k:<12} {n:>8}")?;
        }
        writeln!(f, "sos2 sets: {}", self.sos2.values().sum::<usize>())?;
        for (k, n) in &self.sos2 {
            writeln!(f, "  {k:<12} {n:>8}")?;
        }
        Ok(())
    }
}
