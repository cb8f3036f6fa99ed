//! Mixed-integer encodings: piecewise-linear functions with SOS2 weights,
//! binary times bounded-continuous products, and bounded integers as bits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::program::{ConicProgram, LinExpr, Relation, Sos2Set, VarId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakpoints {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Breakpoints {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Breakpoints> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::param("breakpoints", "need at least two (x, y) pairs"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("breakpoints", "x must be strictly increasing"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::param("breakpoints", "values must be finite"));
        }
        Ok(Breakpoints { x, y })
    }

    pub fn sample(x: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Breakpoints> {
        let y = x.iter().map(|&v| f(v)).collect();
        Breakpoints::new(x, y)
    }

    /// `n` points log-spaced over `[lo, hi]` sampling `f`.
    pub fn log_spaced(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Breakpoints> {
        if !(lo > 0.0 && hi > lo) || n < 2 {
            return Err(Error::param("breakpoints", "need 0 < lo < hi and n >= 2"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut x: Vec<f64> = (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect();
        x[0] = lo;
        x[n - 1] = hi;
        Breakpoints::sample(x, f)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Index `i` of the segment `[x_i, x_{i+1}]` containing `v`.
    pub fn segment(&self, v: f64) -> usize {
        let i = self.x.partition_point(|&p| p <= v);
        i.clamp(1, self.x.len() - 1) - 1
    }

    pub fn evaluate(&self, v: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(v >= lo && v <= hi) {
            return Err(Error::OutOfDomain { x: v, lo, hi });
        }
        let i = self.segment(v);
        let (x0, x1, y0, y1) = (self.x[i], self.x[i + 1], self.y[i], self.y[i + 1]);
        Ok(y0 + (y1 - y0) * (v - x0) / (x1 - x0))
    }
}

/// Result of [`encode_pwl`].
#[derive(Debug, Clone, PartialEq)]
pub struct PwlEncoding {
    pub value: VarId,
    pub lambdas: Vec<VarId>,
    pub sos2: usize,
}

/// Adds `x = Σλ x_i`, `f = Σλ y_i`, `Σλ = 1`, `λ ≥ 0`, SOS2(λ).
pub fn encode_pwl(
    p: &mut ConicProgram,
    family: &str,
    name: &str,
    x: VarId,
    bp: &Breakpoints,
) -> Result<PwlEncoding> {
    let def = p.var(x);
    let (lo, hi) = bp.domain();
    if !def.lb.is_finite() || !def.ub.is_finite() {
        return Err(Error::Model(format!("{} must be bounded to encode {name}", def.name)));
    }
    let tol = 1e-9 * (1.0 + hi.abs());
    if def.lb < lo - tol || def.ub > hi + tol {
        return Err(Error::OutOfDomain {
            x: if def.lb < lo - tol { def.lb } else { def.ub },
            lo,
            hi,
        });
    }
    let ymin = bp.y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = bp.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let value = p.add_var(name.to_string(), ymin, ymax);
    let lambdas: Vec<VarId> = (0..bp.len())
        .map(|i| p.add_var(format!("lambda[{name},{i}]"), 0.0, 1.0))
        .collect();
    let mut ex = LinExpr::var(x).scaled(-1.0);
    let mut ey = LinExpr::var(value).scaled(-1.0);
    let mut sum = LinExpr::constant(-1.0);
    for (i, &l) in lambdas.iter().enumerate() {
        ex.add_term(l, bp.x[i]);
        ey.add_term(l, bp.y[i]);
        sum.add_term(l, 1.0);
    }
    p.add_linear(family, ex, Relation::Eq);
    p.add_linear(family, ey, Relation::Eq);
    p.add_linear(family, sum, Relation::Eq);
    let sos2 = p.add_sos2(Sos2Set {
        family: family.to_string(),
        lambdas: lambdas.clone(),
        reference: Some((x, bp.x.clone())),
        value: Some((value, bp.y.clone())),
        stage: 0,
    });
    Ok(PwlEncoding { value, lambdas, sos2 })
}

/// Returns `y` with `0 ≤ y ≤ u·b` and `x − u(1−b) ≤ y ≤ x`, so that `y = b·x`
/// whenever `b` is integral and `0 ≤ x ≤ u`.
pub fn encode_product_bin_cont(
    p: &mut ConicProgram,
    family: &str,
    name: &str,
    b: VarId,
    x: VarId,
    u: f64,
) -> Result<VarId> {
    if !u.is_finite() || u < 0.0 {
        return Err(Error::Model(format!(
            "product {name} needs a finite non-negative bound, got {u}"
        )));
    }
    let y = p.add_var(name.to_string(), 0.0, u);
    p.add_linear(family, LinExpr::var(y).term(b, -u), Relation::Le);
    p.add_linear(family, LinExpr::var(y).term(x, -1.0), Relation::Le);
    p.add_linear(
        family,
        LinExpr::var(y).term(x, -1.0).term(b, -u).plus(u),
        Relation::Ge,
    );
    Ok(y)
}

/// Bits `b_j` such that `lo + Σ 2^j b_j` spans `[lo, hi]`; an upper-bound
/// row is added when the bit range overshoots.
pub fn encode_integer_as_binaries(
    p: &mut ConicProgram,
    family: &str,
    name: &str,
    lo: i64,
    hi: i64,
) -> Result<(LinExpr, Vec<VarId>)> {
    if lo > hi {
        return Err(Error::Model(format!("empty integer range [{lo}, {hi}] for {name}")));
    }
    let span = (hi - lo) as u64;
    let nbits = 64 - span.leading_zeros() as usize;
    let bits: Vec<VarId> = (0..nbits)
        .map(|j| p.add_binary(format!("{name}[{j}]")))
        .collect();
    let mut expr = LinExpr::constant(lo as f64);
    for (j, &b) in bits.iter().enumerate() {
        expr.add_term(b, (1u64 << j) as f64);
    }
    if nbits > 0 && (1u64 << nbits) - 1 > span {
        p.add_linear(family, expr.clone().plus(-(hi as f64)), Relation::Le);
    }
    Ok((expr, bits))
}

/// Maximum chord error of a function with `|f''| ≤ m` on a segment of
/// width `h`.
pub fn chord_error_bound(m: f64, h: f64) -> f64 {
    m * h * h / 8.0
}
