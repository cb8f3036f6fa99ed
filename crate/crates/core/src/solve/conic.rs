//! Continuous conic relaxations through the Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::Serialize;

use crate::program::{ConicProgram, LinExpr, Relation, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal point in the program's variable order; empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
}

impl ConicSolution {
    fn status_only(status: SolveStatus) -> Self {
        ConicSolution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            iterations: 0,
        }
    }
}

/// Solves the continuous relaxation of a program with the given variable
/// bounds (integrality and SOS2 requirements are ignored).
pub trait ConicBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, program: &ConicProgram, lb: &[f64], ub: &[f64]) -> ConicSolution;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelBackend {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        ClarabelBackend {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            max_iter: 300,
        }
    }
}

const CONST_TOL: f64 = 1e-9;
const BIG: f64 = 1e15;

struct Rows {
    cols: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            cols: Vec::new(),
            rows: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
        }
    }

    /// Appends the row `s = sign·(a·x) + c` as `A x + s = b`.
    fn push(&mut self, terms: &[(usize, f64)], sign: f64, c: f64) {
        let r = self.b.len();
        for &(col, a) in terms {
            self.rows.push(r);
            self.cols.push(col);
            self.vals.push(-sign * a);
        }
        self.b.push(c);
    }
}

/// Linear expression restricted to free columns plus the constant folded
/// from fixed variables.
fn reduce(e: &LinExpr, fixed: &[Option<f64>], col: &[usize]) -> (Vec<(usize, f64)>, f64) {
    let mut c = e.constant;
    let mut terms = Vec::with_capacity(e.terms.len());
    for &(v, a) in &e.terms {
        match fixed[v.0] {
            Some(val) => c += a * val,
            None => terms.push((col[v.0], a)),
        }
    }
    terms.sort_by_key(|t| t.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (j, a) in terms {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => merged.push((j, a)),
        }
    }
    merged.retain(|t| t.1 != 0.0);
    (merged, c)
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, p: &ConicProgram, lb: &[f64], ub: &[f64]) -> ConicSolution {
        let n_all = p.vars.len();
        let mut fixed = vec![None; n_all];
        let mut col = vec![usize::MAX; n_all];
        let mut free = Vec::new();
        for v in 0..n_all {
            if lb[v] > ub[v] + CONST_TOL {
                return ConicSolution::status_only(SolveStatus::Infeasible);
            }
            if ub[v] - lb[v] <= 1e-12 {
                let val = if p.vars[v].kind == VarKind::Binary { lb[v].round() } else { lb[v] };
                fixed[v] = Some(val);
            } else {
                col[v] = free.len();
                free.push(v);
            }
        }
        let n = free.len();

        let mut zero = Rows::new();
        let mut nonneg = Rows::new();
        for c in &p.linear {
            let (terms, k) = reduce(&c.expr, &fixed, &col);
            if terms.is_empty() {
                let ok = match c.rel {
                    Relation::Eq => k.abs() <= CONST_TOL,
                    Relation::Le => k <= CONST_TOL,
                    Relation::Ge => k >= -CONST_TOL,
                };
                if !ok {
                    return ConicSolution::status_only(SolveStatus::Infeasible);
                }
                continue;
            }
            match c.rel {
                Relation::Eq => zero.push(&terms, 1.0, k),
                Relation::Le => nonneg.push(&terms, -1.0, -k),
                Relation::Ge => nonneg.push(&terms, 1.0, k),
            }
        }
        for (j, &v) in free.iter().enumerate() {
            if ub[v].is_finite() && ub[v] < BIG {
                nonneg.push(&[(j, 1.0)], -1.0, ub[v]);
            }
            if lb[v].is_finite() && lb[v] > -BIG {
                nonneg.push(&[(j, 1.0)], 1.0, -lb[v]);
            }
        }
        let mut soc = Rows::new();
        let mut soc_dims = Vec::new();
        for c in &p.cones {
            let (rt, rk) = reduce(&c.rhs, &fixed, &col);
            let lhs: Vec<_> = c.lhs.iter().map(|e| reduce(e, &fixed, &col)).collect();
            if rt.is_empty() && lhs.iter().all(|(t, _)| t.is_empty()) {
                let norm = lhs.iter().map(|(_, k)| k * k).sum::<f64>().sqrt();
                if norm > rk + CONST_TOL {
                    return ConicSolution::status_only(SolveStatus::Infeasible);
                }
                continue;
            }
            soc.push(&rt, 1.0, rk);
            for (t, k) in &lhs {
                soc.push(t, 1.0, *k);
            }
            soc_dims.push(1 + lhs.len());
        }

        let (q_terms, _) = reduce(&p.objective, &fixed, &col);
        let mut q = vec![0.0; n];
        for (j, a) in q_terms {
            q[j] += a;
        }
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            q.iter_mut().for_each(|v| *v /= scale);
        }

        let m = zero.b.len() + nonneg.b.len() + soc.b.len();
        if n == 0 || m == 0 {
            if n > 0 && scale > 0.0 {
                return ConicSolution::status_only(SolveStatus::Unbounded);
            }
            let x = assemble(&fixed, &free, &vec![0.0; n]);
            return ConicSolution {
                status: SolveStatus::Optimal,
                objective: p.objective.eval(&x),
                x,
                iterations: 0,
            };
        }

        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut offset = 0;
        for block in [&zero, &nonneg, &soc] {
            rows.extend(block.rows.iter().map(|r| r + offset));
            cols.extend_from_slice(&block.cols);
            vals.extend_from_slice(&block.vals);
            b.extend_from_slice(&block.b);
            offset += block.b.len();
        }
        let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
        let pm = CscMatrix::<f64>::zeros((n, n));
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if !zero.b.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(zero.b.len()));
        }
        if !nonneg.b.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg.b.len()));
        }
        cones.extend(soc_dims.iter().map(|&d| SupportedConeT::SecondOrderConeT(d)));

        let mut last = ConicSolution::status_only(SolveStatus::NumericalFailure);
        for attempt in 0..2 {
            let settings = DefaultSettingsBuilder::default()
                .verbose(false)
                .max_iter(if attempt == 0 { self.max_iter } else { 2 * self.max_iter })
                .tol_feas(self.feas_tol)
                .tol_gap_abs(self.gap_tol)
                .tol_gap_rel(self.gap_tol)
                .equilibrate_enable(attempt == 0)
                .max_threads(1)
                .build()
                .expect("static solver settings are valid");
            let mut solver = match DefaultSolver::new(&pm, &q, &a, &b, &cones, settings) {
                Ok(s) => s,
                Err(_) => return last,
            };
            solver.solve();
            let sol = &solver.solution;
            let status = match sol.status {
                SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                    SolveStatus::Infeasible
                }
                SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                    SolveStatus::Unbounded
                }
                _ => SolveStatus::NumericalFailure,
            };
            if status == SolveStatus::NumericalFailure {
                last.iterations += sol.iterations;
                continue;
            }
            if status != SolveStatus::Optimal {
                return ConicSolution {
                    iterations: sol.iterations,
                    ..ConicSolution::status_only(status)
                };
            }
            let x = assemble(&fixed, &free, &sol.x);
            return ConicSolution {
                status,
                objective: p.objective.eval(&x),
                x,
                iterations: sol.iterations,
            };
        }
        last
    }
}

fn assemble(fixed: &[Option<f64>], free: &[usize], xf: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (j, &v) in free.iter().enumerate() {
        x[v] = xf[j];
    }
    x
}

/// Solves a program's relaxation at its declared bounds.
pub fn solve_conic(program: &ConicProgram, backend: &dyn ConicBackend) -> ConicSolution {
    let lb: Vec<f64> = program.vars.iter().map(|v| v.lb).collect();
    let ub: Vec<f64> = program.vars.iter().map(|v| v.ub).collect();
    backend.solve(program, &lb, &ub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::VarId;

    #[test]
    fn single_variable_at_lower_bound() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, f64::INFINITY);
        p.objective = LinExpr::var(x);
        let s = solve_conic(&p, &ClarabelBackend::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.x[0].abs() < 1e-7);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_linear("a", LinExpr::var(x).plus(-1.0), Relation::Ge);
        p.add_linear("b", LinExpr::var(x), Relation::Le);
        let s = solve_conic(&p, &ClarabelBackend::default());
        assert_eq!(s.status, SolveStatus::Infeasible);

        let mut p = ConicProgram::new();
        p.add_var("x", 1.0, 0.0);
        assert_eq!(solve_conic(&p, &ClarabelBackend::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", f64::NEG_INFINITY, 5.0);
        p.objective = LinExpr::var(x);
        p.add_linear("a", LinExpr::var(x).plus(-10.0), Relation::Le);
        assert_eq!(solve_conic(&p, &ClarabelBackend::default()).status, SolveStatus::Unbounded);
    }

    #[test]
    fn second_order_cone() {
        // min t s.t. ‖(x − 3, y − 4)‖ ≤ t, x = 0, y free → t = 3
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 0.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        let t = p.add_var("t", f64::NEG_INFINITY, f64::INFINITY);
        p.add_cone(
            "c",
            vec![LinExpr::var(x).plus(-3.0), LinExpr::var(y).plus(-4.0)],
            LinExpr::var(t),
        );
        p.objective = LinExpr::var(t);
        let s = solve_conic(&p, &ClarabelBackend::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-7);
        assert!((s.x[y.0] - 4.0).abs() < 1e-5);
        assert_eq!(s.x[VarId(0).0], 0.0);
    }

    #[test]
    fn fully_fixed_program() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 2.0, 2.0);
        p.objective = LinExpr::var(x).plus(1.0);
        p.add_linear("a", LinExpr::var(x).plus(-2.0), Relation::Eq);
        let s = solve_conic(&p, &ClarabelBackend::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective, 3.0);
    }
}
