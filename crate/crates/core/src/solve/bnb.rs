//! Best-first branch-and-bound with depth-first plunging, binary and SOS2
//! branching.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::time::Instant;

use serde::Serialize;

use super::conic::{ConicBackend, ConicSolution, SolveStatus};
use super::{BranchRule, SolverConfig};
use crate::program::{sos2_value_gap, sos2_violation, ConicProgram, Sos2Set, VarId, VarKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    /// Gap closed; the incumbent is optimal within tolerance.
    Optimal,
    /// A limit stopped the search with an incumbent.
    Incumbent,
    Infeasible,
    /// A limit stopped the search before any incumbent was found.
    NoSolution,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Branched,
    Integral,
    Infeasible,
    Pruned,
    NumericalFailure,
    Unbounded,
}

impl NodeStatus {
    fn as_str(&self) -> &'static str {
        match self {
            NodeStatus::Branched => "branched",
            NodeStatus::Integral => "integral",
            NodeStatus::Infeasible => "infeasible",
            NodeStatus::Pruned => "pruned",
            NodeStatus::NumericalFailure => "numerical_failure",
            NodeStatus::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchLogEntry {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Relaxation objective at this node (NaN when not solved).
    pub relaxation: f64,
    /// Lower bound valid for the node's subtree.
    pub bound: f64,
    pub status: NodeStatus,
    /// Bound change that created this node.
    pub decision: String,
    /// Smallest bound over open nodes when this node was processed.
    pub global_bound: f64,
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: SearchStatus,
    pub incumbent: Option<Incumbent>,
    pub best_bound: f64,
    pub nodes: usize,
    pub relaxations: usize,
    pub numerical_failures: usize,
    pub log: Vec<SearchLogEntry>,
}

impl BnbResult {
    pub fn gap(&self) -> f64 {
        match &self.incumbent {
            Some(inc) => (inc.objective - self.best_bound).max(0.0),
            None => f64::INFINITY,
        }
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("id,parent,depth,relaxation,bound,status,decision,global_bound,incumbent\n");
        for e in &self.log {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.id,
                e.parent.map(|p| p.to_string()).unwrap_or_default(),
                e.depth,
                fmt_num(e.relaxation),
                fmt_num(e.bound),
                e.status.as_str(),
                e.decision,
                fmt_num(e.global_bound),
                e.incumbent.map(fmt_num).unwrap_or_default(),
            ));
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        String::new()
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    bound: f64,
    changes: Vec<(VarId, f64, f64)>,
    decision: String,
}

struct Open(Node);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // max-heap: smaller bound, then smaller id, pops first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then(other.0.id.cmp(&self.0.id))
    }
}

const POLISH_WALKS: usize = 8;

/// Segment holding the set's reference value, or the adjacent pair with the
/// largest weight when the set has no reference.
fn segment_of(s: &Sos2Set, x: &[f64]) -> usize {
    match &s.reference {
        Some((xv, bp)) => {
            let i = bp.partition_point(|&b| b <= x[xv.0]);
            i.clamp(1, bp.len() - 1) - 1
        }
        None => {
            let w: Vec<f64> = s.lambdas.iter().map(|v| x[v.0]).collect();
            (0..w.len().saturating_sub(1))
                .max_by(|&a, &b| (w[a] + w[a + 1]).total_cmp(&(w[b] + w[b + 1])).then(b.cmp(&a)))
                .unwrap_or(0)
        }
    }
}

enum Branch {
    Binary(VarId, f64),
    Sos2(usize),
}

struct Search<'a> {
    p: &'a ConicProgram,
    backend: &'a dyn ConicBackend,
    cfg: &'a SolverConfig,
    root_lb: Vec<f64>,
    root_ub: Vec<f64>,
    incumbent: Option<Incumbent>,
    relaxations: usize,
    failures: usize,
}

impl Search<'_> {
    fn tolerance(&self, inc: f64) -> f64 {
        self.cfg.abs_gap.max(self.cfg.rel_gap * inc.abs())
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some(inc) => bound >= inc.objective - self.tolerance(inc.objective),
            None => false,
        }
    }

    fn bounds(&self, changes: &[(VarId, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lb = self.root_lb.clone();
        let mut ub = self.root_ub.clone();
        for &(v, l, u) in changes {
            lb[v.0] = lb[v.0].max(l);
            ub[v.0] = ub[v.0].min(u);
        }
        (lb, ub)
    }

    fn relax(&mut self, lb: &[f64], ub: &[f64]) -> ConicSolution {
        self.relaxations += 1;
        let s = self.backend.solve(self.p, lb, ub);
        if s.status == SolveStatus::NumericalFailure {
            self.failures += 1;
        }
        s
    }

    fn choose(&self, x: &[f64]) -> Option<Branch> {
        let tol = self.cfg.int_tol;
        let mut best: Option<(VarId, f64, f64)> = None;
        for (i, v) in self.p.vars.iter().enumerate() {
            if v.kind != VarKind::Binary {
                continue;
            }
            let frac = (x[i] - x[i].floor()).min(x[i].ceil() - x[i]);
            if frac <= tol {
                continue;
            }
            match self.cfg.branching {
                BranchRule::FirstFractional => return Some(Branch::Binary(VarId(i), x[i])),
                BranchRule::MostFractional => {
                    if best.map_or(true, |b| frac > b.2) {
                        best = Some((VarId(i), x[i], frac));
                    }
                }
            }
        }
        if let Some((v, val, _)) = best {
            return Some(Branch::Binary(v, val));
        }
        let mut worst: Option<(usize, f64, f64)> = None;
        for (i, s) in self.p.sos2.iter().enumerate() {
            let viol = sos2_violation(s, x);
            if viol <= tol {
                continue;
            }
            let gap = sos2_value_gap(s, x).unwrap_or(0.0);
            if worst.map_or(true, |w| (gap, viol) > (w.1, w.2)) {
                worst = Some((i, gap, viol));
            }
        }
        worst.map(|w| Branch::Sos2(w.0))
    }

    /// Re-solves with binaries fixed at their rounded values and each SOS2
    /// set confined to one segment, giving an integer-feasible point. Sets
    /// are confined stage by stage, each stage from the solution of the
    /// previous one. While a reference value rests on the edge of its
    /// segment the neighbouring segment is tried and kept if it improves
    /// the objective.
    fn polish(&mut self, x: &[f64], lb: &[f64], ub: &[f64]) -> Option<Incumbent> {
        let mut lb = lb.to_vec();
        let mut ub = ub.to_vec();
        for (i, v) in self.p.vars.iter().enumerate() {
            if v.kind == VarKind::Binary {
                let r = x[i].round().clamp(lb[i], ub[i]);
                lb[i] = r;
                ub[i] = r;
            }
        }
        let stages: BTreeSet<usize> = self.p.sos2.iter().map(|s| s.stage).collect();
        let mut segs: Vec<Option<usize>> = vec![None; self.p.sos2.len()];
        let mut cur = None;
        for stage in &stages {
            let from = cur.as_ref().map_or(x, |c: &Incumbent| c.x.as_slice());
            for (i, s) in self.p.sos2.iter().enumerate() {
                if s.stage == *stage {
                    segs[i] = Some(segment_of(s, from));
                }
            }
            cur = Some(self.solve_confined(&lb, &ub, &segs)?);
        }
        let mut best = match cur {
            Some(c) => c,
            None => self.solve_confined(&lb, &ub, &segs)?,
        };
        let viol = self.p.violations(&best.x);
        if viol.integrality > self.cfg.int_tol || viol.sos2 > self.cfg.int_tol {
            return None;
        }
        let mut segs: Vec<usize> = segs.into_iter().map(|s| s.unwrap_or(0)).collect();
        for _ in 0..POLISH_WALKS {
            let moved = self.walk(&best.x, &segs);
            if moved == segs {
                break;
            }
            let confined: Vec<Option<usize>> = moved.iter().map(|&s| Some(s)).collect();
            match self.solve_confined(&lb, &ub, &confined) {
                Some(c) if c.objective < best.objective - 1e-9 * best.objective.abs().max(1.0) => {
                    let viol = self.p.violations(&c.x);
                    if viol.integrality > self.cfg.int_tol || viol.sos2 > self.cfg.int_tol {
                        break;
                    }
                    best = c;
                    segs = moved;
                }
                _ => break,
            }
        }
        Some(best)
    }

    /// Segments shifted towards the edge their reference value rests on.
    fn walk(&self, x: &[f64], segs: &[usize]) -> Vec<usize> {
        let mut out = segs.to_vec();
        for (s, seg) in self.p.sos2.iter().zip(out.iter_mut()) {
            let Some((xv, bp)) = &s.reference else { continue };
            let tol = 1e-7 * (bp[bp.len() - 1] - bp[0]).abs().max(1.0);
            let val = x[xv.0];
            if *seg + 2 < bp.len() && val >= bp[*seg + 1] - tol {
                *seg += 1;
            } else if *seg > 0 && val <= bp[*seg] + tol {
                *seg -= 1;
            }
        }
        out
    }

    fn solve_confined(&mut self, lb: &[f64], ub: &[f64], segs: &[Option<usize>]) -> Option<Incumbent> {
        let mut lb = lb.to_vec();
        let mut ub = ub.to_vec();
        for (s, seg) in self.p.sos2.iter().zip(segs) {
            let Some(seg) = *seg else { continue };
            for (j, l) in s.lambdas.iter().enumerate() {
                if j != seg && j != seg + 1 {
                    ub[l.0] = 0.0;
                    lb[l.0] = lb[l.0].min(0.0);
                }
            }
        }
        let s = self.relax(&lb, &ub);
        if s.status != SolveStatus::Optimal {
            return None;
        }
        Some(Incumbent {
            objective: s.objective,
            x: s.x,
        })
    }

    fn offer(&mut self, cand: Incumbent) -> bool {
        let better = match &self.incumbent {
            Some(inc) => cand.objective < inc.objective - 1e-12 * inc.objective.abs().max(1.0),
            None => true,
        };
        if better {
            self.incumbent = Some(cand);
        }
        better
    }
}

pub fn branch_and_bound(p: &ConicProgram, backend: &dyn ConicBackend, cfg: &SolverConfig) -> BnbResult {
    let start = Instant::now();
    let mut search = Search {
        p,
        backend,
        cfg,
        root_lb: p.vars.iter().map(|v| v.lb).collect(),
        root_ub: p.vars.iter().map(|v| v.ub).collect(),
        incumbent: None,
        relaxations: 0,
        failures: 0,
    };
    let mut log = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut dive: Option<Node> = Some(Node {
        id: 0,
        parent: None,
        depth: 0,
        bound: f64::NEG_INFINITY,
        changes: Vec::new(),
        decision: "root".into(),
    });
    let mut plunge = true;
    let mut next_id = 1;
    let mut limited = false;
    let mut unbounded = false;

    loop {
        let node = match dive.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(Open(n)) => n,
                None => break,
            },
        };
        let open_min = heap
            .peek()
            .map(|o: &Open| o.0.bound)
            .unwrap_or(f64::INFINITY)
            .min(node.bound);
        if let Some(inc) = &search.incumbent {
            if inc.objective - open_min <= search.tolerance(inc.objective) {
                heap.push(Open(node));
                break;
            }
        }
        if log.len() >= cfg.node_limit
            || cfg.time_limit_s.is_some_and(|t| start.elapsed().as_secs_f64() > t)
        {
            heap.push(Open(node));
            limited = true;
            break;
        }

        let mut entry = SearchLogEntry {
            id: node.id,
            parent: node.parent,
            depth: node.depth,
            relaxation: f64::NAN,
            bound: node.bound,
            status: NodeStatus::Pruned,
            decision: node.decision.clone(),
            global_bound: open_min,
            incumbent: search.incumbent.as_ref().map(|i| i.objective),
        };
        if search.prunable(node.bound) {
            log.push(entry);
            plunge = false;
            continue;
        }
        let (lb, ub) = search.bounds(&node.changes);
        let sol = search.relax(&lb, &ub);
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                entry.status = NodeStatus::Infeasible;
                log.push(entry);
                plunge = false;
                continue;
            }
            SolveStatus::Unbounded => {
                entry.status = NodeStatus::Unbounded;
                log.push(entry);
                unbounded = true;
                break;
            }
            SolveStatus::NumericalFailure => {
                entry.status = NodeStatus::NumericalFailure;
                log.push(entry);
                plunge = false;
                continue;
            }
        }
        entry.relaxation = sol.objective;
        let bound = node.bound.max(sol.objective);
        entry.bound = bound;
        if search.prunable(bound) {
            log.push(entry);
            plunge = false;
            continue;
        }

        let branch = search.choose(&sol.x);
        let Some(branch) = branch else {
            entry.status = NodeStatus::Integral;
            let cand = search.polish(&sol.x, &lb, &ub).unwrap_or(Incumbent {
                objective: sol.objective,
                x: sol.x.clone(),
            });
            if search.offer(cand) {
                plunge = true;
            } else {
                plunge = false;
            }
            entry.incumbent = search.incumbent.as_ref().map(|i| i.objective);
            log.push(entry);
            continue;
        };

        entry.status = NodeStatus::Branched;
        let mut children: Vec<(Vec<(VarId, f64, f64)>, String)> = Vec::new();
        let preferred;
        match branch {
            Branch::Binary(v, val) => {
                let mut down = node.changes.clone();
                down.push((v, f64::NEG_INFINITY, val.floor()));
                let mut up = node.changes.clone();
                up.push((v, val.ceil(), f64::INFINITY));
                children.push((down, format!("{}<={}", p.vars[v.0].name, val.floor())));
                children.push((up, format!("{}>={}", p.vars[v.0].name, val.ceil())));
                preferred = usize::from(val - val.floor() >= 0.5);
            }
            Branch::Sos2(k) => {
                let set = &p.sos2[k];
                if let Some(cand) = search.polish(&sol.x, &lb, &ub) {
                    if search.offer(cand) {
                        plunge = true;
                    }
                    entry.incumbent = search.incumbent.as_ref().map(|i| i.objective);
                }
                let nz: Vec<usize> = set
                    .lambdas
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| sol.x[v.0] > cfg.int_tol * 1e-3)
                    .map(|(i, _)| i)
                    .collect();
                let (f, l) = (nz[0], nz[nz.len() - 1]);
                let r = (f + l) / 2;
                let mut left = node.changes.clone();
                let mut right = node.changes.clone();
                for (i, v) in set.lambdas.iter().enumerate() {
                    if i > r {
                        left.push((*v, f64::NEG_INFINITY, 0.0));
                    }
                    if i < r {
                        right.push((*v, f64::NEG_INFINITY, 0.0));
                    }
                }
                let wl: f64 = set.lambdas[..=r].iter().map(|v| sol.x[v.0]).sum();
                let wr: f64 = set.lambdas[r..].iter().map(|v| sol.x[v.0]).sum();
                children.push((left, format!("sos2[{}]<={}", set.family, r)));
                children.push((right, format!("sos2[{}]>={}", set.family, r)));
                preferred = usize::from(wr > wl);
            }
        }
        log.push(entry);
        let mut made: Vec<Node> = children
            .into_iter()
            .map(|(changes, decision)| {
                let n = Node {
                    id: next_id,
                    parent: Some(node.id),
                    depth: node.depth + 1,
                    bound,
                    changes,
                    decision,
                };
                next_id += 1;
                n
            })
            .collect();
        if plunge {
            let d = made.remove(preferred);
            dive = Some(d);
        }
        for n in made {
            heap.push(Open(n));
        }
    }

    let open_min = heap.iter().map(|o| o.0.bound).fold(f64::INFINITY, f64::min);
    let status = if unbounded {
        SearchStatus::Unbounded
    } else {
        match (&search.incumbent, limited) {
            (Some(_), false) => SearchStatus::Optimal,
            (Some(_), true) => SearchStatus::Incumbent,
            (None, false) => SearchStatus::Infeasible,
            (None, true) => SearchStatus::NoSolution,
        }
    };
    let best_bound = match &search.incumbent {
        Some(inc) => open_min.min(inc.objective),
        None => open_min,
    };
    BnbResult {
        status,
        incumbent: search.incumbent,
        best_bound,
        nodes: log.len(),
        relaxations: search.relaxations,
        numerical_failures: search.failures,
        log,
    }
}
