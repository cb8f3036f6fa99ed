use std::collections::{BTreeMap, VecDeque};

use super::{BusId, Network};
use crate::error::{Error, Result};

/// Radial structure of an oriented network, indexed by position in
/// `Network::buses` / `Network::lines`.
#[derive(Debug, Clone)]
pub struct Tree {
    pub slack: usize,
    /// Breadth-first bus order starting at the slack.
    pub order: Vec<usize>,
    /// Line feeding each bus (`None` for the slack).
    pub parent_line: Vec<Option<usize>>,
    /// Lines leaving each bus.
    pub child_lines: Vec<Vec<usize>>,
    pub index: BTreeMap<BusId, usize>,
}

impl Tree {
    /// Checks that the lines form a tree rooted at the slack and that every
    /// line points away from it.
    pub fn build(net: &Network) -> Result<Tree> {
        let index = net.bus_index();
        if index.len() != net.buses.len() {
            return Err(Error::NotATree("duplicate bus ids".into()));
        }
        let slacks: Vec<usize> = net
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(Error::NotATree(format!(
                "expected exactly one slack bus, found {}",
                slacks.len()
            )));
        }
        let slack = slacks[0];
        let n = net.buses.len();
        let mut parent_line = vec![None; n];
        let mut child_lines = vec![Vec::new(); n];
        for (li, line) in net.lines.iter().enumerate() {
            let from = *index
                .get(&line.from)
                .ok_or(Error::DanglingBus { kind: "line", bus: line.from })?;
            let to = *index
                .get(&line.to)
                .ok_or(Error::DanglingBus { kind: "line", bus: line.to })?;
            if to == slack {
                return Err(Error::NotATree(format!("line {} points into the slack", line.label())));
            }
            if parent_line[to].replace(li).is_some() {
                return Err(Error::NotATree(format!("bus {} has two feeding lines", line.to)));
            }
            child_lines[from].push(li);
        }
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &li in &child_lines[b] {
                let to = index[&net.lines[li].to];
                if seen[to] {
                    return Err(Error::NotATree(format!("cycle through bus {}", net.lines[li].to)));
                }
                seen[to] = true;
                queue.push_back(to);
            }
        }
        if order.len() != n {
            let orphan = (0..n).find(|&i| !seen[i]).map(|i| net.buses[i].id).unwrap();
            return Err(Error::NotATree(format!("bus {orphan} is not reachable from the slack")));
        }
        Ok(Tree {
            slack,
            order,
            parent_line,
            child_lines,
            index,
        })
    }

    /// Bus indices on the path from the slack down to `bus` (inclusive).
    pub fn path_from_slack(&self, net: &Network, bus: usize) -> Vec<usize> {
        let mut path = vec![bus];
        let mut cur = bus;
        while let Some(li) = self.parent_line[cur] {
            cur = self.index[&net.lines[li].from];
            path.push(cur);
        }
        path.reverse();
        path
    }
}

/// Re-orients every line away from the slack; fails on cycles, islands or
/// a missing slack.
pub(super) fn orient(net: &mut Network) -> Result<()> {
    let index = net.bus_index();
    let slack_id = net
        .slack()
        .ok_or_else(|| Error::NotATree("no slack bus".into()))?;
    let n = net.buses.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (li, line) in net.lines.iter().enumerate() {
        let a = *index
            .get(&line.from)
            .ok_or(Error::DanglingBus { kind: "line", bus: line.from })?;
        let b = *index
            .get(&line.to)
            .ok_or(Error::DanglingBus { kind: "line", bus: line.to })?;
        if a == b {
            return Err(Error::NotATree(format!("self-loop at bus {}", line.from)));
        }
        adj[a].push(li);
        adj[b].push(li);
    }
    if net.lines.len() + 1 != n {
        return Err(Error::NotATree(format!(
            "{} buses need {} lines, found {}",
            n,
            n.saturating_sub(1),
            net.lines.len()
        )));
    }
    let mut seen = vec![false; n];
    let mut used = vec![false; net.lines.len()];
    let slack = index[&slack_id];
    seen[slack] = true;
    let mut queue = VecDeque::from([slack]);
    while let Some(b) = queue.pop_front() {
        for &li in &adj[b] {
            if used[li] {
                continue;
            }
            used[li] = true;
            let line = &mut net.lines[li];
            let (from, to) = (index[&line.from], index[&line.to]);
            let other = if from == b { to } else { from };
            if seen[other] {
                return Err(Error::NotATree(format!("line {} closes a cycle", line.label())));
            }
            if from != b {
                std::mem::swap(&mut line.from, &mut line.to);
            }
            seen[other] = true;
            queue.push_back(other);
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::NotATree(format!(
            "bus {} is not reachable from the slack",
            net.buses[i].id
        )));
    }
    Ok(())
}
