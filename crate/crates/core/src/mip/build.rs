use std::collections::BTreeMap;

use super::{
    running_power, Branch, MipModel, ModelConfig, ModelStats, Node, StallCertificate, StartBlock,
    Symbol, VariableMap,
};
use crate::error::{Error, Result};
use crate::motor::SlipStepModel;
use crate::netmodel::{validate_network, BusId, Network, ProtectionCurve, ScenarioInput};
use crate::program::{ConicProgram, LinExpr, Relation, VarId};
use crate::pwl::{encode_integer_as_binaries, encode_product_bin_cont, encode_pwl, Breakpoints};

struct Builder<'a> {
    net: Network,
    sc: &'a ScenarioInput,
    cfg: &'a ModelConfig,
    p: ConicProgram,
    map: VariableMap,
    bounds: BTreeMap<String, usize>,
    operational: LinExpr,
    warnings: Vec<String>,
    l: BTreeMap<BusId, Vec<VarId>>,
    start: BTreeMap<BusId, Vec<VarId>>,
    running: BTreeMap<BusId, (f64, f64)>,
}

/// Builds the restoration model for a scenario. `models` must hold a slip
/// model for every motor inside the off-outage area.
pub fn build_model(
    net: &Network,
    sc: &ScenarioInput,
    models: &BTreeMap<BusId, SlipStepModel>,
    cfg: &ModelConfig,
) -> Result<MipModel> {
    cfg.validate()?;
    let net = sc.apply(net)?;
    let violations = validate_network(&net);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Model(format!("invalid network: {}", text.join("; "))));
    }
    let mut running = BTreeMap::new();
    for m in &net.motors {
        running.insert(m.bus, running_power(&net, m)?);
    }
    let mut b = Builder {
        net,
        sc,
        cfg,
        p: ConicProgram::new(),
        map: VariableMap::new(),
        bounds: BTreeMap::new(),
        operational: LinExpr::new(),
        warnings: Vec::new(),
        l: BTreeMap::new(),
        start: BTreeMap::new(),
        running,
    };
    b.sequencing()?;
    let reliability = b.reliability();
    let starting: Vec<BusId> = b
        .net
        .motors
        .iter()
        .map(|m| m.bus)
        .filter(|&bus| sc.is_off_outage(bus))
        .collect();
    let mut blocks = Vec::new();
    let mut stall = None;
    for m in starting {
        let model = models
            .get(&m)
            .ok_or_else(|| Error::Model(format!("no slip model for motor at bus {m}")))?;
        let (block, cert) = b.start_block(m, model)?;
        if stall.is_none() {
            stall = cert;
        }
        blocks.push(block);
    }
    let mut objective = reliability.scaled(sc.w_re);
    objective.add_expr(&b.operational, sc.w_op);
    b.p.objective = objective;
    b.p.check_references()?;
    if b.map.len() != b.p.vars.len() {
        return Err(Error::Model(format!(
            "{} variables but {} mapped symbols",
            b.p.vars.len(),
            b.map.len()
        )));
    }
    let stats = ModelStats {
        program: b.p.stats(),
        bounds: b.bounds,
        blocks: blocks.len(),
        steps_per_block: blocks.iter().map(|bl: &StartBlock| bl.k_max()).collect(),
    };
    Ok(MipModel {
        program: b.p,
        map: b.map,
        config: cfg.clone(),
        net: b.net,
        horizon: sc.horizon,
        l0: sc.l0.clone(),
        blocks,
        reliability,
        operational: b.operational,
        w_re: sc.w_re,
        w_op: sc.w_op,
        running: b.running,
        stall,
        warnings: b.warnings,
        stats,
    })
}

fn curve_breakpoints(curve: &ProtectionCurve, t_max: f64) -> Result<(Breakpoints, bool)> {
    let mut pts: Vec<(f64, f64)> = curve.points.clone();
    if pts[0].0 > 0.0 {
        pts.insert(0, (0.0, pts[0].1));
    }
    let last = pts[pts.len() - 1];
    let extended = last.0 < t_max;
    if extended {
        pts.push((t_max, last.1));
    }
    let (x, y) = pts.into_iter().unzip();
    Ok((Breakpoints::new(x, y)?, extended))
}

fn is_flat(curve: &ProtectionCurve) -> bool {
    let y0 = curve.points[0].1;
    curve.points.iter().all(|p| p.1 == y0)
}

impl Builder<'_> {
    fn add(&mut self, sym: Symbol, lb: f64, ub: f64) -> Result<VarId> {
        self.map.add(&mut self.p, sym, lb, ub)
    }

    fn adopt(&mut self, id: VarId, sym: Symbol) -> Result<()> {
        self.p.vars[id.0].name = sym.to_string();
        self.map.register(id, sym)
    }

    fn bound(&mut self, key: &str) {
        *self.bounds.entry(key.to_string()).or_default() += 1;
    }

    fn product(&mut self, family: &str, sym: Symbol, b: VarId, x: VarId, u: f64) -> Result<VarId> {
        let id = encode_product_bin_cont(&mut self.p, family, &sym.to_string(), b, x, u)?;
        self.map.register(id, sym)?;
        Ok(id)
    }

    fn pwl(&mut self, sym: Symbol, x: VarId, bp: &Breakpoints, stage: usize) -> Result<VarId> {
        let enc = encode_pwl(&mut self.p, "16", &sym.to_string(), x, bp)?;
        self.p.sos2[enc.sos2].stage = stage;
        self.map.register(enc.value, sym.clone())?;
        for (i, &l) in enc.lambdas.iter().enumerate() {
            self.adopt(
                l,
                Symbol::Lambda {
                    of: Box::new(sym.clone()),
                    i,
                },
            )?;
        }
        Ok(enc.value)
    }

    fn nominal_p(&self, bus: BusId, t: usize) -> (f64, f64) {
        if let Some(l) = self.net.static_load_at(bus) {
            (l.p0[t], l.q0[t])
        } else {
            self.running.get(&bus).copied().unwrap_or((0.0, 0.0))
        }
    }

    fn priority(&self, bus: BusId) -> f64 {
        if let Some(l) = self.net.static_load_at(bus) {
            l.priority
        } else {
            self.net.motor_at(bus).map_or(0.0, |m| m.priority)
        }
    }

    fn sequencing(&mut self) -> Result<()> {
        let steps = self.sc.horizon.steps;
        let rows: Vec<(BusId, Vec<u8>)> = self.sc.l0.iter().map(|(b, r)| (*b, r.clone())).collect();
        for (bus, row) in &rows {
            let mut vars = Vec::with_capacity(steps);
            for (t, &l0) in row.iter().enumerate() {
                let v = self.map.add_binary(&mut self.p, Symbol::L { bus: *bus, t })?;
                if l0 == 0 {
                    self.p.fix(v, 0.0);
                }
                self.bound("7");
                vars.push(v);
            }
            for t in 1..steps {
                self.p.add_linear(
                    "7",
                    LinExpr::var(vars[t - 1]).term(vars[t], -1.0),
                    Relation::Le,
                );
            }
            self.l.insert(*bus, vars);
        }
        let motors: Vec<BusId> = self
            .net
            .motors
            .iter()
            .map(|m| m.bus)
            .filter(|b| self.sc.is_off_outage(*b))
            .collect();
        for &m in &motors {
            let mut vars = Vec::with_capacity(steps);
            for t in 0..steps {
                let s = self.add(Symbol::Start { motor: m, t }, 0.0, 1.0)?;
                let mut row = LinExpr::var(s).term(self.l[&m][t], -1.0);
                if t > 0 {
                    row.add_term(self.l[&m][t - 1], 1.0);
                }
                self.p.add_linear("7", row, Relation::Eq);
                vars.push(s);
            }
            self.start.insert(m, vars);
        }
        if self.sc.one_motor_per_step && motors.len() > 1 {
            for t in 0..steps {
                let mut row = LinExpr::constant(-1.0);
                for m in &motors {
                    row.add_term(self.start[m][t], 1.0);
                }
                self.p.add_linear("7", row, Relation::Le);
            }
        }
        Ok(())
    }

    fn reliability(&self) -> LinExpr {
        let h = self.sc.horizon.step_hours();
        let mut e = LinExpr::new();
        for (bus, vars) in &self.l {
            let d = self.priority(*bus);
            for (t, &v) in vars.iter().enumerate() {
                let (p0, _) = self.nominal_p(*bus, t);
                let w = d * p0 * h;
                e.constant += w * self.sc.l0_at(*bus, t) as f64;
                e.add_term(v, -w);
            }
        }
        e
    }

    fn start_block(
        &mut self,
        m: BusId,
        model: &SlipStepModel,
    ) -> Result<(StartBlock, Option<StallCertificate>)> {
        let cfg = self.cfg;
        let vmax2 = cfg.v_max_sq();
        let steps = self.sc.horizon.steps;
        let kmax = model.k_max();
        let motor = self.net.motor_at(m).expect("starting motor exists").clone();
        let scale = self.net.motor_scale(&motor);
        let starter = self.net.autotransformer_at(m).cloned();
        let starter_active: Vec<bool> = model
            .grid
            .slips
            .iter()
            .map(|s| starter.as_ref().is_some_and(|a| 1.0 - s < a.bypass_speed - 1e-9))
            .collect();

        let mut cert = None;
        let mut t_acc_max = f64::NEG_INFINITY;
        for k in 0..kmax {
            let torque = model.c[k] * vmax2;
            let acc = torque - model.load(k);
            t_acc_max = t_acc_max.max(acc);
            if acc <= cfg.stall_margin && cert.is_none() {
                cert = Some(StallCertificate {
                    motor: m,
                    step: k + 1,
                    slip: model.grid.slips[k],
                    torque_at_v_max: torque,
                    load_torque: model.load(k),
                    margin: cfg.stall_margin,
                });
            }
        }

        // energization state of every other load at m's start instant
        let load_buses: Vec<BusId> = self.net.load_buses().into_iter().filter(|&b| b != m).collect();
        let mut ind: BTreeMap<BusId, Vec<VarId>> = BTreeMap::new();
        for &i in &load_buses {
            let mut v = Vec::with_capacity(steps);
            for t in 0..steps {
                let s = self.start[&m][t];
                if self.sc.is_off_outage(i) {
                    let l = self.l[&i][t];
                    v.push(self.product("18", Symbol::OnAtStart { bus: i, motor: m, t }, l, s, 1.0)?);
                } else {
                    v.push(s);
                }
            }
            ind.insert(i, v);
        }
        let mut p0 = BTreeMap::new();
        for &i in &load_buses {
            let pv = self.add(Symbol::P0 { bus: i, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
            let qv = self.add(Symbol::Q0 { bus: i, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
            let mut rp = LinExpr::var(pv);
            let mut rq = LinExpr::var(qv);
            for t in 0..steps {
                let (pn, qn) = self.nominal_p(i, t);
                rp.add_term(ind[&i][t], -pn);
                rq.add_term(ind[&i][t], -qn);
            }
            self.p.add_linear("8a", rp, Relation::Eq);
            self.p.add_linear("8b", rq, Relation::Eq);
            p0.insert(i, (pv, qv));
        }

        let mut tap = None;
        if let Some(a) = &starter {
            let (lo, hi) = a.tap_range();
            let first = self.p.vars.len();
            let (expr, bits) =
                encode_integer_as_binaries(&mut self.p, "11b", "dr_bit", lo as i64, hi as i64)?;
            for (j, &bit) in bits.iter().enumerate() {
                debug_assert_eq!(bit.0, first + j);
                self.adopt(bit, Symbol::TapBit { motor: m, bit: j })?;
            }
            let dr = self.add(Symbol::Tap { motor: m }, lo as f64, hi as f64)?;
            let mut row = LinExpr::var(dr);
            row.add_expr(&expr, -1.0);
            self.p.add_linear("11b", row, Relation::Eq);
            let reach = a.sigma * lo.abs().max(hi.abs()) as f64;
            if reach > cfg.tap_guard {
                self.warnings.push(format!(
                    "starter at bus {m}: |sigma * tap| reaches {reach:.3}, beyond the linearization guard {}",
                    cfg.tap_guard
                ));
            }
            tap = Some((lo, bits, a.clone()));
        }

        let frt: Vec<_> = self.net.dgs.iter().filter(|d| d.frt).cloned().collect();
        let mut dg_refs = BTreeMap::new();
        for d in &frt {
            let fmax2 = d.f_max * d.f_max;
            let fp = self.add(Symbol::FpDg { bus: d.bus, motor: m }, 0.0, fmax2)?;
            let fq = self.add(Symbol::FqDg { bus: d.bus, motor: m }, 0.0, fmax2)?;
            self.p
                .add_linear("10a", LinExpr::var(fp).term(fq, 1.0).plus(-fmax2), Relation::Eq);
            dg_refs.insert(d.bus, (fp, fq));
        }

        let started = self.l[&m][steps - 1];
        let mut u_term = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            u_term.push(self.snapshot(m, k, model, scale, &ind, &p0, started, &starter_active, &tap, &dg_refs)?);
        }

        let mut dt_bp = None;
        if let Some(c) = &cert {
            self.warnings.push(c.to_string());
            self.p.add_linear("12a", LinExpr::constant(1.0), Relation::Le);
        } else {
            dt_bp = Some(self.transient(m, model, &u_term, t_acc_max)?);
        }

        Ok((
            StartBlock {
                motor: m,
                model: model.clone(),
                scale,
                starter,
                starter_active,
                t_acc_max,
                dt_breakpoints: dt_bp,
            },
            cert,
        ))
    }

    /// Branch-flow snapshot of block `(k, m)`; returns the squared-voltage
    /// variable at the motor terminal.
    #[allow(clippy::too_many_arguments)]
    fn snapshot(
        &mut self,
        m: BusId,
        k: usize,
        model: &SlipStepModel,
        scale: f64,
        ind: &BTreeMap<BusId, Vec<VarId>>,
        p0: &BTreeMap<BusId, (VarId, VarId)>,
        started: VarId,
        starter_active: &[bool],
        tap: &Option<(i32, Vec<VarId>, crate::netmodel::AutotransformerParams)>,
        dg_refs: &BTreeMap<BusId, (VarId, VarId)>,
    ) -> Result<VarId> {
        let cfg = self.cfg;
        let vmax2 = cfg.v_max_sq();
        let steps = self.sc.horizon.steps;
        let active = starter_active[k - 1];
        let tree = self.net.tree()?;
        let buses: Vec<BusId> = self.net.buses.iter().map(|b| b.id).collect();
        let slack = buses[tree.slack];

        let mut u = BTreeMap::new();
        for &bus in &buses {
            let v = if bus == slack {
                let s2 = self.net.slack_voltage * self.net.slack_voltage;
                self.add(Symbol::U { node: Node::Bus(bus), k, motor: m }, s2, s2)?
            } else {
                self.bound("9e");
                self.add(Symbol::U { node: Node::Bus(bus), k, motor: m }, 0.0, vmax2)?
            };
            u.insert(Node::Bus(bus), v);
        }
        if active {
            for node in [Node::StarterIn(m), Node::StarterOut(m), Node::Terminal(m)] {
                self.bound("9e");
                let v = self.add(Symbol::U { node, k, motor: m }, 0.0, vmax2)?;
                u.insert(node, v);
            }
        }

        // (branch, from node, to node, r, x)
        let mut branches: Vec<(Branch, Node, Node, f64, f64)> = self
            .net
            .lines
            .iter()
            .map(|l| (Branch::Line(l.from, l.to), Node::Bus(l.from), Node::Bus(l.to), l.r, l.x))
            .collect();
        if active {
            let a = &tap.as_ref().expect("active starter has taps").2;
            branches.push((Branch::StarterPrimary(m), Node::Bus(m), Node::StarterIn(m), a.zp.r, a.zp.x));
            branches.push((
                Branch::StarterSecondary(m),
                Node::StarterOut(m),
                Node::Terminal(m),
                a.zs.r,
                a.zs.x,
            ));
        }
        let mut flows = BTreeMap::new();
        for (i, &(br, ..)) in branches.iter().enumerate() {
            let fub = if i < self.net.lines.len() {
                self.bound("Fth");
                self.net.lines[i].thermal_limit_sq()
            } else {
                f64::INFINITY
            };
            let pv = self.add(Symbol::P { branch: br, k, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
            let qv = self.add(Symbol::Q { branch: br, k, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
            let fv = self.add(Symbol::F { branch: br, k, motor: m }, 0.0, fub)?;
            flows.insert(br, (pv, qv, fv));
        }
        let lim = cfg.substation_limit.unwrap_or(f64::INFINITY);
        let psub = self.add(Symbol::PSub { k, motor: m }, -lim, lim)?;
        let qsub = self.add(Symbol::QSub { k, motor: m }, -lim, lim)?;

        // DG injections as expressions
        let mut inj: BTreeMap<BusId, (LinExpr, LinExpr)> = BTreeMap::new();
        for d in self.net.dgs.clone() {
            let e = inj.entry(d.bus).or_default();
            if d.frt {
                let cap = d.f_max * cfg.v_max;
                let pv = self.add(Symbol::PDg { bus: d.bus, k, motor: m }, 0.0, cap)?;
                let qv = self.add(Symbol::QDg { bus: d.bus, k, motor: m }, 0.0, cap)?;
                let (fp, fq) = dg_refs[&d.bus];
                let ud = u[&Node::Bus(d.bus)];
                self.p.add_cone(
                    "10b",
                    vec![LinExpr::var(pv).scaled(2.0), LinExpr::var(fp).term(ud, -1.0)],
                    LinExpr::var(fp).term(ud, 1.0),
                );
                self.p.add_cone(
                    "10c",
                    vec![LinExpr::var(qv).scaled(2.0), LinExpr::var(fq).term(ud, -1.0)],
                    LinExpr::var(fq).term(ud, 1.0),
                );
                e.0.add_term(pv, 1.0);
                e.1.add_term(qv, 1.0);
            } else {
                e.0.constant += d.p_set;
                e.1.constant += d.q_set;
            }
        }

        // demand attached to each node
        let mut demand: BTreeMap<Node, (VarId, VarId)> = BTreeMap::new();
        for &i in ind.keys() {
            let pd = self.add(Symbol::PD { bus: i, k, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
            let qd = self.add(Symbol::QD { bus: i, k, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
            let (pv, qv) = p0[&i];
            if let Some(load) = self.net.static_load_at(i).cloned() {
                let mut rp = LinExpr::var(pd).term(pv, -(1.0 - load.kp / 2.0));
                let mut rq = LinExpr::var(qd).term(qv, -(1.0 - load.kq / 2.0));
                if load.kp != 0.0 || load.kq != 0.0 {
                    let ui = u[&Node::Bus(i)];
                    for t in 0..steps {
                        if load.p0[t] == 0.0 && load.q0[t] == 0.0 {
                            continue;
                        }
                        let w = self.product(
                            "18",
                            Symbol::OnVoltage { bus: i, motor: m, t, k },
                            ind[&i][t],
                            ui,
                            vmax2,
                        )?;
                        rp.add_term(w, -load.kp / 2.0 * load.p0[t]);
                        rq.add_term(w, -load.kq / 2.0 * load.q0[t]);
                    }
                }
                self.p.add_linear("8c", rp, Relation::Eq);
                self.p.add_linear("8d", rq, Relation::Eq);
            } else {
                self.p.add_linear("8f", LinExpr::var(pd).term(pv, -1.0), Relation::Eq);
                self.p.add_linear("8h", LinExpr::var(qd).term(qv, -1.0), Relation::Eq);
            }
            demand.insert(Node::Bus(i), (pd, qd));
        }
        let term_node = if active { Node::Terminal(m) } else { Node::Bus(m) };
        let ut = u[&term_node];
        let z = self.product("18", Symbol::StartedVoltage { motor: m, k }, started, ut, vmax2)?;
        let pd = self.add(Symbol::PD { bus: m, k, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
        let qd = self.add(Symbol::QD { bus: m, k, motor: m }, f64::NEG_INFINITY, f64::INFINITY)?;
        let (g, b) = (model.g[k - 1] * scale, model.b[k - 1] * scale);
        self.p.add_linear("8e", LinExpr::var(pd).term(z, -g), Relation::Eq);
        self.p.add_linear("8g", LinExpr::var(qd).term(z, -b), Relation::Eq);
        demand.insert(term_node, (pd, qd));

        // nodal balances
        let mut nodes: Vec<Node> = buses.iter().map(|&b| Node::Bus(b)).collect();
        if active {
            nodes.push(Node::StarterIn(m));
            nodes.push(Node::Terminal(m));
        }
        for node in nodes {
            let mut rp = LinExpr::new();
            let mut rq = LinExpr::new();
            if node == Node::Bus(slack) {
                rp.add_term(psub, 1.0);
                rq.add_term(qsub, 1.0);
            }
            for &(br, from, to, r, x) in &branches {
                let (pv, qv, fv) = flows[&br];
                if to == node {
                    rp.add_term(pv, 1.0);
                    rp.add_term(fv, -r);
                    rq.add_term(qv, 1.0);
                    rq.add_term(fv, -x);
                }
                if from == node {
                    rp.add_term(pv, -1.0);
                    rq.add_term(qv, -1.0);
                }
            }
            if node == Node::StarterIn(m) {
                // ideal winding: power leaving the primary node enters the secondary branch
                let (pv, qv, _) = flows[&Branch::StarterSecondary(m)];
                rp.add_term(pv, -1.0);
                rq.add_term(qv, -1.0);
            }
            if let Some(&(pd, qd)) = demand.get(&node) {
                rp.add_term(pd, -1.0);
                rq.add_term(qd, -1.0);
            }
            if let Node::Bus(bus) = node {
                if let Some((ip, iq)) = inj.get(&bus) {
                    rp.add_expr(ip, 1.0);
                    rq.add_expr(iq, 1.0);
                }
            }
            self.p.add_linear("9b", rp, Relation::Eq);
            self.p.add_linear("9c", rq, Relation::Eq);
        }

        // voltage drops and cones
        for &(br, from, to, r, x) in &branches {
            let (pv, qv, fv) = flows[&br];
            let (uf, ut) = (u[&from], u[&to]);
            let mut row = LinExpr::var(ut)
                .term(uf, -1.0)
                .term(pv, 2.0 * r)
                .term(qv, 2.0 * x);
            if cfg.keep_loss_term {
                row.add_term(fv, -(r * r + x * x));
            }
            self.p.add_linear("9a", row, Relation::Eq);
            self.p.add_cone(
                "9d",
                vec![
                    LinExpr::var(pv).scaled(2.0),
                    LinExpr::var(qv).scaled(2.0),
                    LinExpr::var(fv).term(uf, -1.0),
                ],
                LinExpr::var(fv).term(uf, 1.0),
            );
            self.operational.add_term(fv, r);
        }

        if active {
            let (lo, bits, a) = tap.as_ref().expect("active starter has taps");
            let (ui, uo) = (u[&Node::StarterIn(m)], u[&Node::StarterOut(m)]);
            let mut row = LinExpr::var(uo).term(ui, -(1.0 + 2.0 * a.sigma * *lo as f64));
            for (j, &bit) in bits.iter().enumerate() {
                let w = self.product("18", Symbol::TapVoltage { motor: m, bit: j, k }, bit, ui, vmax2)?;
                row.add_term(w, -2.0 * a.sigma * (1u64 << j) as f64);
            }
            self.p.add_linear("11b", row, Relation::Eq);
        }
        Ok(ut)
    }

    fn transient(
        &mut self,
        m: BusId,
        model: &SlipStepModel,
        u_term: &[VarId],
        t_acc_max: f64,
    ) -> Result<Breakpoints> {
        let eps = self.cfg.stall_margin;
        let tau = model.time_scale();
        let kmax = model.k_max();
        let bp = Breakpoints::log_spaced(eps / tau, t_acc_max / tau, self.cfg.pwl_points, |x| 1.0 / x)?;
        let t_max = kmax as f64 * tau / eps;

        let mut node_curves = Vec::new();
        for np in self.net.node_protection.clone() {
            let flat = is_flat(&np.curve);
            let (cbp, ext) = curve_breakpoints(&np.curve, t_max)?;
            if ext && !flat {
                self.warnings.push(format!(
                    "under-voltage curve at bus {} ends before the reachable start time {t_max:.3} s; last value held",
                    np.bus
                ));
            }
            node_curves.push((np.bus, flat, np.curve.points[0].1, cbp));
        }
        let mut line_curves = Vec::new();
        for lp in self.net.line_protection.clone() {
            let li = self
                .net
                .line_between(lp.from, lp.to)
                .ok_or_else(|| Error::Model(format!("protected line {}-{} missing", lp.from, lp.to)))?;
            let line = &self.net.lines[li];
            let br = Branch::Line(line.from, line.to);
            let flat = is_flat(&lp.curve);
            let (cbp, ext) = curve_breakpoints(&lp.curve, t_max)?;
            if ext && !flat {
                self.warnings.push(format!(
                    "over-current curve on line {br} ends before the reachable start time {t_max:.3} s; last value held"
                ));
            }
            line_curves.push((br, flat, lp.curve.points[0].1, cbp));
        }

        let mut dts = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            let te = self.add(Symbol::TEle { k, motor: m }, 0.0, f64::INFINITY)?;
            self.p.add_linear(
                "12a",
                LinExpr::var(te).term(u_term[k - 1], -model.c[k - 1]),
                Relation::Eq,
            );
            let (lo, hi) = bp.domain();
            let inv = self.add(Symbol::InvDt { k, motor: m }, lo, hi)?;
            self.bound("12a");
            self.p.add_linear(
                "2",
                LinExpr::var(inv).scaled(tau).term(te, -1.0).plus(model.load(k - 1)),
                Relation::Eq,
            );
            let dt = self.pwl(Symbol::Dt { k, motor: m }, inv, &bp, 0)?;
            dts.push(dt);
            let tc = self.add(Symbol::TCum { k, motor: m }, 0.0, k as f64 * tau / eps)?;
            let mut row = LinExpr::var(tc);
            for &d in &dts {
                row.add_term(d, -1.0);
            }
            self.p.add_linear("3", row, Relation::Eq);

            for (bus, flat, y0, cbp) in &node_curves {
                let uv = self
                    .map
                    .get(&Symbol::U { node: Node::Bus(*bus), k, motor: m })
                    .expect("bus voltage exists");
                if *flat {
                    self.p.add_linear("12b", LinExpr::var(uv).plus(-y0), Relation::Ge);
                } else {
                    let lim = self.pwl(Symbol::UMin { bus: *bus, k, motor: m }, tc, cbp, 1)?;
                    self.p.add_linear("12b", LinExpr::var(uv).term(lim, -1.0), Relation::Ge);
                }
            }
            for (br, flat, y0, cbp) in &line_curves {
                let fv = self
                    .map
                    .get(&Symbol::F { branch: *br, k, motor: m })
                    .expect("line current exists");
                if *flat {
                    self.p.add_linear("12c", LinExpr::var(fv).plus(-y0), Relation::Le);
                } else {
                    let lim = self.pwl(Symbol::FMax { branch: *br, k, motor: m }, tc, cbp, 1)?;
                    self.p.add_linear("12c", LinExpr::var(fv).term(lim, -1.0), Relation::Le);
                }
            }
        }
        Ok(bp)
    }
}
