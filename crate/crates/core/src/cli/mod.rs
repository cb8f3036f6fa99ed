//! Command-line front end: scenario runs, plan simulation, exactness audit
//! and report regeneration, each leaving a hashed run manifest.

mod config;
mod manifest;
mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::RunConfig;
pub use manifest::{sha256_hex, write_atomic, FileRecord, RunDir, RunManifest, MANIFEST};
pub use report::{dg_refs_csv, energization_csv, summary_txt, voltages_csv, ComparisonDigest, SolutionFile};

use crate::error::{Error, Result};
use crate::mip::{build_model, check_exactness, slip_models, MipModel, StallCertificate};
use crate::netmodel::{BusId, Network, ScenarioInput};
use crate::simulate::{
    check_protection, compare_start, simulate_motor_start, validate_plan, ProtectionReport, SimTrace,
    StartComparison,
};
use crate::solve::{branch_and_bound, extract_plan, Incumbent, RestorationPlan, SearchStatus};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
#[repr(i32)]
pub enum ExitStatus {
    /// Proven optimal, and validated when requested.
    Success = 0,
    /// I/O, parse or model errors.
    Failure = 1,
    /// A limit stopped the search; the plan is the best incumbent, if any.
    IncumbentOnly = 2,
    Infeasible = 3,
    /// Simulation disagrees with the plan, a relay trips or a motor stalls.
    ValidationFailed = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "motorstart", version, about = "Transient-feasible load restoration with induction-motor starts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and solve the restoration program for a scenario.
    Solve(SolveArgs),
    /// Simulate the motor starts of an existing plan.
    Simulate(SimulateArgs),
    /// Audit a finished run: input hashes, plan decoding and relaxation exactness.
    Check(RunDirArgs),
    /// Regenerate the summary and plot-ready CSVs of a finished run.
    Report(RunDirArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulate every start of the plan and compare with the predictions.
    #[arg(long)]
    pub validate: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "time-limit-s")]
    pub time_limit_s: Option<f64>,
    /// Relative optimality gap.
    #[arg(long)]
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunDirArgs {
    /// Directory of a completed `solve` run.
    #[arg(long)]
    pub run: PathBuf,
}

/// Result of a command: exit status and a one-line description.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: ExitStatus,
    pub message: String,
}

impl Outcome {
    fn new(status: ExitStatus, message: impl Into<String>) -> Outcome {
        Outcome { status, message: message.into() }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::Failure.code() } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(o) => {
            println!("{}", o.message);
            o.status.code()
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitStatus::Failure.code()
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::Simulate(a) => simulate(a),
        Command::Check(a) => check(&a.run),
        Command::Report(a) => report(&a.run),
    }
}

struct Timer(Instant);

impl Timer {
    fn start() -> Timer {
        Timer(Instant::now())
    }

    fn lap(&mut self, m: &mut RunManifest, phase: &str) {
        *m.timings_s.entry(phase.to_string()).or_insert(0.0) += self.0.elapsed().as_secs_f64();
        self.0 = Instant::now();
    }
}

fn load_config(path: Option<&Path>) -> Result<(RunConfig, Option<(FileRecord, Vec<u8>)>)> {
    match path {
        Some(p) => {
            let (rec, bytes) = manifest::hash_input("config", p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|e| Error::schema("config", e.to_string()))?;
            Ok((RunConfig::from_json(&text)?, Some((rec, bytes))))
        }
        None => Ok((RunConfig::default(), None)),
    }
}

fn utf8(role: &str, bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| Error::schema(role, e.to_string()))
}

/// Loaded inputs of a scenario run.
pub struct RunInputs {
    pub network: Network,
    pub scenario: ScenarioInput,
    pub config: RunConfig,
    pub records: Vec<FileRecord>,
}

/// Reads and hashes network, scenario and optional config, applying the
/// command-line overrides.
pub fn load_inputs(args: &SolveArgs) -> Result<RunInputs> {
    let (mut config, cfg_rec) = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(t) = args.time_limit_s {
        config.solver.time_limit_s = Some(t);
    }
    if let Some(g) = args.gap {
        config.solver.rel_gap = g;
    }
    config.validate()?;
    let (net_rec, net_bytes) = manifest::hash_input("network", &args.network)?;
    let network = Network::from_json(&utf8("network", net_bytes)?)?;
    let (sc_rec, sc_bytes) = manifest::hash_input("scenario", &args.scenario)?;
    let scenario = ScenarioInput::from_json(&utf8("scenario", sc_bytes)?, &config.scenario_defaults)?;
    let mut records = vec![net_rec, sc_rec];
    records.extend(cfg_rec.map(|(r, _)| r));
    Ok(RunInputs { network, scenario, config, records })
}

pub fn build(inputs: &RunInputs) -> Result<MipModel> {
    let models = slip_models(&inputs.network, &inputs.scenario)?;
    let model = build_model(&inputs.network, &inputs.scenario, &models, &inputs.config.model)?;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    Ok(model)
}

#[derive(Serialize)]
struct Infeasibility<'a> {
    status: &'a str,
    certificate: Option<&'a StallCertificate>,
    message: String,
    warnings: &'a [String],
}

fn bus_kind(net: &Network) -> impl Fn(BusId) -> &'static str + '_ {
    move |b| {
        if net.motor_at(b).is_some() {
            "motor"
        } else if net.static_load_at(b).is_some() {
            "load"
        } else {
            "bus"
        }
    }
}

fn write_reports(
    rd: &mut RunDir,
    net: &Network,
    plan: &RestorationPlan,
    solution: Option<&SolutionFile>,
    comparison: Option<&ComparisonDigest>,
) -> Result<()> {
    let kinds = bus_kind(net);
    rd.write("report", "energization.csv", energization_csv(plan, &kinds).as_bytes())?;
    rd.write("report", "voltages.csv", voltages_csv(plan).as_bytes())?;
    rd.write("report", "dg_refs.csv", dg_refs_csv(plan).as_bytes())?;
    rd.write("report", "summary.txt", summary_txt(plan, solution, comparison).as_bytes())
}

fn write_traces(rd: &mut RunDir, traces: &[SimTrace]) -> Result<()> {
    for tr in traces {
        rd.write("trace", &format!("trace_{}.csv", tr.motor), tr.to_csv().as_bytes())?;
        rd.write("trace", &format!("line_trace_{}.csv", tr.motor), tr.line_csv().as_bytes())?;
    }
    Ok(())
}

fn digest<T: Serialize>(value: &T) -> Result<ComparisonDigest> {
    Ok(serde_json::from_value(serde_json::to_value(value)?)?)
}

/// `solve`: optimization, plan extraction, exactness report and optional
/// validation.
pub fn solve(args: &SolveArgs) -> Result<Outcome> {
    let mut timer = Timer::start();
    let inputs = load_inputs(args)?;
    let mut rd = RunDir::create(&args.out, RunManifest::new("solve", inputs.config.clone()))?;
    rd.manifest.inputs = inputs.records.clone();
    timer.lap(&mut rd.manifest, "load");

    let model = build(&inputs)?;
    rd.write_json("model", "model_stats.json", &model.stats)?;
    rd.write("model", "model_stats.txt", model.stats.to_string().as_bytes())?;
    timer.lap(&mut rd.manifest, "build");

    if let Some(cert) = &model.stall {
        let message = format!("infeasible: {cert}");
        rd.write_json(
            "infeasibility",
            "infeasibility.json",
            &Infeasibility { status: "infeasible", certificate: Some(cert), message: message.clone(), warnings: &model.warnings },
        )?;
        rd.finish("infeasible", ExitStatus::Infeasible.code())?;
        return Ok(Outcome::new(ExitStatus::Infeasible, message));
    }

    let cfg = &inputs.config.solver;
    let result = branch_and_bound(&model.program, &cfg.backend(), cfg);
    rd.write("search", "search_log.csv", result.log_csv().as_bytes())?;
    timer.lap(&mut rd.manifest, "solve");

    let inc = match (&result.status, &result.incumbent) {
        (SearchStatus::Infeasible, _) => {
            let message = "infeasible: no restoration plan satisfies the start constraints".to_string();
            rd.write_json(
                "infeasibility",
                "infeasibility.json",
                &Infeasibility { status: "infeasible", certificate: None, message: message.clone(), warnings: &model.warnings },
            )?;
            rd.finish("infeasible", ExitStatus::Infeasible.code())?;
            return Ok(Outcome::new(ExitStatus::Infeasible, message));
        }
        (SearchStatus::Unbounded, _) => return Err(Error::Model("relaxation is unbounded".into())),
        (_, None) => {
            let message = format!("no incumbent found within limits after {} nodes", result.nodes);
            rd.finish("no_solution", ExitStatus::IncumbentOnly.code())?;
            return Ok(Outcome::new(ExitStatus::IncumbentOnly, message));
        }
        (_, Some(inc)) => inc,
    };

    let plan = extract_plan(&model, inc)?;
    let exactness = check_exactness(&model, &inc.x);
    timer.lap(&mut rd.manifest, "extract");
    let status = match result.status {
        SearchStatus::Optimal => "optimal",
        _ => "incumbent",
    };
    let solution = SolutionFile {
        status: status.to_string(),
        objective: inc.objective,
        best_bound: result.best_bound,
        gap: result.gap(),
        nodes: result.nodes,
        relaxations: result.relaxations,
        x: inc.x.clone(),
    };
    rd.write_json("plan", "plan.json", &plan)?;
    rd.write_json("solution", "solution.json", &solution)?;
    rd.write_json("exactness", "exactness.json", &exactness)?;

    let mut exit = if result.status == SearchStatus::Optimal {
        ExitStatus::Success
    } else {
        ExitStatus::IncumbentOnly
    };
    let mut message = format!("{status}: objective {:.9}, {} starts, {}", inc.objective, plan.starts.len(), plan.exactness);
    let mut comparison = None;
    if args.validate {
        let (report, traces) = validate_plan(&model.net, &plan, &inputs.config.simulation, &inputs.config.validation)?;
        rd.write_json("validation", "comparison.json", &report)?;
        write_traces(&mut rd, &traces)?;
        timer.lap(&mut rd.manifest, "validate");
        if !report.pass {
            exit = ExitStatus::ValidationFailed;
            let failures: Vec<String> = report
                .starts
                .iter()
                .flat_map(|s| s.failures.iter().map(move |f| format!("motor {}: {f}", s.motor)))
                .collect();
            message = format!("validation failed: {}", failures.join("; "));
        } else {
            message.push_str(&format!("; validation pass (max deviation {:.4})", report.max_deviation));
        }
        comparison = Some(digest(&report)?);
    }
    write_reports(&mut rd, &model.net, &plan, Some(&solution), comparison.as_ref())?;
    timer.lap(&mut rd.manifest, "report");
    rd.finish(status, exit.code())?;
    Ok(Outcome::new(exit, message))
}

#[derive(Serialize)]
struct StartSimulation {
    motor: BusId,
    stalled: bool,
    settled: bool,
    accel_time_s: Option<f64>,
    end_time_s: f64,
    protection: ProtectionReport,
    comparison: Option<StartComparison>,
}

#[derive(Serialize)]
struct SimulationReport {
    starts: Vec<StartSimulation>,
    pass: bool,
}

/// `simulate`: integrates every start of a plan file and reports relay
/// trips, stalls and, when the plan carries predictions, deviations.
pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let mut timer = Timer::start();
    let (config, cfg_rec) = load_config(args.config.as_deref())?;
    let (net_rec, net_bytes) = manifest::hash_input("network", &args.network)?;
    let net = Network::from_json(&utf8("network", net_bytes)?)?;
    let (plan_rec, plan_bytes) = manifest::hash_input("plan", &args.plan)?;
    let plan: RestorationPlan = serde_json::from_slice(&plan_bytes)?;
    let mut rd = RunDir::create(&args.out, RunManifest::new("simulate", config.clone()))?;
    rd.manifest.inputs = vec![net_rec, plan_rec];
    rd.manifest.inputs.extend(cfg_rec.map(|(r, _)| r));
    timer.lap(&mut rd.manifest, "load");

    let mut starts = Vec::new();
    let mut traces = Vec::new();
    let mut problems = Vec::new();
    for st in &plan.starts {
        if st.t >= plan.horizon.len() {
            return Err(Error::schema("starts", format!("motor {} starts outside the horizon", st.motor)));
        }
        let trace = simulate_motor_start(&net, &plan, st.motor, &config.simulation)?;
        let protection = check_protection(&trace, &net);
        for e in protection.trips() {
            problems.push(format!(
                "motor {}: {} trips at {:.3} s",
                st.motor,
                e.element,
                e.first_violation.unwrap_or(f64::NAN)
            ));
        }
        if trace.stalled {
            problems.push(format!("motor {}: stalls", st.motor));
        }
        let comparison = (!st.slips.is_empty() && st.accel_time_s > 0.0)
            .then(|| compare_start(&net, &plan, st.motor, &trace, &config.validation));
        if let Some(c) = &comparison {
            if c.max_deviation > config.validation.voltage_tol
                || c.accel_ratio.is_none_or(|r| (r - 1.0).abs() > config.validation.accel_tol)
            {
                problems.push(format!("motor {}: trajectory deviates from the plan's predictions", st.motor));
            }
        }
        starts.push(StartSimulation {
            motor: st.motor,
            stalled: trace.stalled,
            settled: trace.settled,
            accel_time_s: trace.accel_time_s,
            end_time_s: trace.end_time,
            protection,
            comparison,
        });
        traces.push(trace);
    }
    timer.lap(&mut rd.manifest, "simulate");
    let pass = problems.is_empty();
    rd.write_json("simulation", "simulation.json", &SimulationReport { starts, pass })?;
    write_traces(&mut rd, &traces)?;
    timer.lap(&mut rd.manifest, "write");
    if pass {
        rd.finish("pass", 0)?;
        Ok(Outcome::new(ExitStatus::Success, format!("{} starts simulated, no trips", plan.starts.len())))
    } else {
        rd.finish("fail", ExitStatus::ValidationFailed.code())?;
        Ok(Outcome::new(ExitStatus::ValidationFailed, format!("trip report: {}", problems.join("; "))))
    }
}

fn solve_args_from(m: &RunManifest, run: &Path) -> Result<SolveArgs> {
    let path = |role: &str| {
        m.input(role)
            .map(|r| r.path.clone())
            .ok_or_else(|| Error::schema(MANIFEST, format!("no {role} input recorded")))
    };
    Ok(SolveArgs {
        network: path("network")?,
        scenario: path("scenario")?,
        config: m.input("config").map(|r| r.path.clone()),
        out: run.to_path_buf(),
        validate: false,
        seed: Some(m.config.seed),
        time_limit_s: m.config.solver.time_limit_s,
        gap: Some(m.config.solver.rel_gap),
    })
}

/// `check`: re-hashes inputs and outputs, rebuilds the model, re-decodes the
/// stored solution and audits relaxation exactness.
pub fn check(run: &Path) -> Result<Outcome> {
    let m = RunManifest::load(run)?;
    if m.command != "solve" {
        return Err(Error::schema(MANIFEST, format!("run was produced by `{}`, not `solve`", m.command)));
    }
    m.verify_inputs()?;
    m.verify_outputs(run)?;
    let plan_bytes = m.read_output(run, "plan.json")?;
    let solution: SolutionFile = serde_json::from_slice(&m.read_output(run, "solution.json")?)?;
    let inputs = load_inputs(&solve_args_from(&m, run)?)?;
    if inputs.config != m.config {
        return Err(Error::schema(MANIFEST, "recorded configuration does not match the inputs"));
    }
    let model = build(&inputs)?;
    if solution.x.len() != model.program.vars.len() {
        return Err(Error::Decode(format!(
            "solution has {} values, model has {} variables",
            solution.x.len(),
            model.program.vars.len()
        )));
    }
    let inc = Incumbent { x: solution.x.clone(), objective: solution.objective };
    let plan = extract_plan(&model, &inc)?;
    let stored: serde_json::Value = serde_json::from_slice(&plan_bytes)?;
    if serde_json::to_value(&plan)? != stored {
        return Err(Error::Decode("plan.json does not match the decoded solution".into()));
    }
    let report = check_exactness(&model, &solution.x);
    let msg = format!(
        "{}; max line residual {:.3e}, max DG residual {:.3e}, min voltage margin {:.4e}, min current margin {:.4e}",
        report.verdict,
        report.max_line_residual,
        report.max_dg_residual,
        report.min_voltage_margin,
        report.min_current_margin
    );
    let status = if report.residuals_within_tolerance() {
        ExitStatus::Success
    } else {
        ExitStatus::ValidationFailed
    };
    Ok(Outcome::new(status, msg))
}

/// `report`: rewrites the summary and CSV files of a run from its plan.
pub fn report(run: &Path) -> Result<Outcome> {
    let mut timer = Timer::start();
    let m = RunManifest::load(run)?;
    let plan: RestorationPlan = serde_json::from_slice(&m.read_output(run, "plan.json")?)?;
    let solution: Option<SolutionFile> = match m.output("solution.json") {
        Some(_) => Some(serde_json::from_slice(&m.read_output(run, "solution.json")?)?),
        None => None,
    };
    let comparison: Option<ComparisonDigest> = match m.output("comparison.json") {
        Some(_) => Some(serde_json::from_slice(&m.read_output(run, "comparison.json")?)?),
        None => None,
    };
    let net_rec = m
        .input("network")
        .ok_or_else(|| Error::schema(MANIFEST, "no network input recorded"))?;
    let net = Network::from_path(&net_rec.path)?;
    let (outcome, code) = (m.outcome.clone(), m.exit_code);
    let mut rd = RunDir { dir: run.to_path_buf(), manifest: m };
    write_reports(&mut rd, &net, &plan, solution.as_ref(), comparison.as_ref())?;
    timer.lap(&mut rd.manifest, "report");
    rd.finish(&outcome, code)?;
    Ok(Outcome::new(
        ExitStatus::Success,
        format!(
            "report written to {}: {} buses, {} shifted, {} starts",
            run.display(),
            plan.l.len(),
            plan.shifts.len(),
            plan.starts.len()
        ),
    ))
}
