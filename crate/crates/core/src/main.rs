use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use robust_lwr::ctm::{simulate_network, Controls, CtmOptions};
use robust_lwr::lax_hopf::density_field;
use robust_lwr::link_models::{
    build_max_outflow_lp, build_throughput_lp, build_tradeoff_lp, sweep_to_csv, sweep_uncertainty, LinkPlan, SmoothingSpec, TradeoffSpec,
};
use robust_lwr::lp::{solve_lp, write_lp, LinearProgram, LpSolution, LpStatus};
use robust_lwr::monte_carlo::{compare_relaxed_vs_mc, comparison_to_csv};
use robust_lwr::network::{build_network_lp, program_size, Network, NetworkPlan};
use robust_lwr::scenario::{parse_scenario, ModelKind, Scenario};
use robust_lwr::value_conditions::{BoundaryFlows, InitialDensityProfile};
use robust_lwr::Error;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_ITERATIONS: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

#[derive(Parser)]
#[command(name = "robust-lwr", version, about = "Robust boundary control for LWR freeway links and networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the single-link program selected in the scenario.
    SolveLink(Common),
    /// Solve the network program.
    SolveNetwork(Common),
    /// Replay network plans in the cell transmission model under shifted densities.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Realized density = mean + shift * spread on every link with a spread.
        #[arg(long, default_value_t = 1.0)]
        shift: f64,
        /// Plan with all spreads set to zero.
        #[arg(long)]
        nominal: bool,
    },
    /// Compare relaxed and sampled chance constraints on a grid.
    MonteCarlo(Common),
    /// Average optimal inflow over a (sigma, confidence) grid.
    Sweep(Common),
    /// Density grid of the optimal single-link plan.
    Field {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        nt: usize,
        #[arg(long, default_value_t = 50)]
        nx: usize,
    },
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write the program in LP text format before solving.
    #[arg(long)]
    lp_export: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
    Iterations(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::IterationLimit { .. } => Failure::Iterations(e.to_string()),
            Error::ScenarioParse { .. } | Error::ScenarioInvalid(_) | Error::LpParse { .. } | Error::InvalidParameters(_) | Error::Domain { .. } => {
                Failure::Input(e.to_string())
            }
            other => Failure::Internal(other.to_string()),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let result = match cli.command {
        Command::SolveLink(c) => solve_link(&c),
        Command::SolveNetwork(c) => solve_network(&c),
        Command::Simulate { common, shift, nominal } => simulate(&common, shift, nominal),
        Command::MonteCarlo(c) => monte_carlo(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Field { common, nt, nx } => field(&common, nt, nx),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (code, msg) = match f {
                Failure::Input(m) => (EXIT_INPUT, m),
                Failure::Iterations(m) => (EXIT_ITERATIONS, m),
                Failure::Internal(m) => (EXIT_INTERNAL, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    parent.map_or(Ok(()), fs::create_dir_all)
        .and_then(|_| fs::write(&tmp, contents)).and_then(|_| fs::rename(&tmp, path)).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        write_atomic(&self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn summary(mut self, mut summary: Value) -> Result<(), Failure> {
        summary["files"] = json!(self.files);
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Internal(e.to_string()))? + "\n";
        self.write("summary.json", &text)?;
        println!("{text}");
        Ok(())
    }
}

fn load(c: &Common) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(&c.scenario).map_err(|e| Failure::Input(format!("{}: {e}", c.scenario.display())))?;
    let mut sc = parse_scenario(&text)?;
    if let Some(s) = c.sigma {
        sc.set_sigma(s);
    }
    if let Some(v) = c.confidence {
        sc.model.confidence = v;
    }
    if let Some(v) = c.lambda {
        sc.model.lambda = Some(v);
    }
    if let Some(v) = c.h {
        sc.model.h = Some(v);
    }
    if let Some(v) = c.eta {
        sc.model.eta = Some(v);
    }
    if let Some(v) = c.n_max {
        sc.model.n_max = v;
    }
    if let (Some(seed), Some(mc)) = (c.seed, sc.monte_carlo.as_mut()) {
        mc.seed = seed;
    }
    sc.validate()?;
    Ok(sc)
}

fn require_link(sc: &Scenario) -> Result<(), Failure> {
    if sc.model.kind == ModelKind::Network {
        return Err(Failure::Input("this command needs a single-link scenario".into()));
    }
    Ok(())
}

fn require_network(sc: &Scenario) -> Result<(), Failure> {
    if sc.model.kind != ModelKind::Network {
        return Err(Failure::Input("this command needs a network scenario".into()));
    }
    Ok(())
}

fn export(c: &Common, lp: &LinearProgram) -> Result<(), Failure> {
    if let Some(p) = &c.lp_export {
        write_atomic(p, &write_lp(lp))?;
    }
    Ok(())
}

fn status_code(status: LpStatus) -> u8 {
    match status {
        LpStatus::Optimal => 0,
        LpStatus::Infeasible => EXIT_INFEASIBLE,
        LpStatus::Unbounded => EXIT_INTERNAL,
    }
}

fn status_name(status: LpStatus) -> &'static str {
    match status {
        LpStatus::Optimal => "optimal",
        LpStatus::Infeasible => "infeasible",
        LpStatus::Unbounded => "unbounded",
    }
}

fn link_program(sc: &Scenario) -> Result<LinearProgram, Failure> {
    let case = sc.link_case()?;
    Ok(match sc.model.kind {
        ModelKind::Throughput => build_throughput_lp(&case),
        ModelKind::MaxOutflow => build_max_outflow_lp(&case, SmoothingSpec::new(sc.model.h.unwrap_or(SmoothingSpec::default().h))?),
        ModelKind::Tradeoff => build_tradeoff_lp(&case, TradeoffSpec::new(sc.model.lambda.unwrap_or(0.5))?),
        ModelKind::Network => unreachable!(),
    })
}

fn solve_link_program(c: &Common, sc: &Scenario) -> Result<(LinearProgram, LpSolution, f64, f64), Failure> {
    let t0 = Instant::now();
    let lp = link_program(sc)?;
    let build = t0.elapsed().as_secs_f64();
    export(c, &lp)?;
    let t1 = Instant::now();
    let sol = solve_lp(&lp, &sc.solver)?;
    Ok((lp, sol, build, t1.elapsed().as_secs_f64()))
}

fn solve_link(c: &Common) -> Outcome {
    let sc = load(c)?;
    require_link(&sc)?;
    let case = sc.link_case()?;
    let (lp, sol, build, solve) = solve_link_program(c, &sc)?;
    let mut out = Output::new(&c.out_dir)?;
    let mut summary = json!({
        "command": "solve-link",
        "model": format!("{:?}", sc.model.kind),
        "status": status_name(sol.status),
        "variables": lp.num_variables(),
        "rows": lp.rows.len(),
        "iterations": sol.iterations,
        "timings_s": { "build": build, "solve": solve },
    });
    if sol.status == LpStatus::Optimal {
        let plan = LinkPlan::from_solution(&lp, &sol, &case.disc);
        out.write("link_plan.csv", &plan.to_csv(case.disc.dt))?;
        summary["objective"] = json!(sol.objective);
        summary["total_outflow_veh"] = json!(plan.total_outflow);
        summary["avg_inflow_veh_per_s"] = json!(plan.avg_inflow);
        summary["level_of_service_veh"] = json!(plan.level_of_service);
        summary["max_violation"] = json!(sol.max_violation);
    }
    out.summary(summary)?;
    Ok(status_code(sol.status))
}

fn solve_network_plan(c: &Common, net: &Network, sc: &Scenario) -> Result<(Value, Option<NetworkPlan>, LpStatus), Failure> {
    let spec = sc.network_objective()?;
    let t0 = Instant::now();
    let (lp, layout) = build_network_lp(net, &spec)?;
    let build = t0.elapsed().as_secs_f64();
    export(c, &lp)?;
    let size = program_size(&lp, &layout);
    let t1 = Instant::now();
    let sol = solve_lp(&lp, &sc.solver)?;
    let mut summary = json!({
        "status": status_name(sol.status),
        "variables": size.variables,
        "control_variables": size.control_variables,
        "rows": size.rows,
        "iterations": sol.iterations,
        "timings_s": { "build": build, "solve": t1.elapsed().as_secs_f64() },
    });
    let plan = (sol.status == LpStatus::Optimal).then(|| NetworkPlan::from_solution(&layout, &sol));
    if plan.is_some() {
        summary["objective"] = json!(sol.objective);
        summary["max_violation"] = json!(sol.max_violation);
    }
    Ok((summary, plan, sol.status))
}

fn solve_network(c: &Common) -> Outcome {
    let sc = load(c)?;
    require_network(&sc)?;
    let net = sc.network()?;
    let (mut summary, plan, status) = solve_network_plan(c, &net, &sc)?;
    summary["command"] = json!("solve-network");
    let mut out = Output::new(&c.out_dir)?;
    if let Some(plan) = plan {
        out.write("network_plan.csv", &plan.to_csv(&net))?;
    }
    out.summary(summary)?;
    Ok(status_code(status))
}

fn simulate(c: &Common, shift: f64, nominal: bool) -> Outcome {
    let sc = load(c)?;
    require_network(&sc)?;
    // Spreads for the realization come from the scenario regardless of the planning mode.
    let mut spread_sc = sc.clone();
    spread_sc.model.robust = true;
    let spread_net = spread_sc.network()?;
    let mut plan_sc = sc.clone();
    if nominal {
        plan_sc.model.robust = false;
    }
    let net = plan_sc.network()?;
    let (mut summary, plan, status) = solve_network_plan(c, &net, &plan_sc)?;
    summary["command"] = json!("simulate");
    let mut out = Output::new(&c.out_dir)?;
    let Some(plan) = plan else {
        out.summary(summary)?;
        return Ok(status_code(status));
    };
    let realized: Vec<Vec<f64>> = spread_net
        .links
        .iter()
        .map(|l| l.chance.rho_mean.iter().zip(&l.chance.rho_std).map(|(m, s)| m + shift * s).collect())
        .collect();
    let attach = net.attachments();
    let entry_inflow = (0..net.links.len()).map(|l| (!attach[l].0).then(|| plan.q_in[l].clone())).collect();
    let controls = Controls { entry_inflow, on_ramp: plan.q_on.clone() };
    let t0 = Instant::now();
    let res = simulate_network(&spread_net, &realized, &controls, CtmOptions::default())?;
    let mut peaks = serde_json::Map::new();
    for (l, state) in net.links.iter().zip(&res.links) {
        out.write(&format!("density_{}.csv", l.name), &state.to_csv())?;
        peaks.insert(l.name.clone(), json!(state.max_density() / l.fd.rho_m));
    }
    out.write("network_plan.csv", &plan.to_csv(&net))?;
    summary["planning"] = json!(if nominal { "nominal" } else { "robust" });
    summary["shift"] = json!(shift);
    summary["peak_density_over_jam"] = Value::Object(peaks);
    summary["entry_queue_veh"] = json!(res.entry_queue);
    summary["ramp_queue_veh"] = json!(res.ramp_queue);
    summary["conservation_error_veh"] = json!(res.conservation_error());
    summary["timings_s"]["simulate"] = json!(t0.elapsed().as_secs_f64());
    out.summary(summary)?;
    Ok(0)
}

fn monte_carlo(c: &Common) -> Outcome {
    let sc = load(c)?;
    require_link(&sc)?;
    let mc = sc.monte_carlo.clone().ok_or_else(|| Failure::Input("scenario has no [monte_carlo] section".into()))?;
    let case = sc.link_case()?;
    let t0 = Instant::now();
    let cells = compare_relaxed_vs_mc(&case, &mc.sigmas, &mc.confidences, mc.samples, mc.seed, &sc.solver)?;
    let mut out = Output::new(&c.out_dir)?;
    out.write("mc_comparison.csv", &comparison_to_csv(&cells))?;
    let max_err = cells.iter().filter_map(|c| c.pct_error).fold(0.0f64, f64::max);
    out.summary(json!({
        "command": "monte-carlo",
        "status": "ok",
        "samples": mc.samples,
        "seed": mc.seed,
        "cells": cells.len(),
        "max_pct_error": max_err,
        "timings_s": { "total": t0.elapsed().as_secs_f64() },
    }))?;
    Ok(0)
}

fn sweep(c: &Common) -> Outcome {
    let sc = load(c)?;
    require_link(&sc)?;
    let grid = sc.sweep.clone().unwrap_or(robust_lwr::scenario::SweepSection {
        sigmas: vec![0.003, 0.006, 0.009, 0.012],
        confidences: vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.975],
    });
    let case = sc.link_case()?;
    let smoothing = SmoothingSpec::new(sc.model.h.unwrap_or(SmoothingSpec::default().h))?;
    let t0 = Instant::now();
    let cells = sweep_uncertainty(&case, &grid.sigmas, &grid.confidences, smoothing, &sc.solver)?;
    let mut out = Output::new(&c.out_dir)?;
    out.write("sweep.csv", &sweep_to_csv(&cells))?;
    out.summary(json!({
        "command": "sweep",
        "status": "ok",
        "cells": cells.len(),
        "infeasible_cells": cells.iter().filter(|c| c.status == LpStatus::Infeasible).count(),
        "timings_s": { "total": t0.elapsed().as_secs_f64() },
    }))?;
    Ok(0)
}

fn field(c: &Common, nt: usize, nx: usize) -> Outcome {
    let sc = load(c)?;
    require_link(&sc)?;
    let case = sc.link_case()?;
    let (lp, sol, _, _) = solve_link_program(c, &sc)?;
    let mut out = Output::new(&c.out_dir)?;
    if sol.status != LpStatus::Optimal {
        out.summary(json!({ "command": "field", "status": status_name(sol.status) }))?;
        return Ok(status_code(sol.status));
    }
    let plan = LinkPlan::from_solution(&lp, &sol, &case.disc);
    // Plans are feasible up to solver tolerance; clip tiny excursions past capacity.
    let clip = |v: &[f64]| v.iter().map(|q| q.clamp(0.0, case.fd.capacity)).collect::<Vec<_>>();
    let profile = InitialDensityProfile::new(case.chance.rho_mean.clone(), &case.fd)?;
    let flows = BoundaryFlows::new(clip(&plan.q_in), clip(&plan.q_out), &case.fd)?;
    let grid = density_field(&case.fd, &profile, &flows, &case.disc, nt, nx)?;
    out.write("density_field.csv", &grid.to_csv())?;
    out.summary(json!({
        "command": "field",
        "status": "optimal",
        "objective": sol.objective,
        "nt": nt,
        "nx": nx,
    }))?;
    Ok(0)
}
