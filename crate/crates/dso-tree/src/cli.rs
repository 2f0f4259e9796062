//! Command-line front end: scenario ingestion, the
//! simulate/transform/solve/verify pipeline, and artifact emission.
//!
//! Exit codes: 0 success, 2 parse error, 3 validation error, 4 infeasible
//! instance, 5 a requested check failed. Errors are emitted as structured
//! JSON on stdout. Set `DSO_TREE_LOG` to control log verbosity.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num::Signed;
use serde_json::json;

use crate::error::{Error, Result};
use crate::net::{scenario_from_json, Scenario};
use crate::rat::{parse_rat, Rat};
use crate::report;
use crate::sim::{check_feasibility, eulerian_cost, lagrangian_view, simulate, total_cost};
use crate::solver::{brute_force_lp, check_optimality, refine_study, solve};
use crate::transform::{transform_with_padding, verify_nonexistence};

const CHECK_FAILED: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "dso-tree",
    version,
    about = "System-optimal departure scheduling on tree networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file's structure, capacities and horizon
    Validate(CommonArgs),
    /// Run the point-queue model on the scenario's inflow profiles
    Simulate(CommonArgs),
    /// Rebuild the simulated state without queues and compare costs
    Transform(CommonArgs),
    /// Solve the departure scheduling problem exactly
    Solve(CommonArgs),
    /// Solve, then verify the optimality conditions of the result
    CheckOc(CommonArgs),
    /// Sample random feasible states and verify queue elimination
    Verify(VerifyArgs),
    /// Solve at several grid steps and tabulate the objectives
    Refine(RefineArgs),
    /// Exhaustively enumerate the optimum on a small integral instance
    BruteForce(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario JSON file
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory for artifacts
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the scenario's grid step (rational or decimal)
    #[arg(long)]
    pub dt: Option<String>,
    /// Exact mode: all checks use zero tolerance
    #[arg(long)]
    pub exact: bool,
    /// Comparison tolerance for checks (ignored with --exact)
    #[arg(long, default_value = "1e-9")]
    pub tol: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of random states to sample
    #[arg(long, default_value_t = 100)]
    pub n_samples: u64,
    /// Seed for the sample generator
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated grid steps, e.g. 0.5,0.25,0.125
    #[arg(long, value_delimiter = ',')]
    pub dt_list: Vec<String>,
}

impl CommonArgs {
    fn load_scenario(&self) -> Result<Scenario> {
        let text = fs::read_to_string(&self.scenario)?;
        let mut scenario = scenario_from_json(&text)?;
        if let Some(dt) = &self.dt {
            scenario.dt = parse_rat(dt)?;
            scenario.validate()?;
        }
        Ok(scenario)
    }

    fn tolerance(&self) -> Result<Rat> {
        if self.exact {
            Ok(Rat::from_integer(0.into()))
        } else {
            let tol = parse_rat(&self.tol)?;
            if tol < Rat::from_integer(0.into()) {
                return Err(Error::Value("tolerance must be >= 0".into()));
            }
            Ok(tol)
        }
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        let Some(dir) = &self.out else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), content)?;
        Ok(())
    }
}

/// Parses argv, runs and converts the outcome into an exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DSO_TREE_LOG")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            let payload = json!({
                "error": {
                    "class": err.class(),
                    "message": err.to_string(),
                    "exit_code": err.exit_code(),
                }
            });
            println!("{}", report::to_canonical_json(&payload));
            err.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Transform(args) => cmd_transform(args),
        Command::Solve(args) => cmd_solve(args),
        Command::CheckOc(args) => cmd_check_oc(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Refine(args) => cmd_refine(args),
        Command::BruteForce(args) => cmd_brute_force(args),
    }
}

fn require_inflows(scenario: &Scenario) -> Result<Vec<crate::curve::Step>> {
    scenario.inflows.clone().ok_or_else(|| {
        Error::Value("scenario carries no \"inflows\" profiles; this command needs them".into())
    })
}

fn cmd_validate(args: &CommonArgs) -> Result<i32> {
    let scenario = args.load_scenario()?;
    let tol = args.tolerance()?;
    let net = &scenario.net;
    let links: Vec<_> = (1..=net.len())
        .map(|i| {
            json!({
                "id": i,
                "parent": net.parent(i),
                "mu": report::num_json(net.capacity_ref(i)),
                "d": report::num_json(net.free_flow(i)),
                "Q": report::num_json(&scenario.demand[i - 1]),
            })
        })
        .collect();
    let mut payload = json!({
        "nodes": net.len(),
        "links": links,
        "horizon": [report::num_json(&scenario.t_start), report::num_json(&scenario.t_end)],
        "dt": report::num_json(&scenario.dt),
        "slots": scenario.slots(),
        "structure_ok": true,
        "horizon_admissible": true,
    });
    let mut code = 0;
    if scenario.inflows.is_some() {
        let inflows = require_inflows(&scenario)?;
        let state = simulate(&scenario, &inflows)?;
        let view = lagrangian_view(&scenario, &state)?;
        let feas = check_feasibility(&scenario, &view, &tol);
        if !feas.pass {
            code = CHECK_FAILED;
        }
        payload["feasibility"] = serde_json::to_value(&feas).expect("report serializes");
    }
    let text = report::to_canonical_json(&payload);
    args.write("validate.json", &text)?;
    print!("{text}");
    Ok(code)
}

fn cmd_simulate(args: &CommonArgs) -> Result<i32> {
    let scenario = args.load_scenario()?;
    let tol = args.tolerance()?;
    let inflows = require_inflows(&scenario)?;
    let state = simulate(&scenario, &inflows)?;
    let view = lagrangian_view(&scenario, &state)?;
    let feas = check_feasibility(&scenario, &view, &tol);
    let lagr = total_cost(&scenario, &view);
    let euler = eulerian_cost(&scenario, &state);
    let payload = json!({
        "cost": report::breakdown_json(&lagr),
        "cost_eulerian": report::breakdown_json(&euler),
        "accountings_agree": lagr == euler,
        "max_queue": report::num_json(&state.max_queue()),
        "feasibility": serde_json::to_value(&feas).expect("report serializes"),
    });
    let style = report::NumberStyle::from_exact_flag(args.exact);
    args.write(
        "state.csv",
        &report::state_csv(&scenario, &state, &view, style),
    )?;
    let text = report::to_canonical_json(&payload);
    args.write("costs.json", &text)?;
    print!("{text}");
    Ok(if feas.pass && lagr == euler {
        0
    } else {
        CHECK_FAILED
    })
}

fn cmd_transform(args: &CommonArgs) -> Result<i32> {
    let scenario = args.load_scenario()?;
    let inflows = require_inflows(&scenario)?;
    let state = simulate(&scenario, &inflows)?;
    let (padded, result) = transform_with_padding(&scenario, &state)?;
    let original_view = lagrangian_view(&padded, &state)?;
    let schedule_delta = &result.transformed_cost.schedule - &result.original_cost.schedule;
    let identity_ok = result.cost_delta == result.predicted_delta
        && !result.cost_delta.is_positive()
        && schedule_delta == Rat::from_integer(0.into())
        && result.transformed.is_queue_free();
    let payload = json!({
        "original_cost": report::breakdown_json(&result.original_cost),
        "transformed_cost": report::breakdown_json(&result.transformed_cost),
        "cost_delta": report::num_json(&result.cost_delta),
        "predicted_delta": report::num_json(&result.predicted_delta),
        "schedule_delta": report::num_json(&schedule_delta),
        "queue_free": result.transformed.is_queue_free(),
        "max_q_star_violation": report::num_json(&result.max_q_star_violation),
        "checks_pass": identity_ok,
    });
    let style = report::NumberStyle::from_exact_flag(args.exact);
    args.write(
        "original_state.csv",
        &report::state_csv(&padded, &state, &original_view, style),
    )?;
    args.write(
        "transformed_state.csv",
        &report::state_csv(
            &padded,
            &result.transformed,
            &result.transformed_view,
            style,
        ),
    )?;
    let text = report::to_canonical_json(&payload);
    args.write("transform.json", &text)?;
    print!("{text}");
    Ok(if identity_ok { 0 } else { CHECK_FAILED })
}

fn cmd_solve(args: &CommonArgs) -> Result<i32> {
    let scenario = args.load_scenario()?;
    let sol = solve(&scenario)?;
    let style = report::NumberStyle::from_exact_flag(args.exact);
    args.write(
        "flows.csv",
        &report::solution_flows_csv(&scenario, &sol, style),
    )?;
    args.write(
        "prices.csv",
        &report::solution_prices_csv(&scenario, &sol, style),
    )?;
    let text = report::to_canonical_json(&report::solution_summary_json(&sol, args.exact));
    args.write("summary.json", &text)?;
    print!("{text}");
    Ok(0)
}

fn cmd_check_oc(args: &CommonArgs) -> Result<i32> {
    let scenario = args.load_scenario()?;
    let tol = args.tolerance()?;
    let sol = solve(&scenario)?;
    let oc = check_optimality(&scenario, &sol, &tol);
    let payload = json!({
        "objective": report::num_json(&sol.objective),
        "optimality": serde_json::to_value(&oc).expect("report serializes"),
    });
    let text = report::to_canonical_json(&payload);
    args.write("oc.json", &text)?;
    print!("{text}");
    Ok(if oc.pass { 0 } else { CHECK_FAILED })
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let scenario = args.common.load_scenario()?;
    let tol = args.common.tolerance()?;
    let report_data = verify_nonexistence(&scenario, args.n_samples, args.seed, &tol)?;
    let text =
        report::to_canonical_json(&serde_json::to_value(&report_data).expect("report serializes"));
    args.common.write("verification.json", &text)?;
    print!("{text}");
    Ok(if report_data.summary.pass {
        0
    } else {
        CHECK_FAILED
    })
}

fn cmd_refine(args: &RefineArgs) -> Result<i32> {
    let scenario = args.common.load_scenario()?;
    let dts = args
        .dt_list
        .iter()
        .map(|s| parse_rat(s))
        .collect::<Result<Vec<_>>>()?;
    let table = refine_study(&scenario, &dts)?;
    let rows: Vec<_> = table
        .iter()
        .map(|(dt, obj)| json!({ "dt": report::num_json(dt), "objective": report::num_json(obj) }))
        .collect();
    let payload = json!({ "table": rows });
    args.common
        .write("refine.csv", &report::refine_csv(&table))?;
    let text = report::to_canonical_json(&payload);
    args.common.write("refine.json", &text)?;
    print!("{text}");
    Ok(0)
}

fn cmd_brute_force(args: &CommonArgs) -> Result<i32> {
    let scenario = args.load_scenario()?;
    let (objective, _) = brute_force_lp(&scenario)?;
    let payload = json!({ "objective": report::num_json(&objective) });
    let text = report::to_canonical_json(&payload);
    args.write("brute_force.json", &text)?;
    print!("{text}");
    Ok(0)
}
