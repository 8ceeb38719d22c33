//! Command-line frontend: parse a problem config, run the solver, the
//! brute-force verifier, the reachability engine, or the audit, and emit
//! machine-readable artifacts.
//!
//! Exit codes: 0 success, 2 infeasible under `--strict` (or an infeasible
//! audit), 64 config error, 65 enumeration cap exceeded.

mod config;
mod output;

use budget_dpp::audit::{exact_audit, monte_carlo_audit};
use budget_dpp::ext::{fmt_rat, Ext, Rat};
use budget_dpp::lattice::{PathPrefix, StoppingRule};
use budget_dpp::oracle::{
    oracle_min_max, oracle_value_from_profiles, strategy_profiles, supinf_supsup_check,
    OracleBudget, OracleError,
};
use budget_dpp::problems::reachability_sets;
use budget_dpp::solver::{extract_policy, solve, BudgetGrid, GridMode, SolveOptions, SolverError};
use clap::{Args, Parser, Subcommand};
use config::{parse_rat, LoadedProblem};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_CONFIG: u8 = 64;
const EXIT_CAP: u8 = 65;

#[derive(Parser)]
#[command(
    name = "budget-dpp",
    about = "Expectation-constrained stochastic control on scenario lattices",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the constraint level from the config.
    #[arg(long)]
    m: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the instance: value surface, policy, and summary.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Budget grid: "auto" or a comma-separated level list.
        #[arg(long, default_value = "auto")]
        grid: String,
        /// Exit 2 when the instance is infeasible at the requested level.
        #[arg(long)]
        strict: bool,
    },
    /// Run the verification battery (solver vs oracle vs both DPP lines).
    Verify {
        #[command(flatten)]
        common: Common,
        /// Stopping rule: none | terminal | a step index | hit:x<axis><op><value>
        /// with op one of >=, <= (e.g. hit:x0>=1).
        #[arg(long, default_value = "none")]
        tau: String,
    },
    /// Compute reachability sets for the target schedule.
    Reach {
        #[command(flatten)]
        common: Common,
    },
    /// Audit the extracted policy: exact and sampled realized costs.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo sample count (0 = exact audit only).
        #[arg(long, default_value_t = 0)]
        samples: u64,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Brute-force oracle value at the configured level.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let code = match e {
            SolverError::CapExceeded { .. } => EXIT_CAP,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let code = match &e {
            OracleError::CapExceeded { .. }
            | OracleError::Solver(SolverError::CapExceeded { .. }) => EXIT_CAP,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    budget_dpp::configure_threads_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Solve {
            common,
            grid,
            strict,
        } => cmd_solve(common, grid, strict),
        Command::Verify { common, tau } => cmd_verify(common, tau),
        Command::Reach { common } => cmd_reach(common),
        Command::Audit {
            common,
            samples,
            seed,
        } => cmd_audit(common, samples, seed),
        Command::Oracle { common } => cmd_oracle(common),
    }
}

fn load(common: &Common) -> Result<(LoadedProblem, Rat), Failure> {
    let problem = config::load_path(&common.config)?;
    let level = match &common.m {
        Some(text) => parse_rat(text)?,
        None => problem.budget.clone(),
    };
    Ok((problem, level))
}

fn write_artifact(dir: &PathBuf, name: &str, content: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn parse_grid(spec: &str, problem: &LoadedProblem) -> Result<Option<BudgetGrid>, Failure> {
    if spec == "auto" {
        return Ok(problem.grid.clone());
    }
    let levels = spec
        .split(',')
        .map(|piece| parse_rat(piece).map_err(Failure::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(
        BudgetGrid::from_levels(levels, GridMode::Restricted).map_err(Failure::from)?,
    ))
}

fn parse_tau(spec: &str, horizon: usize) -> Result<StoppingRule, Failure> {
    match spec {
        "none" => Ok(StoppingRule::AtStep(0)),
        "terminal" => Ok(StoppingRule::AtStep(horizon)),
        other => {
            if let Ok(step) = other.parse::<usize>() {
                return Ok(StoppingRule::AtStep(step));
            }
            let Some(rest) = other.strip_prefix("hit:x") else {
                return Err(Failure::config(format!(
                    "bad --tau {other:?}: want none, terminal, a step index, or hit:x<axis><op><value>"
                )));
            };
            let (op_idx, ge) = match (rest.find(">="), rest.find("<=")) {
                (Some(i), _) => (i, true),
                (None, Some(i)) => (i, false),
                (None, None) => {
                    return Err(Failure::config(format!(
                        "bad --tau {other:?}: missing >= or <="
                    )))
                }
            };
            let axis: usize = rest[..op_idx]
                .parse()
                .map_err(|_| Failure::config(format!("bad --tau axis in {other:?}")))?;
            let bound = parse_rat(&rest[op_idx + 2..])?;
            Ok(StoppingRule::first_hit(move |_, p: &PathPrefix| {
                let v = &p.last_state()[axis];
                if ge {
                    v >= &bound
                } else {
                    v <= &bound
                }
            }))
        }
    }
}

fn cmd_solve(common: Common, grid: String, strict: bool) -> Result<u8, Failure> {
    let (problem, level) = load(&common)?;
    let grid = parse_grid(&grid, &problem)?;
    let solved = solve(
        &problem.model,
        &problem.reward,
        &problem.constraint,
        grid,
        &SolveOptions::default(),
    )?;
    let value = solved.surface.root_value(&level);
    let min_budget = solved.surface.root_min_budget().clone();
    let feasible = Ext::Finite(level.clone()) >= min_budget;
    let summary = output::pretty(json!({
        "instance_hash": config::instance_hash(&problem.config),
        "constraint_kind": problem.kind.as_str(),
        "level": fmt_rat(&level),
        "native_level": fmt_rat(&problem.native_level),
        "value": value.to_string(),
        "value_float": value.to_f64(),
        "min_budget": min_budget.to_string(),
        "feasible": feasible,
        "grid_levels": solved.grid().len(),
        "grid_exact": solved.grid().is_exact(),
        "warnings": solved
            .surface
            .warnings()
            .iter()
            .map(|w| format!("{w:?}"))
            .collect::<Vec<_>>(),
    }));
    write_artifact(&common.out, "surface.csv", &output::surface_csv(&solved))?;
    write_artifact(
        &common.out,
        "policy.json",
        &output::policy_json(&solved, problem.model.control_labels()),
    )?;
    write_artifact(&common.out, "summary.json", &summary)?;
    print!("{summary}");
    if strict && !feasible {
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

fn cmd_verify(common: Common, tau: String) -> Result<u8, Failure> {
    let (problem, level) = load(&common)?;
    let rule = parse_tau(&tau, problem.model.horizon())?;
    let caps = OracleBudget::default();
    let solved = solve(
        &problem.model,
        &problem.reward,
        &problem.constraint,
        problem.grid.clone(),
        &SolveOptions::default(),
    )?;
    let check = supinf_supsup_check(
        &problem.model,
        &problem.reward,
        &problem.constraint,
        &level,
        &rule,
        &solved,
        &caps,
    )?;
    let profiles = strategy_profiles(
        &problem.model,
        &problem.reward,
        &problem.constraint,
        &problem.model.root(),
        &caps,
    )?;
    let frontier_matches = *solved.surface.root_min_budget() == oracle_min_max(&profiles);
    let audit_clean = if check.dp_value.is_neg_inf() {
        true
    } else {
        let (sigma, _) = extract_policy(&solved, &level)?;
        exact_audit(
            &problem.model,
            &sigma,
            &problem.constraint,
            &problem.reward,
            &level,
        )
        .map_err(|e| Failure::config(e.to_string()))?
        .flags
        .is_empty()
    };
    let pass = check.pass && check.oracle_matches && frontier_matches && audit_clean;
    let report = output::pretty(json!({
        "instance_hash": config::instance_hash(&problem.config),
        "level": fmt_rat(&level),
        "tau": tau,
        "dp_value": check.dp_value.to_string(),
        "oracle_value": check.oracle_value.to_string(),
        "supsup": check.sup_sup.to_string(),
        "supinf": check.sup_inf.to_string(),
        "oracle_matches": check.oracle_matches,
        "frontier_matches": frontier_matches,
        "audit_clean": audit_clean,
        "feasible_without_budget_process": check.feasible_without_budget_process,
        "pass": pass,
    }));
    write_artifact(&common.out, "verify.json", &report)?;
    print!("{report}");
    Ok(if pass { EXIT_OK } else { 1 })
}

fn cmd_reach(common: Common) -> Result<u8, Failure> {
    let (problem, _) = load(&common)?;
    let Some(targets) = problem.targets.clone() else {
        return Err(Failure::config(
            "reach needs a quantile or target constraint with a target schedule",
        ));
    };
    let reach = reachability_sets(&problem.model, targets);
    let report = output::pretty(json!({
        "instance_hash": config::instance_hash(&problem.config),
        "root_reachable": reach.root_reachable(),
        "fixed_point": reach.verify_fixed_point(),
    }));
    write_artifact(&common.out, "reach.csv", &output::reach_csv(&reach))?;
    write_artifact(&common.out, "reach.json", &report)?;
    print!("{report}");
    Ok(EXIT_OK)
}

fn cmd_audit(common: Common, samples: u64, seed: u64) -> Result<u8, Failure> {
    let (problem, level) = load(&common)?;
    let solved = solve(
        &problem.model,
        &problem.reward,
        &problem.constraint,
        problem.grid.clone(),
        &SolveOptions::default(),
    )?;
    if solved.surface.root_value(&level).is_neg_inf() {
        eprintln!(
            "infeasible at level {} (minimal budget {})",
            fmt_rat(&level),
            solved.surface.root_min_budget()
        );
        return Ok(EXIT_INFEASIBLE);
    }
    let (sigma, _) = extract_policy(&solved, &level)?;
    let exact = exact_audit(
        &problem.model,
        &sigma,
        &problem.constraint,
        &problem.reward,
        &level,
    )
    .map_err(|e| Failure::config(e.to_string()))?;
    write_artifact(&common.out, "audit.json", &output::audit_json(&exact))?;
    print!("{}", output::audit_json(&exact));
    if samples > 0 {
        let sampled = monte_carlo_audit(
            &problem.model,
            &sigma,
            &problem.constraint,
            &problem.reward,
            &level,
            samples,
            seed,
        )
        .map_err(|e| Failure::config(e.to_string()))?;
        write_artifact(
            &common.out,
            "audit_sampled.json",
            &output::audit_json(&sampled),
        )?;
        print!("{}", output::audit_json(&sampled));
    }
    Ok(EXIT_OK)
}

fn cmd_oracle(common: Common) -> Result<u8, Failure> {
    let (problem, level) = load(&common)?;
    let caps = OracleBudget::default();
    let profiles = strategy_profiles(
        &problem.model,
        &problem.reward,
        &problem.constraint,
        &problem.model.root(),
        &caps,
    )?;
    let report = oracle_value_from_profiles(&profiles, &level);
    let text = output::pretty(json!({
        "instance_hash": config::instance_hash(&problem.config),
        "level": fmt_rat(&level),
        "oracle_value": report.value.to_string(),
        "feasible": report.feasible,
        "strategies_total": report.strategies_total,
        "strategies_feasible": report.strategies_feasible,
        "min_max": oracle_min_max(&profiles).to_string(),
    }));
    write_artifact(&common.out, "oracle.json", &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}
