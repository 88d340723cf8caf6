//! Command-line front end: solve, sweep, baselines, calmness certificates,
//! schedule validation, and random instance generation.
//!
//! Exit codes: 0 on success, 2 when the requested solve is infeasible, 3 on
//! problem-file schema errors, 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bilevel::baselines::{solve_naive, solve_oracle};
use bilevel::calmness::{certify_calm_at, certify_local_calm};
use bilevel::fixtures::random_finite;
use bilevel::harness::{
    load_problem, problem_to_json, report_to_csv, report_to_json, sweep, HarnessError,
    LoadedProblem, DEFAULT_LADDER,
};
use bilevel::model::{build_instance, validate_schedules};
use bilevel::solver::{
    minimal_lambda, outer_approximation, solve_stabilized_full, SolveRecord, SolveStatus,
};

#[derive(Parser)]
#[command(
    name = "bilevel",
    version,
    about = "Desk-scale solvers and diagnostics for optimistic bilevel problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Payload format. CSV applies to sweep reports and outer-approximation
    /// traces.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Tolerance for feasibility and optimality flags.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the lifted formulation at one accuracy index.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        nu: u32,
        /// Use the outer approximation loop instead of the full enumeration
        /// master.
        #[arg(long)]
        oa: bool,
        /// Post-process the solution to the smallest ladder lambda that
        /// keeps it feasible.
        #[arg(long)]
        minimal_lambda: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Solve across a range of accuracy indices and report convergence.
    Sweep {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        nu_from: u32,
        #[arg(long)]
        nu_to: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Naive baseline: substitute the approximate data and solve directly.
    Naive {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        nu: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Brute-force ground truth for the exact problem.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Certify calmness of the lower-level value function at a point, or
    /// locally when a radius is given.
    Calmness {
        #[arg(long)]
        problem: PathBuf,
        /// Comma-separated upper-level point, e.g. "1.0" or "0.5,2.0".
        #[arg(long)]
        x: String,
        /// Ball radius for a local certificate over the upper-level grid.
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the parameter schedules against the coordination conditions.
    Validate {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Emit a seeded random finite instance as a problem file.
    Generate {
        /// Seed for deterministic instance generation.
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

enum CliError {
    Harness(HarnessError),
    Usage(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Harness(e)
    }
}

impl From<bilevel::model::ModelError> for CliError {
    fn from(e: bilevel::model::ModelError) -> Self {
        CliError::Harness(e.into())
    }
}

impl From<bilevel::solver::SolveError> for CliError {
    fn from(e: bilevel::solver::SolveError) -> Self {
        CliError::Harness(e.into())
    }
}

impl From<bilevel::calmness::CalmnessError> for CliError {
    fn from(e: bilevel::calmness::CalmnessError) -> Self {
        CliError::Harness(e.into())
    }
}

fn emit(common: &Common, payload: String) -> Result<(), CliError> {
    match &common.out {
        Some(path) => std::fs::write(path, payload).map_err(|source| {
            CliError::Harness(HarnessError::Io {
                path: path.display().to_string(),
                source,
            })
        }),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("payload serializes");
    s.push('\n');
    s
}

fn load(path: &PathBuf) -> Result<LoadedProblem, CliError> {
    Ok(load_problem(path)?)
}

fn parse_point(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::Usage(format!("cannot parse --x: {e}")))
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Infeasible => 2,
        _ => 0,
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve {
            problem,
            nu,
            oa,
            minimal_lambda: want_min_lambda,
            common,
        } => {
            let loaded = load(&problem)?;
            let inst = build_instance(&loaded.problem, &loaded.family, &loaded.schedule, nu)?;
            if inst.y_rule_clamped() {
                eprintln!("warning: cut-family prefix exceeded the master list; clamped");
            }
            let finish = |mut record: SolveRecord| -> Result<(SolveRecord, u8), CliError> {
                if want_min_lambda {
                    if let Some(w) = record.minimizer.take() {
                        record.minimizer = Some(minimal_lambda(&inst, &w)?);
                    }
                }
                let code = status_code(record.status);
                Ok((record, code))
            };
            if oa {
                let mut trace = outer_approximation(&inst, &[], &[], 4 * inst.y_nu().len() + 4)?;
                let (record, code) = finish(trace.final_record)?;
                trace.final_record = record;
                match common.format {
                    OutFormat::Json => emit(&common, to_pretty_json(&trace))?,
                    OutFormat::Csv => emit(&common, trace.to_csv())?,
                }
                Ok(code)
            } else {
                let (record, code) = finish(solve_stabilized_full(&inst)?)?;
                match common.format {
                    OutFormat::Json => emit(&common, to_pretty_json(&record))?,
                    OutFormat::Csv => return Err(CliError::Harness(HarnessError::CsvUnsupported)),
                }
                Ok(code)
            }
        }
        Command::Sweep {
            problem,
            nu_from,
            nu_to,
            common,
        } => {
            if nu_from == 0 || nu_to < nu_from {
                return Err(CliError::Usage(
                    "--nu-from must be >= 1 and --nu-to >= --nu-from".into(),
                ));
            }
            let loaded = load(&problem)?;
            let nu_list: Vec<u32> = (nu_from..=nu_to).collect();
            let report = sweep(
                &loaded.problem,
                &loaded.family,
                &loaded.schedule,
                &nu_list,
                common.tol,
            )?;
            let code = if report.oracle_value.is_finite() {
                0
            } else {
                2
            };
            match common.format {
                OutFormat::Json => emit(&common, report_to_json(&report))?,
                OutFormat::Csv => emit(&common, report_to_csv(&report))?,
            }
            Ok(code)
        }
        Command::Naive {
            problem,
            nu,
            common,
        } => {
            let loaded = load(&problem)?;
            let record = solve_naive(&loaded.problem, &loaded.family, nu)?;
            let code = status_code(record.status);
            match common.format {
                OutFormat::Json => emit(&common, to_pretty_json(&record))?,
                OutFormat::Csv => return Err(CliError::Harness(HarnessError::CsvUnsupported)),
            }
            Ok(code)
        }
        Command::Oracle { problem, common } => {
            let loaded = load(&problem)?;
            let sol = solve_oracle(&loaded.problem, common.tol)?;
            let code = status_code(sol.record.status);
            #[derive(serde::Serialize)]
            struct OraclePayload {
                record: SolveRecord,
                optimal_set: Vec<(Vec<f64>, Vec<f64>)>,
                tie_tol: f64,
            }
            let payload = OraclePayload {
                record: sol.record,
                optimal_set: sol.optimal_set,
                tie_tol: sol.tie_tol,
            };
            match common.format {
                OutFormat::Json => emit(&common, to_pretty_json(&payload))?,
                OutFormat::Csv => return Err(CliError::Harness(HarnessError::CsvUnsupported)),
            }
            Ok(code)
        }
        Command::Calmness {
            problem,
            x,
            rho,
            common,
        } => {
            let loaded = load(&problem)?;
            let point = parse_point(&x)?;
            let payload = match rho {
                Some(rho) => to_pretty_json(&certify_local_calm(
                    &loaded.problem,
                    &point,
                    rho,
                    &DEFAULT_LADDER,
                    common.tol,
                )?),
                None => to_pretty_json(&certify_calm_at(
                    &loaded.problem,
                    &point,
                    &DEFAULT_LADDER,
                    common.tol,
                )?),
            };
            match common.format {
                OutFormat::Json => emit(&common, payload)?,
                OutFormat::Csv => return Err(CliError::Harness(HarnessError::CsvUnsupported)),
            }
            Ok(0)
        }
        Command::Validate { problem, common } => {
            let loaded = load(&problem)?;
            let report = validate_schedules(&loaded.schedule);
            match common.format {
                OutFormat::Json => emit(&common, to_pretty_json(&report))?,
                OutFormat::Csv => return Err(CliError::Harness(HarnessError::CsvUnsupported)),
            }
            Ok(0)
        }
        Command::Generate { seed, common } => {
            let (problem, family, schedule) = random_finite(seed);
            let loaded = LoadedProblem {
                problem,
                family,
                schedule,
            };
            emit(&common, problem_to_json(&loaded))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Harness(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                HarnessError::Schema { .. } | HarnessError::Io { .. } => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
