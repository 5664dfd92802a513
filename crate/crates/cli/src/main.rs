//! `cmdpac`: run experiments, verify models, build grid worlds and read back
//! run diagnostics.
//!
//! Exit status is 0 on success, 1 when a check fails (a failed seed, a failed
//! verification, an incomplete run) and 2 for configuration or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cmdpac_core::gridworld::{build_gridworld, describe, GridSpec};
use cmdpac_core::harness::experiment::{read_run_dir, summary_csv_path};
use cmdpac_core::harness::{rate_diagnostic, run_experiment, verify_suite, ExperimentConfig, RateDiagnostic};
use cmdpac_core::model_file::{load_model, save_model};
use cmdpac_core::{fixtures, StateFeatures};

#[derive(Parser)]
#[command(name = "cmdpac", version, about = "Constrained actor-critic for average-cost CMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment from a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run seeds one after another instead of on the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Oracle cross-checks and assumption findings for a model.
    Verify(VerifyArgs),
    /// Canonical grid-world instances.
    #[command(subcommand)]
    Gridworld(GridCommand),
    /// Rate and critic-error diagnostics from a run directory.
    Diag { run_dir: PathBuf },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct VerifyArgs {
    /// One of two_state, three_state, five_state.
    #[arg(long)]
    fixture: Option<String>,
    /// Model file in the JSON model format.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Grid side, optionally with a cost seed: `5` or `5:3`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 5)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    cost_seed: u64,
    /// TOML grid spec; replaces `--side` and `--cost-seed`.
    #[arg(long, conflicts_with_all = ["side", "cost_seed"])]
    spec: Option<PathBuf>,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        let spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
                toml::from_str(&text).with_context(|| path.display().to_string())?
            }
            None => GridSpec::canonical(self.side, self.cost_seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum GridCommand {
    /// Write the model file of a grid world.
    Generate {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the start, goal, hazard and cost map.
    Describe {
        #[command(flatten)]
        grid: GridArgs,
        /// Print the spec as TOML instead of the map.
        #[arg(long)]
        toml: bool,
    },
}

/// A check ran and failed; anything else that goes wrong is an input error.
struct CheckFailed;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CheckFailed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

type Outcome = Result<Result<(), CheckFailed>>;

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Run { config, output_dir, sequential } => run(&config, output_dir, sequential),
        Command::Verify(args) => verify(&args),
        Command::Gridworld(GridCommand::Generate { grid, out }) => {
            let spec = grid.spec()?;
            let model = build_gridworld(&spec)?;
            save_model(&out, &model, None).with_context(|| out.display().to_string())?;
            println!("wrote {} ({} states)", out.display(), model.n_states());
            Ok(Ok(()))
        }
        Command::Gridworld(GridCommand::Describe { grid, toml }) => {
            let spec = grid.spec()?;
            if toml {
                print!("{}", toml::to_string(&spec)?);
            } else {
                println!("{}", describe(&spec));
            }
            Ok(Ok(()))
        }
        Command::Diag { run_dir } => diag(&run_dir),
    }
}

fn run(path: &Path, output_dir: Option<PathBuf>, sequential: bool) -> Outcome {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if sequential {
        cfg.parallel = false;
    }
    let summary = run_experiment(&cfg)?;
    println!("config_hash {}", summary.config_hash);
    println!("output_dir {}", summary.output_dir.display());
    for s in &summary.seeds {
        match &s.error {
            None => println!(
                "seed {:>4}  ok      t={}  tail cost {:.6}  tail constraints {:.6?}",
                s.seed, s.final_t, s.tail_avg_cost, s.tail_avg_constraints
            ),
            Some(e) => println!("seed {:>4}  FAILED  t={}  {e}", s.seed, s.final_t),
        }
    }
    println!(
        "mean cost {:.6} ± {:.6}, constraints {:.6?} ± {:.6?} over the last {} steps",
        summary.mean_cost,
        summary.std_error_cost,
        summary.mean_constraints,
        summary.std_error_constraints,
        summary.tail_window
    );
    Ok(if summary.failed() { Err(CheckFailed) } else { Ok(()) })
}

fn verify(args: &VerifyArgs) -> Outcome {
    let (model, features) = if let Some(name) = &args.fixture {
        let fx = fixtures::by_name(name)
            .ok_or_else(|| anyhow!("unknown fixture {name:?}; known: {}", fixtures::NAMES.join(", ")))?;
        (fx.model, fx.state_features)
    } else if let Some(path) = &args.model {
        let (m, f) = load_model(path).with_context(|| path.display().to_string())?;
        let f = f.unwrap_or_else(|| StateFeatures::one_hot_reference(m.n_states(), m.initial_state()));
        (m, f)
    } else if let Some(grid) = &args.grid {
        let (side, seed) = match grid.split_once(':') {
            Some((a, b)) => (a.parse()?, b.parse()?),
            None => (grid.parse()?, 0),
        };
        let m = build_gridworld(&GridSpec::canonical(side, seed)?)?;
        let f = StateFeatures::one_hot_reference(m.n_states(), m.initial_state());
        (m, f)
    } else {
        bail!("one of --fixture, --model or --grid is required");
    };
    let report = verify_suite(&model, &features)?;
    println!("{report}");
    Ok(if report.all_passed() { Ok(()) } else { Err(CheckFailed) })
}

fn diag(dir: &Path) -> Outcome {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let tables = read_run_dir(dir)?;
    if tables.is_empty() {
        bail!("{}: no seed files", dir.display());
    }
    let hash = cfg.hash();
    let mut ok = true;
    for t in &tables {
        if t.config_hash != hash {
            bail!("seed {}: config hash {} does not match config.toml ({hash})", t.seed, t.config_hash);
        }
        let ts = t.column("t").unwrap_or_default();
        let last_t = ts.last().copied().unwrap_or(0.0) as u64;
        let complete = last_t == cfg.total_steps;
        ok &= complete;
        print!("seed {:>4}  rows {:>6}  last t {}", t.seed, t.rows.len(), last_t);
        if !complete {
            print!(" (incomplete, {} expected)", cfg.total_steps);
        }
        println!();
        if let Some(g) = t.column("grad_norm_sq") {
            let series: Vec<(u64, f64)> = ts.iter().zip(g).map(|(&t, g)| (t as u64, g)).collect();
            match rate_diagnostic(&series) {
                RateDiagnostic::Fitted { slope, points, t_from, t_to } => {
                    println!("  rate: slope {slope:.4} of log min ‖∇L‖² on log t over t in [{t_from}, {t_to}] ({points} points)")
                }
                RateDiagnostic::Skipped(why) => println!("  rate: skipped, {why}"),
            }
        }
        if let Some(e) = t.column("critic_avg_err") {
            let first = (ts[0] as u64, e[0]);
            let last = (last_t, e[e.len() - 1]);
            println!(
                "  critic error: {:.4e} at t={} -> {:.4e} at t={}{}",
                first.1,
                first.0,
                last.1,
                last.0,
                if last.1 < first.1 { "" } else { " (not decreasing)" }
            );
        }
        if let Some(r) = t.column("fisher_max_residual") {
            println!("  Fisher refresh residual: max {:.2e}", r.iter().copied().fold(0.0, f64::max));
        }
    }
    let summary = summary_csv_path(dir);
    if let Ok(text) = std::fs::read_to_string(&summary) {
        for line in text.lines().filter(|l| l.starts_with("mean,") || l.starts_with("std_error,")) {
            println!("summary {line}");
        }
    }
    Ok(if ok { Ok(()) } else { Err(CheckFailed) })
}
