//! Multi-seed runs and their CSV output.
//!
//! A run directory holds:
//!
//! - `config.toml`: the configuration as run.
//! - `seed_<s>.csv`: one row per snapshot (every `snapshot_every` steps and
//!   at the final step). Columns: `t`, `lagrangian_est` (L), `cost_est`
//!   (running raw cost J), `constraint_est_<k>` (U_k), `multiplier_<k>`
//!   (γ_k), `theta_norm`, `v_norm`; `fisher_max_residual` for cnac; with the
//!   oracle attached, `exact_lagrangian`, `exact_avg_cost`,
//!   `exact_avg_constraint_<k>`, `grad_norm_sq` (‖∇_θ L‖²), `critic_err_sq`
//!   (‖v − v*‖²); and for frozen actor and multipliers `critic_avg_err`, the
//!   mixing-time-windowed average of `critic_err_sq` over every step.
//! - `summary.csv`: per seed the tail means of `cost_est` and
//!   `constraint_est_<k>` over the snapshot rows with
//!   `t > total_steps − tail_window`, then a `mean` and a `std_error` row
//!   across the successful seeds.
//! - `policy_seed_<s>.json`: final policy parameters.
//!
//! Every CSV starts with a `#` comment line carrying the config hash. Floats
//! are written in shortest round-trip form, so results can be recomputed
//! exactly from the files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{resolve_model, ExperimentConfig, ResolvedModel};
use super::diagnostics::{mean_and_std_error, windowed_average};
use super::HarnessError;
use crate::assumptions::{fit_ergodicity, tv_decay, tv_start_states, TV_POWERS};
use crate::learner::{Algorithm, Learner, LearnerOptions, LearnerState};
use crate::linalg::norm;
use crate::oracle::{self, ExactSolution};
use crate::policy::SoftmaxPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    /// Fatal error that stopped this seed.
    pub error: Option<String>,
    pub final_t: u64,
    pub tail_rows: usize,
    pub tail_avg_cost: f64,
    pub tail_avg_constraints: Vec<f64>,
    pub final_lagrangian_est: f64,
    pub final_multipliers: Vec<f64>,
    /// Largest `‖GG⁻¹ − I‖_∞` after a refresh (cnac only).
    pub fisher_max_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub tail_window: u64,
    pub seeds: Vec<SeedSummary>,
    pub mean_cost: f64,
    pub std_error_cost: f64,
    pub mean_constraints: Vec<f64>,
    pub std_error_constraints: Vec<f64>,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.seeds.iter().any(|s| s.error.is_some())
    }
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn summary_csv_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let resolved = resolve_model(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir.display(), e))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| HarnessError::io("config.toml", e))?;
    let hash = cfg.hash();

    let seeds: Vec<SeedSummary> = if cfg.parallel {
        cfg.seeds.par_iter().map(|&s| run_seed(cfg, &resolved, &hash, s)).collect::<Result<_, _>>()?
    } else {
        cfg.seeds.iter().map(|&s| run_seed(cfg, &resolved, &hash, s)).collect::<Result<_, _>>()?
    };

    let ok: Vec<&SeedSummary> = seeds.iter().filter(|s| s.error.is_none()).collect();
    let n_c = resolved.model.n_constraints();
    let (mean_cost, std_error_cost) = mean_and_std_error(&ok.iter().map(|s| s.tail_avg_cost).collect::<Vec<_>>());
    let mut mean_constraints = Vec::with_capacity(n_c);
    let mut std_error_constraints = Vec::with_capacity(n_c);
    for k in 0..n_c {
        let (m, se) = mean_and_std_error(&ok.iter().map(|s| s.tail_avg_constraints[k]).collect::<Vec<_>>());
        mean_constraints.push(m);
        std_error_constraints.push(se);
    }
    let summary = RunSummary {
        config_hash: hash,
        output_dir: dir.clone(),
        tail_window: cfg.tail_window(),
        seeds,
        mean_cost,
        std_error_cost,
        mean_constraints,
        std_error_constraints,
    };
    write_summary(&summary, n_c)?;
    Ok(summary)
}

fn write_summary(summary: &RunSummary, n_c: usize) -> Result<(), HarnessError> {
    let path = summary_csv_path(&summary.output_dir);
    let mut file = BufWriter::new(File::create(&path).map_err(|e| HarnessError::io(path.display(), e))?);
    writeln!(file, "# cmdpac summary config_hash={} tail_window={}", summary.config_hash, summary.tail_window)
        .map_err(|e| HarnessError::io(path.display(), e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = ["seed", "status", "final_t", "tail_rows", "tail_avg_cost"].map(String::from).to_vec();
    header.extend((0..n_c).map(|k| format!("tail_avg_constraint_{k}")));
    header.extend((0..n_c).map(|k| format!("final_multiplier_{k}")));
    header.push("final_lagrangian_est".into());
    w.write_record(&header)?;
    for s in &summary.seeds {
        let mut row = vec![
            s.seed.to_string(),
            match &s.error {
                None => "ok".to_string(),
                Some(e) => format!("failed: {e}"),
            },
            s.final_t.to_string(),
            s.tail_rows.to_string(),
            fmt(s.tail_avg_cost),
        ];
        row.extend(s.tail_avg_constraints.iter().map(|&x| fmt(x)));
        row.extend(s.final_multipliers.iter().map(|&x| fmt(x)));
        row.push(fmt(s.final_lagrangian_est));
        w.write_record(&row)?;
    }
    for (label, cost, cons) in [
        ("mean", summary.mean_cost, &summary.mean_constraints),
        ("std_error", summary.std_error_cost, &summary.std_error_constraints),
    ] {
        let mut row = vec![label.to_string(), String::new(), String::new(), String::new(), fmt(cost)];
        row.extend(cons.iter().map(|&x| fmt(x)));
        row.extend((0..n_c).map(|_| String::new()));
        row.push(String::new());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path.display(), e))?;
    Ok(())
}

/// Frozen-run bookkeeping for the windowed critic error.
struct CriticTracker {
    v_star: Vec<f64>,
    prefix: Vec<f64>,
    b: f64,
    k: f64,
}

impl CriticTracker {
    fn push(&mut self, v: &[f64]) {
        let e: f64 = v.iter().zip(&self.v_star).map(|(a, b)| (a - b) * (a - b)).sum();
        let last = *self.prefix.last().unwrap_or(&0.0);
        self.prefix.push(last + e);
    }
}

fn initial_state(cfg: &ExperimentConfig, learner: &Learner) -> Result<LearnerState, HarnessError> {
    let mut st = learner.initial_state()?;
    if let Some(seed) = cfg.initial_policy_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        st.theta.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    st.multipliers.iter_mut().for_each(|g| *g = cfg.initial_multiplier);
    Ok(st)
}

fn run_seed(cfg: &ExperimentConfig, r: &ResolvedModel, hash: &str, seed: u64) -> Result<SeedSummary, HarnessError> {
    let n_c = r.model.n_constraints();
    let learner = Learner::new(
        r.model.clone(),
        r.policy_class.clone(),
        r.critic_features.clone(),
        cfg.algorithm,
        cfg.schedule(),
        cfg.projection(),
    )?
    .with_options(LearnerOptions { freeze_actor: cfg.freeze_actor, freeze_multipliers: cfg.freeze_multipliers })
    .with_fisher(cfg.fisher_init, cfg.fisher_refresh_every);
    let mut st = initial_state(cfg, &learner)?;
    let frozen = cfg.freeze_actor && cfg.freeze_multipliers;

    let mut tracker = if cfg.oracle && frozen {
        let policy = SoftmaxPolicy::new(r.policy_class.clone(), st.theta.clone());
        let sol = ExactSolution::compute(&r.model, &policy, &st.multipliers, &r.critic_features)?;
        let p = oracle::chain_matrix(&r.model, &policy);
        let decay = tv_decay(&p, &sol.mu, TV_POWERS, &tv_start_states(r.model.n_states()));
        let fit = fit_ergodicity(&decay);
        let mut t = CriticTracker {
            v_star: sol.td.v_star.iter().copied().collect(),
            prefix: Vec::with_capacity(cfg.total_steps as usize + 2),
            b: fit.map_or(1.0, |f| f.b),
            k: fit.map_or(1.0, |f| f.k),
        };
        t.prefix.push(0.0);
        t.push(&st.v);
        Some(t)
    } else {
        None
    };

    let path = seed_csv_path(&cfg.output_dir, seed);
    let io = |e| HarnessError::io(path.display(), e);
    let mut file = BufWriter::new(File::create(&path).map_err(io)?);
    writeln!(file, "# cmdpac config_hash={hash} seed={seed}").map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = ["t", "lagrangian_est", "cost_est"].map(String::from).to_vec();
    header.extend((0..n_c).map(|k| format!("constraint_est_{k}")));
    header.extend((0..n_c).map(|k| format!("multiplier_{k}")));
    header.extend(["theta_norm", "v_norm"].map(String::from));
    if cfg.algorithm == Algorithm::Cnac {
        header.push("fisher_max_residual".into());
    }
    if cfg.oracle {
        header.extend(["exact_lagrangian", "exact_avg_cost"].map(String::from));
        header.extend((0..n_c).map(|k| format!("exact_avg_constraint_{k}")));
        header.extend(["grad_norm_sq", "critic_err_sq"].map(String::from));
        if frozen {
            header.push("critic_avg_err".into());
        }
    }
    w.write_record(&header)?;

    let tail_start = cfg.total_steps - cfg.tail_window();
    let mut tail_rows = 0usize;
    let mut tail_cost = 0.0;
    let mut tail_cons = vec![0.0; n_c];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut error = None;

    while st.t < cfg.total_steps {
        if let Err(e) = learner.step(&mut st, &mut rng) {
            error = Some(e.to_string());
            break;
        }
        if let Some(tr) = tracker.as_mut() {
            tr.push(&st.v);
        }
        let t = st.t;
        if t % cfg.snapshot_every != 0 && t != cfg.total_steps {
            continue;
        }
        let mut row = vec![t.to_string(), fmt(st.lagrangian_est), fmt(st.cost_est)];
        row.extend(st.constraint_ests.iter().map(|&x| fmt(x)));
        row.extend(st.multipliers.iter().map(|&x| fmt(x)));
        row.push(fmt(norm(&st.theta)));
        row.push(fmt(norm(&st.v)));
        if let Some(f) = &st.fisher {
            row.push(fmt(f.max_refresh_residual()));
        }
        if cfg.oracle {
            let policy = SoftmaxPolicy::new(r.policy_class.clone(), st.theta.clone());
            match ExactSolution::compute(&r.model, &policy, &st.multipliers, &r.critic_features) {
                Ok(sol) => {
                    row.push(fmt(sol.lagrangian));
                    row.push(fmt(sol.avg_cost));
                    row.extend(sol.avg_constraints.iter().map(|&x| fmt(x)));
                    row.push(fmt(sol.grad.norm_squared()));
                    let err: f64 = st.v.iter().zip(sol.td.v_star.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    row.push(fmt(err));
                }
                Err(_) => row.extend((0..4 + n_c).map(|_| fmt(f64::NAN))),
            }
            if let Some(tr) = &tracker {
                row.push(fmt(windowed_average(&tr.prefix, t, tr.b, tr.k, &learner.schedule().clone())));
            }
        }
        w.write_record(&row)?;
        if t > tail_start {
            tail_rows += 1;
            tail_cost += st.cost_est;
            for (acc, u) in tail_cons.iter_mut().zip(&st.constraint_ests) {
                *acc += u;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path.display(), e))?;

    let ckpt = SoftmaxPolicy::new(r.policy_class.clone(), st.theta.clone()).checkpoint();
    let ckpt_path = cfg.output_dir.join(format!("policy_seed_{seed}.json"));
    let json = serde_json::to_string_pretty(&ckpt).map_err(|e| HarnessError::Data(e.to_string()))?;
    std::fs::write(&ckpt_path, json).map_err(|e| HarnessError::io(ckpt_path.display(), e))?;

    let denom = tail_rows.max(1) as f64;
    Ok(SeedSummary {
        seed,
        error,
        final_t: st.t,
        tail_rows,
        tail_avg_cost: if tail_rows == 0 { f64::NAN } else { tail_cost / denom },
        tail_avg_constraints: tail_cons.iter().map(|c| if tail_rows == 0 { f64::NAN } else { c / denom }).collect(),
        final_lagrangian_est: st.lagrangian_est,
        final_multipliers: st.multipliers.clone(),
        fisher_max_residual: st.fisher.as_ref().map(|f| f.max_refresh_residual()),
    })
}

/// A per-seed CSV read back: column names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTable {
    pub config_hash: String,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SeedTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_seed_csv(path: &Path) -> Result<SeedTable, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path.display(), e))?;
    let (first, rest) = text.split_once('\n').ok_or_else(|| HarnessError::Data(format!("{}: empty file", path.display())))?;
    let mut hash = None;
    let mut seed = None;
    for part in first.trim_start_matches('#').split_whitespace() {
        if let Some(h) = part.strip_prefix("config_hash=") {
            hash = Some(h.to_string());
        } else if let Some(s) = part.strip_prefix("seed=") {
            seed = s.parse().ok();
        }
    }
    let (Some(config_hash), Some(seed)) = (hash, seed) else {
        return Err(HarnessError::Data(format!("{}: missing config hash or seed line", path.display())));
    };
    let mut rdr = csv::Reader::from_reader(rest.as_bytes());
    let columns: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?);
    }
    Ok(SeedTable { config_hash, seed, columns, rows })
}

/// Per-seed tables of a run directory in seed order.
pub fn read_run_dir(dir: &Path) -> Result<Vec<SeedTable>, HarnessError> {
    let mut tables = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir.display(), e))?;
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir.display(), e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("seed_") && name.ends_with(".csv") {
            tables.push(read_seed_csv(&path)?);
        }
    }
    tables.sort_by_key(|t| t.seed);
    Ok(tables)
}
