use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use aui_rl::config::{GeneralitySource, RunSection};
use aui_rl::harness::{eval_seed, SweepSettings};
use aui_rl::oracle::{compare_policy, value_iteration, ValueIterationParams};
use aui_rl::persist::{load_qtable, load_qtable_with_domain, save_qtable};
use aui_rl::presets::{catalogue_domain, catalogue_generality};
use aui_rl::reward::{fit_generality, ingest_interactions, EngagementWeights};
use aui_rl::{
    evaluate, sigma_sweep, train, Hyperparams, QTable, RewardModel, RewardParams, RunConfig,
    RunReport,
};

use crate::output::{ensure_dir, write_atomic, write_json};

/// Smoothed-step statistics in `summary.json` cover this many final episodes.
const TAIL_EPISODES: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "aui-rl", version, about = "Q-learning for adaptive user interfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration; the built-in catalogue setup when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generality table JSON, replacing the configured source.
    #[arg(long, conflicts_with = "interactions")]
    pub reward_table: Option<PathBuf>,
    /// Interaction log CSV to fit the generality table from.
    #[arg(long)]
    pub interactions: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a Q-table and write qtable.bin, metrics.csv and summary.json.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a trained table.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        qtable: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate once per sigma, in parallel.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare greedy returns against value iteration on every state.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Verify this table instead of training a fresh one.
        #[arg(long)]
        qtable: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a generality table from an interaction log.
    FitReward {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy action and Q-row for one state.
    Inspect {
        #[arg(long)]
        qtable: PathBuf,
        /// `layout=list,theme=dark,...|layout=grid3,...` (ui block, then prefs).
        #[arg(long)]
        state: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve greedy decisions over HTTP.
    Serve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        qtable: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

/// Verification ran but fell short of the configured share.
#[derive(Debug)]
pub struct VerifyFailed {
    pub fraction: f64,
    pub required: f64,
}

impl VerifyFailed {
    pub fn kind(&self) -> &'static str {
        "verify_failed"
    }
}

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.4} of states within tolerance, {:.4} required",
            self.fraction, self.required
        )
    }
}

impl std::error::Error for VerifyFailed {}

fn default_config() -> Result<RunConfig> {
    let domain = catalogue_domain();
    let table = catalogue_generality(&domain)?.to_json(&domain);
    Ok(RunConfig {
        domain,
        reward: RewardParams::default(),
        generality: GeneralitySource::Inline(table),
        hyperparams: Hyperparams::default(),
        run: RunSection::default(),
    })
}

pub fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => default_config()?,
    };
    if let Some(path) = &args.reward_table {
        config.generality = GeneralitySource::TableFile(path.clone());
    }
    if let Some(path) = &args.interactions {
        let modeled_variables = match &config.generality {
            GeneralitySource::Interactions {
                modeled_variables, ..
            } => modeled_variables.clone(),
            _ => None,
        };
        config.generality = GeneralitySource::Interactions {
            path: path.clone(),
            modeled_variables,
            weights: EngagementWeights::default(),
        };
    }
    Ok(config)
}

fn hyperparams(config: &RunConfig, episodes: Option<u64>) -> Hyperparams {
    match episodes {
        Some(n) => config.hyperparams.with_episodes(n),
        None => config.hyperparams,
    }
}

fn write_csv(path: &Path, report: &RunReport) -> Result<()> {
    write_atomic(path, |w| report.write_csv(w))
}

fn train_summary(report: &RunReport, h: &Hyperparams, reward: &RewardParams, max_steps: u32) -> Value {
    let mut s = report.summary_json();
    let tail = report.tail_summary(TAIL_EPISODES);
    s["phase"] = json!("train");
    s["hyperparams"] = json!(h);
    s["reward"] = json!(reward);
    s["max_steps"] = json!(max_steps);
    s["tail"] = json!({
        "episodes": tail.episodes,
        "mean_steps": tail.mean_steps,
        "mean_score": tail.mean_score,
        "mean_alignment": tail.mean_alignment,
    });
    s
}

fn eval_summary(report: &RunReport) -> Value {
    let mut s = report.summary_json();
    s["phase"] = json!("eval");
    s
}

fn print_json(value: &Value) {
    println!("{value}");
}

fn cmd_train(
    cfg: &ConfigArgs,
    sigma: Option<f64>,
    seed: Option<u64>,
    episodes: Option<u64>,
    out: &Path,
) -> Result<()> {
    let config = load_config(cfg)?;
    let model = config.reward_model(sigma)?;
    let h = hyperparams(&config, episodes);
    let seed = seed.unwrap_or(config.run.seed);
    info!("training sigma={} episodes={} seed={seed}", model.sigma(), h.episodes);
    let (q, report) = train(&config.domain, &model, &h, config.run.max_steps, seed)?;
    let out = ensure_dir(out)?;
    save_qtable(&q, &config.domain, &out.join("qtable.bin"))?;
    write_csv(&out.join("metrics.csv"), &report)?;
    let summary = train_summary(&report, &h, model.params(), config.run.max_steps);
    write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary);
    Ok(())
}

/// Reward model a table was trained under, with the configured generality.
fn model_for(config: &RunConfig, q: &QTable) -> Result<RewardModel> {
    Ok(RewardModel::new(
        &config.domain,
        q.meta.reward,
        config.build_generality()?,
    )?)
}

fn cmd_eval(
    cfg: &ConfigArgs,
    qtable: &Path,
    seed: Option<u64>,
    episodes: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(cfg)?;
    let q = load_qtable(qtable, &config.domain)?;
    let model = model_for(&config, &q)?;
    let seed = seed.unwrap_or_else(|| eval_seed(q.meta.seed));
    let episodes = episodes.unwrap_or(config.run.eval_episodes);
    let report = evaluate(&q, &config.domain, &model, episodes, q.meta.max_steps, seed)?;
    let summary = eval_summary(&report);
    if let Some(out) = out {
        let out = ensure_dir(out)?;
        write_csv(&out.join("eval_metrics.csv"), &report)?;
        write_json(&out.join("eval_summary.json"), &summary)?;
    }
    print_json(&summary);
    Ok(())
}

fn cmd_sweep(
    cfg: &ConfigArgs,
    sigmas: Option<&[f64]>,
    seed: Option<u64>,
    episodes: Option<u64>,
    out: &Path,
) -> Result<()> {
    let config = load_config(cfg)?;
    let sigmas = sigmas.unwrap_or(&config.run.sigmas);
    if let Some(bad) = sigmas.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        bail!("sigma {bad} outside [0, 1]");
    }
    let settings = SweepSettings {
        hyperparams: hyperparams(&config, episodes),
        max_steps: config.run.max_steps,
        eval_episodes: config.run.eval_episodes,
        base_seed: seed.unwrap_or(config.run.seed),
    };
    let base = config.reward_model(None)?;
    info!("sweeping {} sigma values", sigmas.len());
    let runs = sigma_sweep(&config.domain, &base, &settings, sigmas)?;
    let out = ensure_dir(out)?;
    let mut rows = Vec::new();
    for run in &runs {
        let dir = ensure_dir(&out.join(format!("sigma_{}", run.sigma)))?;
        save_qtable(&run.qtable, &config.domain, &dir.join("qtable.bin"))?;
        write_csv(&dir.join("metrics.csv"), &run.train)?;
        write_csv(&dir.join("eval_metrics.csv"), &run.eval)?;
        let params = base.params().with_sigma(run.sigma);
        let summary = json!({
            "train": train_summary(&run.train, &settings.hyperparams, &params, settings.max_steps),
            "eval": eval_summary(&run.eval),
        });
        write_json(&dir.join("summary.json"), &summary)?;
        let tail = run.train.tail_summary(TAIL_EPISODES);
        rows.push(format!(
            "{},{},{},{},{},{}",
            run.sigma,
            run.seed,
            tail.mean_steps,
            run.eval.summary.mean_steps,
            run.eval.summary.mean_score,
            run.eval.summary.mean_alignment
        ));
    }
    write_atomic(&out.join("sweep.csv"), |w| {
        writeln!(w, "sigma,seed,train_tail_steps,eval_steps,eval_score,eval_alignment")?;
        for row in &rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    })?;
    print_json(&json!(runs
        .iter()
        .map(|r| json!({
            "sigma": r.sigma,
            "seed": r.seed,
            "eval_mean_steps": r.eval.summary.mean_steps,
            "eval_mean_score": r.eval.summary.mean_score,
            "eval_mean_alignment": r.eval.summary.mean_alignment,
        }))
        .collect::<Vec<_>>()));
    Ok(())
}

fn cmd_verify(
    cfg: &ConfigArgs,
    qtable: Option<&Path>,
    sigma: Option<f64>,
    seed: Option<u64>,
    episodes: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(cfg)?;
    let (q, model) = match qtable {
        Some(path) => {
            let q = load_qtable(path, &config.domain)?;
            let model = model_for(&config, &q)?;
            (q, model)
        }
        None => {
            let model = config.reward_model(sigma)?;
            let h = hyperparams(&config, episodes);
            let seed = seed.unwrap_or(config.run.seed);
            let (q, _) = train(&config.domain, &model, &h, config.run.max_steps, seed)?;
            (q, model)
        }
    };
    let max_steps = q.meta.max_steps;
    let vf = value_iteration(
        &config.domain,
        &model,
        &ValueIterationParams {
            gamma: q.meta.hyperparams.gamma,
            max_steps,
            tol: 1e-10,
            max_sweeps: 10_000,
        },
    )?;
    let tolerance = config.run.verify_tolerance;
    let cmp = compare_policy(&q, &config.domain, &model, &vf, max_steps, tolerance)?;
    let required = config.run.verify_min_fraction;
    let passed = cmp.fraction_within() >= required;
    let report = json!({
        "states": cmp.states,
        "within_tolerance": cmp.within_tolerance,
        "fraction_within": cmp.fraction_within(),
        "required_fraction": required,
        "tolerance": tolerance,
        "max_gap": cmp.max_gap,
        "value_iteration_sweeps": vf.sweeps(),
        "value_iteration_residual": vf.residual,
        "sigma": model.sigma(),
        "seed": q.meta.seed,
        "passed": passed,
    });
    if let Some(out) = out {
        let out = ensure_dir(out)?;
        write_json(&out.join("verify.json"), &report)?;
    }
    print_json(&report);
    if !passed {
        return Err(VerifyFailed {
            fraction: cmp.fraction_within(),
            required,
        }
        .into());
    }
    Ok(())
}

fn cmd_fit_reward(config: Option<&Path>, interactions: &Path, out: Option<&Path>) -> Result<()> {
    let config = load_config(&ConfigArgs {
        config: config.map(Path::to_path_buf),
        reward_table: None,
        interactions: Some(interactions.to_path_buf()),
    })?;
    let GeneralitySource::Interactions {
        path,
        modeled_variables,
        weights,
    } = &config.generality
    else {
        unreachable!("interactions override set above");
    };
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let records = ingest_interactions(std::io::BufReader::new(file), &config.domain)?;
    let modeled = aui_rl::config::modeled_indices(&config.domain, modeled_variables.as_deref())?;
    let model = fit_generality(&records, &config.domain, &modeled, weights)?;
    let table = model.to_json(&config.domain);
    info!("fitted {} combinations from {} records", model.table().len(), records.len());
    match out {
        Some(out) => write_json(out, &table)?,
        None => print_json(&table),
    }
    Ok(())
}

fn cmd_inspect(qtable: &Path, state: &str, config: Option<&Path>) -> Result<()> {
    let (q, domain) = match config {
        Some(path) => {
            let config = RunConfig::load(path)?;
            (load_qtable(qtable, &config.domain)?, config.domain)
        }
        None => load_qtable_with_domain(qtable)?,
    };
    let s = domain.parse_state_literal(state)?;
    let index = domain.encode_state(&s)?;
    let best = q.greedy_action(index);
    let row: Vec<Value> = domain
        .action_catalog()
        .iter()
        .zip(q.row(index))
        .map(|(a, v)| json!({"action_index": a.index, "action": domain.action_name(a), "q_value": v}))
        .collect();
    print_json(&json!({
        "state": domain.format_state_literal(&s),
        "state_index": index,
        "action_index": best,
        "action": domain.action_name(&domain.action(best)?),
        "q_value": q.get(index, best),
        "q_row": row,
        "sigma": q.meta.reward.sigma,
        "domain_hash": q.meta.domain_hash.to_string(),
    }));
    Ok(())
}

fn cmd_serve(cfg: &ConfigArgs, qtable: &Path, host: &str, port: u16) -> Result<()> {
    let (q, domain) = match &cfg.config {
        Some(_) => {
            let config = load_config(cfg)?;
            (load_qtable(qtable, &config.domain)?, config.domain)
        }
        None => load_qtable_with_domain(qtable)?,
    };
    let state = crate::serve::ServeState::new(domain, q);
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(crate::serve::run(state, host, port))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train {
            cfg,
            sigma,
            seed,
            episodes,
            out,
        } => cmd_train(cfg, *sigma, *seed, *episodes, out),
        Command::Eval {
            cfg,
            qtable,
            seed,
            episodes,
            out,
        } => cmd_eval(cfg, qtable, *seed, *episodes, out.as_deref()),
        Command::Sweep {
            cfg,
            sigmas,
            seed,
            episodes,
            out,
        } => cmd_sweep(cfg, sigmas.as_deref(), *seed, *episodes, out),
        Command::Verify {
            cfg,
            qtable,
            sigma,
            seed,
            episodes,
            out,
        } => cmd_verify(cfg, qtable.as_deref(), *sigma, *seed, *episodes, out.as_deref()),
        Command::FitReward {
            config,
            interactions,
            out,
        } => cmd_fit_reward(config.as_deref(), interactions, out.as_deref()),
        Command::Inspect {
            qtable,
            state,
            config,
        } => cmd_inspect(qtable, state, config.as_deref()),
        Command::Serve {
            cfg,
            qtable,
            port,
            host,
        } => cmd_serve(cfg, qtable, host, *port),
    }
}
