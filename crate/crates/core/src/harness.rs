//! Training and evaluation protocols, the sigma sweep, and metric export.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agent::{epsilon_at, q_update, select_action, Hyperparams, QTable, QTableMeta};
use crate::domain::DomainSpec;
use crate::env::{AdaptationEnv, EnvParams, TerminationCause};
use crate::error::{Error, Result};
use crate::reward::RewardModel;

/// Window of the anti-jitter moving average applied to learning curves.
pub const SMOOTHING_WINDOW: usize = 150;

/// The five personalisation levels of the reference protocol.
pub const DEFAULT_SIGMAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub episode: u64,
    pub steps: u32,
    /// Cumulative reward of the episode, bonus included.
    pub score: f64,
    pub terminal_alignment: f64,
    pub epsilon: f64,
    pub termination: TerminationCause,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub episodes: usize,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub mean_score: f64,
    pub std_score: f64,
    pub mean_alignment: f64,
    pub std_alignment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub sigma: f64,
    pub seed: u64,
    pub domain_hash: String,
    pub window: usize,
    pub stats: Vec<EpisodeStats>,
    pub ma_steps: Vec<f64>,
    pub ma_score: Vec<f64>,
    pub summary: Summary,
}

/// Element `i` is the mean of `series[i+1-window ..= i]`, using whatever
/// history exists near the start.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Param("moving average window must be >= 1".into()));
    }
    if series.is_empty() {
        return Err(Error::Param("moving average of an empty series".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl Summary {
    pub fn of(stats: &[EpisodeStats]) -> Self {
        let (mean_steps, std_steps) = mean_std(stats.iter().map(|s| s.steps as f64));
        let (mean_score, std_score) = mean_std(stats.iter().map(|s| s.score));
        let (mean_alignment, std_alignment) = mean_std(stats.iter().map(|s| s.terminal_alignment));
        Summary {
            episodes: stats.len(),
            mean_steps,
            std_steps,
            mean_score,
            std_score,
            mean_alignment,
            std_alignment,
        }
    }
}

impl RunReport {
    fn build(sigma: f64, seed: u64, domain: &DomainSpec, stats: Vec<EpisodeStats>) -> Result<Self> {
        let steps: Vec<f64> = stats.iter().map(|s| s.steps as f64).collect();
        let scores: Vec<f64> = stats.iter().map(|s| s.score).collect();
        let (ma_steps, ma_score) = if stats.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            (
                moving_average(&steps, SMOOTHING_WINDOW)?,
                moving_average(&scores, SMOOTHING_WINDOW)?,
            )
        };
        Ok(RunReport {
            sigma,
            seed,
            domain_hash: domain.hash().to_string(),
            window: SMOOTHING_WINDOW,
            summary: Summary::of(&stats),
            stats,
            ma_steps,
            ma_score,
        })
    }

    /// Summary restricted to the last `n` episodes.
    pub fn tail_summary(&self, n: usize) -> Summary {
        Summary::of(&self.stats[self.stats.len().saturating_sub(n)..])
    }

    /// `episode,steps,score,terminal_alignment,epsilon,ma_steps,ma_score`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "episode,steps,score,terminal_alignment,epsilon,ma_steps,ma_score")?;
        for ((s, ms), mc) in self.stats.iter().zip(&self.ma_steps).zip(&self.ma_score) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.episode, s.steps, s.score, s.terminal_alignment, s.epsilon, ms, mc
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma": self.sigma,
            "mean_steps": self.summary.mean_steps,
            "mean_score": self.summary.mean_score,
            "mean_alignment": self.summary.mean_alignment,
            "std_steps": self.summary.std_steps,
            "std_score": self.summary.std_score,
            "std_alignment": self.summary.std_alignment,
            "episodes": self.summary.episodes,
            "seed": self.seed,
            "domain_hash": self.domain_hash,
        })
    }
}

fn created_unix() -> i64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return epoch;
    }
    #[cfg(not(target_arch = "wasm32"))]
    {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    }
    #[cfg(target_arch = "wasm32")]
    {
        0
    }
}

/// Run `h.episodes` Q-learning episodes from a zero table.
pub fn train(
    domain: &DomainSpec,
    reward: &RewardModel,
    h: &Hyperparams,
    max_steps: u32,
    seed: u64,
) -> Result<(QTable, RunReport)> {
    h.validate()?;
    let meta = QTableMeta {
        domain_hash: domain.hash(),
        hyperparams: *h,
        reward: *reward.params(),
        max_steps,
        seed,
        episodes_trained: h.episodes,
        created_unix: created_unix(),
    };
    let mut q = QTable::zeros(domain, meta)?;
    let mut env = AdaptationEnv::new(domain, reward, EnvParams { max_steps, seed })?;
    let mut stats = Vec::with_capacity(h.episodes as usize);
    for episode in 0..h.episodes {
        let eps = epsilon_at(episode, h);
        env.reset();
        let mut state = env.state_index();
        let mut score = 0.0;
        let last = loop {
            let action = select_action(&q, state, eps, env.rng_mut());
            let step = env.step_index(action)?;
            let next = env.state_index();
            q_update(&mut q, state, action, step.reward, next, step.done, h)?;
            score += step.reward;
            state = next;
            if step.done {
                break step;
            }
        };
        stats.push(EpisodeStats {
            episode,
            steps: env.steps_taken(),
            score,
            terminal_alignment: env.alignment(),
            epsilon: eps,
            termination: last.termination.expect("finished episodes carry a cause"),
        });
    }
    let report = RunReport::build(reward.sigma(), seed, domain, stats)?;
    Ok((q, report))
}

/// Greedy (epsilon = 0) rollouts of a frozen table; the table is not modified.
pub fn evaluate(
    q: &QTable,
    domain: &DomainSpec,
    reward: &RewardModel,
    episodes: u64,
    max_steps: u32,
    seed: u64,
) -> Result<RunReport> {
    q.check_domain(domain)?;
    let mut env = AdaptationEnv::new(domain, reward, EnvParams { max_steps, seed })?;
    let mut stats = Vec::with_capacity(episodes as usize);
    for episode in 0..episodes {
        env.reset();
        let mut score = 0.0;
        let last = loop {
            let step = env.step_index(q.greedy_action(env.state_index()))?;
            score += step.reward;
            if step.done {
                break step;
            }
        };
        stats.push(EpisodeStats {
            episode,
            steps: env.steps_taken(),
            score,
            terminal_alignment: env.alignment(),
            epsilon: 0.0,
            termination: last.termination.expect("finished episodes carry a cause"),
        });
    }
    RunReport::build(reward.sigma(), seed, domain, stats)
}

/// `base_seed` XOR the first 8 bytes (LE) of SHA-256 over sigma's shortest
/// decimal form (`format!("{sigma}")`, e.g. `"0.25"`, `"1"`).
pub fn sigma_seed(base_seed: u64, sigma: f64) -> u64 {
    let digest = Sha256::digest(format!("{sigma}").as_bytes());
    base_seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Evaluation episodes use a stream distinct from training.
pub fn eval_seed(train_seed: u64) -> u64 {
    train_seed.wrapping_add(1)
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub sigma: f64,
    pub seed: u64,
    pub qtable: QTable,
    pub train: RunReport,
    pub eval: RunReport,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSettings {
    pub hyperparams: Hyperparams,
    pub max_steps: u32,
    pub eval_episodes: u64,
    pub base_seed: u64,
}

/// Independent train + evaluate per sigma, run on one thread each. Results
/// come back in the order of `sigmas`.
pub fn sigma_sweep(
    domain: &DomainSpec,
    base_reward: &RewardModel,
    settings: &SweepSettings,
    sigmas: &[f64],
) -> Result<Vec<SweepRun>> {
    if sigmas.is_empty() {
        return Err(Error::Param("sigma list is empty".into()));
    }
    let models = sigmas
        .iter()
        .map(|&s| base_reward.with_sigma(domain, s))
        .collect::<Result<Vec<_>>>()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = sigmas
            .iter()
            .zip(&models)
            .map(|(&sigma, model)| {
                scope.spawn(move || -> Result<SweepRun> {
                    let seed = sigma_seed(settings.base_seed, sigma);
                    let (qtable, train) = train(
                        domain,
                        model,
                        &settings.hyperparams,
                        settings.max_steps,
                        seed,
                    )?;
                    let eval = evaluate(
                        &qtable,
                        domain,
                        model,
                        settings.eval_episodes,
                        settings.max_steps,
                        eval_seed(seed),
                    )?;
                    Ok(SweepRun {
                        sigma,
                        seed,
                        qtable,
                        train,
                        eval,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}
