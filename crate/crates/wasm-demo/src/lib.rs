//! Browser bindings for the demo page in `www/`.
//!
//! Three operations, each returning a JSON string:
//! - [`Demo::landscape`]: reward of every UI configuration for one user at a
//!   given sigma;
//! - [`Demo::train`]: trains a table and returns its smoothed learning curves;
//! - [`Demo::trace`]: replays the trained greedy policy from one state.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use aui_rl::harness::eval_seed;
use aui_rl::presets::{catalogue_domain, catalogue_generality};
use aui_rl::{
    evaluate, train, AdaptationEnv, DomainSpec, EnvParams, GeneralityModel, Hyperparams, QTable,
    RewardModel, RewardParams, StateVector, UiConfig, UserPrefs,
};

const MAX_STEPS: u32 = 25;
/// Learning curves are thinned to at most this many points.
const CURVE_POINTS: usize = 600;

#[derive(Debug, Serialize)]
pub struct Cell {
    pub index: usize,
    pub labels: Vec<String>,
    pub generality: f64,
    pub alignment: f64,
    pub reward: f64,
    pub optimal: bool,
}

#[derive(Debug, Serialize)]
pub struct Landscape {
    pub sigma: f64,
    pub prefs: Vec<String>,
    pub best: f64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub sigma: f64,
    pub episodes: u64,
    pub episode: Vec<u64>,
    pub ma_steps: Vec<f64>,
    pub ma_score: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub eval_steps: f64,
    pub eval_score: f64,
    pub eval_alignment: f64,
}

#[derive(Debug, Serialize)]
pub struct TraceStep {
    pub step: u32,
    pub action: String,
    pub ui: Vec<String>,
    pub reward: f64,
    pub alignment: f64,
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub start: Vec<String>,
    pub prefs: Vec<String>,
    pub steps: Vec<TraceStep>,
    pub termination: String,
}

fn labels(domain: &DomainSpec, indices: &[usize]) -> Vec<String> {
    domain.labels_of(indices).into_iter().map(|(_, v)| v).collect()
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serialises")
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    domain: DomainSpec,
    generality: GeneralityModel,
    trained: Option<(RewardModel, QTable)>,
}

impl Demo {
    pub fn landscape_data(&self, sigma: f64, prefs: usize) -> aui_rl::Result<Landscape> {
        let model = self.model(sigma)?;
        let prefs = self.domain.decode_config(prefs)?;
        let best = model.optimal_reward(&self.domain, &prefs);
        let cells = self
            .domain
            .configs()
            .enumerate()
            .map(|(index, ui)| {
                let reward = model.reward_at(index, &ui, &prefs);
                let alignment = aui_rl::reward::alignment(
                    &UiConfig::new(ui.clone()),
                    &UserPrefs::new(prefs.clone()),
                )
                .expect("same domain");
                Cell {
                    index,
                    labels: labels(&self.domain, &ui),
                    generality: model.generality_at(index),
                    alignment,
                    reward,
                    optimal: reward >= best - aui_rl::env::OPTIMALITY_TOLERANCE,
                }
            })
            .collect();
        Ok(Landscape {
            sigma,
            prefs: labels(&self.domain, &prefs),
            best,
            cells,
        })
    }

    pub fn train_data(&mut self, sigma: f64, episodes: u64, seed: u64) -> aui_rl::Result<Curve> {
        let model = self.model(sigma)?;
        let h = Hyperparams::default().with_episodes(episodes);
        let (q, report) = train(&self.domain, &model, &h, MAX_STEPS, seed)?;
        let eval = evaluate(&q, &self.domain, &model, 500, MAX_STEPS, eval_seed(seed))?;
        let stride = report.stats.len().div_ceil(CURVE_POINTS).max(1);
        let picks: Vec<usize> = (0..report.stats.len()).step_by(stride).collect();
        let curve = Curve {
            sigma,
            episodes,
            episode: picks.iter().map(|&i| report.stats[i].episode).collect(),
            ma_steps: picks.iter().map(|&i| report.ma_steps[i]).collect(),
            ma_score: picks.iter().map(|&i| report.ma_score[i]).collect(),
            epsilon: picks.iter().map(|&i| report.stats[i].epsilon).collect(),
            eval_steps: eval.summary.mean_steps,
            eval_score: eval.summary.mean_score,
            eval_alignment: eval.summary.mean_alignment,
        };
        self.trained = Some((model, q));
        Ok(curve)
    }

    pub fn trace_data(&self, ui: usize, prefs: usize) -> aui_rl::Result<Trace> {
        let Some((model, q)) = &self.trained else {
            return Err(aui_rl::Error::Param("train a policy first".into()));
        };
        let start = StateVector {
            ui: UiConfig::new(self.domain.decode_config(ui)?),
            prefs: UserPrefs::new(self.domain.decode_config(prefs)?),
        };
        let mut env = AdaptationEnv::new(&self.domain, model, EnvParams { max_steps: MAX_STEPS, seed: 0 })?;
        env.reset_to(&start)?;
        let mut steps = Vec::new();
        let termination = loop {
            let a = q.greedy_action(env.state_index());
            let r = env.step_index(a)?;
            steps.push(TraceStep {
                step: env.steps_taken(),
                action: self.domain.action_name(&self.domain.action(a)?),
                ui: labels(&self.domain, env.ui()),
                reward: r.reward,
                alignment: env.alignment(),
            });
            if let Some(t) = r.termination {
                break t;
            }
        };
        Ok(Trace {
            start: labels(&self.domain, start.ui.indices()),
            prefs: labels(&self.domain, start.prefs.indices()),
            steps,
            termination: termination.as_str().to_string(),
        })
    }

    fn model(&self, sigma: f64) -> aui_rl::Result<RewardModel> {
        RewardModel::new(
            &self.domain,
            RewardParams::default().with_sigma(sigma),
            self.generality.clone(),
        )
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsValue> {
        let domain = catalogue_domain();
        let generality = catalogue_generality(&domain).map_err(js_err)?;
        Ok(Demo {
            domain,
            generality,
            trained: None,
        })
    }

    /// `{"name": .., "variables": [{"name", "values"}]}`
    pub fn domain(&self) -> String {
        self.domain.to_json().to_string()
    }

    pub fn ui_count(&self) -> usize {
        self.domain.ui_count()
    }

    pub fn landscape(&self, sigma: f64, prefs: usize) -> Result<String, JsValue> {
        self.landscape_data(sigma, prefs).map(|l| to_json(&l)).map_err(js_err)
    }

    pub fn train(&mut self, sigma: f64, episodes: u32, seed: u32) -> Result<String, JsValue> {
        self.train_data(sigma, episodes.into(), seed.into())
            .map(|c| to_json(&c))
            .map_err(js_err)
    }

    pub fn trace(&self, ui: usize, prefs: usize) -> Result<String, JsValue> {
        self.trace_data(ui, prefs).map(|t| to_json(&t)).map_err(js_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Demo {
        let domain = catalogue_domain();
        let generality = catalogue_generality(&domain).unwrap();
        Demo {
            domain,
            generality,
            trained: None,
        }
    }

    #[test]
    fn landscape_peaks_at_prefs_when_sigma_is_one() {
        let d = demo();
        let l = d.landscape_data(1.0, 37).unwrap();
        assert_eq!(l.cells.len(), 90);
        let optimal: Vec<usize> = l.cells.iter().filter(|c| c.optimal).map(|c| c.index).collect();
        assert_eq!(optimal, vec![37]);
        assert_eq!(l.best, 1.0);
        // sigma 0 ignores the user entirely
        let a = d.landscape_data(0.0, 0).unwrap();
        let b = d.landscape_data(0.0, 89).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.reward, y.reward);
        }
        assert!(d.landscape_data(1.0, 90).is_err());
    }

    #[test]
    fn trace_needs_a_policy_and_ends() {
        let mut d = demo();
        assert!(d.trace_data(0, 1).is_err());
        let curve = d.train_data(1.0, 3000, 7).unwrap();
        assert!(curve.episode.len() <= CURVE_POINTS);
        assert_eq!(curve.episode[0], 0);
        let t = d.trace_data(0, 89).unwrap();
        assert!(!t.steps.is_empty() && t.steps.len() <= MAX_STEPS as usize);
        assert_eq!(t.steps.last().unwrap().step as usize, t.steps.len());
        let json: serde_json::Value = serde_json::from_str(&d.trace(0, 89).unwrap()).unwrap();
        assert_eq!(json["prefs"][0], "grid5");
    }
}
