//! Run configuration document (JSON).
//!
//! ```json
//! {
//!   "domain": { "name": "...", "variables": [{"name": "layout", "values": ["list", "grid2"]}] },
//!   "reward": {
//!     "sigma": 1.0, "bonus_value": 1.0, "bonus_step_threshold": 4, "timing": "terminal",
//!     "generality": { "interactions": "log.csv", "modeled_variables": ["layout", "theme"] }
//!   },
//!   "hyperparams": { "alpha": 0.9, "gamma": 0.9, "episodes": 60000,
//!                    "eps_start": 1.0, "eps_min": 0.1, "decay_episodes": 30000 },
//!   "run": { "seed": 42, "max_steps": 25, "eval_episodes": 1000,
//!            "sigmas": [0, 0.25, 0.5, 0.75, 1] }
//! }
//! ```
//!
//! `reward.generality` takes one of `{"constant": x}`, `{"table_file": path}`,
//! `{"interactions": path, "modeled_variables": [...], "weights": {...}}` or an
//! inline table (`modeled_variables`, `fallback`, `table`). Relative paths are
//! resolved against the configuration file's directory.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::Hyperparams;
use crate::domain::{load_domain, DomainSpec};
use crate::error::{Error, Result};
use crate::harness::DEFAULT_SIGMAS;
use crate::reward::{
    fit_generality, ingest_interactions, EngagementWeights, GeneralityModel, RewardModel,
    RewardParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub max_steps: u32,
    pub eval_episodes: u64,
    pub sigmas: Vec<f64>,
    /// `verify`: allowed |V* - greedy return| per state.
    pub verify_tolerance: f64,
    /// `verify`: share of states that must fall within the tolerance.
    pub verify_min_fraction: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 42,
            max_steps: 25,
            eval_episodes: 1000,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            verify_tolerance: 0.05,
            verify_min_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneralitySource {
    Constant(f64),
    TableFile(PathBuf),
    Interactions {
        path: PathBuf,
        modeled_variables: Option<Vec<String>>,
        weights: EngagementWeights,
    },
    Inline(Value),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub reward: RewardParams,
    pub generality: GeneralitySource,
    pub hyperparams: Hyperparams,
    pub run: RunSection,
}

fn section<T: DeserializeOwned + Default>(doc: &Value, key: &str) -> Result<T> {
    match doc.get(key) {
        None | Some(Value::Null) => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::config(key, e.to_string())),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: Value = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::config("<document>", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_value(&doc, base)
    }

    pub fn from_value(doc: &Value, base_dir: &Path) -> Result<Self> {
        if !doc.is_object() {
            return Err(Error::config("<document>", "expected a JSON object"));
        }
        let domain = load_domain(doc)?;

        let mut reward_section = doc.get("reward").cloned().unwrap_or(Value::Null);
        let generality_value = reward_section
            .as_object_mut()
            .and_then(|o| o.remove("generality"));
        let reward: RewardParams = section(&serde_json::json!({ "reward": reward_section }), "reward")?;
        reward.validate()?;
        let generality = parse_generality(generality_value, base_dir)?;

        let hyperparams: Hyperparams = section(doc, "hyperparams")?;
        hyperparams.validate()?;
        let run: RunSection = section(doc, "run")?;
        if run.max_steps < 1 {
            return Err(Error::config("run.max_steps", "must be >= 1"));
        }
        if let Some(i) = run.sigmas.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::config(format!("run.sigmas[{i}]"), "must lie in [0, 1]"));
        }
        Ok(RunConfig {
            domain,
            reward,
            generality,
            hyperparams,
            run,
        })
    }

    pub fn build_generality(&self) -> Result<GeneralityModel> {
        build_generality(&self.generality, &self.domain)
    }

    /// Reward model for this configuration, optionally at another sigma.
    pub fn reward_model(&self, sigma: Option<f64>) -> Result<RewardModel> {
        let params = match sigma {
            Some(s) => self.reward.with_sigma(s),
            None => self.reward,
        };
        RewardModel::new(&self.domain, params, self.build_generality()?)
    }
}

fn parse_generality(value: Option<Value>, base: &Path) -> Result<GeneralitySource> {
    const PATH: &str = "reward.generality";
    let Some(value) = value else {
        return Ok(GeneralitySource::Constant(0.5));
    };
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config(PATH, "expected an object"))?;
    let resolve = |key: &str| -> Result<PathBuf> {
        let p = obj
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::config(format!("{PATH}.{key}"), "expected a path string"))?;
        Ok(base.join(p))
    };
    if let Some(c) = obj.get("constant") {
        let c = c
            .as_f64()
            .filter(|c| (0.0..=1.0).contains(c))
            .ok_or_else(|| Error::config(format!("{PATH}.constant"), "expected a number in [0, 1]"))?;
        return Ok(GeneralitySource::Constant(c));
    }
    if obj.contains_key("table_file") {
        return Ok(GeneralitySource::TableFile(resolve("table_file")?));
    }
    if obj.contains_key("interactions") {
        let modeled_variables = match obj.get("modeled_variables") {
            None => None,
            Some(v) => Some(
                serde_json::from_value(v.clone())
                    .map_err(|e| Error::config(format!("{PATH}.modeled_variables"), e.to_string()))?,
            ),
        };
        let weights = match obj.get("weights") {
            None => EngagementWeights::default(),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::config(format!("{PATH}.weights"), e.to_string()))?,
        };
        return Ok(GeneralitySource::Interactions {
            path: resolve("interactions")?,
            modeled_variables,
            weights,
        });
    }
    if obj.contains_key("table") {
        return Ok(GeneralitySource::Inline(value));
    }
    Err(Error::config(
        PATH,
        "expected one of `constant`, `table_file`, `interactions` or an inline `table`",
    ))
}

/// Resolve variable names into domain indices. Defaults to layout and theme
/// when the domain has them, otherwise to every logged variable.
pub fn modeled_indices(domain: &DomainSpec, names: Option<&[String]>) -> Result<Vec<usize>> {
    match names {
        Some(names) => names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                domain.variable_index(n).ok_or_else(|| {
                    Error::config(
                        format!("reward.generality.modeled_variables[{i}]"),
                        format!("unknown variable `{n}`"),
                    )
                })
            })
            .collect(),
        None => {
            let defaults: Vec<usize> = ["layout", "theme"]
                .iter()
                .filter_map(|n| domain.variable_index(n))
                .collect();
            Ok(defaults)
        }
    }
}

pub fn build_generality(source: &GeneralitySource, domain: &DomainSpec) -> Result<GeneralityModel> {
    match source {
        GeneralitySource::Constant(c) => GeneralityModel::constant(*c),
        GeneralitySource::Inline(v) => GeneralityModel::from_json(v, domain, "reward.generality"),
        GeneralitySource::TableFile(path) => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            let v: Value = serde_json::from_reader(std::io::BufReader::new(f))?;
            GeneralityModel::from_json(&v, domain, &path.display().to_string())
        }
        GeneralitySource::Interactions {
            path,
            modeled_variables,
            weights,
        } => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            let records = ingest_interactions(std::io::BufReader::new(f), domain)?;
            let mut modeled = modeled_indices(domain, modeled_variables.as_deref())?;
            if modeled.is_empty() {
                modeled = records[0].values.keys().copied().collect();
            }
            fit_generality(&records, domain, &modeled, weights)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc() -> Value {
        json!({
            "domain": {"name": "d", "variables": [
                {"name": "layout", "values": ["list", "grid"]},
                {"name": "theme", "values": ["light", "dark"]}
            ]},
            "reward": {"sigma": 0.5, "generality": {"constant": 0.3}},
            "hyperparams": {"episodes": 100, "decay_episodes": 50},
            "run": {"seed": 7}
        })
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let c = RunConfig::from_value(&doc(), Path::new(".")).unwrap();
        assert_eq!(c.reward.sigma, 0.5);
        assert_eq!(c.reward.bonus_step_threshold, 4);
        assert_eq!(c.hyperparams.alpha, 0.9);
        assert_eq!(c.run.max_steps, 25);
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.generality, GeneralitySource::Constant(0.3));
        let m = c.reward_model(Some(0.0)).unwrap();
        assert_eq!(m.generality_at(0), 0.3);
    }

    #[test]
    fn errors_name_their_section() {
        let mut d = doc();
        d["hyperparams"]["alpah"] = json!(0.5);
        match RunConfig::from_value(&d, Path::new(".")) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "hyperparams"),
            other => panic!("unexpected {other:?}"),
        }
        let mut d = doc();
        d["reward"]["sigma"] = json!(2.0);
        assert!(RunConfig::from_value(&d, Path::new(".")).is_err());
        let mut d = doc();
        d["reward"]["generality"] = json!({"mystery": 1});
        match RunConfig::from_value(&d, Path::new(".")) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "reward.generality"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inline_table_source() {
        let mut d = doc();
        d["reward"]["generality"] = json!({
            "modeled_variables": ["theme"], "fallback": 0.1, "table": {"theme=dark": 0.9}
        });
        let c = RunConfig::from_value(&d, Path::new(".")).unwrap();
        let g = c.build_generality().unwrap();
        assert_eq!(g.table().get(&vec![1]), Some(&0.9));
    }
}
