//! Blended reward: `(1 - sigma) * G + sigma * I` where `G` is a population-level
//! engagement score for the UI configuration and `I` is the alignment between
//! the UI and the user's preferences. Both terms live in `[0, 1]`.
//!
//! `G` comes from a table over a subset of the domain variables. The table is
//! either fitted from an interaction log or loaded from a JSON file, so the
//! predictions of any external engagement model can be plugged in.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::domain::{DomainSpec, UiConfig, UserPrefs};
use crate::error::{Error, Result};

/// When the blended reward is paid out during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTiming {
    /// Only the terminating step is rewarded; intermediate steps pay 0.
    #[default]
    Terminal,
    /// Every step is rewarded with the blended reward of the resulting UI.
    EveryStep,
}

impl RewardTiming {
    pub(crate) fn code(self) -> u8 {
        match self {
            RewardTiming::Terminal => 0,
            RewardTiming::EveryStep => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RewardTiming::Terminal),
            1 => Some(RewardTiming::EveryStep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub sigma: f64,
    pub bonus_value: f64,
    pub bonus_step_threshold: u32,
    pub timing: RewardTiming,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            sigma: 1.0,
            bonus_value: 1.0,
            bonus_step_threshold: 4,
            timing: RewardTiming::Terminal,
        }
    }
}

impl RewardParams {
    pub fn with_sigma(self, sigma: f64) -> Self {
        RewardParams { sigma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::config("reward.sigma", "must lie in [0, 1]"));
        }
        if !self.bonus_value.is_finite() || self.bonus_value < 0.0 {
            return Err(Error::config("reward.bonus_value", "must be finite and >= 0"));
        }
        if self.bonus_step_threshold < 1 {
            return Err(Error::config("reward.bonus_step_threshold", "must be >= 1"));
        }
        Ok(())
    }
}

/// Fraction of variables on which `ui` and `prefs` agree.
pub fn alignment(ui: &UiConfig, prefs: &UserPrefs) -> Result<f64> {
    let (u, p) = (ui.indices(), prefs.indices());
    if u.len() != p.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            actual: u.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::Dimension {
            expected: 1,
            actual: 0,
        });
    }
    Ok(alignment_of(u, p))
}

pub(crate) fn alignment_of(ui: &[usize], prefs: &[usize]) -> f64 {
    let mismatched = ui.iter().zip(prefs).filter(|(a, b)| a != b).count();
    (ui.len() - mismatched) as f64 / ui.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralityModel {
    modeled: Vec<usize>,
    table: BTreeMap<Vec<usize>, f64>,
    fallback: f64,
}

impl GeneralityModel {
    /// `modeled` holds variable indices in domain order; table keys are value
    /// indices of those variables in the same order.
    pub fn new(
        domain: &DomainSpec,
        modeled: Vec<usize>,
        table: BTreeMap<Vec<usize>, f64>,
        fallback: f64,
    ) -> Result<Self> {
        for w in modeled.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::config(
                    "reward.generality.modeled_variables",
                    "must be distinct and in domain order",
                ));
            }
        }
        for &v in &modeled {
            if v >= domain.variable_count() {
                return Err(Error::OutOfRange {
                    what: "variable",
                    index: v,
                    limit: domain.variable_count(),
                });
            }
        }
        if !(0.0..=1.0).contains(&fallback) {
            return Err(Error::config("reward.generality.fallback", "must lie in [0, 1]"));
        }
        for (key, &score) in &table {
            if key.len() != modeled.len() {
                return Err(Error::Dimension {
                    expected: modeled.len(),
                    actual: key.len(),
                });
            }
            for (&vi, &val) in modeled.iter().zip(key) {
                let card = domain.variables()[vi].cardinality();
                if val >= card {
                    return Err(Error::OutOfRange {
                        what: "value",
                        index: val,
                        limit: card,
                    });
                }
            }
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::config(
                    "reward.generality.table",
                    format!("score {score} outside [0, 1]"),
                ));
            }
        }
        Ok(GeneralityModel {
            modeled,
            table,
            fallback,
        })
    }

    /// Same score for every configuration.
    pub fn constant(score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::config("reward.generality.fallback", "must lie in [0, 1]"));
        }
        Ok(GeneralityModel {
            modeled: Vec::new(),
            table: BTreeMap::new(),
            fallback: score,
        })
    }

    pub fn modeled_variables(&self) -> &[usize] {
        &self.modeled
    }

    pub fn table(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.table
    }

    pub fn fallback(&self) -> f64 {
        self.fallback
    }

    /// Engagement score of `ui`, or the fallback for unseen combinations.
    pub fn generality(&self, ui: &UiConfig) -> f64 {
        self.score_of(ui.indices())
    }

    pub(crate) fn score_of(&self, ui: &[usize]) -> f64 {
        let key: Vec<usize> = self.modeled.iter().map(|&v| ui[v]).collect();
        self.table.get(&key).copied().unwrap_or(self.fallback)
    }

    pub fn to_json(&self, domain: &DomainSpec) -> Value {
        let names: Vec<&str> = self
            .modeled
            .iter()
            .map(|&v| domain.variables()[v].name.as_str())
            .collect();
        let mut table = Map::new();
        for (key, &score) in &self.table {
            table.insert(self.key_label(domain, key), json!(score));
        }
        json!({
            "modeled_variables": names,
            "fallback": self.fallback,
            "table": table,
        })
    }

    fn key_label(&self, domain: &DomainSpec, key: &[usize]) -> String {
        self.modeled
            .iter()
            .zip(key)
            .map(|(&v, &val)| {
                let var = &domain.variables()[v];
                format!("{}={}", var.name, var.values[val])
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Parse the generality table file format:
    /// `{"modeled_variables": [...], "fallback": x, "table": {"layout=grid3|theme=dark": 0.8}}`.
    pub fn from_json(value: &Value, domain: &DomainSpec, path: &str) -> Result<Self> {
        let names = value
            .get("modeled_variables")
            .and_then(Value::as_array)
            .ok_or_else(|| {
                Error::config(format!("{path}.modeled_variables"), "missing or not an array")
            })?;
        let mut modeled = Vec::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            let npath = format!("{path}.modeled_variables[{i}]");
            let name = n.as_str().ok_or_else(|| Error::config(&npath, "not a string"))?;
            modeled.push(
                domain
                    .variable_index(name)
                    .ok_or_else(|| Error::config(&npath, format!("unknown variable `{name}`")))?,
            );
        }
        let mut order: Vec<usize> = (0..modeled.len()).collect();
        order.sort_by_key(|&i| modeled[i]);
        let sorted: Vec<usize> = order.iter().map(|&i| modeled[i]).collect();

        let fallback = value
            .get("fallback")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::config(format!("{path}.fallback"), "missing or not a number"))?;
        let entries = value
            .get("table")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::config(format!("{path}.table"), "missing or not an object"))?;
        let mut table = BTreeMap::new();
        for (label, score) in entries {
            let epath = format!("{path}.table.{label}");
            let score = score
                .as_f64()
                .ok_or_else(|| Error::config(&epath, "score is not a number"))?;
            let mut assigned = BTreeMap::new();
            for part in label.split('|') {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::config(&epath, "expected `var=value` parts"))?;
                let vi = domain
                    .variable_index(k)
                    .filter(|vi| sorted.contains(vi))
                    .ok_or_else(|| Error::config(&epath, format!("`{k}` is not modeled")))?;
                let val = domain.variables()[vi]
                    .value_index(v)
                    .ok_or_else(|| Error::config(&epath, format!("unknown value `{v}`")))?;
                if assigned.insert(vi, val).is_some() {
                    return Err(Error::config(&epath, format!("`{k}` given twice")));
                }
            }
            if assigned.len() != sorted.len() {
                return Err(Error::config(&epath, "key must name every modeled variable"));
            }
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::config(&epath, "score outside [0, 1]"));
            }
            table.insert(assigned.into_values().collect(), score);
        }
        GeneralityModel::new(domain, sorted, table, fallback)
    }
}

/// `(1 - sigma) * G + sigma * I` for a validated state.
pub fn combined_reward(
    ui: &UiConfig,
    prefs: &UserPrefs,
    params: &RewardParams,
    model: &GeneralityModel,
) -> f64 {
    blend(
        params.sigma,
        model.generality(ui),
        alignment_of(ui.indices(), prefs.indices()),
    )
}

#[inline]
pub(crate) fn blend(sigma: f64, generality: f64, individuality: f64) -> f64 {
    (1.0 - sigma) * generality + sigma * individuality
}

/// Reward parameters plus a generality model with its scores precomputed for
/// every UI configuration of one domain.
#[derive(Debug, Clone)]
pub struct RewardModel {
    params: RewardParams,
    generality: GeneralityModel,
    by_config: Vec<f64>,
}

impl RewardModel {
    pub fn new(domain: &DomainSpec, params: RewardParams, generality: GeneralityModel) -> Result<Self> {
        params.validate()?;
        for &v in generality.modeled_variables() {
            if v >= domain.variable_count() {
                return Err(Error::OutOfRange {
                    what: "variable",
                    index: v,
                    limit: domain.variable_count(),
                });
            }
        }
        let by_config = domain.configs().map(|c| generality.score_of(&c)).collect();
        Ok(RewardModel {
            params,
            generality,
            by_config,
        })
    }

    pub fn with_sigma(&self, domain: &DomainSpec, sigma: f64) -> Result<Self> {
        RewardModel::new(domain, self.params.with_sigma(sigma), self.generality.clone())
    }

    pub fn params(&self) -> &RewardParams {
        &self.params
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    pub fn generality_model(&self) -> &GeneralityModel {
        &self.generality
    }

    /// Blended reward for a UI (given with its config index) and preferences.
    #[inline]
    pub fn reward_at(&self, ui_index: usize, ui: &[usize], prefs: &[usize]) -> f64 {
        blend(self.params.sigma, self.by_config[ui_index], alignment_of(ui, prefs))
    }

    pub fn reward(&self, domain: &DomainSpec, ui: &UiConfig, prefs: &UserPrefs) -> Result<f64> {
        let idx = domain.encode_config(ui.indices())?;
        domain.check_indices(prefs.indices())?;
        Ok(self.reward_at(idx, ui.indices(), prefs.indices()))
    }

    pub fn generality_at(&self, ui_index: usize) -> f64 {
        self.by_config[ui_index]
    }

    /// Best blended reward over every UI configuration for these preferences.
    pub fn optimal_reward(&self, domain: &DomainSpec, prefs: &[usize]) -> f64 {
        domain
            .configs()
            .enumerate()
            .map(|(i, c)| self.reward_at(i, &c, prefs))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub session: String,
    /// Value index for each variable present in the log, keyed by variable index.
    pub values: BTreeMap<usize, usize>,
    pub clicks: f64,
    pub scrolls: f64,
    pub events: f64,
    pub duration_s: f64,
}

const SIGNAL_COLUMNS: [&str; 4] = ["clicks", "scrolls", "events", "duration_s"];

/// Read an interaction log: `session`, one column per logged UI variable
/// (value labels), then `clicks,scrolls,events,duration_s`.
pub fn ingest_interactions<R: Read>(reader: R, domain: &DomainSpec) -> Result<Vec<InteractionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Interaction {
            row: 0,
            message: format!("unreadable header: {e}"),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = std::iter::once("session")
        .chain(SIGNAL_COLUMNS)
        .filter(|c| col(c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Interaction {
            row: 0,
            message: format!("missing columns: {}", missing.join(", ")),
        });
    }
    let ui_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(ci, h)| domain.variable_index(h).map(|vi| (ci, vi)))
        .collect();
    if ui_cols.is_empty() {
        return Err(Error::Interaction {
            row: 0,
            message: "no column names a domain variable".into(),
        });
    }
    let [ci_clicks, ci_scrolls, ci_events, ci_duration] =
        SIGNAL_COLUMNS.map(|c| col(c).expect("checked above"));
    let ci_session = col("session").expect("checked above");

    let mut records = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| Error::Interaction {
            row,
            message: e.to_string(),
        })?;
        let field = |ci: usize| rec.get(ci).unwrap_or("");
        let number = |ci: usize, name: &str| -> Result<f64> {
            let raw = field(ci);
            let v: f64 = raw.parse().map_err(|_| Error::Interaction {
                row,
                message: format!("{name} is not numeric: `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Interaction {
                    row,
                    message: format!("{name} is not finite"),
                });
            }
            Ok(v)
        };
        let count = |ci: usize, name: &str| -> Result<f64> {
            let v = number(ci, name)?;
            if v < 0.0 {
                return Err(Error::Interaction {
                    row,
                    message: format!("{name} must be >= 0"),
                });
            }
            Ok(v)
        };
        let mut values = BTreeMap::new();
        for &(ci, vi) in &ui_cols {
            let var = &domain.variables()[vi];
            let label = field(ci);
            let val = var.value_index(label).ok_or_else(|| Error::Interaction {
                row,
                message: format!("unknown value `{label}` for `{}`", var.name),
            })?;
            values.insert(vi, val);
        }
        let duration_s = number(ci_duration, "duration_s")?;
        if duration_s <= 0.0 {
            return Err(Error::Interaction {
                row,
                message: "duration_s must be > 0".into(),
            });
        }
        records.push(InteractionRecord {
            row,
            session: field(ci_session).to_string(),
            values,
            clicks: count(ci_clicks, "clicks")?,
            scrolls: count(ci_scrolls, "scrolls")?,
            events: count(ci_events, "events")?,
            duration_s,
        });
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementWeights {
    pub clicks: f64,
    pub scrolls: f64,
    pub events: f64,
}

impl Default for EngagementWeights {
    fn default() -> Self {
        EngagementWeights {
            clicks: 1.0,
            scrolls: 1.0,
            events: 1.0,
        }
    }
}

impl EngagementWeights {
    /// Weighted sum of per-minute interaction rates.
    pub fn raw_engagement(&self, r: &InteractionRecord) -> f64 {
        let minutes = r.duration_s / 60.0;
        (self.clicks * r.clicks + self.scrolls * r.scrolls + self.events * r.events) / minutes
    }
}

/// Fit the engagement table: raw per-minute engagement, min-max normalised over
/// the whole log (all-equal logs map to 0.5), averaged per combination of the
/// modeled variables. The fallback is the mean over all records.
pub fn fit_generality(
    records: &[InteractionRecord],
    domain: &DomainSpec,
    modeled: &[usize],
    weights: &EngagementWeights,
) -> Result<GeneralityModel> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut modeled = modeled.to_vec();
    modeled.sort_unstable();
    modeled.dedup();

    let raw: Vec<f64> = records.iter().map(|r| weights.raw_engagement(r)).collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw engagement".into()));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let normalized: Vec<f64> = raw
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
        .collect();

    let mut sums: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
    for (r, &score) in records.iter().zip(&normalized) {
        let key = modeled
            .iter()
            .map(|v| {
                r.values.get(v).copied().ok_or_else(|| Error::Interaction {
                    row: r.row,
                    message: format!(
                        "no column for modeled variable `{}`",
                        domain.variables()[*v].name
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let slot = sums.entry(key).or_insert((0.0, 0));
        slot.0 += score;
        slot.1 += 1;
    }
    let table = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, (sum / n as f64).clamp(0.0, 1.0)))
        .collect();
    let fallback = (normalized.iter().sum::<f64>() / normalized.len() as f64).clamp(0.0, 1.0);
    GeneralityModel::new(domain, modeled, table, fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::paper_domain;
    use proptest::prelude::*;

    fn ui(v: &[usize]) -> UiConfig {
        UiConfig::new(v.to_vec())
    }
    fn prefs(v: &[usize]) -> UserPrefs {
        UserPrefs::new(v.to_vec())
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(alignment(&ui(&[1, 0, 2, 1]), &prefs(&[1, 0, 2, 1])).unwrap(), 1.0);
        assert_eq!(alignment(&ui(&[1, 0, 2, 1]), &prefs(&[0, 1, 0, 0])).unwrap(), 0.0);
        assert_eq!(alignment(&ui(&[1, 0, 2, 1]), &prefs(&[1, 0, 2, 0])).unwrap(), 0.75);
        assert!(matches!(
            alignment(&ui(&[1, 0]), &prefs(&[1, 0, 2])),
            Err(Error::Dimension { .. })
        ));
    }

    fn layout_theme_model(entries: &[((usize, usize), f64)], fallback: f64) -> GeneralityModel {
        let d = paper_domain();
        let table = entries.iter().map(|&((l, t), s)| (vec![l, t], s)).collect();
        GeneralityModel::new(&d, vec![0, 1], table, fallback).unwrap()
    }

    #[test]
    fn generality_lookup_and_fallback() {
        let m = layout_theme_model(&[((2, 1), 0.8)], 0.5);
        assert_eq!(m.generality(&ui(&[2, 1, 0, 0])), 0.8);
        assert_eq!(m.generality(&ui(&[2, 1, 2, 2])), 0.8);
        assert_eq!(m.generality(&ui(&[0, 0, 0, 0])), 0.5);
        let constant = GeneralityModel::constant(1.0).unwrap();
        for c in paper_domain().configs() {
            assert_eq!(constant.generality(&UiConfig::new(c)), 1.0);
        }
    }

    #[test]
    fn blend_examples() {
        let m = layout_theme_model(&[((2, 1), 0.8)], 0.5);
        let u = ui(&[2, 1, 0, 0]);
        let p = prefs(&[2, 0, 1, 0]); // alignment 0.5
        let at = |sigma| {
            combined_reward(&u, &p, &RewardParams::default().with_sigma(sigma), &m)
        };
        assert_eq!(at(0.0), 0.8);
        assert_eq!(at(1.0), 0.5);
        assert!((blend(0.25, 0.8, 0.4) - 0.70).abs() < 1e-12);
    }

    #[test]
    fn reward_params_validation() {
        assert!(RewardParams::default().with_sigma(1.5).validate().is_err());
        assert!(RewardParams { bonus_step_threshold: 0, ..Default::default() }
            .validate()
            .is_err());
        assert!(RewardParams { bonus_value: -1.0, ..Default::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn optimal_reward_sigma_one_is_one() {
        let d = paper_domain();
        let m = layout_theme_model(&[((2, 1), 0.9), ((0, 0), 0.1)], 0.4);
        let rm = RewardModel::new(&d, RewardParams::default(), m).unwrap();
        for c in d.configs() {
            assert_eq!(rm.optimal_reward(&d, &c), 1.0);
        }
    }

    const HEADER: &str = "session,layout,theme,clicks,scrolls,events,duration_s\n";

    #[test]
    fn ingest_examples() {
        let d = paper_domain();
        assert!(matches!(
            ingest_interactions(HEADER.as_bytes(), &d),
            Err(Error::NoRecords)
        ));
        let one = format!("{HEADER}s1,grid3,dark,10,4,2,120\n");
        let recs = ingest_interactions(one.as_bytes(), &d).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].values[&0], 2);
        assert_eq!(recs[0].values[&1], 1);
        assert_eq!(recs[0].row, 1);

        let zero = format!("{HEADER}s1,grid3,dark,10,4,2,120\ns2,list,light,1,1,1,0\n");
        match ingest_interactions(zero.as_bytes(), &d) {
            Err(Error::Interaction { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("duration"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let nonnum = format!("{HEADER}s1,grid3,dark,ten,4,2,120\n");
        assert!(matches!(
            ingest_interactions(nonnum.as_bytes(), &d),
            Err(Error::Interaction { row: 1, .. })
        ));
        let missing = "session,layout,theme,clicks,events,duration_s\ns1,list,dark,1,1,1\n";
        match ingest_interactions(missing.as_bytes(), &d) {
            Err(Error::Interaction { row: 0, message }) => assert!(message.contains("scrolls")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fit_degenerate_is_half() {
        let d = paper_domain();
        let csv = format!("{HEADER}a,list,dark,5,5,5,60\nb,grid2,light,5,5,5,60\nc,grid3,dark,5,5,5,60\n");
        let recs = ingest_interactions(csv.as_bytes(), &d).unwrap();
        let m = fit_generality(&recs, &d, &[0, 1], &EngagementWeights::default()).unwrap();
        assert_eq!(m.table().len(), 3);
        assert!(m.table().values().all(|&s| s == 0.5));
        assert_eq!(m.fallback(), 0.5);
    }

    #[test]
    fn fit_two_combos_hits_endpoints() {
        let d = paper_domain();
        let csv = format!("{HEADER}a,list,dark,30,10,5,60\nb,grid2,light,1,1,1,60\n");
        let recs = ingest_interactions(csv.as_bytes(), &d).unwrap();
        let m = fit_generality(&recs, &d, &[0, 1], &EngagementWeights::default()).unwrap();
        assert_eq!(m.table()[&vec![0, 1]], 1.0);
        assert_eq!(m.table()[&vec![1, 0]], 0.0);
        assert!(fit_generality(&[], &d, &[0, 1], &EngagementWeights::default()).is_err());
    }

    #[test]
    fn fit_rejects_unlogged_variable() {
        let d = paper_domain();
        let csv = format!("{HEADER}a,list,dark,30,10,5,60\n");
        let recs = ingest_interactions(csv.as_bytes(), &d).unwrap();
        assert!(fit_generality(&recs, &d, &[2], &EngagementWeights::default()).is_err());
    }

    #[test]
    fn table_json_roundtrip() {
        let d = paper_domain();
        let m = layout_theme_model(&[((2, 1), 0.8), ((0, 0), 0.25)], 0.5);
        let v = m.to_json(&d);
        assert_eq!(v["table"]["layout=grid3|theme=dark"], json!(0.8));
        assert_eq!(GeneralityModel::from_json(&v, &d, "t").unwrap(), m);
        // key order inside a label does not matter
        let swapped = json!({
            "modeled_variables": ["theme", "layout"],
            "fallback": 0.5,
            "table": {"theme=dark|layout=grid3": 0.8, "layout=list|theme=light": 0.25}
        });
        assert_eq!(GeneralityModel::from_json(&swapped, &d, "t").unwrap(), m);
        let bad = json!({"modeled_variables": ["layout"], "fallback": 0.5, "table": {"layout=sepia": 0.1}});
        assert!(GeneralityModel::from_json(&bad, &d, "t").is_err());
        let out_of_range = json!({"modeled_variables": ["layout"], "fallback": 0.5, "table": {"layout=list": 1.5}});
        assert!(GeneralityModel::from_json(&out_of_range, &d, "t").is_err());
    }

    proptest! {
        #[test]
        fn alignment_is_permutation_invariant(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 1..8),
            seed in any::<u64>(),
        ) {
            let (u, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let base = alignment_of(&u, &p);
            let mut order: Vec<usize> = (0..u.len()).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let pu: Vec<_> = order.iter().map(|&i| u[i]).collect();
            let pp: Vec<_> = order.iter().map(|&i| p[i]).collect();
            prop_assert_eq!(alignment_of(&pu, &pp), base);
        }

        #[test]
        fn blend_is_monotone(sigma in 0.0f64..=1.0, g in 0.0f64..=1.0, i in 0.0f64..=1.0, dg in 0.0f64..=1.0, di in 0.0f64..=1.0) {
            let base = blend(sigma, g, i);
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(blend(sigma, (g + dg).min(1.0), i) >= base - 1e-15);
            prop_assert!(blend(sigma, g, (i + di).min(1.0)) >= base - 1e-15);
        }

        #[test]
        fn fitted_scores_in_unit_interval(rows in prop::collection::vec((0usize..5, 0usize..2, 0u32..50, 0u32..50, 0u32..50, 1u32..600), 1..40)) {
            let d = paper_domain();
            let recs: Vec<InteractionRecord> = rows.iter().enumerate().map(|(i, &(l, t, c, s, e, dur))| InteractionRecord {
                row: i + 1,
                session: format!("s{i}"),
                values: [(0, l), (1, t)].into_iter().collect(),
                clicks: c as f64, scrolls: s as f64, events: e as f64, duration_s: dur as f64,
            }).collect();
            let m = fit_generality(&recs, &d, &[0, 1], &EngagementWeights::default()).unwrap();
            prop_assert!(m.table().values().all(|s| (0.0..=1.0).contains(s)));
            // fallback equals the record-weighted mean of the table entries
            let mut weighted = 0.0;
            for (key, score) in m.table() {
                let n = recs.iter().filter(|r| r.values[&0] == key[0] && r.values[&1] == key[1]).count();
                weighted += score * n as f64;
            }
            prop_assert!((weighted / recs.len() as f64 - m.fallback()).abs() < 1e-9);
        }
    }
}
