//! Adaptation domain: UI variables, their values, the action catalog and the
//! mixed-radix encoding between structured states and flat Q-table rows.
//!
//! A state pairs the current UI configuration with the user's preferred
//! configuration, both drawn from the same variable catalog. Flat indices use
//! positional (mixed-radix) notation with the UI block most significant and,
//! inside each block, the first declared variable most significant. This
//! ordering is part of the persisted Q-table contract and must not change.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpec {
    pub name: String,
    pub values: Vec<String>,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        VariableSpec {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// SHA-256 identity of a domain (name, variables, values and their order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DomainHash(pub [u8; 32]);

impl fmt::Display for DomainHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl FromStr for DomainHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Param(format!("malformed domain hash `{s}`"));
        if s.len() != 64 || !s.is_ascii() {
            return Err(bad());
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        Ok(DomainHash(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UiConfig(Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserPrefs(Vec<usize>);

impl UiConfig {
    pub fn new(indices: Vec<usize>) -> Self {
        UiConfig(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

impl UserPrefs {
    pub fn new(indices: Vec<usize>) -> Self {
        UserPrefs(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// The UI configuration that exactly matches these preferences.
    pub fn as_ui(&self) -> UiConfig {
        UiConfig(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateVector {
    pub ui: UiConfig,
    pub prefs: UserPrefs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Set { variable: usize, value: usize },
    NoOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpec {
    pub index: usize,
    pub kind: ActionKind,
}

impl ActionSpec {
    pub fn is_noop(&self) -> bool {
        matches!(self.kind, ActionKind::NoOp)
    }
}

#[derive(Debug, Clone)]
pub struct DomainSpec {
    name: String,
    variables: Vec<VariableSpec>,
    ui_count: usize,
    actions: Vec<ActionSpec>,
    hash: DomainHash,
}

impl PartialEq for DomainSpec {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
    }
}

impl DomainSpec {
    pub fn new(name: impl Into<String>, variables: Vec<VariableSpec>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::config("domain.name", "must be a nonempty string"));
        }
        if variables.is_empty() {
            return Err(Error::config(
                "domain.variables",
                "must contain at least one variable",
            ));
        }
        let mut seen = HashSet::new();
        for (i, var) in variables.iter().enumerate() {
            let path = format!("domain.variables[{i}]");
            if var.name.trim().is_empty() {
                return Err(Error::config(format!("{path}.name"), "must be nonempty"));
            }
            if var.name.contains(['=', ',', '|']) {
                return Err(Error::config(
                    format!("{path}.name"),
                    "must not contain '=', ',' or '|'",
                ));
            }
            if !seen.insert(var.name.as_str()) {
                return Err(Error::config(
                    format!("{path}.name"),
                    format!("duplicate variable name `{}`", var.name),
                ));
            }
            if var.values.is_empty() {
                return Err(Error::config(format!("{path}.values"), "empty value list"));
            }
            if var.values.len() < 2 {
                return Err(Error::config(
                    format!("{path}.values"),
                    "a variable needs at least 2 values",
                ));
            }
            let mut labels = HashSet::new();
            for (j, label) in var.values.iter().enumerate() {
                let vpath = format!("{path}.values[{j}]");
                if label.trim().is_empty() || label.contains(['=', ',', '|']) {
                    return Err(Error::config(
                        vpath,
                        "value labels must be nonempty and free of '=', ',' and '|'",
                    ));
                }
                if !labels.insert(label.as_str()) {
                    return Err(Error::config(
                        vpath,
                        format!("duplicate value `{label}` in variable `{}`", var.name),
                    ));
                }
            }
        }

        let ui_count = variables
            .iter()
            .try_fold(1usize, |acc, v| acc.checked_mul(v.cardinality()))
            .and_then(|n| n.checked_mul(n).map(|_| n))
            .ok_or_else(|| Error::config("domain.variables", "state space overflows usize"))?;

        let mut actions = Vec::new();
        for (vi, var) in variables.iter().enumerate() {
            for value in 0..var.cardinality() {
                actions.push(ActionSpec {
                    index: actions.len(),
                    kind: ActionKind::Set {
                        variable: vi,
                        value,
                    },
                });
            }
        }
        actions.push(ActionSpec {
            index: actions.len(),
            kind: ActionKind::NoOp,
        });

        let hash = domain_hash(&name, &variables);
        Ok(DomainSpec {
            name,
            variables,
            ui_count,
            actions,
            hash,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Number of distinct UI configurations (product of value counts).
    pub fn ui_count(&self) -> usize {
        self.ui_count
    }

    /// Number of enumerable states: `ui_count()²`.
    pub fn state_count(&self) -> usize {
        self.ui_count * self.ui_count
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn action_catalog(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn action(&self, index: usize) -> Result<ActionSpec> {
        self.actions.get(index).copied().ok_or(Error::OutOfRange {
            what: "action",
            index,
            limit: self.actions.len(),
        })
    }

    pub fn noop_index(&self) -> usize {
        self.actions.len() - 1
    }

    pub fn hash(&self) -> DomainHash {
        self.hash
    }

    /// `variable=value` for set actions, `no_op` for the no-op.
    pub fn action_name(&self, action: &ActionSpec) -> String {
        match action.kind {
            ActionKind::Set { variable, value } => {
                let var = &self.variables[variable];
                format!("{}={}", var.name, var.values[value])
            }
            ActionKind::NoOp => "no_op".to_string(),
        }
    }

    pub fn check_indices(&self, indices: &[usize]) -> Result<()> {
        if indices.len() != self.variables.len() {
            return Err(Error::Dimension {
                expected: self.variables.len(),
                actual: indices.len(),
            });
        }
        for (&i, var) in indices.iter().zip(&self.variables) {
            if i >= var.cardinality() {
                return Err(Error::OutOfRange {
                    what: "value",
                    index: i,
                    limit: var.cardinality(),
                });
            }
        }
        Ok(())
    }

    pub fn check_state(&self, s: &StateVector) -> Result<()> {
        self.check_indices(s.ui.indices())?;
        self.check_indices(s.prefs.indices())
    }

    /// Mixed-radix index of one configuration block, first variable most significant.
    pub fn encode_config(&self, indices: &[usize]) -> Result<usize> {
        self.check_indices(indices)?;
        Ok(self.encode_config_unchecked(indices))
    }

    pub(crate) fn encode_config_unchecked(&self, indices: &[usize]) -> usize {
        indices
            .iter()
            .zip(&self.variables)
            .fold(0, |acc, (&i, var)| acc * var.cardinality() + i)
    }

    pub fn decode_config(&self, mut index: usize) -> Result<Vec<usize>> {
        if index >= self.ui_count {
            return Err(Error::OutOfRange {
                what: "configuration",
                index,
                limit: self.ui_count,
            });
        }
        let mut out = vec![0; self.variables.len()];
        for (slot, var) in out.iter_mut().zip(&self.variables).rev() {
            *slot = index % var.cardinality();
            index /= var.cardinality();
        }
        Ok(out)
    }

    pub fn encode_state(&self, s: &StateVector) -> Result<usize> {
        let ui = self.encode_config(s.ui.indices())?;
        let prefs = self.encode_config(s.prefs.indices())?;
        Ok(ui * self.ui_count + prefs)
    }

    pub fn decode_state(&self, index: usize) -> Result<StateVector> {
        if index >= self.state_count() {
            return Err(Error::OutOfRange {
                what: "state",
                index,
                limit: self.state_count(),
            });
        }
        Ok(StateVector {
            ui: UiConfig(self.decode_config(index / self.ui_count)?),
            prefs: UserPrefs(self.decode_config(index % self.ui_count)?),
        })
    }

    /// Every UI configuration in index order.
    pub fn configs(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.ui_count).map(|i| self.decode_config(i).expect("index in range"))
    }

    /// Result of applying `action` to `ui`. Preferences are never touched by actions.
    pub fn apply(&self, ui: &UiConfig, action: &ActionSpec) -> UiConfig {
        let mut next = ui.clone();
        if let ActionKind::Set { variable, value } = action.kind {
            next.0[variable] = value;
        }
        next
    }

    /// Resolve a `{variable: label}` map into value indices. Every variable
    /// must be present exactly once; `path` prefixes error locations.
    pub fn indices_from_labels(
        &self,
        labels: &BTreeMap<String, String>,
        path: &str,
    ) -> Result<Vec<usize>> {
        for key in labels.keys() {
            if self.variable_index(key).is_none() {
                return Err(Error::UnknownLabel {
                    path: format!("{path}.{key}"),
                    label: key.clone(),
                });
            }
        }
        self.variables
            .iter()
            .map(|var| {
                let label = labels.get(&var.name).ok_or_else(|| Error::UnknownLabel {
                    path: format!("{path}.{}", var.name),
                    label: "<missing>".to_string(),
                })?;
                var.value_index(label).ok_or_else(|| Error::UnknownLabel {
                    path: format!("{path}.{}", var.name),
                    label: label.clone(),
                })
            })
            .collect()
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<(String, String)> {
        indices
            .iter()
            .zip(&self.variables)
            .map(|(&i, v)| (v.name.clone(), v.values[i].clone()))
            .collect()
    }

    /// Parse `layout=list,theme=dark,...|layout=grid3,...` (UI block, then prefs).
    pub fn parse_state_literal(&self, literal: &str) -> Result<StateVector> {
        let (ui, prefs) = literal.split_once('|').ok_or_else(|| {
            Error::Param("state literal needs `|` between ui and prefs blocks".into())
        })?;
        let block = |text: &str, path: &str| -> Result<Vec<usize>> {
            let mut map = BTreeMap::new();
            for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::Param(format!("expected var=value, got `{pair}`")))?;
                if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    return Err(Error::Param(format!("variable `{k}` given twice in {path}")));
                }
            }
            self.indices_from_labels(&map, path)
        };
        let prefs = prefs.strip_prefix("prefs=").unwrap_or(prefs);
        Ok(StateVector {
            ui: UiConfig(block(ui, "ui")?),
            prefs: UserPrefs(block(prefs, "prefs")?),
        })
    }

    pub fn format_state_literal(&self, s: &StateVector) -> String {
        let block = |idx: &[usize]| {
            self.labels_of(idx)
                .into_iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{}|{}", block(s.ui.indices()), block(s.prefs.indices()))
    }

    /// The `domain` section of a configuration document.
    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "variables": self.variables.iter().map(|v| json!({
                "name": v.name,
                "values": v.values,
            })).collect::<Vec<_>>(),
        })
    }

    /// Parse a bare `domain` section (`{name, variables}`).
    pub fn from_json(section: &Value, path: &str) -> Result<Self> {
        let obj = section
            .as_object()
            .ok_or_else(|| Error::config(path, "expected an object"))?;
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::config(format!("{path}.name"), "missing or not a string"))?;
        let vars = obj
            .get("variables")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::config(format!("{path}.variables"), "missing or not an array"))?;
        let mut variables = Vec::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            let vpath = format!("{path}.variables[{i}]");
            let vname = v
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::config(format!("{vpath}.name"), "missing or not a string"))?;
            let values = v
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    Error::config(format!("{vpath}.values"), "missing or not an array")
                })?
                .iter()
                .enumerate()
                .map(|(j, label)| {
                    label.as_str().map(str::to_string).ok_or_else(|| {
                        Error::config(format!("{vpath}.values[{j}]"), "not a string")
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            variables.push(VariableSpec {
                name: vname.to_string(),
                values,
            });
        }
        DomainSpec::new(name, variables)
    }
}

/// Load and validate the domain from a full configuration document.
pub fn load_domain(document: &Value) -> Result<DomainSpec> {
    let section = document
        .get("domain")
        .ok_or_else(|| Error::config("domain", "missing section"))?;
    DomainSpec::from_json(section, "domain")
}

/// Layout, theme, font size and information display: 90 UI configurations,
/// 8100 states, 14 actions.
pub fn paper_domain() -> DomainSpec {
    DomainSpec::new(
        "aui-catalogue",
        vec![
            VariableSpec::new("layout", &["list", "grid2", "grid3", "grid4", "grid5"]),
            VariableSpec::new("theme", &["light", "dark"]),
            VariableSpec::new("font_size", &["small", "default", "big"]),
            VariableSpec::new("info_display", &["show", "partial", "hide"]),
        ],
    )
    .expect("built-in domain is valid")
}

fn domain_hash(name: &str, variables: &[VariableSpec]) -> DomainHash {
    let mut h = Sha256::new();
    let mut put = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    put(b"aui-rl-domain-v1");
    put(name.as_bytes());
    put(&(variables.len() as u64).to_le_bytes());
    for var in variables {
        put(var.name.as_bytes());
        put(&(var.values.len() as u64).to_le_bytes());
        for label in &var.values {
            put(label.as_bytes());
        }
    }
    DomainHash(h.finalize().into())
}
