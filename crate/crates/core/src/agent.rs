//! Tabular Q-learning with epsilon-greedy exploration and a linear epsilon decay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainHash, DomainSpec};
use crate::error::{Error, Result};
use crate::reward::RewardParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: u64,
    pub eps_start: f64,
    pub eps_min: f64,
    pub decay_episodes: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.90,
            gamma: 0.90,
            episodes: 60_000,
            eps_start: 1.0,
            eps_min: 0.1,
            decay_episodes: 30_000,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(format!("hyperparams.{key}"), msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.eps_start) {
            return bad("eps_start", "must lie in [0, 1]");
        }
        if !(0.0..=self.eps_start).contains(&self.eps_min) {
            return bad("eps_min", "must lie in [0, eps_start]");
        }
        if self.decay_episodes > self.episodes {
            return bad("decay_episodes", "must not exceed episodes");
        }
        Ok(())
    }

    /// The same schedule scaled to a different episode budget (decay keeps its
    /// share of the run).
    pub fn with_episodes(self, episodes: u64) -> Self {
        let decay = if self.episodes == 0 {
            0
        } else {
            ((self.decay_episodes as u128 * episodes as u128) / self.episodes as u128) as u64
        };
        Hyperparams {
            episodes,
            decay_episodes: decay,
            ..self
        }
    }
}

/// Linear decay from `eps_start` to `eps_min` over `decay_episodes`, then flat.
pub fn epsilon_at(episode: u64, h: &Hyperparams) -> f64 {
    if h.decay_episodes == 0 || episode >= h.decay_episodes {
        return h.eps_min;
    }
    let frac = episode as f64 / h.decay_episodes as f64;
    (h.eps_start - (h.eps_start - h.eps_min) * frac).max(h.eps_min)
}

/// Provenance stored with every Q-table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTableMeta {
    pub domain_hash: DomainHash,
    pub hyperparams: Hyperparams,
    pub reward: RewardParams,
    pub max_steps: u32,
    pub seed: u64,
    pub episodes_trained: u64,
    pub created_unix: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
    pub meta: QTableMeta,
}

impl QTable {
    pub fn zeros(domain: &DomainSpec, meta: QTableMeta) -> Result<Self> {
        if meta.domain_hash != domain.hash() {
            return Err(Error::HashMismatch {
                expected: domain.hash().to_string(),
                found: meta.domain_hash.to_string(),
            });
        }
        let (states, actions) = (domain.state_count(), domain.action_count());
        Ok(QTable {
            states,
            actions,
            values: vec![0.0; states * actions],
            meta,
        })
    }

    pub(crate) fn from_parts(
        states: usize,
        actions: usize,
        values: Vec<f64>,
        meta: QTableMeta,
    ) -> Self {
        debug_assert_eq!(values.len(), states * actions);
        QTable {
            states,
            actions,
            values,
            meta,
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Verify the table belongs to `domain` (hash and shape).
    pub fn check_domain(&self, domain: &DomainSpec) -> Result<()> {
        if self.meta.domain_hash != domain.hash() {
            return Err(Error::HashMismatch {
                expected: domain.hash().to_string(),
                found: self.meta.domain_hash.to_string(),
            });
        }
        if self.states != domain.state_count() || self.actions != domain.action_count() {
            return Err(Error::ShapeMismatch {
                expected_states: domain.state_count(),
                expected_actions: domain.action_count(),
                states: self.states,
                actions: self.actions,
            });
        }
        Ok(())
    }

    /// Argmax of the row; ties go to the lowest action index.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy action choice.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, state: usize, eps: f64, rng: &mut R) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        rng.gen_range(0..q.actions)
    } else {
        q.greedy_action(state)
    }
}

/// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma * M)`, with `M = 0` on
/// terminal transitions and `max_a' Q(s', a')` otherwise. Returns the new value.
pub fn q_update(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    done: bool,
    h: &Hyperparams,
) -> Result<f64> {
    if !reward.is_finite() {
        return Err(Error::NonFinite(format!("reward {reward}")));
    }
    if state >= q.states || next_state >= q.states {
        return Err(Error::OutOfRange {
            what: "state",
            index: state.max(next_state),
            limit: q.states,
        });
    }
    if action >= q.actions {
        return Err(Error::OutOfRange {
            what: "action",
            index: action,
            limit: q.actions,
        });
    }
    let future = if done {
        0.0
    } else {
        q.row(next_state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let old = q.get(state, action);
    let new = (1.0 - h.alpha) * old + h.alpha * (reward + h.gamma * future);
    q.set(state, action, new);
    Ok(new)
}
