//! Brute-force verifiers for the learned policy: exact value iteration over
//! the whole MDP and a combinatorial minimum-steps bound.
//!
//! The bonus depends on how many steps the episode has used, so the bare
//! state is not Markov for returns. Value iteration therefore runs on
//! `(state, steps_taken)` with `steps_taken` in `0..max_steps`, which also
//! models the step cap exactly.

use crate::agent::QTable;
use crate::domain::{DomainSpec, StateVector};
use crate::env::{AdaptationEnv, EnvParams, OPTIMALITY_TOLERANCE};
use crate::error::{Error, Result};
use crate::reward::{RewardModel, RewardTiming};

/// Largest state space the oracles will enumerate.
pub const MAX_ENUMERABLE_STATES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueIterationParams {
    pub gamma: f64,
    pub max_steps: u32,
    pub tol: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct ValueFunction {
    /// Optimal value of every state at the start of an episode.
    pub values: Vec<f64>,
    pub gamma: f64,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
    /// Sup-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
    layers: Vec<Vec<f64>>,
}

impl ValueFunction {
    /// Optimal value of `state` after `steps_taken` steps of the current episode.
    pub fn value_at(&self, state: usize, steps_taken: usize) -> f64 {
        self.layers[steps_taken][state]
    }

    pub fn sweeps(&self) -> usize {
        self.residuals.len()
    }
}

/// Dense tables shared by the oracles: transitions and rewards per config pair.
struct Tables {
    ui_count: usize,
    actions: usize,
    next: Vec<usize>,
    base: Vec<f64>,
    optimal: Vec<bool>,
}

impl Tables {
    fn build(domain: &DomainSpec, reward: &RewardModel) -> Self {
        let configs: Vec<Vec<usize>> = domain.configs().collect();
        let ui_count = configs.len();
        let actions = domain.action_count();
        let mut next = Vec::with_capacity(ui_count * actions);
        for c in &configs {
            let ui = crate::domain::UiConfig::new(c.clone());
            for a in domain.action_catalog() {
                next.push(domain.encode_config_unchecked(domain.apply(&ui, a).indices()));
            }
        }
        // base[u * U + p]
        let mut base = Vec::with_capacity(ui_count * ui_count);
        for (u, cu) in configs.iter().enumerate() {
            for cp in &configs {
                base.push(reward.reward_at(u, cu, cp));
            }
        }
        let mut best = vec![f64::NEG_INFINITY; ui_count];
        for u in 0..ui_count {
            for (p, b) in best.iter_mut().enumerate() {
                *b = b.max(base[u * ui_count + p]);
            }
        }
        let optimal = (0..ui_count * ui_count)
            .map(|i| base[i] >= best[i % ui_count] - OPTIMALITY_TOLERANCE)
            .collect();
        Tables {
            ui_count,
            actions,
            next,
            base,
            optimal,
        }
    }
}

fn check_enumerable(domain: &DomainSpec) -> Result<()> {
    if domain.state_count() > MAX_ENUMERABLE_STATES {
        return Err(Error::TooLarge {
            states: domain.state_count(),
            limit: MAX_ENUMERABLE_STATES,
        });
    }
    Ok(())
}

/// Jacobi value iteration under the environment's exact step, termination and
/// bonus rules.
pub fn value_iteration(
    domain: &DomainSpec,
    reward: &RewardModel,
    params: &ValueIterationParams,
) -> Result<ValueFunction> {
    check_enumerable(domain)?;
    if !(0.0..1.0).contains(&params.gamma) {
        return Err(Error::Param("gamma must lie in [0, 1)".into()));
    }
    if params.max_steps < 1 {
        return Err(Error::Param("max_steps must be >= 1".into()));
    }
    let t = Tables::build(domain, reward);
    let rp = reward.params();
    let horizon = params.max_steps as usize;
    let states = t.ui_count * t.ui_count;

    let mut layers = vec![vec![0.0f64; states]; horizon];
    let mut residuals = Vec::new();
    loop {
        let mut fresh = vec![vec![0.0f64; states]; horizon];
        let mut residual: f64 = 0.0;
        for (taken, layer) in fresh.iter_mut().enumerate() {
            let after = taken + 1;
            let bonus = if after <= rp.bonus_step_threshold as usize {
                rp.bonus_value
            } else {
                0.0
            };
            for (s, slot) in layer.iter_mut().enumerate() {
                let (u, p) = (s / t.ui_count, s % t.ui_count);
                let mut best = f64::NEG_INFINITY;
                for a in 0..t.actions {
                    let u2 = t.next[u * t.actions + a];
                    let idx = u2 * t.ui_count + p;
                    let b = t.base[idx];
                    let q = if t.optimal[idx] {
                        b + bonus
                    } else if after >= horizon {
                        b
                    } else {
                        let immediate = match rp.timing {
                            RewardTiming::Terminal => 0.0,
                            RewardTiming::EveryStep => b,
                        };
                        immediate + params.gamma * layers[after][idx]
                    };
                    best = best.max(q);
                }
                residual = residual.max((best - layers[taken][s]).abs());
                *slot = best;
            }
        }
        layers = fresh;
        residuals.push(residual);
        if residual < params.tol {
            break;
        }
        if residuals.len() >= params.max_sweeps {
            return Err(Error::NonConvergence {
                sweeps: residuals.len(),
                residual,
            });
        }
    }
    Ok(ValueFunction {
        values: layers[0].clone(),
        gamma: params.gamma,
        residual: *residuals.last().expect("at least one sweep"),
        residuals,
        layers,
    })
}

/// Fewest steps that can end an episode from `state`: the smallest Hamming
/// distance to a reward-optimal UI, or 1 when the UI is already optimal
/// (a step is needed to terminate).
pub fn min_steps(domain: &DomainSpec, reward: &RewardModel, state: &StateVector) -> Result<usize> {
    domain.check_state(state)?;
    let prefs = state.prefs.indices();
    let ui = state.ui.indices();
    let configs: Vec<Vec<usize>> = domain.configs().collect();
    let best = configs
        .iter()
        .enumerate()
        .map(|(i, c)| reward.reward_at(i, c, prefs))
        .fold(f64::NEG_INFINITY, f64::max);
    let distance = configs
        .iter()
        .enumerate()
        .filter(|(i, c)| reward.reward_at(*i, c, prefs) >= best - OPTIMALITY_TOLERANCE)
        .map(|(_, c)| c.iter().zip(ui).filter(|(a, b)| a != b).count())
        .min()
        .expect("at least one configuration");
    Ok(distance.max(1))
}

/// Outcome of one greedy rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rollout {
    pub discounted_return: f64,
    pub steps: u32,
}

/// Follow the table greedily from `state` and accumulate the discounted return.
pub fn greedy_rollout(
    q: &QTable,
    domain: &DomainSpec,
    reward: &RewardModel,
    max_steps: u32,
    gamma: f64,
    state: &StateVector,
) -> Result<Rollout> {
    q.check_domain(domain)?;
    let mut env = AdaptationEnv::new(domain, reward, EnvParams { max_steps, seed: 0 })?;
    env.reset_to(state)?;
    let mut ret = 0.0;
    let mut discount = 1.0;
    loop {
        let step = env.step_index(q.greedy_action(env.state_index()))?;
        ret += discount * step.reward;
        discount *= gamma;
        if step.done {
            return Ok(Rollout {
                discounted_return: ret,
                steps: env.steps_taken(),
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyComparison {
    pub states: usize,
    pub within_tolerance: usize,
    pub max_gap: f64,
    pub tolerance: f64,
}

impl PolicyComparison {
    pub fn fraction_within(&self) -> f64 {
        self.within_tolerance as f64 / self.states as f64
    }
}

/// Compare every state's greedy-rollout return with the optimal value.
pub fn compare_policy(
    q: &QTable,
    domain: &DomainSpec,
    reward: &RewardModel,
    vf: &ValueFunction,
    max_steps: u32,
    tolerance: f64,
) -> Result<PolicyComparison> {
    check_enumerable(domain)?;
    let mut within = 0;
    let mut max_gap: f64 = 0.0;
    for s in 0..domain.state_count() {
        let state = domain.decode_state(s)?;
        let r = greedy_rollout(q, domain, reward, max_steps, vf.gamma, &state)?;
        let gap = (vf.values[s] - r.discounted_return).abs();
        max_gap = max_gap.max(gap);
        if gap <= tolerance {
            within += 1;
        }
    }
    Ok(PolicyComparison {
        states: domain.state_count(),
        within_tolerance: within,
        max_gap,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{paper_domain, UiConfig, UserPrefs, VariableSpec};
    use crate::reward::{GeneralityModel, RewardParams};

    fn state(ui: &[usize], prefs: &[usize]) -> StateVector {
        StateVector {
            ui: UiConfig::new(ui.to_vec()),
            prefs: UserPrefs::new(prefs.to_vec()),
        }
    }

    fn vi_params() -> ValueIterationParams {
        ValueIterationParams {
            gamma: 0.9,
            max_steps: 25,
            tol: 1e-10,
            max_sweeps: 200,
        }
    }

    fn small() -> DomainSpec {
        DomainSpec::new(
            "small",
            vec![
                VariableSpec::new("layout", &["list", "grid"]),
                VariableSpec::new("theme", &["light", "dark", "contrast"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_step_from_optimal_is_worth_reward_plus_bonus() {
        let d = paper_domain();
        let m = RewardModel::new(&d, RewardParams::default(), GeneralityModel::constant(0.5).unwrap())
            .unwrap();
        let vf = value_iteration(&d, &m, &vi_params()).unwrap();
        let s = state(&[1, 0, 0, 0], &[0, 0, 0, 0]);
        assert!((vf.values[d.encode_state(&s).unwrap()] - 2.0).abs() < 1e-9);
        let aligned = state(&[3, 1, 2, 0], &[3, 1, 2, 0]);
        assert!((vf.values[d.encode_state(&aligned).unwrap()] - 2.0).abs() < 1e-9);
        // three mismatches: two free steps, then the rewarded one
        let three = state(&[1, 1, 1, 0], &[0, 0, 0, 0]);
        assert!((vf.values[d.encode_state(&three).unwrap()] - 0.81 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn residuals_contract() {
        let d = small();
        let m = RewardModel::new(
            &d,
            RewardParams {
                timing: RewardTiming::EveryStep,
                ..RewardParams::default().with_sigma(0.5)
            },
            GeneralityModel::new(&d, vec![1], [(vec![1], 1.0), (vec![0], 0.0)].into_iter().collect(), 0.3)
                .unwrap(),
        )
        .unwrap();
        let vf = value_iteration(&d, &m, &vi_params()).unwrap();
        for w in vf.residuals.windows(2) {
            assert!(w[1] <= w[0] * 0.9 + 1e-12, "{:?}", vf.residuals);
        }
        assert!(vf.residual < 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        let d = small();
        let m = RewardModel::new(&d, RewardParams::default(), GeneralityModel::constant(0.5).unwrap())
            .unwrap();
        let p = ValueIterationParams {
            max_sweeps: 1,
            ..vi_params()
        };
        assert!(matches!(
            value_iteration(&d, &m, &p),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn min_steps_examples() {
        let d = paper_domain();
        let m = RewardModel::new(&d, RewardParams::default(), GeneralityModel::constant(0.5).unwrap())
            .unwrap();
        assert_eq!(min_steps(&d, &m, &state(&[1, 1, 1, 0], &[0, 0, 0, 0])).unwrap(), 3);
        assert_eq!(min_steps(&d, &m, &state(&[2, 1, 1, 0], &[2, 1, 1, 0])).unwrap(), 1);
        for s in (0..d.state_count()).step_by(37) {
            let st = d.decode_state(s).unwrap();
            let k = min_steps(&d, &m, &st).unwrap();
            assert!((1..=4).contains(&k));
        }
    }

    #[test]
    fn min_steps_sigma_zero_ignores_unmodeled() {
        let d = paper_domain();
        let table = [(vec![2, 1], 1.0)].into_iter().collect();
        let g = GeneralityModel::new(&d, vec![0, 1], table, 0.2).unwrap();
        let m = RewardModel::new(&d, RewardParams::default().with_sigma(0.0), g).unwrap();
        assert_eq!(min_steps(&d, &m, &state(&[0, 0, 1, 2], &[0, 0, 0, 0])).unwrap(), 2);
        assert_eq!(min_steps(&d, &m, &state(&[2, 1, 1, 2], &[0, 0, 0, 0])).unwrap(), 1);
    }

    #[test]
    fn refuses_large_domains() {
        let d = DomainSpec::new(
            "big",
            (0..5)
                .map(|i| VariableSpec {
                    name: format!("v{i}"),
                    values: (0..4).map(|j| format!("x{j}")).collect(),
                })
                .collect(),
        )
        .unwrap();
        let m = RewardModel::new(&d, RewardParams::default(), GeneralityModel::constant(0.5).unwrap())
            .unwrap();
        assert!(matches!(
            value_iteration(&d, &m, &vi_params()),
            Err(Error::TooLarge { .. })
        ));
    }
}
