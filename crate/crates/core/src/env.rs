//! Episodic UI-adaptation environment with deterministic transitions.
//!
//! Each episode draws a random UI and a random user (preferences), then lets
//! the agent change one variable per step. The episode ends when the UI
//! reaches the best blended reward attainable for that user, or at the step
//! cap. Reaching the optimum within `bonus_step_threshold` steps adds
//! `bonus_value` to the final reward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ActionKind, ActionSpec, DomainSpec, StateVector, UiConfig, UserPrefs};
use crate::error::{Error, Result};
use crate::reward::{RewardModel, RewardTiming};

/// Slack when comparing a step reward against the episode optimum.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    OptimalReached,
    StepCap,
}

impl TerminationCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationCause::OptimalReached => "optimal_reached",
            TerminationCause::StepCap => "step_cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub max_steps: u32,
    pub seed: u64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            max_steps: 25,
            seed: 0,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::config("run.max_steps", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub current: StateVector,
    pub steps_taken: u32,
    pub optimal_reward: f64,
    pub done: bool,
    pub termination: Option<TerminationCause>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// Reward paid for this step, bonus included.
    pub reward: f64,
    /// Blended reward of the resulting UI, before timing and bonus rules.
    pub base_reward: f64,
    pub done: bool,
    pub termination: Option<TerminationCause>,
}

pub struct AdaptationEnv<'a> {
    domain: &'a DomainSpec,
    reward: &'a RewardModel,
    max_steps: u32,
    rng: ChaCha8Rng,
    configs: Vec<Vec<usize>>,
    ui: Vec<usize>,
    prefs: Vec<usize>,
    steps: u32,
    optimal: f64,
    done: bool,
    termination: Option<TerminationCause>,
}

impl<'a> AdaptationEnv<'a> {
    pub fn new(domain: &'a DomainSpec, reward: &'a RewardModel, params: EnvParams) -> Result<Self> {
        params.validate()?;
        let n = domain.variable_count();
        Ok(AdaptationEnv {
            domain,
            reward,
            max_steps: params.max_steps,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            configs: domain.configs().collect(),
            ui: vec![0; n],
            prefs: vec![0; n],
            steps: 0,
            optimal: 0.0,
            // no episode yet: stepping before reset is an error
            done: true,
            termination: None,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        self.domain
    }

    pub fn reward_model(&self) -> &RewardModel {
        self.reward
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
    }

    /// The run's random stream, shared with the agent's exploration.
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Start a new episode with a uniformly random UI and user.
    pub fn reset(&mut self) -> StateVector {
        let n = self.configs.len();
        let ui = self.rng.gen_range(0..n);
        let prefs = self.rng.gen_range(0..n);
        self.ui.clone_from(&self.configs[ui]);
        self.prefs.clone_from(&self.configs[prefs]);
        self.begin();
        self.current()
    }

    /// Start a new episode from a given state (used by oracles and tests).
    pub fn reset_to(&mut self, state: &StateVector) -> Result<()> {
        self.domain.check_state(state)?;
        self.ui.copy_from_slice(state.ui.indices());
        self.prefs.copy_from_slice(state.prefs.indices());
        self.begin();
        Ok(())
    }

    fn begin(&mut self) {
        self.steps = 0;
        self.done = false;
        self.termination = None;
        self.optimal = self
            .configs
            .iter()
            .enumerate()
            .map(|(i, c)| self.reward.reward_at(i, c, &self.prefs))
            .fold(f64::NEG_INFINITY, f64::max);
    }

    /// Number of UI configurations searched when computing the episode optimum.
    pub fn optimum_candidates(&self) -> usize {
        self.configs.len()
    }

    pub fn current(&self) -> StateVector {
        StateVector {
            ui: UiConfig::new(self.ui.clone()),
            prefs: UserPrefs::new(self.prefs.clone()),
        }
    }

    pub fn episode(&self) -> EpisodeState {
        EpisodeState {
            current: self.current(),
            steps_taken: self.steps,
            optimal_reward: self.optimal,
            done: self.done,
            termination: self.termination,
        }
    }

    /// Flat Q-table row of the current state.
    pub fn state_index(&self) -> usize {
        let ui = self.domain.encode_config_unchecked(&self.ui);
        let prefs = self.domain.encode_config_unchecked(&self.prefs);
        ui * self.domain.ui_count() + prefs
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn alignment(&self) -> f64 {
        crate::reward::alignment_of(&self.ui, &self.prefs)
    }

    pub fn ui(&self) -> &[usize] {
        &self.ui
    }

    pub fn prefs(&self) -> &[usize] {
        &self.prefs
    }

    pub fn optimal_reward(&self) -> f64 {
        self.optimal
    }

    /// Apply the action with catalog index `action`.
    pub fn step_index(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let spec = self.domain.action(action)?;
        if let ActionKind::Set { variable, value } = spec.kind {
            self.ui[variable] = value;
        }
        self.steps += 1;

        let ui_index = self.domain.encode_config_unchecked(&self.ui);
        let base = self.reward.reward_at(ui_index, &self.ui, &self.prefs);
        let params = self.reward.params();
        let reward = if base >= self.optimal - OPTIMALITY_TOLERANCE {
            self.done = true;
            self.termination = Some(TerminationCause::OptimalReached);
            if self.steps <= params.bonus_step_threshold {
                base + params.bonus_value
            } else {
                base
            }
        } else if self.steps >= self.max_steps {
            self.done = true;
            self.termination = Some(TerminationCause::StepCap);
            base
        } else {
            match params.timing {
                RewardTiming::Terminal => 0.0,
                RewardTiming::EveryStep => base,
            }
        };
        Ok(StepResult {
            reward,
            base_reward: base,
            done: self.done,
            termination: self.termination,
        })
    }

    /// Gym-style step returning `(next state, reward, done)`.
    pub fn step(&mut self, action: &ActionSpec) -> Result<(StateVector, f64, bool)> {
        let r = self.step_index(action.index)?;
        Ok((self.current(), r.reward, r.done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::paper_domain;
    use crate::reward::{GeneralityModel, RewardParams};

    fn model(d: &DomainSpec, sigma: f64) -> RewardModel {
        let table = [(vec![2, 1], 0.9), (vec![0, 0], 0.2)].into_iter().collect();
        let g = GeneralityModel::new(d, vec![0, 1], table, 0.5).unwrap();
        RewardModel::new(d, RewardParams::default().with_sigma(sigma), g).unwrap()
    }

    fn state(ui: &[usize], prefs: &[usize]) -> StateVector {
        StateVector {
            ui: UiConfig::new(ui.to_vec()),
            prefs: UserPrefs::new(prefs.to_vec()),
        }
    }

    #[test]
    fn seeded_reset_replays() {
        let d = paper_domain();
        let m = model(&d, 0.5);
        let params = EnvParams { max_steps: 25, seed: 7 };
        let mut a = AdaptationEnv::new(&d, &m, params).unwrap();
        let mut b = AdaptationEnv::new(&d, &m, params).unwrap();
        for _ in 0..20 {
            assert_eq!(a.reset(), b.reset());
            assert_eq!(a.optimal_reward(), b.optimal_reward());
        }
        assert_eq!(a.optimum_candidates(), 90);
    }

    #[test]
    fn sigma_one_optimum_is_one() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        for _ in 0..50 {
            env.reset();
            assert_eq!(env.optimal_reward(), 1.0);
        }
    }

    #[test]
    fn set_theme_dark_leaves_prefs() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        // ui = (list, light, default, show)
        env.reset_to(&state(&[0, 0, 1, 0], &[3, 0, 0, 2])).unwrap();
        let (next, _, done) = env.step(&d.action(6).unwrap()).unwrap();
        assert_eq!(next.ui.indices(), &[0, 1, 1, 0]);
        assert_eq!(next.prefs.indices(), &[3, 0, 0, 2]);
        assert!(!done);
    }

    #[test]
    fn noop_keeps_state() {
        let d = paper_domain();
        let m = model(&d, 0.5);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams { max_steps: 25, seed: 3 }).unwrap();
        for _ in 0..100 {
            let before = env.reset();
            let (after, _, _) = env.step(&d.action(d.noop_index()).unwrap()).unwrap();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn aligning_at_step_three_earns_bonus() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        env.reset_to(&state(&[0, 0, 0, 0], &[1, 1, 1, 0])).unwrap();
        assert_eq!(env.step_index(1).unwrap().reward, 0.0); // layout=grid2
        assert_eq!(env.step_index(6).unwrap().reward, 0.0); // theme=dark
        let last = env.step_index(8).unwrap(); // font_size=default
        assert_eq!(last.reward, 2.0);
        assert!(last.done);
        assert_eq!(last.termination, Some(TerminationCause::OptimalReached));
        assert!(matches!(env.step_index(13), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn no_bonus_past_threshold() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        env.reset_to(&state(&[0, 0, 0, 0], &[1, 0, 0, 0])).unwrap();
        for _ in 0..4 {
            assert!(!env.step_index(13).unwrap().done);
        }
        let r = env.step_index(1).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.done);
    }

    #[test]
    fn step_cap_terminates_without_bonus() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams { max_steps: 3, seed: 0 }).unwrap();
        env.reset_to(&state(&[0, 0, 0, 0], &[1, 1, 1, 1])).unwrap();
        env.step_index(13).unwrap();
        env.step_index(13).unwrap();
        let r = env.step_index(13).unwrap();
        assert!(r.done);
        assert_eq!(r.termination, Some(TerminationCause::StepCap));
        assert_eq!(r.reward, 0.0);
        assert_eq!(env.steps_taken(), 3);
    }

    #[test]
    fn already_optimal_start_ends_on_noop() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        env.reset_to(&state(&[2, 1, 0, 0], &[2, 1, 0, 0])).unwrap();
        let r = env.step_index(13).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, 2.0);
        assert_eq!(env.steps_taken(), 1);
    }

    #[test]
    fn every_step_timing_pays_intermediate_rewards() {
        let d = paper_domain();
        let g = GeneralityModel::constant(0.5).unwrap();
        let params = RewardParams {
            timing: RewardTiming::EveryStep,
            ..RewardParams::default()
        };
        let m = RewardModel::new(&d, params, g).unwrap();
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        env.reset_to(&state(&[0, 0, 0, 0], &[1, 1, 0, 0])).unwrap();
        let r = env.step_index(1).unwrap();
        assert_eq!(r.reward, 0.75);
        assert!(!r.done);
    }

    #[test]
    fn step_before_reset_is_rejected() {
        let d = paper_domain();
        let m = model(&d, 1.0);
        let mut env = AdaptationEnv::new(&d, &m, EnvParams::default()).unwrap();
        assert!(matches!(env.step_index(0), Err(Error::EpisodeFinished)));
        assert!(AdaptationEnv::new(&d, &m, EnvParams { max_steps: 0, seed: 0 }).is_err());
    }
}
