//! The learned island controller: a PPO policy over one-step episodes that
//! maps the island observation to layout parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::{LayoutParams, PlacementConfig};

use super::buffer::TrainingBatch;
use super::gae::compute_gae;
use super::normalizer::RunningNormalizer;
use super::update::{ppo_update, Agent, NetConfig, PpoConfig, UpdateStats};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps an unbounded 2-vector onto `[r_min, r_max] x [0, 1]`.
pub fn squash_params(raw: &[f64], ranges: &PlacementConfig) -> LayoutParams {
    LayoutParams {
        r: ranges.r_min + (ranges.r_max - ranges.r_min) * sigmoid(raw[0]),
        c: sigmoid(raw[1]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandTransition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

/// PPO on one-step episodes. Every transition is terminal, so GAE reduces
/// to `reward - V(obs)` regardless of the discount and lambda.
pub fn train_island_policy<R: Rng + ?Sized>(
    agent: &mut Agent,
    transitions: &[IslandTransition],
    hp: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if transitions.is_empty() {
        return Err(Error::Empty("island transitions"));
    }
    let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = transitions.iter().map(|t| t.value).collect();
    let dones = vec![true; transitions.len()];
    let (advantages, returns) = compute_gae(&rewards, &values, &dones, 0.0, hp.gamma, hp.gae_lambda)?;
    let batch = TrainingBatch {
        obs_dim: agent.obs_dim(),
        act_dim: agent.act_dim(),
        observations: transitions.iter().flat_map(|t| t.observation.iter().copied()).collect(),
        actions: transitions.iter().flat_map(|t| t.action.iter().copied()).collect(),
        log_probs: transitions.iter().map(|t| t.log_prob).collect(),
        advantages,
        returns,
    };
    ppo_update(agent, &batch, hp, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IslandLearnerConfig {
    /// One-step episodes gathered before each update.
    pub batch_episodes: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for IslandLearnerConfig {
    fn default() -> Self {
        Self {
            batch_episodes: 32,
            minibatch: 16,
            epochs: 5,
            learning_rate: 3e-4,
            entropy_coef: 1e-3,
            hidden: vec![64, 64],
            init_log_std: -0.5,
        }
    }
}

impl IslandLearnerConfig {
    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            batch_size: self.minibatch,
            buffer_size: self.batch_episodes,
            learning_rate: self.learning_rate,
            entropy_coef: self.entropy_coef,
            epochs: self.epochs,
            n_envs: 1,
            ..PpoConfig::default()
        }
    }
}

/// Pending one-step episode: the decision is made at layout time and the
/// reward arrives when the solver episode ends.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingDecision {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandLearner {
    pub agent: Agent,
    pub normalizer: RunningNormalizer,
    pub transitions: Vec<IslandTransition>,
    pub cfg: IslandLearnerConfig,
}

impl IslandLearner {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, cfg: IslandLearnerConfig, rng: &mut R) -> Self {
        let net = NetConfig {
            hidden: cfg.hidden.clone(),
            init_log_std: cfg.init_log_std,
            policy_output_gain: 0.01,
            value_output_gain: 1.0,
        };
        Self {
            agent: Agent::new(obs_dim, 2, &net, rng),
            normalizer: RunningNormalizer::new(obs_dim),
            transitions: Vec::new(),
            cfg,
        }
    }

    pub fn decide<R: Rng + ?Sized>(
        &mut self,
        raw_obs: &[f64],
        ranges: &PlacementConfig,
        rng: &mut R,
    ) -> Result<(LayoutParams, PendingDecision)> {
        let obs = self.normalizer.normalize(raw_obs, true)?;
        let (action, log_prob, value) = self.agent.act(&obs, rng)?;
        let params = squash_params(&action, ranges);
        Ok((
            params,
            PendingDecision {
                observation: obs,
                action,
                log_prob,
                value,
            },
        ))
    }

    /// Records a finished decision; trains once a full batch is pending.
    pub fn record<R: Rng + ?Sized>(
        &mut self,
        decision: PendingDecision,
        reward: f64,
        rng: &mut R,
    ) -> Result<Option<UpdateStats>> {
        self.transitions.push(IslandTransition {
            observation: decision.observation,
            action: decision.action,
            log_prob: decision.log_prob,
            value: decision.value,
            reward,
        });
        if self.transitions.len() < self.cfg.batch_episodes {
            return Ok(None);
        }
        let batch = std::mem::take(&mut self.transitions);
        train_island_policy(&mut self.agent, &batch, &self.cfg.ppo(), rng).map(Some)
    }
}
