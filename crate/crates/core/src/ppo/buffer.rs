use crate::error::{Error, Result};

use super::gae::compute_gae;

/// Fixed-capacity trajectory store, laid out env-major: slot
/// `env * n_steps + t` holds step `t` of environment `env`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after each env's last stored transition.
    pub bootstrap: Vec<f64>,
    filled: Vec<usize>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, n_steps: usize, obs_dim: usize, act_dim: usize) -> Self {
        let cap = n_envs * n_steps;
        Self {
            n_envs,
            n_steps,
            obs_dim,
            act_dim,
            observations: vec![0.0; cap * obs_dim],
            actions: vec![0.0; cap * act_dim],
            log_probs: vec![0.0; cap],
            rewards: vec![0.0; cap],
            values: vec![0.0; cap],
            dones: vec![false; cap],
            bootstrap: vec![0.0; n_envs],
            filled: vec![0; n_envs],
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_envs * self.n_steps
    }

    pub fn len(&self) -> usize {
        self.filled.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled.iter().all(|&f| f == self.n_steps)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        env: usize,
        obs: &[f64],
        action: &[f64],
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
    ) -> Result<()> {
        if obs.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim,
                actual: obs.len(),
            });
        }
        let t = self.filled[env];
        if t >= self.n_steps {
            return Err(Error::Config(format!("rollout buffer for env {env} is already full")));
        }
        let i = env * self.n_steps + t;
        self.observations[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(action);
        self.log_probs[i] = log_prob;
        self.rewards[i] = reward;
        self.values[i] = value;
        self.dones[i] = done;
        self.filled[env] += 1;
        Ok(())
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    /// Runs GAE per environment and packages the buffer for an update.
    pub fn into_batch(self, gamma: f64, lambda: f64) -> Result<TrainingBatch> {
        if !self.is_full() {
            return Err(Error::Config(format!(
                "rollout buffer incomplete: {} of {} transitions",
                self.len(),
                self.capacity()
            )));
        }
        let mut advantages = Vec::with_capacity(self.capacity());
        let mut returns = Vec::with_capacity(self.capacity());
        for env in 0..self.n_envs {
            let span = env * self.n_steps..(env + 1) * self.n_steps;
            let (adv, ret) = compute_gae(
                &self.rewards[span.clone()],
                &self.values[span.clone()],
                &self.dones[span],
                self.bootstrap[env],
                gamma,
                lambda,
            )?;
            advantages.extend(adv);
            returns.extend(ret);
        }
        Ok(TrainingBatch {
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            observations: self.observations,
            actions: self.actions,
            log_probs: self.log_probs,
            advantages,
            returns,
        })
    }
}

/// Flat transitions with advantages and returns, ready for `ppo_update`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    /// Advantages rescaled to zero mean and unit (population) standard
    /// deviation.
    pub fn normalized_advantages(&self) -> Vec<f64> {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return Vec::new();
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt() + 1e-8;
        self.advantages.iter().map(|a| (a - mean) / std).collect()
    }
}
