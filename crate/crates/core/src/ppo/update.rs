use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, clip_global_norm, gaussian_log_prob_grads, AdamState, DenseNet, GaussianPolicy, Grads};

use super::buffer::TrainingBatch;

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub batch_size: usize,
    /// Transitions per update across all environments.
    pub buffer_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub n_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            buffer_size: 40960,
            learning_rate: 3e-4,
            entropy_coef: 1e-3,
            clip: 0.2,
            gae_lambda: 0.95,
            gamma: 0.99,
            epochs: 5,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            n_envs: 8,
        }
    }
}

impl PpoConfig {
    pub fn n_steps(&self) -> usize {
        self.buffer_size / self.n_envs.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("ppo: {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return fail(format!("clip must be in (0, 1), got {}", self.clip));
        }
        if self.n_envs == 0 || self.buffer_size == 0 || !self.buffer_size.is_multiple_of(self.n_envs) {
            return fail(format!(
                "buffer_size ({}) must be a positive multiple of n_envs ({})",
                self.buffer_size, self.n_envs
            ));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_size {
            return fail(format!("batch_size must be in [1, buffer_size], got {}", self.batch_size));
        }
        if self.epochs == 0 || !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return fail("epochs, learning_rate and max_grad_norm must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub policy_output_gain: f64,
    pub value_output_gain: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            init_log_std: 0.0,
            policy_output_gain: 0.01,
            value_output_gain: 1.0,
        }
    }
}

/// Actor, critic and their optimiser states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub value: DenseNet,
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &NetConfig, rng: &mut R) -> Self {
        let actor = DenseNet::mlp(obs_dim, &cfg.hidden, act_dim, cfg.policy_output_gain, rng);
        let critic = DenseNet::mlp(obs_dim, &cfg.hidden, 1, cfg.value_output_gain, rng);
        let policy = GaussianPolicy::new(actor, cfg.init_log_std);
        let policy_opt = AdamState::new(&policy.param_shapes());
        let value_opt = AdamState::new(&critic.param_shapes());
        Self {
            policy,
            value: critic,
            policy_opt,
            value_opt,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.value.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.action_dim()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.policy.net.predict(obs)
    }

    pub fn state_value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.value.predict(obs)?[0])
    }

    /// Samples an action; returns `(action, log_prob, value)`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64, f64)> {
        let mean = self.mean_action(obs)?;
        let action = self.policy.sample(&mean, rng);
        let log_prob = self.policy.log_prob(&mean, &action);
        Ok((action, log_prob, self.state_value(obs)?))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mean = self.mean_action(obs)?;
        Ok(self.policy.log_prob(&mean, action))
    }

    pub fn is_finite(&self) -> bool {
        self.policy.net.is_finite() && self.value.is_finite() && self.policy.log_std.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Largest |ratio - 1| in the first minibatch of the first epoch.
    pub first_batch_max_ratio_dev: f64,
    pub first_batch_clip_fraction: f64,
    /// Mean pre-clipping global gradient norm.
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Clipped surrogate for one sample: `min(r A, clip(r, 1-eps, 1+eps) A)`
/// and its derivative with respect to `r` (zero when the clipped branch
/// is selected).
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Debug, Clone)]
struct ChunkOut {
    /// Network tensors followed by the `log_std` tensor.
    policy: Grads,
    value: Grads,
    policy_loss: f64,
    value_loss: f64,
    kl: f64,
    clipped: usize,
    max_ratio_dev: f64,
}

impl ChunkOut {
    fn merge(&mut self, other: &ChunkOut) {
        self.policy.add_assign(&other.policy);
        self.value.add_assign(&other.value);
        self.policy_loss += other.policy_loss;
        self.value_loss += other.value_loss;
        self.kl += other.kl;
        self.clipped += other.clipped;
        self.max_ratio_dev = self.max_ratio_dev.max(other.max_ratio_dev);
    }
}

fn chunk_grads(agent: &Agent, batch: &TrainingBatch, advantages: &[f64], idx: &[usize], hp: &PpoConfig) -> Result<ChunkOut> {
    let mut out = ChunkOut {
        policy: agent.policy.zero_grads(),
        value: agent.value.zero_grads(),
        policy_loss: 0.0,
        value_loss: 0.0,
        kl: 0.0,
        clipped: 0,
        max_ratio_dev: 0.0,
    };
    let mut log_std_grad = out.policy.0.pop().expect("log_std tensor");

    for &i in idx {
        let obs = batch.observation(i);
        let action = batch.action(i);
        let adv = advantages[i];

        let (mean, cache) = agent.policy.net.forward(obs)?;
        let log_prob = agent.policy.log_prob(&mean, action);
        let ratio = (log_prob - batch.log_probs[i]).exp();
        let (objective, d_ratio) = clipped_surrogate(ratio, adv, hp.clip);
        out.policy_loss -= objective;
        out.kl += (ratio - 1.0) - ratio.ln();
        out.max_ratio_dev = out.max_ratio_dev.max((ratio - 1.0).abs());
        if (ratio - 1.0).abs() > hp.clip {
            out.clipped += 1;
        }

        // d(-objective)/d(log_prob) = -d_ratio * ratio
        let coef = -d_ratio * ratio;
        if coef != 0.0 {
            let (d_mean, d_log_std) = gaussian_log_prob_grads(&mean, &agent.policy.log_std, action);
            let upstream: Vec<f64> = d_mean.iter().map(|g| coef * g).collect();
            agent.policy.net.accumulate_backward(&cache, &upstream, &mut out.policy)?;
            log_std_grad.iter_mut().zip(&d_log_std).for_each(|(g, d)| *g += coef * d);
        }

        let (v, vcache) = agent.value.forward(obs)?;
        let err = v[0] - batch.returns[i];
        out.value_loss += err * err;
        agent
            .value
            .accumulate_backward(&vcache, &[2.0 * hp.value_coef * err], &mut out.value)?;
    }
    out.policy.0.push(log_std_grad);
    Ok(out)
}

/// Clipped-surrogate PPO update: `epochs` passes over shuffled minibatches,
/// minimising `-surrogate + value_coef * (V - R)^2 - entropy_coef * H`
/// with joint global-norm gradient clipping and Adam.
///
/// Advantages are normalised over the whole batch before the first epoch.
pub fn ppo_update<R: Rng + ?Sized>(agent: &mut Agent, batch: &TrainingBatch, hp: &PpoConfig, rng: &mut R) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    if batch.obs_dim != agent.obs_dim() || batch.act_dim != agent.act_dim() {
        return Err(Error::DimensionMismatch {
            expected: agent.obs_dim(),
            actual: batch.obs_dim,
        });
    }
    let advantages = batch.normalized_advantages();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    let (mut samples, mut entropy_sum) = (0usize, 0.0);

    for epoch in 0..hp.epochs {
        order.shuffle(rng);
        for (mb_index, minibatch) in order.chunks(hp.batch_size).enumerate() {
            let parts: Vec<ChunkOut> = minibatch
                .par_chunks(GRAD_CHUNK)
                .map(|idx| chunk_grads(agent, batch, &advantages, idx, hp))
                .collect::<Result<_>>()?;
            let mut total = parts[0].clone();
            parts[1..].iter().for_each(|p| total.merge(p));

            let n = minibatch.len() as f64;
            if epoch == 0 && mb_index == 0 {
                stats.first_batch_max_ratio_dev = total.max_ratio_dev;
                stats.first_batch_clip_fraction = total.clipped as f64 / n;
            }
            total.policy.scale(1.0 / n);
            total.value.scale(1.0 / n);
            let entropy = agent.policy.entropy();
            let ls = total.policy.0.len() - 1;
            total.policy.0[ls].iter_mut().for_each(|g| *g -= hp.entropy_coef);

            let norm = clip_global_norm(&mut [&mut total.policy, &mut total.value], hp.max_grad_norm);
            adam_step(
                &mut agent.policy.tensors_mut(),
                &total.policy,
                &mut agent.policy_opt,
                hp.learning_rate,
            )?;
            adam_step(
                &mut agent.value.tensors_mut(),
                &total.value,
                &mut agent.value_opt,
                hp.learning_rate,
            )?;
            agent.policy.clamp_log_std();

            stats.policy_loss += total.policy_loss;
            stats.value_loss += total.value_loss;
            stats.approx_kl += total.kl;
            stats.clip_fraction += total.clipped as f64;
            stats.grad_norm += norm;
            entropy_sum += entropy * n;
            samples += minibatch.len();
            stats.minibatches += 1;
        }
    }

    let s = samples as f64;
    stats.policy_loss /= s;
    stats.value_loss /= s;
    stats.approx_kl /= s;
    stats.clip_fraction /= s;
    stats.entropy = entropy_sum / s;
    stats.grad_norm /= stats.minibatches as f64;
    Ok(stats)
}
