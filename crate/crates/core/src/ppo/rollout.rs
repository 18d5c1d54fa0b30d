use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SimRng;

use super::buffer::RolloutBuffer;
use super::normalizer::RunningNormalizer;
use super::update::Agent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    /// The transition ended an episode; the environment has already been
    /// reset and its observation is the first of the next episode.
    pub done: bool,
}

/// A batch of independent environments stepped in lockstep.
pub trait VecEnvironment {
    fn n_envs(&self) -> usize;

    fn obs_dim(&self) -> usize;

    /// Current raw observation of every environment.
    fn observations(&self) -> Vec<Vec<f64>>;

    /// Applies one action per environment. Finished environments reset
    /// themselves before returning.
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>>;
}

/// Fills a buffer of `n_envs * n_steps` transitions.
///
/// Observations are normalised (updating the running statistics when
/// `update_normalizer` is set) before the policy sees them, and the
/// normalised vectors are what the buffer stores. Environment `i` samples
/// its actions from `action_rngs[i]`.
pub fn collect_rollouts<E: VecEnvironment + ?Sized>(
    envs: &mut E,
    agent: &Agent,
    normalizer: &mut RunningNormalizer,
    n_steps: usize,
    action_rngs: &mut [SimRng],
    update_normalizer: bool,
) -> Result<RolloutBuffer> {
    let n_envs = envs.n_envs();
    if action_rngs.len() != n_envs {
        return Err(Error::DimensionMismatch {
            expected: n_envs,
            actual: action_rngs.len(),
        });
    }
    let mut buffer = RolloutBuffer::new(n_envs, n_steps, envs.obs_dim(), agent.act_dim());

    for _ in 0..n_steps {
        let raw = envs.observations();
        if update_normalizer {
            for obs in &raw {
                normalizer.update(obs)?;
            }
        }
        let normalized = raw.iter().map(|o| normalizer.apply(o)).collect::<Result<Vec<_>>>()?;
        let decisions = normalized
            .par_iter()
            .zip(action_rngs.par_iter_mut())
            .map(|(obs, rng)| agent.act(obs, rng))
            .collect::<Result<Vec<_>>>()?;
        let actions: Vec<Vec<f64>> = decisions.iter().map(|(a, _, _)| a.clone()).collect();
        let results = envs.step(&actions)?;

        for (env, ((obs, (action, log_prob, value)), result)) in normalized.iter().zip(&decisions).zip(&results).enumerate() {
            buffer.push(env, obs, action, *log_prob, result.reward, *value, result.done)?;
        }
    }

    for (env, obs) in envs.observations().iter().enumerate() {
        buffer.bootstrap[env] = agent.state_value(&normalizer.apply(obs)?)?;
    }
    Ok(buffer)
}
