//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use coisland::environment::{build_observation, step, Action, EnvState, OBS_DIM};
use coisland::harness::{RunConfig, World};
use coisland::nn::DenseNet;
use coisland::placement::Layout;
use coisland::ppo::{StepResult, VecEnvironment};
use coisland::rng::{stream, Stream};
use coisland::Result;
use rand::Rng;

/// Discounted return of every step, truncated at episode ends and
/// bootstrapped after the last step when it is not terminal.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut g = 0.0;
            let mut discount = 1.0;
            let mut k = t;
            loop {
                g += discount * rewards[k];
                if dones[k] {
                    break;
                }
                discount *= gamma;
                k += 1;
                if k == n {
                    g += discount * bootstrap;
                    break;
                }
            }
            g
        })
        .collect()
}

/// One-step TD residuals.
pub fn td_residuals(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let next = if t + 1 < values.len() { values[t + 1] } else { bootstrap };
            let next = if dones[t] { 0.0 } else { next };
            rewards[t] + gamma * next - values[t]
        })
        .collect()
}

pub fn random_sequence<R: Rng>(rng: &mut R, max_len: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>, f64) {
    let n = rng.random_range(1..=max_len);
    let rewards = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let values = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let dones = (0..n).map(|_| rng.random_bool(0.15)).collect();
    (rewards, values, dones, rng.random_range(-3.0..3.0))
}

/// `|a - b| / max(|a|, |b|)`, with absolute error below `floor` counted as
/// agreement.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < floor {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Central finite-difference gradient of `f` at every parameter of `net`.
pub fn numeric_param_grads(net: &DenseNet, h: f64, f: impl Fn(&DenseNet) -> f64) -> Vec<Vec<f64>> {
    let mut probe = net.clone();
    let shapes = net.param_shapes();
    let mut out = Vec::with_capacity(shapes.len());
    for (t, &len) in shapes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = f(&probe);
            probe.tensors_mut()[t][i] = orig - h;
            let down = f(&probe);
            probe.tensors_mut()[t][i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Nearest-neighbour distance of every flower by scanning the full
/// distance matrix.
pub fn all_pairs_nearest(layout: &Layout) -> Vec<Option<f64>> {
    let n = layout.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j {
                *cell = (layout.flower(i) - layout.flower(j)).norm();
            }
        }
    }
    d.iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            m.is_finite().then_some(m)
        })
        .collect()
}

/// Deterministic chain `0 -> 1 -> 2 -> end` with one-hot observations and
/// fixed rewards; actions are ignored.
pub struct Chain {
    pub rewards: [f64; 3],
    pub states: Vec<usize>,
}

impl Chain {
    pub fn new(rewards: [f64; 3], n_envs: usize) -> Self {
        Self {
            rewards,
            states: (0..n_envs).map(|i| i % 3).collect(),
        }
    }

    pub fn one_hot(s: usize) -> Vec<f64> {
        let mut v = vec![0.0; 3];
        v[s] = 1.0;
        v
    }

    pub fn true_values(&self, gamma: f64) -> [f64; 3] {
        let r = self.rewards;
        [r[0] + gamma * r[1] + gamma * gamma * r[2], r[1] + gamma * r[2], r[2]]
    }
}

impl VecEnvironment for Chain {
    fn n_envs(&self) -> usize {
        self.states.len()
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|&s| Self::one_hot(s)).collect()
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>> {
        assert_eq!(actions.len(), self.states.len());
        Ok(self
            .states
            .iter_mut()
            .map(|s| {
                let reward = self.rewards[*s];
                let done = *s == 2;
                *s = if done { 0 } else { *s + 1 };
                StepResult { reward, done }
            })
            .collect())
    }
}

/// First evaluation episode of the smoke task, ready to step.
pub fn smoke_episode(seed: u64, k: usize) -> (RunConfig, EnvState) {
    let mut cfg = RunConfig::smoke();
    cfg.seed = seed;
    let world = World::build(&cfg).unwrap();
    let mut rng = stream(seed, Stream::EvalLayout(k));
    let obstacles = world.draw_obstacles(&cfg, &mut rng).unwrap();
    let episode = world
        .begin(
            &cfg,
            obstacles,
            &cfg.eval.params(),
            &mut rng,
            &mut stream(seed, Stream::EvalSpawn(k)),
        )
        .unwrap();
    (cfg, episode.state)
}

/// Steers the beak at the nearest flower with velocity damping.
pub fn homing_action(state: &EnvState, cfg: &RunConfig) -> Action {
    let o = build_observation(state, &cfg.env);
    debug_assert_eq!(o.len(), OBS_DIM);
    let to = [o[9], o[10], o[11]];
    let norm = to.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    Action {
        thrust: [
            to[0] / norm - 0.3 * o[12],
            to[1] / norm - 0.3 * o[13],
            to[2] / norm - 0.3 * o[14],
        ],
        yaw_torque: 0.0,
    }
}

pub fn run_homing(state: &mut EnvState, cfg: &RunConfig) {
    while !state.done {
        let a = homing_action(state, cfg);
        step(state, &a, &cfg.env).unwrap();
    }
}

/// Trains an agent's critic on the chain with full PPO updates and returns
/// its value estimates next to the true discounted values.
pub fn train_chain_critic(updates: usize, seed: u64) -> ([f64; 3], [f64; 3]) {
    use coisland::ppo::{collect_rollouts, ppo_update, Agent, NetConfig, PpoConfig, RunningNormalizer};
    let mut env = Chain::new([1.0, -0.5, 2.0], 4);
    let hp = PpoConfig {
        batch_size: 48,
        buffer_size: 48,
        learning_rate: 1e-3,
        epochs: 4,
        gamma: 0.9,
        gae_lambda: 0.95,
        n_envs: 4,
        ..PpoConfig::default()
    };
    let net = NetConfig {
        hidden: vec![16],
        ..NetConfig::default()
    };
    let mut agent = Agent::new(3, 1, &net, &mut stream(seed, Stream::Init));
    let mut normalizer = RunningNormalizer::new(3);
    let mut rngs: Vec<_> = (0..4).map(|i| stream(seed, Stream::Actions(i))).collect();
    let mut shuffle = stream(seed, Stream::Shuffle);
    for _ in 0..updates {
        let buffer = collect_rollouts(&mut env, &agent, &mut normalizer, hp.n_steps(), &mut rngs, false).unwrap();
        let batch = buffer.into_batch(hp.gamma, hp.gae_lambda).unwrap();
        ppo_update(&mut agent, &batch, &hp, &mut shuffle).unwrap();
    }
    let v = |s| agent.state_value(&Chain::one_hot(s)).unwrap();
    ([v(0), v(1), v(2)], env.true_values(hp.gamma))
}

/// GAE as the explicit sum of discounted TD residuals up to the episode end.
pub fn gae_by_summation(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let delta = td_residuals(rewards, values, dones, bootstrap, gamma);
    (0..rewards.len())
        .map(|t| {
            let mut acc = 0.0;
            let mut w = 1.0;
            for k in t..rewards.len() {
                acc += w * delta[k];
                if dones[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            acc
        })
        .collect()
}
