use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::ppo::{collect_rollouts, ppo_update, Agent, Checkpoint, RunningNormalizer, UpdateStats};
use crate::rng::{stream, SimRng, Stream};

use super::arena::{EpisodeRecord, IslandArena};
use super::config::RunConfig;
use super::output::{write_csv, write_json};
use super::world::World;

/// One row of `metrics.csv`, written after every PPO update. Episode
/// statistics cover the episodes that finished during that update's
/// rollout; they are zero when none did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRow {
    pub update: u64,
    pub total_steps: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_nectar: f64,
    pub success_rate: f64,
    pub mean_length: f64,
    pub mean_penalty: f64,
    /// Mean layout parameters of the finished episodes.
    pub mean_r: f64,
    pub mean_c: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub first_batch_max_ratio_dev: f64,
    pub grad_norm: f64,
    pub log_std_mean: f64,
}

impl UpdateRow {
    fn new(update: u64, total_steps: u64, finished: &[EpisodeRecord], stats: &UpdateStats, agent: &Agent) -> Self {
        let n = finished.len();
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                finished.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let log_std = &agent.policy.log_std;
        Self {
            update,
            total_steps,
            episodes: n,
            mean_return: mean(&|e| e.total_reward),
            mean_nectar: mean(&|e| e.nectar as f64),
            success_rate: mean(&|e| f64::from(u8::from(e.success))),
            mean_length: mean(&|e| e.steps as f64),
            mean_penalty: mean(&|e| e.penalty),
            mean_r: mean(&|e| e.r),
            mean_c: mean(&|e| e.c),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            first_batch_max_ratio_dev: stats.first_batch_max_ratio_dev,
            grad_norm: stats.grad_norm,
            log_std_mean: log_std.iter().sum::<f64>() / log_std.len().max(1) as f64,
        }
    }
}

/// Solver training state. Drive it with `update` or `run`.
pub struct Trainer {
    pub cfg: RunConfig,
    pub agent: Agent,
    pub normalizer: RunningNormalizer,
    pub arena: IslandArena,
    pub total_steps: u64,
    pub updates: u64,
    pub rows: Vec<UpdateRow>,
    action_rngs: Vec<SimRng>,
    shuffle_rng: SimRng,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let world = World::build(cfg)?;
        let agent = Agent::new(OBS_DIM, ACTION_DIM, &cfg.net, &mut stream(cfg.seed, Stream::Init));
        let arena = IslandArena::new(cfg, world)?;
        Ok(Self {
            cfg: cfg.clone(),
            agent,
            normalizer: RunningNormalizer::new(OBS_DIM),
            arena,
            total_steps: 0,
            updates: 0,
            rows: Vec::new(),
            action_rngs: (0..cfg.ppo.n_envs).map(|i| stream(cfg.seed, Stream::Actions(i))).collect(),
            shuffle_rng: stream(cfg.seed, Stream::Shuffle),
        })
    }

    /// True once another update would overrun the step budget or enough
    /// episodes have finished.
    pub fn finished(&self) -> bool {
        self.total_steps.saturating_add(self.cfg.ppo.buffer_size as u64) > self.cfg.train.total_timesteps
            || self.cfg.train.max_episodes.is_some_and(|m| self.arena.episodes().len() >= m)
    }

    /// One rollout plus one PPO update.
    pub fn update(&mut self) -> Result<&UpdateRow> {
        let before = self.arena.episodes().len();
        let buffer = collect_rollouts(
            &mut self.arena,
            &self.agent,
            &mut self.normalizer,
            self.cfg.ppo.n_steps(),
            &mut self.action_rngs,
            true,
        )?;
        self.total_steps += buffer.capacity() as u64;
        let batch = buffer.into_batch(self.cfg.ppo.gamma, self.cfg.ppo.gae_lambda)?;
        let stats = ppo_update(&mut self.agent, &batch, &self.cfg.ppo, &mut self.shuffle_rng)?;
        self.updates += 1;
        if !self.agent.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite parameters after update {}",
                self.updates
            )));
        }
        if stats.first_batch_max_ratio_dev > 1e-6 {
            log::warn!(
                "update {}: first-minibatch ratio deviates from 1 by {:.3e}",
                self.updates,
                stats.first_batch_max_ratio_dev
            );
        }
        let row = UpdateRow::new(
            self.updates,
            self.total_steps,
            &self.arena.episodes()[before..],
            &stats,
            &self.agent,
        );
        log::info!(
            "update {:>4} steps {:>8} episodes {:>3} return {:>8.3} nectar {:.2} success {:.2}",
            row.update,
            row.total_steps,
            row.episodes,
            row.mean_return,
            row.mean_nectar,
            row.success_rate
        );
        self.rows.push(row);
        Ok(self.rows.last().expect("row just pushed"))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.agent.clone(),
            self.normalizer.clone(),
            self.cfg.train.ablation,
            self.total_steps,
            self.updates,
        )
    }

    /// Trains until the step or episode budget is spent, writing outputs
    /// under `out` when given.
    pub fn run(&mut self, out: Option<&Path>) -> Result<TrainReport> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir.join("checkpoints"))?;
            std::fs::write(dir.join("config.toml"), self.cfg.to_toml()?)?;
        }
        let mut checkpoints = Vec::new();
        while !self.finished() {
            self.update()?;
            let every = self.cfg.train.checkpoint_every;
            if let Some(dir) = out {
                if every > 0 && self.updates.is_multiple_of(every as u64) {
                    let path = dir.join("checkpoints").join(format!("update_{:05}.json", self.updates));
                    self.checkpoint().save(&path)?;
                    checkpoints.push(path);
                }
            }
        }
        let report = TrainReport::new(self, checkpoints);
        if let Some(dir) = out {
            self.checkpoint().save(&dir.join("checkpoint.json"))?;
            write_csv(&dir.join("metrics.csv"), &self.rows)?;
            write_csv(&dir.join("episodes.csv"), self.arena.episodes())?;
            write_json(&dir.join("report.json"), &report)?;
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub total_steps: u64,
    pub updates: u64,
    pub episodes: usize,
    /// Over the last 100 finished episodes.
    pub recent_mean_nectar: f64,
    pub recent_success_rate: f64,
    pub recent_mean_penalty: f64,
    pub final_r: Option<f64>,
    pub final_c: Option<f64>,
    pub island_updates: usize,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainReport {
    fn new(t: &Trainer, checkpoints: Vec<PathBuf>) -> Self {
        let eps = t.arena.episodes();
        let recent = &eps[eps.len().saturating_sub(100)..];
        let n = recent.len().max(1) as f64;
        let incumbent = t.arena.controller().incumbent();
        Self {
            total_steps: t.total_steps,
            updates: t.updates,
            episodes: eps.len(),
            recent_mean_nectar: recent.iter().map(|e| e.nectar as f64).sum::<f64>() / n,
            recent_success_rate: recent.iter().filter(|e| e.success).count() as f64 / n,
            recent_mean_penalty: recent.iter().map(|e| e.penalty).sum::<f64>() / n,
            final_r: incumbent.map(|p| p.r),
            final_c: incumbent.map(|p| p.c),
            island_updates: t.arena.island_updates().len(),
            checkpoints,
        }
    }
}
