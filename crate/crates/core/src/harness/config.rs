use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{Ablation, EnvConfig};
use crate::error::{Error, Result};
use crate::placement::{HillClimbConfig, IslandRewardWeights, LayoutParams, MetricScales, PlacementConfig};
use crate::ppo::{IslandLearnerConfig, NetConfig, PpoConfig};
use crate::terrain::NoiseParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IslandMode {
    /// Layout parameters never change.
    Fixed,
    /// Hill climbing with penalty gating.
    #[default]
    Heuristic,
    /// One-step PPO policy.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainConfig {
    pub seed: u64,
    pub grid: [usize; 2],
    pub cell_size: f64,
    pub noise: NoiseParams,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: [65, 65],
            cell_size: 0.5,
            noise: NoiseParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    /// Obstacles drawn from the pool each episode.
    pub count: usize,
    /// Radii of the candidate rings around the island centre.
    pub rings: Vec<f64>,
    pub per_ring: usize,
    /// Sphere radii, assigned cyclically to the drawn obstacles.
    pub radii: Vec<f64>,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self {
            count: 6,
            rings: vec![3.5, 6.5, 9.5],
            per_ring: 8,
            radii: vec![0.6, 0.9, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IslandConfig {
    pub mode: IslandMode,
    pub initial_r: f64,
    pub initial_c: f64,
    /// Obstacle slots in the learned controller's observation.
    pub obstacle_slots: usize,
    /// Collision count that normalises to 1 in island feedback.
    pub collision_scale: f64,
    pub hill_climb: HillClimbConfig,
    pub reward: IslandRewardWeights,
    pub learner: IslandLearnerConfig,
}

impl Default for IslandConfig {
    fn default() -> Self {
        Self {
            mode: IslandMode::Heuristic,
            initial_r: 7.0,
            initial_c: 0.5,
            obstacle_slots: 16,
            collision_scale: 10.0,
            hill_climb: HillClimbConfig::default(),
            reward: IslandRewardWeights::default(),
            learner: IslandLearnerConfig::default(),
        }
    }
}

impl IslandConfig {
    pub fn initial_params(&self) -> LayoutParams {
        LayoutParams::new(self.initial_r, self.initial_c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Step budget; training stops before an update that would exceed it.
    pub total_timesteps: u64,
    /// Stop after the update during which this many episodes have finished.
    pub max_episodes: Option<usize>,
    /// Updates between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub ablation: Ablation,
    /// Weight of the trainer-side approach bonus: per step, the distance
    /// the beak closed on the flower that was nearest before the step.
    /// Added to what the optimiser sees only; logged rewards exclude it.
    /// 0 trains on the environment reward alone.
    pub approach_shaping: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 200_000,
            max_episodes: None,
            checkpoint_every: 10,
            ablation: Ablation::Full,
            approach_shaping: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Layout parameters for evaluation episodes.
    pub r: f64,
    pub c: f64,
    /// Act with the policy mean instead of sampling.
    pub deterministic: bool,
    /// Write every evaluation step as JSON lines.
    pub dump_trajectories: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            r: 7.0,
            c: 0.5,
            deterministic: true,
            dump_trajectories: false,
        }
    }
}

impl EvalConfig {
    pub fn params(&self) -> LayoutParams {
        LayoutParams::new(self.r, self.c)
    }
}

/// Every tunable of a run. Loaded from TOML; unknown keys are rejected and
/// missing keys take the defaults listed by `RunConfig::default()`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub terrain: TerrainConfig,
    pub obstacles: ObstacleConfig,
    pub env: EnvConfig,
    pub placement: PlacementConfig,
    pub island: IslandConfig,
    pub net: NetConfig,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let [nx, nz] = self.terrain.grid;
        if nx < 2 || nz < 2 || !(self.terrain.cell_size > 0.0) || self.terrain.noise.octaves == 0 {
            return Err(Error::Config(
                "terrain: grid must be >= 2x2 with positive cell size and >= 1 octave".into(),
            ));
        }
        if self.obstacles.count > self.obstacles.rings.len() * self.obstacles.per_ring {
            return Err(Error::Config("obstacles: count exceeds the candidate pool".into()));
        }
        if self.obstacles.count > 0 && (self.obstacles.radii.is_empty() || self.obstacles.radii.iter().any(|r| !(*r > 0.0))) {
            return Err(Error::Config("obstacles: radii must be nonempty and positive".into()));
        }
        if self.island.mode == IslandMode::Learned && self.obstacles.count > self.island.obstacle_slots {
            return Err(Error::Config("island: obstacle_slots must cover obstacles.count".into()));
        }
        if self.island.learner.batch_episodes == 0 || self.island.learner.minibatch == 0 {
            return Err(Error::Config("island.learner: batch sizes must be positive".into()));
        }
        if self.train.total_timesteps < self.ppo.buffer_size as u64 {
            return Err(Error::Config(
                "train: total_timesteps is smaller than one rollout buffer".into(),
            ));
        }
        if !(self.train.approach_shaping >= 0.0) {
            return Err(Error::Config("train: approach_shaping must be non-negative".into()));
        }
        if self.net.hidden.contains(&0) {
            return Err(Error::Config("net: hidden layer widths must be positive".into()));
        }
        self.env.validate()?;
        self.placement.validate()?;
        self.ppo.validate()?;
        Ok(())
    }

    pub fn metric_scales(&self) -> MetricScales {
        MetricScales {
            nectar: self.placement.n_max as f64,
            steps: self.env.max_episode_steps as f64,
            collisions: self.island.collision_scale,
        }
    }

    /// Small, fast configuration: flat terrain, no obstacles, a fixed
    /// five-flower layout (r = 4, c = 0.8) and desk-sized PPO batches.
    pub fn smoke() -> Self {
        let mut cfg = RunConfig::default();
        cfg.terrain.noise = NoiseParams::flat();
        cfg.obstacles.count = 0;
        cfg.placement.count_scale = 0.4;
        cfg.island.mode = IslandMode::Fixed;
        cfg.island.initial_r = 4.0;
        cfg.island.initial_c = 0.8;
        cfg.eval.r = 4.0;
        cfg.eval.c = 0.8;
        cfg.env.max_episode_steps = 1000;
        cfg.net.hidden = vec![64, 64];
        cfg.ppo.buffer_size = 4096;
        cfg.ppo.batch_size = 512;
        cfg.ppo.n_envs = 8;
        cfg.train.total_timesteps = 200_000;
        cfg
    }
}
