//! The co-adaptive training loop's environment side: a batch of solver
//! episodes whose flower layouts come from an island controller.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{approach_progress, build_observation, nearest_flower, step, Ablation, Action, EnvState, OBS_DIM};
use crate::error::Result;
use crate::placement::{
    hill_climb_update, island_obs_dim, island_observe, island_reward, EpisodeMetrics, HillClimbState, LayoutParams,
};
use crate::ppo::island::PendingDecision;
use crate::ppo::{IslandLearner, StepResult, UpdateStats, VecEnvironment};
use crate::rng::{stream, SimRng, Stream};
use crate::terrain::Obstacle;

use super::config::{IslandMode, RunConfig};
use super::world::{Episode, World};

/// Chooses layout parameters between solver episodes.
#[derive(Debug, Clone)]
pub enum IslandController {
    Fixed(LayoutParams),
    Heuristic {
        state: HillClimbState,
        /// Parameters for the next episode that starts.
        proposal: LayoutParams,
    },
    Learned(Box<IslandLearner>),
}

impl IslandController {
    pub fn new(cfg: &RunConfig, rng: &mut SimRng) -> Self {
        let initial = cfg.island.initial_params().clipped(&cfg.placement);
        match cfg.island.mode {
            IslandMode::Fixed => IslandController::Fixed(initial),
            IslandMode::Heuristic => IslandController::Heuristic {
                state: HillClimbState {
                    params: initial,
                    score: None,
                },
                proposal: initial,
            },
            IslandMode::Learned => {
                let dim = island_obs_dim(cfg.island.obstacle_slots);
                IslandController::Learned(Box::new(IslandLearner::new(dim, cfg.island.learner.clone(), rng)))
            }
        }
    }

    /// Best current guess of the layout, for logging.
    pub fn incumbent(&self) -> Option<LayoutParams> {
        match self {
            IslandController::Fixed(p) => Some(*p),
            IslandController::Heuristic { state, .. } => Some(state.params),
            IslandController::Learned(_) => None,
        }
    }
}

/// One finished solver episode as seen by the island controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub env: usize,
    pub r: f64,
    pub c: f64,
    pub requested: usize,
    pub flowers: usize,
    pub penalty: f64,
    pub total_reward: f64,
    pub avg_reward: f64,
    pub nectar: usize,
    pub first_flower_step: usize,
    pub collisions: usize,
    pub steps: usize,
    pub success: bool,
    /// `fixed`, `learned`, or the hill climber's gate decision.
    pub decision: String,
    pub island_reward: f64,
}

struct Slot {
    state: EnvState,
    layout_params: LayoutParams,
    n_flowers: usize,
    requested: usize,
    penalty: f64,
    observation: Vec<f64>,
    pending: Option<PendingDecision>,
    prev_metrics: Option<EpisodeMetrics>,
    layout_rng: SimRng,
    spawn_rng: SimRng,
}

pub struct IslandArena {
    cfg: RunConfig,
    world: World,
    ablation: Ablation,
    slots: Vec<Slot>,
    controller: IslandController,
    island_rng: SimRng,
    log: Vec<EpisodeRecord>,
    island_updates: Vec<UpdateStats>,
}

impl IslandArena {
    pub fn new(cfg: &RunConfig, world: World) -> Result<Self> {
        let mut island_rng = stream(cfg.seed, Stream::Island);
        let controller = IslandController::new(cfg, &mut island_rng);
        let mut arena = Self {
            cfg: cfg.clone(),
            world,
            ablation: cfg.train.ablation,
            slots: Vec::with_capacity(cfg.ppo.n_envs),
            controller,
            island_rng,
            log: Vec::new(),
            island_updates: Vec::new(),
        };
        for env in 0..cfg.ppo.n_envs {
            let mut layout_rng = stream(cfg.seed, Stream::Env(env));
            let mut spawn_rng = stream(cfg.seed, Stream::Spawn(env));
            let (episode, pending) = arena.start_episode(None, &mut layout_rng, &mut spawn_rng)?;
            let slot = arena.make_slot(episode, pending, None, layout_rng, spawn_rng);
            arena.slots.push(slot);
        }
        Ok(arena)
    }

    fn make_slot(
        &self,
        episode: Episode,
        pending: Option<PendingDecision>,
        prev_metrics: Option<EpisodeMetrics>,
        layout_rng: SimRng,
        spawn_rng: SimRng,
    ) -> Slot {
        let observation = self.observe(&episode.state);
        Slot {
            layout_params: episode.layout.params,
            n_flowers: episode.layout.len(),
            requested: episode.layout.requested,
            penalty: episode.penalty,
            state: episode.state,
            observation,
            pending,
            prev_metrics,
            layout_rng,
            spawn_rng,
        }
    }

    fn observe(&self, state: &EnvState) -> Vec<f64> {
        let mut obs = build_observation(state, &self.cfg.env).to_vec();
        self.ablation.apply(&mut obs);
        obs
    }

    /// Draws obstacles, asks the controller for parameters and lays out
    /// the next episode.
    fn start_episode(
        &mut self,
        prev: Option<&EpisodeMetrics>,
        layout_rng: &mut SimRng,
        spawn_rng: &mut SimRng,
    ) -> Result<(Episode, Option<PendingDecision>)> {
        let obstacles: Vec<Obstacle> = self.world.draw_obstacles(&self.cfg, layout_rng)?;
        let (params, pending) = match &mut self.controller {
            IslandController::Fixed(p) => (*p, None),
            IslandController::Heuristic { proposal, .. } => (*proposal, None),
            IslandController::Learned(learner) => {
                let start = self.world.spawn_point(&self.cfg, &obstacles, &mut spawn_rng.clone())?;
                let obs = island_observe(
                    &obstacles,
                    &self.world.center,
                    &start,
                    prev,
                    &self.cfg.metric_scales(),
                    self.cfg.island.obstacle_slots,
                )?;
                let (params, pending) = learner.decide(&obs, &self.cfg.placement, &mut self.island_rng)?;
                (params, Some(pending))
            }
        };
        let episode = self.world.begin(&self.cfg, obstacles, &params, layout_rng, spawn_rng)?;
        Ok((episode, pending))
    }

    /// Feeds a finished episode to the controller and logs it.
    fn finish_episode(&mut self, env: usize) -> Result<()> {
        let slot = &mut self.slots[env];
        let metrics = slot.state.metrics()?;
        let scales = self.cfg.metric_scales();
        let reward = island_reward(&metrics, slot.penalty, slot.n_flowers, &self.cfg.island.reward, &scales);
        let decision = match &mut self.controller {
            IslandController::Fixed(_) => "fixed".to_string(),
            IslandController::Heuristic { state, proposal } => {
                let outcome = hill_climb_update(
                    state,
                    &slot.layout_params,
                    &metrics,
                    slot.penalty,
                    slot.n_flowers,
                    &mut self.island_rng,
                    &self.cfg.island.hill_climb,
                    &self.cfg.placement,
                );
                *state = outcome.state;
                *proposal = outcome.proposal;
                outcome.decision.as_str().to_string()
            }
            IslandController::Learned(learner) => {
                if let Some(pending) = slot.pending.take() {
                    if let Some(stats) = learner.record(pending, reward, &mut self.island_rng)? {
                        self.island_updates.push(stats);
                    }
                }
                "learned".to_string()
            }
        };
        self.log.push(EpisodeRecord {
            episode: self.log.len(),
            env,
            r: slot.layout_params.r,
            c: slot.layout_params.c,
            requested: slot.requested,
            flowers: slot.n_flowers,
            penalty: slot.penalty,
            total_reward: metrics.avg_reward * metrics.steps as f64,
            avg_reward: metrics.avg_reward,
            nectar: metrics.nectar,
            first_flower_step: metrics.first_flower_step,
            collisions: metrics.collisions,
            steps: metrics.steps,
            success: slot.state.all_collected(),
            decision,
            island_reward: reward,
        });
        slot.prev_metrics = Some(metrics);
        Ok(())
    }

    fn restart(&mut self, env: usize) -> Result<()> {
        let prev = self.slots[env].prev_metrics;
        let mut layout_rng = self.slots[env].layout_rng.clone();
        let mut spawn_rng = self.slots[env].spawn_rng.clone();
        let (episode, pending) = self.start_episode(prev.as_ref(), &mut layout_rng, &mut spawn_rng)?;
        self.slots[env] = self.make_slot(episode, pending, prev, layout_rng, spawn_rng);
        Ok(())
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.log
    }

    pub fn controller(&self) -> &IslandController {
        &self.controller
    }

    pub fn island_updates(&self) -> &[UpdateStats] {
        &self.island_updates
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Parameters each environment's current episode runs with.
    pub fn current_params(&self) -> Vec<LayoutParams> {
        self.slots.iter().map(|s| s.layout_params).collect()
    }
}

impl VecEnvironment for IslandArena {
    fn n_envs(&self) -> usize {
        self.slots.len()
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        self.slots.iter().map(|s| s.observation.clone()).collect()
    }

    /// Physics runs in parallel; episode ends are then handled in env
    /// order so controller updates do not depend on thread timing.
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>> {
        let cfg = &self.cfg;
        let ablation = self.ablation;
        let shaping = cfg.train.approach_shaping;
        let results = self
            .slots
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(slot, a)| {
                let beak = slot.state.bird.beak(cfg.env.physics.beak_offset);
                let (target, _) = nearest_flower(&beak, &slot.state.flowers);
                let (mut reward, events) = step(&mut slot.state, &Action::from_slice(a)?, &cfg.env)?;
                if shaping > 0.0 {
                    reward += shaping * approach_progress(&slot.state, target, &beak, &cfg.env);
                }
                if !events.episode_done {
                    let mut obs = build_observation(&slot.state, &cfg.env).to_vec();
                    ablation.apply(&mut obs);
                    slot.observation = obs;
                }
                Ok(StepResult {
                    reward,
                    done: events.episode_done,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (env, r) in results.iter().enumerate() {
            if r.done {
                self.finish_episode(env)?;
                self.restart(env)?;
            }
        }
        Ok(results)
    }
}
