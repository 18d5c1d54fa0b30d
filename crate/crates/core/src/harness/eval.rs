use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{build_observation, reset, step, Ablation, Action, StepRecord};
use crate::error::{Error, Result};
use crate::placement::{Layout, LayoutParams};
use crate::ppo::{Agent, RunningNormalizer};
use crate::rng::{stream, Stream};
use crate::terrain::Obstacle;

use super::config::RunConfig;
use super::world::World;

/// A frozen solver policy.
#[derive(Debug, Clone, Copy)]
pub struct Policy<'a> {
    pub agent: &'a Agent,
    pub normalizer: &'a RunningNormalizer,
    /// Use the mean action instead of sampling.
    pub deterministic: bool,
    pub ablation: Ablation,
}

impl Policy<'_> {
    fn action<R: Rng + ?Sized>(&self, raw_obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let obs = self.normalizer.apply(raw_obs)?;
        if self.deterministic {
            self.agent.mean_action(&obs)
        } else {
            Ok(self.agent.act(&obs, rng)?.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: usize,
    pub r: f64,
    pub c: f64,
    pub flowers: usize,
    pub penalty: f64,
    pub nectar: usize,
    pub success: bool,
    pub steps: usize,
    /// Step index of the first collection, or the step limit.
    pub first_flower_step: usize,
    pub collisions: usize,
    pub total_reward: f64,
    pub reward_per_step: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub nectar_per_episode: MeanStd,
    pub success_rate: f64,
    pub episode_duration: MeanStd,
    pub time_to_first_flower: MeanStd,
    pub collisions: MeanStd,
    pub reward_per_step: MeanStd,
}

impl EvalSummary {
    pub fn of(episodes: &[EvalEpisode]) -> Self {
        let n = episodes.len();
        let successes = episodes.iter().filter(|e| e.success).count();
        Self {
            episodes: n,
            nectar_per_episode: MeanStd::of(episodes.iter().map(|e| e.nectar as f64)),
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            episode_duration: MeanStd::of(episodes.iter().map(|e| e.steps as f64)),
            time_to_first_flower: MeanStd::of(episodes.iter().map(|e| e.first_flower_step as f64)),
            collisions: MeanStd::of(episodes.iter().map(|e| e.collisions as f64)),
            reward_per_step: MeanStd::of(episodes.iter().map(|e| e.reward_per_step)),
        }
    }
}

/// Plays one episode on a prepared layout. Step records are captured when
/// `record` is set.
#[allow(clippy::too_many_arguments)]
pub fn play_episode(
    cfg: &RunConfig,
    world: &World,
    policy: &Policy,
    layout: &Layout,
    obstacles: Vec<Obstacle>,
    penalty: f64,
    episode: usize,
    spawn_rng: &mut impl Rng,
    action_rng: &mut impl Rng,
    record: bool,
) -> Result<(EvalEpisode, Vec<StepRecord>)> {
    let mut state = reset(world.terrain.clone(), obstacles, layout, spawn_rng, &cfg.env)?;
    let mut records = Vec::new();
    loop {
        let mut obs = build_observation(&state, &cfg.env).to_vec();
        policy.ablation.apply(&mut obs);
        let action = Action::from_slice(&policy.action(&obs, action_rng)?)?;
        let (reward, events) = step(&mut state, &action, &cfg.env)?;
        if record {
            records.push(StepRecord::capture(episode, &state, action, reward, events, &obs));
        }
        if events.episode_done {
            break;
        }
    }
    let m = state.metrics()?;
    Ok((
        EvalEpisode {
            episode,
            r: layout.params.r,
            c: layout.params.c,
            flowers: layout.len(),
            penalty,
            nectar: m.nectar,
            success: state.all_collected(),
            steps: m.steps,
            first_flower_step: m.first_flower_step,
            collisions: m.collisions,
            total_reward: m.avg_reward * m.steps as f64,
            reward_per_step: m.avg_reward,
        },
        records,
    ))
}

/// Evaluation over `episodes` freshly drawn layouts with fixed `params`.
/// Episode `k` draws from its own streams, so episodes run in parallel and
/// the result does not depend on the thread count.
pub fn evaluate(
    cfg: &RunConfig,
    world: &World,
    policy: &Policy,
    params: &LayoutParams,
    episodes: usize,
    record: bool,
) -> Result<(Vec<EvalEpisode>, Vec<StepRecord>)> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let runs = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut layout_rng = stream(cfg.seed, Stream::EvalLayout(k));
            let obstacles = world.draw_obstacles(cfg, &mut layout_rng)?;
            let (layout, penalty) = world.lay_out(cfg, &obstacles, params, &mut layout_rng)?;
            play_episode(
                cfg,
                world,
                policy,
                &layout,
                obstacles,
                penalty,
                k,
                &mut stream(cfg.seed, Stream::EvalSpawn(k)),
                &mut stream(cfg.seed, Stream::EvalActions(k)),
                record,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(episodes);
    let mut steps = Vec::new();
    for (e, r) in runs {
        out.push(e);
        steps.extend(r);
    }
    Ok((out, steps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub r: f64,
    pub c: f64,
    pub flowers: usize,
    pub penalty: f64,
    pub nectar: MeanStd,
    pub episodes: usize,
    pub nectar_values: Vec<usize>,
}

/// Sweeps layout parameters. Each cell keeps one layout and obstacle draw;
/// only the bird start and action noise vary across its episodes.
pub fn grid_sweep(
    cfg: &RunConfig,
    world: &World,
    policy: &Policy,
    rs: &[f64],
    cs: &[f64],
    episodes: usize,
) -> Result<Vec<GridCell>> {
    if episodes == 0 {
        return Err(Error::Config("grid cells need at least one episode".into()));
    }
    let cells: Vec<(f64, f64)> = rs.iter().flat_map(|&r| cs.iter().map(move |&c| (r, c))).collect();
    cells
        .iter()
        .enumerate()
        .map(|(cell, &(r, c))| {
            let mut layout_rng = stream(cfg.seed, Stream::GridLayout(cell));
            let obstacles = world.draw_obstacles(cfg, &mut layout_rng)?;
            let (layout, penalty) = world.lay_out(cfg, &obstacles, &LayoutParams::new(r, c), &mut layout_rng)?;
            let nectar_values = (0..episodes)
                .into_par_iter()
                .map(|j| {
                    let k = cell * episodes + j;
                    let (e, _) = play_episode(
                        cfg,
                        world,
                        policy,
                        &layout,
                        obstacles.clone(),
                        penalty,
                        j,
                        &mut stream(cfg.seed, Stream::EvalSpawn(k)),
                        &mut stream(cfg.seed, Stream::EvalActions(k)),
                        false,
                    )?;
                    Ok(e.nectar)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GridCell {
                r,
                c,
                flowers: layout.len(),
                penalty,
                nectar: MeanStd::of(nectar_values.iter().map(|&v| v as f64)),
                episodes,
                nectar_values,
            })
        })
        .collect()
}
