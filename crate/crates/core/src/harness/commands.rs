//! Entry points behind the command-line subcommands. Each one takes a
//! validated configuration and an output directory and writes its results
//! there as CSV and JSON.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{Ablation, TrajectoryWriter, ACTION_DIM, OBS_DIM};
use crate::error::Result;
use crate::ppo::{Agent, Checkpoint, RunningNormalizer};
use crate::rng::{stream, Stream};

use super::config::RunConfig;
use super::eval::{evaluate, grid_sweep, EvalEpisode, EvalSummary, GridCell, Policy};
use super::output::{write_csv, write_json};
use super::train::{TrainReport, Trainer};
use super::world::World;

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    Trainer::new(cfg)?.run(Some(out))
}

/// Solver weights to evaluate: a checkpoint, or a freshly initialised
/// network acting stochastically as the untrained baseline.
pub enum PolicySource<'a> {
    Checkpoint(&'a Path),
    Untrained,
}

struct Loaded {
    agent: Agent,
    normalizer: RunningNormalizer,
    ablation: Ablation,
    deterministic: bool,
}

impl Loaded {
    fn from(source: &PolicySource, cfg: &RunConfig) -> Result<Self> {
        Ok(match source {
            PolicySource::Checkpoint(path) => {
                let ck = Checkpoint::load(path)?;
                Loaded {
                    agent: ck.agent,
                    normalizer: ck.normalizer,
                    ablation: ck.ablation,
                    deterministic: cfg.eval.deterministic,
                }
            }
            PolicySource::Untrained => Loaded {
                agent: Agent::new(OBS_DIM, ACTION_DIM, &cfg.net, &mut stream(cfg.seed, Stream::Init)),
                normalizer: RunningNormalizer::new(OBS_DIM),
                ablation: cfg.train.ablation,
                deterministic: false,
            },
        })
    }

    fn policy(&self) -> Policy<'_> {
        Policy {
            agent: &self.agent,
            normalizer: &self.normalizer,
            deterministic: self.deterministic,
            ablation: self.ablation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub episodes: Vec<EvalEpisode>,
}

/// Frozen-policy evaluation at the configured `(r, c)`. Writes
/// `eval_episodes.csv`, `eval_summary.json` and, when enabled,
/// `trajectories.jsonl`.
pub fn cmd_eval(cfg: &RunConfig, source: PolicySource, out: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let loaded = Loaded::from(&source, cfg)?;
    let world = World::build(cfg)?;
    let record = cfg.eval.dump_trajectories;
    let (episodes, steps) = evaluate(cfg, &world, &loaded.policy(), &cfg.eval.params(), cfg.eval.episodes, record)?;
    if record {
        let mut w = TrajectoryWriter::new(BufWriter::new(File::create(out.join("trajectories.jsonl"))?));
        for s in &steps {
            w.write(s)?;
        }
        w.finish()?;
    }
    let summary = EvalSummary::of(&episodes);
    write_csv(&out.join("eval_episodes.csv"), &episodes)?;
    write_json(&out.join("eval_summary.json"), &summary)?;
    Ok(EvalReport { summary, episodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub total_steps: u64,
    pub train_recent_nectar: f64,
    pub nectar_mean: f64,
    pub nectar_std: f64,
    pub success_rate: f64,
    pub episode_duration: f64,
    pub time_to_first_flower: f64,
    pub collisions: f64,
    pub reward_per_step: f64,
}

/// Trains and evaluates one solver per observation variant under
/// `out/<variant>/`, then writes one summary row per variant to
/// `ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig, variants: &[Ablation], out: &Path) -> Result<Vec<AblationRow>> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut run = cfg.clone();
        run.train.ablation = variant;
        let dir = out.join(variant.name());
        log::info!("ablation variant {}", variant.name());
        let mut trainer = Trainer::new(&run)?;
        let report = trainer.run(Some(&dir))?;
        let policy = Policy {
            agent: &trainer.agent,
            normalizer: &trainer.normalizer,
            deterministic: run.eval.deterministic,
            ablation: variant,
        };
        let world = World::build(&run)?;
        let (episodes, _) = evaluate(&run, &world, &policy, &run.eval.params(), run.eval.episodes, false)?;
        let s = EvalSummary::of(&episodes);
        write_csv(&dir.join("eval_episodes.csv"), &episodes)?;
        write_json(&dir.join("eval_summary.json"), &s)?;
        rows.push(AblationRow {
            variant: variant.name().to_string(),
            total_steps: report.total_steps,
            train_recent_nectar: report.recent_mean_nectar,
            nectar_mean: s.nectar_per_episode.mean,
            nectar_std: s.nectar_per_episode.std,
            success_rate: s.success_rate,
            episode_duration: s.episode_duration.mean,
            time_to_first_flower: s.time_to_first_flower.mean,
            collisions: s.collisions.mean,
            reward_per_step: s.reward_per_step.mean,
        });
    }
    write_csv(&out.join("ablation.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridRow {
    r: f64,
    c: f64,
    flowers: usize,
    penalty: f64,
    mean: f64,
    std: f64,
    n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridEpisodeRow {
    r: f64,
    c: f64,
    episode: usize,
    nectar: usize,
}

/// Nectar over an `rs x cs` sweep. Writes `grid.csv` with one row per cell
/// and `grid_episodes.csv` with every episode's nectar.
pub fn cmd_grid(
    cfg: &RunConfig,
    source: PolicySource,
    rs: &[f64],
    cs: &[f64],
    episodes: usize,
    out: &Path,
) -> Result<Vec<GridCell>> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let loaded = Loaded::from(&source, cfg)?;
    let world = World::build(cfg)?;
    let cells = grid_sweep(cfg, &world, &loaded.policy(), rs, cs, episodes)?;
    let rows: Vec<GridRow> = cells
        .iter()
        .map(|g| GridRow {
            r: g.r,
            c: g.c,
            flowers: g.flowers,
            penalty: g.penalty,
            mean: g.nectar.mean,
            std: g.nectar.std,
            n: g.episodes,
        })
        .collect();
    let per_episode: Vec<GridEpisodeRow> = cells
        .iter()
        .flat_map(|g| {
            g.nectar_values.iter().enumerate().map(|(episode, &nectar)| GridEpisodeRow {
                r: g.r,
                c: g.c,
                episode,
                nectar,
            })
        })
        .collect();
    write_csv(&out.join("grid.csv"), &rows)?;
    write_csv(&out.join("grid_episodes.csv"), &per_episode)?;
    Ok(cells)
}
