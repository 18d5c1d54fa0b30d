//! Experiment harness: run configuration, the co-adaptive training arena,
//! evaluation, ablations and parameter sweeps.

pub mod arena;
pub mod commands;
pub mod config;
pub mod eval;
pub mod output;
pub mod train;
pub mod world;

pub use arena::{EpisodeRecord, IslandArena, IslandController};
pub use commands::{cmd_ablate, cmd_eval, cmd_grid, cmd_train, AblationRow, EvalReport, PolicySource};
pub use config::{EvalConfig, IslandConfig, IslandMode, ObstacleConfig, RunConfig, TerrainConfig, TrainConfig};
pub use eval::{evaluate, grid_sweep, play_episode, EvalEpisode, EvalSummary, GridCell, MeanStd, Policy};
pub use train::{TrainReport, Trainer, UpdateRow};
pub use world::{Episode, World};
