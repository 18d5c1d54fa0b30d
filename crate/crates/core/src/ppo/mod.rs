//! Proximal policy optimisation: rollout collection, GAE, observation
//! normalisation and the clipped-surrogate update.

pub mod buffer;
pub mod checkpoint;
pub mod gae;
pub mod island;
pub mod normalizer;
pub mod rollout;
pub mod update;

pub use buffer::{RolloutBuffer, TrainingBatch};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gae::compute_gae;
pub use island::{squash_params, train_island_policy, IslandLearner, IslandLearnerConfig, IslandTransition};
pub use normalizer::RunningNormalizer;
pub use rollout::{collect_rollouts, StepResult, VecEnvironment};
pub use update::{clipped_surrogate, ppo_update, Agent, NetConfig, PpoConfig, UpdateStats};
