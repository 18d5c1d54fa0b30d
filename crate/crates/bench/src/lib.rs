//! Fixtures shared by the kernel benchmarks.

use coisland::environment::{EnvState, OBS_DIM};
use coisland::harness::{RunConfig, World};
use coisland::nn::DenseNet;
use coisland::rng::{stream, Stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default hilly world with obstacles and a seven-flower episode ready to
/// step.
pub fn episode(seed: u64) -> (RunConfig, EnvState) {
    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let world = World::build(&cfg).expect("default world");
    let mut rng = stream(seed, Stream::Env(0));
    let obstacles = world.draw_obstacles(&cfg, &mut rng).expect("obstacles");
    let ep = world
        .begin(
            &cfg,
            obstacles,
            &cfg.island.initial_params(),
            &mut rng,
            &mut stream(seed, Stream::Spawn(0)),
        )
        .expect("episode");
    (cfg, ep.state)
}

/// Solver-sized policy network and a matching input.
pub fn policy_net(hidden: usize) -> (DenseNet, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DenseNet::mlp(OBS_DIM, &[hidden, hidden], 4, 1.0, &mut rng);
    let x = (0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, x)
}

/// Rewards, values and done flags for one long environment trajectory.
pub fn trajectory(len: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rewards = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dones = (0..len).map(|_| rng.random_bool(0.002)).collect();
    (rewards, values, dones)
}
