//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! `cargo test -p coisland-core --test acceptance --release`

mod common;

use std::time::{Duration, Instant};

use coisland::environment::{ACTION_DIM, OBS_DIM};
use coisland::harness::{cmd_train, evaluate, grid_sweep, IslandMode, Policy, RunConfig, Trainer, World};
use coisland::nn::DenseNet;
use coisland::placement::{nearest_neighbor_distance, spawn_layout, total_penalty, Layout, LayoutParams, PlacementConfig};
use coisland::ppo::{collect_rollouts, compute_gae, ppo_update, Agent, RunningNormalizer};
use coisland::rng::{stream, Stream};
use coisland::terrain::{generate_heightmap, NoiseParams};
use common::{all_pairs_nearest, gae_by_summation, numeric_param_grads, random_sequence, relative_error, train_chain_critic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Trained = Option<(RunConfig, Trainer)>;
type Criterion = Box<dyn FnOnce(&mut Trained) -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gae() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (r, v, d, boot) = random_sequence(&mut rng, 64);
        let (gamma, lambda) = (rng.random_range(0.8..1.0), rng.random_range(0.0..=1.0));
        let (adv, ret) = compute_gae(&r, &v, &d, boot, gamma, lambda).unwrap();
        for (t, want) in gae_by_summation(&r, &v, &d, boot, gamma, lambda).into_iter().enumerate() {
            worst = worst.max((adv[t] - want).abs()).max((ret[t] - (want + v[t])).abs());
        }
    }
    let took = start.elapsed();
    check(
        worst <= 1e-9 && took < Duration::from_secs(1),
        format!("200 sequences, max abs err {worst:.2e}, {took:.2?}"),
    )
}

fn grad_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut abs): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let input = rng.random_range(1..8);
        let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..10)).collect();
        let output = rng.random_range(1..5);
        let net = DenseNet::mlp(input, &hidden, output, 1.0, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.5..1.5)).collect();
        let u: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &DenseNet| n.predict(&x).unwrap().iter().zip(&u).map(|(y, w)| y * w).sum::<f64>();
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, _) = net.backward(&cache, &u).unwrap();
        let numeric = numeric_param_grads(&net, 1e-5, loss);
        for (a, n) in grads.0.iter().flatten().zip(numeric.iter().flatten()) {
            worst = worst.max(relative_error(*a, *n, 1e-9));
            abs = abs.max((a - n).abs());
        }
    }
    let took = start.elapsed();
    check(
        worst < 1e-4 && took < Duration::from_secs(10),
        format!("50 networks, max rel err {worst:.2e} (abs {abs:.1e}), {took:.2?}"),
    )
}

fn ratio_identity() -> Outcome {
    let cfg = RunConfig::smoke();
    let mut trainer = Trainer::new(&cfg).unwrap();
    // Warm the normaliser and move the policy off its initialisation first.
    trainer.update().unwrap();
    let mut rngs: Vec<_> = (0..cfg.ppo.n_envs).map(|i| stream(99, Stream::Actions(i))).collect();
    let buffer = collect_rollouts(
        &mut trainer.arena,
        &trainer.agent,
        &mut trainer.normalizer,
        cfg.ppo.n_steps(),
        &mut rngs,
        true,
    )
    .unwrap();
    let mut max_dev: f64 = 0.0;
    for i in 0..buffer.len() {
        let lp = trainer.agent.log_prob(buffer.observation(i), buffer.action(i)).unwrap();
        max_dev = max_dev.max(((lp - buffer.log_probs[i]).exp() - 1.0).abs());
    }
    let batch = buffer.into_batch(cfg.ppo.gamma, cfg.ppo.gae_lambda).unwrap();
    let stats = ppo_update(&mut trainer.agent, &batch, &cfg.ppo, &mut stream(99, Stream::Shuffle)).unwrap();
    check(
        max_dev <= 1e-6 && stats.first_batch_max_ratio_dev <= 1e-6 && stats.first_batch_clip_fraction == 0.0,
        format!(
            "{} samples, max |ratio-1| {max_dev:.1e}, first minibatch {:.1e}, clip fraction {}",
            batch.len(),
            stats.first_batch_max_ratio_dev,
            stats.first_batch_clip_fraction
        ),
    )
}

fn penalty() -> Outcome {
    let hm = generate_heightmap(0, (65, 65), 0.5, &NoiseParams::flat()).unwrap();
    let cfg = PlacementConfig::default();
    let mut max_flat: f64 = 0.0;
    for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let params = LayoutParams::new(6.0, c);
        let w = cfg.penalty_weights(&params);
        for (nx, nz) in [(2, 1), (4, 1), (3, 3), (5, 2)] {
            let flowers = (0..nx * nz)
                .map(|k| {
                    [
                        6.0 + w.target_spacing * (k % nx) as f64,
                        0.0,
                        6.0 + w.target_spacing * (k / nx) as f64,
                    ]
                })
                .collect::<Vec<_>>();
            let layout = Layout {
                center: [16.0, 0.0, 16.0],
                params,
                r_norm: 0.0,
                requested: flowers.len(),
                flowers,
            };
            max_flat = max_flat.max(total_penalty(&layout, &hm, &[], &w).unwrap().abs());
        }
    }
    let hilly = generate_heightmap(4, (65, 65), 0.5, &NoiseParams::default()).unwrap();
    let center = hilly.project(16.0, 16.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..30 {
        let params = LayoutParams::new(rng.random_range(3.0..12.0), rng.random_range(0.2..1.0));
        let layout = spawn_layout(&hilly, &[], &params, &center, &mut rng, &cfg).unwrap();
        let oracle = all_pairs_nearest(&layout);
        mismatches += (0..layout.len())
            .filter(|&i| nearest_neighbor_distance(&layout, i) != oracle[i])
            .count();
    }
    check(
        max_flat == 0.0 && mismatches == 0,
        format!("flat exact-spacing P_total max {max_flat}, nearest-neighbour mismatches on 30 layouts {mismatches}"),
    )
}

fn critic() -> Outcome {
    let start = Instant::now();
    let (v, truth) = train_chain_critic(2000, 5);
    let worst = (0..3).map(|s| (v[s] - truth[s]).abs() / truth[s].abs()).fold(0.0, f64::max);
    check(
        worst <= 0.05,
        format!(
            "V {:.3?} vs true {:.3?}, max rel err {:.2}%, {:.2?}",
            v,
            truth,
            100.0 * worst,
            start.elapsed()
        ),
    )
}

fn smoke(trained: &mut Trained) -> Outcome {
    let cfg = RunConfig::smoke();
    let start = Instant::now();
    let mut trainer = Trainer::new(&cfg).unwrap();
    trainer.run(None).unwrap();
    let took = start.elapsed();
    let world = World::build(&cfg).unwrap();
    let policy = Policy {
        agent: &trainer.agent,
        normalizer: &trainer.normalizer,
        deterministic: true,
        ablation: cfg.train.ablation,
    };
    let (eps, _) = evaluate(&cfg, &world, &policy, &cfg.eval.params(), 100, false).unwrap();
    let success = eps.iter().filter(|e| e.success).count() as f64 / eps.len() as f64;

    let fresh = Agent::new(OBS_DIM, ACTION_DIM, &cfg.net, &mut stream(cfg.seed, Stream::Init));
    let blank = RunningNormalizer::new(OBS_DIM);
    let random = Policy {
        agent: &fresh,
        normalizer: &blank,
        deterministic: false,
        ablation: cfg.train.ablation,
    };
    let (base, _) = evaluate(&cfg, &world, &random, &cfg.eval.params(), 100, false).unwrap();
    let base_success = base.iter().filter(|e| e.success).count() as f64 / base.len() as f64;

    let steps = trainer.total_steps;
    *trained = Some((cfg, trainer));
    check(
        steps <= 200_000 && success >= 0.6 && base_success <= 0.05 && took <= Duration::from_secs(1800),
        format!(
            "{steps} steps in {took:.1?}, success {:.0}% over 100 episodes, untrained {:.0}%",
            100.0 * success,
            100.0 * base_success
        ),
    )
}

fn heuristic_penalty() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.island.mode = IslandMode::Heuristic;
    cfg.env.max_episode_steps = 300;
    cfg.train.max_episodes = Some(500);
    cfg.train.total_timesteps = u64::MAX;
    let start = Instant::now();
    let mut trainer = Trainer::new(&cfg).unwrap();
    trainer.run(None).unwrap();
    let took = start.elapsed();
    let eps = trainer.arena.episodes();
    let mean = |s: &[coisland::harness::EpisodeRecord]| s.iter().map(|e| e.penalty).sum::<f64>() / s.len() as f64;
    let first = mean(&eps[..100]);
    let last = mean(&eps[400..500]);
    check(
        eps.len() >= 500 && last < first && took <= Duration::from_secs(1200),
        format!(
            "{} episodes in {took:.1?}, mean P_total first 100 {first:.3}, last 100 {last:.3}",
            eps.len()
        ),
    )
}

fn reproducible() -> Outcome {
    let mut cfg = RunConfig::smoke();
    cfg.train.total_timesteps = 16_384;
    cfg.island.mode = IslandMode::Heuristic;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        cmd_train(&cfg, d.path()).unwrap();
    }
    let same = ["metrics.csv", "episodes.csv"].iter().all(|f| {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        !a.is_empty() && a == b
    });
    check(
        same,
        format!(
            "two {}-step runs, metrics.csv and episodes.csv identical: {same}",
            cfg.train.total_timesteps
        ),
    )
}

fn grid(trained: &Trained) -> Outcome {
    let Some((cfg, trainer)) = trained else {
        return check(false, "no trained smoke policy");
    };
    let world = World::build(cfg).unwrap();
    let policy = Policy {
        agent: &trainer.agent,
        normalizer: &trainer.normalizer,
        deterministic: true,
        ablation: cfg.train.ablation,
    };
    let (rs, cs) = ([4.0, 7.0, 10.0], [0.2, 0.5, 0.8]);
    let a = grid_sweep(cfg, &world, &policy, &rs, &cs, 10).unwrap();
    let b = grid_sweep(cfg, &world, &policy, &rs, &cs, 10).unwrap();
    let home = a
        .iter()
        .find(|g| g.r == cfg.eval.r && g.c == cfg.eval.c)
        .map(|g| g.nectar.mean)
        .unwrap_or(0.0);
    let table: Vec<String> = a.iter().map(|g| format!("({},{})={:.1}", g.r, g.c, g.nectar.mean)).collect();
    check(
        a == b && home > 0.0,
        format!("identical on rerun: {}, nectar {}", a == b, table.join(" ")),
    )
}

fn main() {
    let mut trained = None;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("GAE matches oracle", Box::new(|_| gae())),
        ("network gradients match finite differences", Box::new(|_| grad_check())),
        ("first-minibatch ratio is one", Box::new(|_| ratio_identity())),
        ("placement penalty and nearest neighbours", Box::new(|_| penalty())),
        ("critic learns chain values", Box::new(|_| critic())),
        ("smoke task is learned", Box::new(smoke)),
        ("heuristic island lowers placement penalty", Box::new(|_| heuristic_penalty())),
        ("same seed gives identical metrics", Box::new(|_| reproducible())),
        ("layout grid sweep", Box::new(|t| grid(t))),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.into_iter().enumerate() {
        let out = run(&mut trained);
        println!(
            "[{}] {} {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            n + 1,
            out.detail
        );
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
