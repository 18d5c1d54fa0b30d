mod common;

use coisland::environment::{
    build_observation, episode_metrics, nearest_flower, step, Ablation, Action, EnvState, Flower, StepTrace, NORMAL_SLOTS,
    OBS_DIM, PARAM_SLOTS, RAY_SLOTS,
};
use coisland::harness::{RunConfig, World};
use coisland::placement::LayoutParams;
use coisland::rng::{stream, Stream};
use coisland::terrain::Vec3;
use coisland::Error;
use common::{homing_action, run_homing, smoke_episode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default hilly world with obstacles, first episode of env 0.
fn hilly_episode(seed: u64, params: LayoutParams) -> (RunConfig, EnvState) {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.env.max_episode_steps = 400;
    let world = World::build(&cfg).unwrap();
    let mut layout_rng = stream(seed, Stream::Env(0));
    let obstacles = world.draw_obstacles(&cfg, &mut layout_rng).unwrap();
    let ep = world
        .begin(&cfg, obstacles, &params, &mut layout_rng, &mut stream(seed, Stream::Spawn(0)))
        .unwrap();
    (cfg, ep.state)
}

fn random_action<R: Rng>(rng: &mut R) -> Action {
    Action {
        thrust: [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ],
        yaw_torque: rng.random_range(-1.0..1.0),
    }
}

/// Reward written out with the pinned constants.
fn reward_oracle(r_norm: f64, c: f64, collided: bool, nectar: usize) -> f64 {
    -0.001 - 0.01 * r_norm - 0.05 * (c - 0.5).abs() - if collided { 0.5 } else { 0.0 } + nectar as f64
}

#[test]
fn same_seed_same_trajectory() {
    let run = || {
        let (cfg, mut state) = hilly_episode(11, LayoutParams::new(6.0, 0.7));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut path = Vec::new();
        while !state.done {
            step(&mut state, &random_action(&mut rng), &cfg.env).unwrap();
            path.push(state.bird.position);
        }
        (path, state.trace)
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_invariants_hold(seed in any::<u64>(), r in 3.0..12.0f64, c in 0.0..=1.0f64) {
        let (cfg, mut state) = hilly_episode(seed % 4, LayoutParams::new(r, c));
        let capacity = cfg.env.nectar_capacity * state.flowers.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev_contact = false;
        while !state.done {
            let action = if rng.random_bool(0.5) { homing_action(&state, &cfg) } else { random_action(&mut rng) };
            let (reward, events) = step(&mut state, &action, &cfg.env).unwrap();
            prop_assert_eq!(state.nectar_collected + state.nectar_remaining(), capacity);
            prop_assert!((state.bird.orientation.quaternion().norm() - 1.0).abs() < 1e-12);
            prop_assert_eq!(reward, reward_oracle(state.r_norm, state.params.c, events.collided, events.nectar_collected));
            prop_assert_eq!(events.collided, state.in_contact && !prev_contact);
            prev_contact = state.in_contact;
            prop_assert!(state.bird.position.y <= cfg.env.physics.ceiling);
        }
        prop_assert!(state.step_count <= cfg.env.max_episode_steps);
        prop_assert!(matches!(step(&mut state, &Action::default(), &cfg.env), Err(Error::TerminalState)));
    }

    #[test]
    fn nearest_flower_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flowers: Vec<Flower> = (0..50)
            .map(|_| Flower {
                position: Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(0.0..3.0), rng.random_range(-10.0..10.0)),
                nectar: if rng.random_bool(0.3) { 0.0 } else { 1.0 },
                collect_radius: 0.5,
            })
            .collect();
        let p = Vec3::new(rng.random_range(-10.0..10.0), 1.0, rng.random_range(-10.0..10.0));
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in flowers.iter().enumerate() {
            let d = ((f.position.x - p.x).powi(2) + (f.position.y - p.y).powi(2) + (f.position.z - p.z).powi(2)).sqrt();
            if f.nectar > 0.0 && best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        let (idx, v) = nearest_flower(&p, &flowers);
        match best {
            Some((i, d)) => {
                prop_assert_eq!(idx, i as isize);
                prop_assert!((v.norm() - d).abs() < 1e-12);
                prop_assert_eq!(v, flowers[i].position - p);
            }
            None => prop_assert_eq!(idx, -1),
        }
    }
}

#[test]
fn all_empty_flowers_have_no_nearest() {
    let flowers = vec![Flower {
        position: Vec3::zeros(),
        nectar: 0.0,
        collect_radius: 0.5,
    }];
    assert_eq!(nearest_flower(&Vec3::x(), &flowers), (-1, Vec3::zeros()));
}

#[test]
fn free_flight_is_semi_implicit_euler() {
    let (cfg, mut state) = smoke_episode(0, 0);
    state.bird.position.y += 3.0;
    state.bird.velocity = Vec3::new(0.5, 0.2, -0.3);
    let p = &cfg.env.physics;
    let action = Action {
        thrust: [0.1, 0.0, 0.05],
        yaw_torque: 0.0,
    };
    let (x0, v0) = (state.bird.position, state.bird.velocity);
    step(&mut state, &action, &cfg.env).unwrap();
    let force = Vec3::new(0.1, 0.0, 0.05) * p.thrust_gain;
    let v1 = v0 + (force / p.mass - Vec3::new(0.0, p.gravity, 0.0) - v0 * p.drag) * p.dt;
    let x1 = x0 + v1 * p.dt;
    assert!((state.bird.velocity - v1).norm() < 1e-12);
    assert!((state.bird.position - x1).norm() < 1e-12);
}

#[test]
fn observation_is_pure() {
    let (cfg, mut state) = hilly_episode(3, LayoutParams::new(7.0, 0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        step(&mut state, &random_action(&mut rng), &cfg.env).unwrap();
    }
    let before = (
        state.bird.clone(),
        state.flowers.clone(),
        state.step_count,
        state.trace.clone(),
    );
    let a = build_observation(&state, &cfg.env);
    let b = build_observation(&state, &cfg.env);
    assert_eq!(a, b);
    assert_eq!(
        before,
        (
            state.bird.clone(),
            state.flowers.clone(),
            state.step_count,
            state.trace.clone()
        )
    );
    assert_eq!(a.len(), OBS_DIM);
    assert!(a[RAY_SLOTS].iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a[PARAM_SLOTS], [state.r_norm, state.params.c]);
    let n = &a[NORMAL_SLOTS];
    assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-9);
}

#[test]
fn ablations_zero_only_their_slots() {
    let (cfg, state) = hilly_episode(5, LayoutParams::new(5.0, 0.5));
    let full = build_observation(&state, &cfg.env).to_vec();
    for (ablation, masked) in [
        (Ablation::Full, 0..0),
        (Ablation::NoRays, 0..9),
        (Ablation::NoNormals, 19..22),
        (Ablation::NoParams, 22..24),
    ] {
        let mut obs = full.clone();
        ablation.apply(&mut obs);
        for (i, (&o, &f)) in obs.iter().zip(&full).enumerate() {
            assert_eq!(o, if masked.contains(&i) { 0.0 } else { f }, "{} slot {i}", ablation.name());
        }
        assert_eq!(Ablation::parse(ablation.name()).unwrap(), ablation);
    }
    assert!(Ablation::parse("no_wings").is_err());
}

#[test]
fn episode_metrics_summarise_the_trace() {
    let t = |reward, nectar_collected, collided| StepTrace {
        reward,
        nectar_collected,
        collided,
    };
    let trace = [t(-0.1, 0, true), t(0.9, 1, false), t(-0.1, 0, true), t(1.9, 2, true)];
    let m = episode_metrics(&trace, 100).unwrap();
    assert!((m.avg_reward - 2.6 / 4.0).abs() < 1e-12);
    assert_eq!((m.nectar, m.first_flower_step, m.collisions, m.steps), (3, 1, 3, 4));
    let none = episode_metrics(&[t(0.0, 0, false)], 100).unwrap();
    assert_eq!(none.first_flower_step, 100);
    assert!(episode_metrics(&[], 100).is_err());
}

#[test]
fn homing_clears_smoke_layouts() {
    for k in 0..10 {
        let (cfg, mut state) = smoke_episode(7, k);
        run_homing(&mut state, &cfg);
        assert!(
            state.all_collected(),
            "episode {k} left nectar after {} steps",
            state.step_count
        );
        let m = state.metrics().unwrap();
        assert_eq!(m.nectar, state.flowers.len());
    }
}
