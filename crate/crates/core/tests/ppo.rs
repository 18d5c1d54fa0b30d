mod common;

use coisland::ppo::{collect_rollouts, compute_gae, ppo_update, Agent, NetConfig, PpoConfig, RunningNormalizer};
use coisland::rng::{stream, Stream};
use common::{discounted_returns, train_chain_critic, Chain};

fn setup(seed: u64) -> (Chain, Agent, RunningNormalizer, Vec<coisland::rng::SimRng>) {
    let env = Chain::new([0.5, 1.0, -1.0], 3);
    let agent = Agent::new(
        3,
        2,
        &NetConfig {
            hidden: vec![8, 8],
            ..NetConfig::default()
        },
        &mut stream(seed, Stream::Init),
    );
    let rngs = (0..3).map(|i| stream(seed, Stream::Actions(i))).collect();
    (env, agent, RunningNormalizer::new(3), rngs)
}

#[test]
fn stored_log_probs_match_recomputation() {
    let (mut env, agent, mut norm, mut rngs) = setup(1);
    let buffer = collect_rollouts(&mut env, &agent, &mut norm, 20, &mut rngs, true).unwrap();
    assert_eq!(norm.count, 60);
    for i in 0..buffer.len() {
        let recomputed = agent.log_prob(buffer.observation(i), buffer.action(i)).unwrap();
        assert!((recomputed - buffer.log_probs[i]).abs() < 1e-12);
        assert_eq!(buffer.values[i], agent.state_value(buffer.observation(i)).unwrap());
    }
}

#[test]
fn batch_returns_follow_each_env_trajectory() {
    let (mut env, agent, mut norm, mut rngs) = setup(2);
    let buffer = collect_rollouts(&mut env, &agent, &mut norm, 10, &mut rngs, false).unwrap();
    let copy = buffer.clone();
    let batch = buffer.into_batch(0.9, 1.0).unwrap();
    for e in 0..3 {
        let span = e * 10..(e + 1) * 10;
        let mc = discounted_returns(&copy.rewards[span.clone()], &copy.dones[span.clone()], copy.bootstrap[e], 0.9);
        for (got, want) in batch.returns[span].iter().zip(mc) {
            assert!((got - want).abs() < 1e-9);
        }
    }
    let (adv, _) = compute_gae(
        &copy.rewards[..10],
        &copy.values[..10],
        &copy.dones[..10],
        copy.bootstrap[0],
        0.9,
        1.0,
    )
    .unwrap();
    assert_eq!(&batch.advantages[..10], adv.as_slice());
}

#[test]
fn first_minibatch_ratio_is_one() {
    let (mut env, mut agent, mut norm, mut rngs) = setup(3);
    let hp = PpoConfig {
        batch_size: 32,
        buffer_size: 96,
        n_envs: 3,
        ..PpoConfig::default()
    };
    for _ in 0..3 {
        let batch = collect_rollouts(&mut env, &agent, &mut norm, 32, &mut rngs, true)
            .unwrap()
            .into_batch(0.99, 0.95)
            .unwrap();
        let stats = ppo_update(&mut agent, &batch, &hp, &mut stream(3, Stream::Shuffle)).unwrap();
        assert!(stats.first_batch_max_ratio_dev < 1e-6);
        assert_eq!(stats.first_batch_clip_fraction, 0.0);
        assert!(stats.policy_loss.is_finite() && stats.value_loss.is_finite());
    }
}

#[test]
fn updates_are_deterministic() {
    let run = || {
        let (mut env, mut agent, mut norm, mut rngs) = setup(4);
        let hp = PpoConfig {
            batch_size: 16,
            buffer_size: 48,
            n_envs: 3,
            ..PpoConfig::default()
        };
        let mut shuffle = stream(4, Stream::Shuffle);
        let mut all = Vec::new();
        for _ in 0..5 {
            let batch = collect_rollouts(&mut env, &agent, &mut norm, 16, &mut rngs, true)
                .unwrap()
                .into_batch(0.99, 0.95)
                .unwrap();
            all.push(ppo_update(&mut agent, &batch, &hp, &mut shuffle).unwrap());
        }
        (agent, norm, all)
    };
    assert_eq!(run(), run());
}

#[test]
fn critic_learns_chain_values() {
    let (v, truth) = train_chain_critic(300, 0);
    for s in 0..3 {
        assert!(
            (v[s] - truth[s]).abs() <= 0.1 * truth[s].abs().max(1.0),
            "state {s}: {} vs {}",
            v[s],
            truth[s]
        );
    }
}
