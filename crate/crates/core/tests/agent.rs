mod common;

use common::*;
use qas_core::dqn::{
    optimize, select_action_epsilon_greedy, select_action_greedy, update_target, DqnAgent,
    DqnConfig, ReplayMemory, Transition,
};
use qas_core::env::QasEnv;
use qas_core::experiment::build_environment;
use qas_core::neural::{AdamState, QNetwork};
use qas_core::ppr::{
    pi_exploration_episode, ppr_run, q_learning_episode, ExplorationParams, PolicyLibrary,
    PolicyMeta, PprHyper, RunRng,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> DqnConfig {
    DqnConfig {
        hidden: [16, 16],
        ..DqnConfig::default()
    }
}

fn env(id: u32) -> QasEnv {
    QasEnv::new(build_environment(id).unwrap()).unwrap()
}

#[test]
fn pretrained_solver_scores_point_nine_eight() {
    let mut e = env(0);
    let frozen = DqnConfig {
        min_replay_before_learning: usize::MAX / 2,
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::from_policy(bell_solver(64), frozen).unwrap();
    let out = q_learning_episode(&mut e, &mut agent, None, &mut RunRng::new(0)).unwrap();
    assert_eq!(out.steps, 2);
    assert!(out.solved);
    assert!((out.final_fidelity - 1.0).abs() < 1e-9);
    assert!((out.score - 0.98).abs() < 1e-12);
    assert_eq!(agent.memory.len(), 2);
    assert!(agent.memory.iter().last().unwrap().next_state.is_none());
    assert!(agent.memory.iter().next().unwrap().next_state.is_some());
}

#[test]
fn zero_network_always_picks_the_first_action() {
    let mut e = env(0);
    let frozen = DqnConfig {
        min_replay_before_learning: usize::MAX / 2,
        ..DqnConfig::default()
    };
    let mut agent =
        DqnAgent::from_policy(QNetwork::zeros(&[6, 64, 64, 12]).unwrap(), frozen).unwrap();
    let out = q_learning_episode(&mut e, &mut agent, None, &mut RunRng::new(0)).unwrap();
    assert_eq!(out.steps, 20);
    assert!(!out.solved);
    assert!(agent.memory.iter().all(|t| t.action == 0));
    assert!(out.score >= -0.2 && out.score <= 1.0);
}

#[test]
fn psi_zero_matches_plain_q_learning() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = DqnAgent::new(2, small_config(), &mut rng).unwrap();
        let past = QNetwork::new(&[6, 16, 16, 12], &mut rng).unwrap();
        // warm the memory so the learner trains during the episode
        let mut warm = start.clone();
        let mut warm_rng = RunRng::new(seed + 100);
        for _ in 0..5 {
            q_learning_episode(&mut env(2), &mut warm, Some(1.0), &mut warm_rng).unwrap();
        }

        let (mut a, mut b) = (warm.clone(), warm);
        let (mut ra, mut rb) = (RunRng::new(seed), RunRng::new(seed));
        for _ in 0..3 {
            let x = q_learning_episode(&mut env(2), &mut a, None, &mut ra).unwrap();
            let params = ExplorationParams { psi: 0.0, nu: 0.95 };
            let y = pi_exploration_episode(&mut env(2), &mut b, &past, params, &mut rb).unwrap();
            assert_eq!((x.score, x.steps), (y.score, y.steps));
            assert_eq!(a.policy, b.policy);
        }
        assert!(a.memory.iter().eq(b.memory.iter()));
    }
}

#[test]
fn psi_decays_geometrically_within_an_episode() {
    let frozen = DqnConfig {
        min_replay_before_learning: usize::MAX / 2,
        ..DqnConfig::default()
    };
    let mut agent =
        DqnAgent::from_policy(QNetwork::zeros(&[6, 64, 64, 12]).unwrap(), frozen).unwrap();
    let past = QNetwork::zeros(&[6, 64, 64, 12]).unwrap();
    let params = ExplorationParams { psi: 1.0, nu: 0.95 };
    for seed in 0..3 {
        let out = pi_exploration_episode(
            &mut env(0),
            &mut agent,
            &past,
            params,
            &mut RunRng::new(seed),
        )
        .unwrap();
        assert!((out.final_psi.unwrap() - 0.95f64.powi(out.steps as i32)).abs() < 1e-12);
    }
    // psi restarts at psi0 in every episode, so each episode starts from 1
    let solver = bell_solver(64);
    for seed in 0..20 {
        let out = pi_exploration_episode(
            &mut env(0),
            &mut agent,
            &solver,
            params,
            &mut RunRng::new(seed),
        )
        .unwrap();
        assert!((out.final_psi.unwrap() - 0.95f64.powi(out.steps as i32)).abs() < 1e-12);
    }
}

#[test]
fn empty_library_only_uses_the_new_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut agent = DqnAgent::new(2, small_config(), &mut rng).unwrap();
    let hyper = PprHyper {
        episodes: 60,
        ..PprHyper::default()
    };
    let out = ppr_run(
        &mut env(1),
        &mut agent,
        &PolicyLibrary::new(),
        &hyper,
        &mut RunRng::new(1),
        |_| {},
    )
    .unwrap();
    assert!(out
        .episodes
        .iter()
        .all(|e| e.slot == 0 && e.outcome.final_psi.is_none()));
    assert_eq!(out.stats.u, vec![60]);
}

#[test]
fn ppr_run_bookkeeping() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lib = PolicyLibrary::new();
    lib.append(&bell_solver(16), PolicyMeta::new("env-0"))
        .unwrap();
    lib.append(
        &QNetwork::new(&[6, 16, 16, 12], &mut rng).unwrap(),
        PolicyMeta::new("env-1"),
    )
    .unwrap();
    let mut agent = DqnAgent::new(2, small_config(), &mut rng).unwrap();
    let hyper = PprHyper {
        episodes: 150,
        ..PprHyper::default()
    };
    let mut seen = Vec::new();
    let out = ppr_run(
        &mut env(2),
        &mut agent,
        &lib,
        &hyper,
        &mut RunRng::new(2),
        |e| seen.push(e.episode),
    )
    .unwrap();
    assert_eq!(seen, (1..=150).collect::<Vec<_>>());
    assert_eq!(out.stats.u.iter().sum::<u64>(), 150);
    for k in 0..3 {
        let scores: Vec<f64> = out
            .episodes
            .iter()
            .filter(|e| e.slot == k)
            .map(|e| e.outcome.score)
            .collect();
        assert_eq!(scores.len() as u64, out.stats.u[k]);
        if !scores.is_empty() {
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            assert!((out.stats.w[k] - mean).abs() < 1e-12);
        }
    }
    for e in &out.episodes {
        assert_eq!(e.tau, (e.episode - 1) as f64 * 0.01);
        assert!(e.epsilon.is_none());
        assert_eq!(e.outcome.final_psi.is_some(), e.slot > 0);
    }
    assert_eq!(out.stats.tau, 150.0 * 0.01);
}

#[test]
fn temperature_reaches_ten_after_a_thousand_episodes() {
    let mut stats = qas_core::ppr::ReuseStats::new(1, 0.0, 0.01);
    for e in 1..=1000 {
        stats.advance_temperature();
        if e == 999 {
            assert!((stats.tau - 9.99).abs() < 1e-12);
        }
    }
    assert!((stats.tau - 10.0).abs() < 1e-12);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lib = PolicyLibrary::new();
        lib.append(&bell_solver(16), PolicyMeta::new("env-0"))
            .unwrap();
        let mut agent = DqnAgent::new(2, small_config(), &mut rng).unwrap();
        let hyper = PprHyper {
            episodes: 80,
            ..PprHyper::default()
        };
        let out = ppr_run(
            &mut env(3),
            &mut agent,
            &lib,
            &hyper,
            &mut RunRng::new(9),
            |_| {},
        )
        .unwrap();
        (
            out.episodes
                .iter()
                .map(|e| (e.slot, e.outcome.score.to_bits()))
                .collect::<Vec<_>>(),
            agent.policy,
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn optimize_is_a_no_op_until_memory_fills() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agent = DqnAgent::new(2, small_config(), &mut rng).unwrap();
    let before = agent.policy.clone();
    assert_eq!(agent.optimize(&mut rng).unwrap(), None);
    for _ in 0..63 {
        agent.remember(Transition {
            state: vec![0.0; 6],
            action: 1,
            reward: -0.01,
            next_state: Some(vec![0.0; 6]),
        });
    }
    assert_eq!(agent.optimize(&mut rng).unwrap(), None);
    assert_eq!(agent.policy, before);
    assert_eq!(agent.adam.step_count(), 0);
}

#[test]
fn optimize_with_exact_targets_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = DqnConfig {
        batch_size: 8,
        min_replay_before_learning: 8,
        hidden: [16, 16],
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::new(2, config, &mut rng).unwrap();
    for _ in 0..8 {
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = rng.random_range(0..12);
        let q = agent.policy.forward(&s).unwrap()[a];
        agent.remember(Transition {
            state: s,
            action: a,
            reward: q,
            next_state: None,
        });
    }
    let before = agent.policy.clone();
    let loss = agent.optimize(&mut rng).unwrap().unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(agent.policy, before);
}

#[test]
fn single_transition_step_reduces_loss() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = DqnConfig {
            batch_size: 1,
            min_replay_before_learning: 1,
            ..DqnConfig::default()
        };
        let mut agent = DqnAgent::new(2, config, &mut rng).unwrap();
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        agent.remember(Transition {
            state: s.clone(),
            action: 10,
            reward: 0.97,
            next_state: None,
        });
        let pre = agent.optimize(&mut rng).unwrap().unwrap();
        let post = (agent.policy.forward(&s).unwrap()[10] - 0.97).powi(2);
        assert!(post < pre, "seed {seed}: {post} >= {pre}");
    }
}

#[test]
fn full_batch_descent_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 32;
    let config = DqnConfig {
        batch_size: n,
        min_replay_before_learning: n,
        learning_rate: 1e-4,
        ..DqnConfig::default()
    };
    let mut policy = QNetwork::new(&[6, 64, 64, 12], &mut rng).unwrap();
    let target = QNetwork::new(&[6, 64, 64, 12], &mut rng).unwrap();
    let mut memory = ReplayMemory::new(n).unwrap();
    for _ in 0..n {
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let next = rng
            .random_bool(0.5)
            .then(|| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
        memory.push(Transition {
            state: s,
            action: rng.random_range(0..12),
            reward: rng.random_range(-1.0..1.0),
            next_state: next,
        });
    }
    let mut adam = AdamState::new(policy.parameters().len(), config.learning_rate, 0.9, 0.999);
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let loss = optimize(&mut policy, &target, &memory, &config, &mut adam, &mut rng)
            .unwrap()
            .unwrap();
        assert!(loss < last, "{loss} >= {last}");
        last = loss;
    }
}

#[test]
fn target_sync_copies_and_isolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut policy = QNetwork::new(&[6, 16, 16, 12], &mut rng).unwrap();
    let mut target = QNetwork::new(&[6, 16, 16, 12], &mut rng).unwrap();
    update_target(&policy, &mut target).unwrap();
    let once = target.clone();
    update_target(&policy, &mut target).unwrap();
    assert_eq!(target, once);
    let inputs: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for x in &inputs {
        assert_eq!(policy.forward(x).unwrap(), target.forward(x).unwrap());
    }
    for p in policy.parameters_mut() {
        *p += 0.5;
    }
    assert_eq!(target, once);
    let wrong = QNetwork::zeros(&[6, 8, 12]).unwrap();
    assert!(update_target(&wrong, &mut target).is_err());
}

#[test]
fn clone_is_deep() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut src = QNetwork::new(&[6, 16, 16, 12], &mut rng).unwrap();
    let copy = src.clone();
    let twice = copy.clone();
    let x: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let before: Vec<_> = x.iter().map(|v| src.forward(v).unwrap()).collect();
    src.parameters_mut()[3] += 1.0;
    for (v, b) in x.iter().zip(&before) {
        assert_eq!(&copy.forward(v).unwrap(), b);
        assert_eq!(twice.forward(v).unwrap(), copy.forward(v).unwrap());
    }
}

#[test]
fn epsilon_zero_is_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let net = QNetwork::new(&[6, 8, 8, 12], &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(
            select_action_epsilon_greedy(&net, &x, 0.0, &mut rng).unwrap(),
            select_action_greedy(&net, &x).unwrap()
        );
    }
}

#[test]
fn epsilon_half_is_reproducible() {
    let net = QNetwork::new(&[6, 8, 8, 12], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let x = [0.0, 0.0, 0.98, 0.0, 0.0, 0.98];
    let seq = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50)
            .map(|_| select_action_epsilon_greedy(&net, &x, 0.5, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(seq(4), seq(4));
}

#[test]
fn replay_capacity_matches_default() {
    let mut memory = ReplayMemory::new(DqnConfig::default().replay_capacity).unwrap();
    for i in 0..10_000 {
        memory.push(Transition {
            state: vec![i as f64],
            action: 0,
            reward: 0.0,
            next_state: None,
        });
    }
    assert_eq!(memory.len(), 10_000);
    memory.push(Transition {
        state: vec![-1.0],
        action: 0,
        reward: 0.0,
        next_state: None,
    });
    assert_eq!(memory.len(), 10_000);
    assert_eq!(memory.iter().next().unwrap().state, vec![1.0]);
}

#[test]
fn sample_batch_is_seeded_and_without_replacement() {
    let mut memory = ReplayMemory::new(64).unwrap();
    for i in 0..64 {
        memory.push(Transition {
            state: vec![i as f64],
            action: i,
            reward: 0.0,
            next_state: None,
        });
    }
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        memory
            .sample_batch(32, &mut rng)
            .unwrap()
            .iter()
            .map(|t| t.action)
            .collect::<Vec<_>>()
    };
    let a = draw(1);
    assert_eq!(a, draw(1));
    let mut sorted = a.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 32);
    let mut all = memory
        .sample_batch(64, &mut ChaCha8Rng::seed_from_u64(2))
        .unwrap()
        .iter()
        .map(|t| t.action)
        .collect::<Vec<_>>();
    all.sort_unstable();
    assert_eq!(all, (0..64).collect::<Vec<_>>());
    assert!(memory
        .sample_batch(65, &mut ChaCha8Rng::seed_from_u64(3))
        .is_err());
}
