//! Probabilistic policy reuse on top of deep Q-learning.
//!
//! Each episode a reuse slot is drawn from a Boltzmann distribution over the
//! running mean score `W` of every slot. Slot 0 is the policy being trained
//! and runs a plain q-learning episode; slot `k > 0` runs a pi-exploration
//! episode that follows past policy `k` with a per-step probability `psi`
//! decaying by `nu`. Both kinds of episode store their transitions in the
//! shared replay memory and train the new policy every step.

mod library;

pub use library::{LibraryEntry, PolicyLibrary, PolicyMeta, MANIFEST_FILE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dqn::{
    select_action_epsilon_greedy, select_action_greedy, DqnAgent, EpsilonSchedule, Transition,
};
use crate::env::QasEnv;
use crate::error::{Error, Result};
use crate::neural::QNetwork;
use crate::quantum::check_probability;

/// Boltzmann probabilities `exp(tau W_j) / sum_p exp(tau W_p)`, evaluated
/// with the maximum subtracted from every exponent.
pub fn softmax_probabilities(weights: &[f64], tau: f64) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptyWeights);
    }
    if tau.is_nan() || tau < 0.0 || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "softmax needs finite weights and tau >= 0 (tau = {tau})"
        )));
    }
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = weights.iter().map(|w| (tau * (w - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Draws a slot from the Boltzmann distribution over `weights`.
pub fn softmax_select<R: Rng + ?Sized>(
    weights: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    let probs = softmax_probabilities(weights, tau)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = i;
            break;
        }
    }
    Ok((probs, chosen))
}

/// Reuse values `W`, selection counts `U` and the Boltzmann temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ReuseStats {
    pub w: Vec<f64>,
    pub u: Vec<u64>,
    pub tau: f64,
    pub tau0: f64,
    pub delta_tau: f64,
    /// Number of temperature increments applied so far.
    pub increments: u64,
}

impl ReuseStats {
    /// Zeroed statistics for `slots` reuse slots (library size + 1).
    pub fn new(slots: usize, tau: f64, delta_tau: f64) -> Self {
        ReuseStats {
            w: vec![0.0; slots],
            u: vec![0; slots],
            tau,
            tau0: tau,
            delta_tau,
            increments: 0,
        }
    }

    pub fn slots(&self) -> usize {
        self.w.len()
    }

    /// Folds `score` into slot `k`'s running mean.
    pub fn record(&mut self, k: usize, score: f64) {
        let n = self.u[k] as f64;
        self.w[k] = (self.w[k] * n + score) / (n + 1.0);
        self.u[k] += 1;
    }

    /// `tau <- tau + delta_tau`, evaluated as `tau0 + e * delta_tau` so no
    /// rounding error accumulates over a run.
    pub fn advance_temperature(&mut self) {
        self.increments += 1;
        self.tau = self.tau0 + self.increments as f64 * self.delta_tau;
    }
}

/// Per-step probability `psi` of following the past policy, and its decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationParams {
    pub psi: f64,
    pub nu: f64,
}

impl Default for ExplorationParams {
    fn default() -> Self {
        ExplorationParams { psi: 1.0, nu: 0.95 }
    }
}

impl ExplorationParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("psi", self.psi)?;
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nu {} outside (0, 1)",
                self.nu
            )));
        }
        Ok(())
    }
}

/// Independent random streams for one run. Keeping replay sampling apart
/// from behavior draws means a run that skips a behavior draw still samples
/// the same batches.
#[derive(Debug, Clone)]
pub struct RunRng {
    pub behavior: ChaCha8Rng,
    pub replay: ChaCha8Rng,
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        let mut behavior = ChaCha8Rng::seed_from_u64(seed);
        behavior.set_stream(1);
        let mut replay = ChaCha8Rng::seed_from_u64(seed);
        replay.set_stream(2);
        RunRng { behavior, replay }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Final fidelity minus the step penalty times the number of gates.
    pub score: f64,
    pub steps: usize,
    pub final_fidelity: f64,
    pub solved: bool,
    /// `psi` after the last step; `None` for q-learning episodes.
    pub final_psi: Option<f64>,
}

/// Where each step's action comes from.
enum Behavior<'a> {
    /// New policy, epsilon-greedy when `Some`.
    Learner(Option<f64>),
    /// Past policy with probability `psi`, otherwise the new policy greedily.
    Reuse(&'a QNetwork, ExplorationParams),
}

fn run_episode(
    env: &mut QasEnv,
    agent: &mut DqnAgent,
    behavior: Behavior<'_>,
    rng: &mut RunRng,
) -> Result<EpisodeOutcome> {
    let mut state = env.reset();
    let mut psi = match &behavior {
        Behavior::Reuse(_, params) => Some(params.psi),
        Behavior::Learner(_) => None,
    };
    loop {
        let action = match &behavior {
            Behavior::Learner(None) => select_action_greedy(&agent.policy, &state)?,
            Behavior::Learner(Some(eps)) => {
                select_action_epsilon_greedy(&agent.policy, &state, *eps, &mut rng.behavior)?
            }
            Behavior::Reuse(past, _) => {
                let p: f64 = rng.behavior.random();
                if p <= psi.expect("reuse episodes track psi") {
                    select_action_greedy(past, &state)?
                } else {
                    select_action_greedy(&agent.policy, &state)?
                }
            }
        };
        let step = env.step(action)?;
        if let (Behavior::Reuse(_, params), Some(psi)) = (&behavior, psi.as_mut()) {
            *psi *= params.nu;
        }
        let next_state = (!step.done).then(|| step.observation.clone());
        agent.remember(Transition {
            state: std::mem::replace(&mut state, step.observation),
            action,
            reward: step.reward,
            next_state,
        });
        agent.optimize(&mut rng.replay)?;
        if step.done {
            let record = env.record();
            return Ok(EpisodeOutcome {
                score: record.score,
                steps: record.steps,
                final_fidelity: record.final_fidelity,
                solved: step.fidelity >= env.config().fidelity_threshold,
                final_psi: psi,
            });
        }
    }
}

/// One episode acting greedily from the new policy (epsilon-greedy when
/// `epsilon` is given), training it after every step.
pub fn q_learning_episode(
    env: &mut QasEnv,
    agent: &mut DqnAgent,
    epsilon: Option<f64>,
    rng: &mut RunRng,
) -> Result<EpisodeOutcome> {
    if let Some(eps) = epsilon {
        check_probability("epsilon", eps)?;
    }
    run_episode(env, agent, Behavior::Learner(epsilon), rng)
}

/// One episode mixing a past policy and the new policy, training the new
/// policy after every step. `params.psi` is the value at the episode start.
pub fn pi_exploration_episode(
    env: &mut QasEnv,
    agent: &mut DqnAgent,
    past_policy: &QNetwork,
    params: ExplorationParams,
    rng: &mut RunRng,
) -> Result<EpisodeOutcome> {
    params.validate()?;
    if !past_policy.same_architecture(&agent.policy) {
        return Err(Error::ArchitectureMismatch(
            past_policy.layer_sizes().to_vec(),
            agent.policy.layer_sizes().to_vec(),
        ));
    }
    run_episode(env, agent, Behavior::Reuse(past_policy, params), rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprHyper {
    /// Number of episodes `K`.
    pub episodes: usize,
    pub tau0: f64,
    pub delta_tau: f64,
    pub exploration: ExplorationParams,
    /// Epsilon-greedy schedule for slot-0 episodes. Only used for
    /// from-scratch training.
    pub epsilon: Option<EpsilonSchedule>,
}

impl Default for PprHyper {
    fn default() -> Self {
        PprHyper {
            episodes: 1000,
            tau0: 0.0,
            delta_tau: 0.01,
            exploration: ExplorationParams::default(),
            epsilon: None,
        }
    }
}

impl PprHyper {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidConfig(
                "episode count must be positive".into(),
            ));
        }
        if !(self.tau0 >= 0.0 && self.delta_tau >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} and increment {} must be nonnegative",
                self.tau0, self.delta_tau
            )));
        }
        self.exploration.validate()
    }
}

/// What happened in one episode of a reuse run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    /// 1-based episode index.
    pub episode: usize,
    pub outcome: EpisodeOutcome,
    /// Reuse slot chosen for the episode (0 = new policy).
    pub slot: usize,
    /// Temperature used for the selection.
    pub tau: f64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PprOutcome {
    pub episodes: Vec<EpisodeLog>,
    pub stats: ReuseStats,
}

/// Full reuse run of `hyper.episodes` episodes. `on_episode` is invoked
/// after every episode, e.g. for timing or progress output.
pub fn ppr_run(
    env: &mut QasEnv,
    agent: &mut DqnAgent,
    library: &PolicyLibrary,
    hyper: &PprHyper,
    rng: &mut RunRng,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<PprOutcome> {
    hyper.validate()?;
    let mut stats = ReuseStats::new(library.len() + 1, hyper.tau0, hyper.delta_tau);
    let mut episodes = Vec::with_capacity(hyper.episodes);
    for episode in 1..=hyper.episodes {
        let tau = stats.tau;
        let (_, slot) = softmax_select(&stats.w, tau, &mut rng.behavior)?;
        let epsilon = hyper.epsilon.map(|s| s.value(episode - 1));
        let outcome = match library.slot(slot) {
            None => q_learning_episode(env, agent, epsilon, rng)?,
            Some(past) => pi_exploration_episode(env, agent, past, hyper.exploration, rng)?,
        };
        stats.record(slot, outcome.score);
        stats.advance_temperature();
        if episode % agent.config.target_update_period == 0 {
            agent.sync_target()?;
        }
        let log = EpisodeLog {
            episode,
            outcome,
            slot,
            tau,
            epsilon: if slot == 0 { epsilon } else { None },
        };
        on_episode(&log);
        episodes.push(log);
    }
    Ok(PprOutcome { episodes, stats })
}
