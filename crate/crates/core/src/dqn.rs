//! Deep Q-learning: replay memory, bootstrap targets from a frozen target
//! network, and greedy / epsilon-greedy action selection.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{adam_step, AdamState, QNetwork, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// `None` when this step ended the episode.
    pub next_state: Option<Vec<f64>>,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next_state.is_none()
    }
}

/// Fixed-capacity ring buffer of transitions; the oldest entry is evicted
/// once full.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: Vec<Transition>,
    cursor: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(ReplayMemory {
            capacity,
            buffer: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(t);
        } else {
            self.buffer[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.buffer.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.buffer[split..].iter().chain(&self.buffer[..split])
    }

    /// `k` distinct transitions drawn uniformly.
    pub fn sample_batch<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if k > self.buffer.len() {
            return Err(Error::InsufficientTransitions {
                available: self.buffer.len(),
                requested: k,
            });
        }
        Ok(index::sample(rng, self.buffer.len(), k)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect())
    }
}

/// Multiplicative per-episode epsilon decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub decay: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            min: 0.02,
            decay: 0.99,
        }
    }
}

impl EpsilonSchedule {
    /// Epsilon used during episode `episode` (0-based).
    pub fn value(&self, episode: usize) -> f64 {
        (self.start * self.decay.powi(episode as i32)).max(self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub min_replay_before_learning: usize,
    /// Target network refresh period, in episodes.
    pub target_update_period: usize,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub hidden: [usize; 2],
    pub epsilon: EpsilonSchedule,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.7,
            batch_size: 64,
            min_replay_before_learning: 64,
            target_update_period: 10,
            replay_capacity: 10_000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            hidden: DEFAULT_HIDDEN,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return fail(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.replay_capacity
            ));
        }
        if self.target_update_period == 0 {
            return fail("target update period must be positive".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return fail(format!("learning rate {} is negative", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} {b} outside [0, 1)"));
            }
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.start)
            || !(0.0..=1.0).contains(&e.min)
            || !(0.0..=1.0).contains(&e.decay)
        {
            return fail(format!("invalid epsilon schedule {e:?}"));
        }
        if self.hidden.contains(&0) {
            return fail("hidden layers must be nonempty".into());
        }
        Ok(())
    }
}

/// `r` for terminal transitions, `r + gamma * max_a' Q(s', a'; target)` otherwise.
pub fn compute_targets(
    batch: &[&Transition],
    target_net: &QNetwork,
    gamma: f64,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| match &t.next_state {
            None => Ok(t.reward),
            Some(next) => {
                let q = target_net.forward(next)?;
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(t.reward + gamma * best)
            }
        })
        .collect()
}

/// One learning step on a sampled batch. Returns the pre-step loss, or
/// `None` while the memory holds fewer than
/// `max(batch_size, min_replay_before_learning)` transitions.
pub fn optimize<R: Rng + ?Sized>(
    policy: &mut QNetwork,
    target: &QNetwork,
    memory: &ReplayMemory,
    config: &DqnConfig,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<Option<f64>> {
    if memory.len() < config.batch_size.max(config.min_replay_before_learning) {
        return Ok(None);
    }
    let batch = memory.sample_batch(config.batch_size, rng)?;
    let targets = compute_targets(&batch, target, config.gamma)?;
    let inputs: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = policy.mse_loss_and_grad(&inputs, &actions, &targets)?;
    adam_step(policy, adam, &grads)?;
    Ok(Some(loss))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn select_action_greedy(net: &QNetwork, observation: &[f64]) -> Result<usize> {
    Ok(argmax(&net.forward(observation)?))
}

pub fn select_action_epsilon_greedy<R: Rng + ?Sized>(
    net: &QNetwork,
    observation: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..net.output_dim()))
    } else {
        select_action_greedy(net, observation)
    }
}

pub fn update_target(policy: &QNetwork, target: &mut QNetwork) -> Result<()> {
    target.copy_from(policy)
}

/// Policy network, target network, optimizer and replay memory for one run.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub policy: QNetwork,
    pub target: QNetwork,
    pub adam: AdamState,
    pub memory: ReplayMemory,
    pub config: DqnConfig,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(n_qubits: usize, config: DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let policy = QNetwork::for_register(n_qubits, config.hidden, rng)?;
        Self::from_policy(policy, config)
    }

    pub fn from_policy(policy: QNetwork, config: DqnConfig) -> Result<Self> {
        config.validate()?;
        let mut adam = AdamState::for_network(&policy, config.learning_rate);
        adam.beta1 = config.beta1;
        adam.beta2 = config.beta2;
        Ok(DqnAgent {
            target: policy.clone(),
            adam,
            memory: ReplayMemory::new(config.replay_capacity)?,
            policy,
            config,
        })
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    pub fn optimize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        optimize(
            &mut self.policy,
            &self.target,
            &self.memory,
            &self.config,
            &mut self.adam,
            rng,
        )
    }

    pub fn sync_target(&mut self) -> Result<()> {
        update_target(&self.policy, &mut self.target)
    }
}
