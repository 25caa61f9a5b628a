//! Episodic gate-placement environment with a reset/step interface.

use crate::error::{Error, Result};
use crate::quantum::{
    enumerate_actions, fidelity, initial_state, pauli_expectations, DensityMatrix, GateAction,
    NoiseSpec, TargetState,
};

pub const DEFAULT_FIDELITY_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MAX_STEPS: usize = 20;
pub const DEFAULT_STEP_PENALTY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub n_qubits: usize,
    pub target: TargetState,
    pub noise: NoiseSpec,
    pub fidelity_threshold: f64,
    /// Step cap `H`.
    pub max_steps: usize,
    pub step_penalty: f64,
}

impl EnvConfig {
    /// Bell-state search with the given noise and the default episode rules.
    pub fn bell(noise: NoiseSpec) -> Self {
        EnvConfig {
            n_qubits: 2,
            target: TargetState::bell(),
            noise,
            fidelity_threshold: DEFAULT_FIDELITY_THRESHOLD,
            max_steps: DEFAULT_MAX_STEPS,
            step_penalty: DEFAULT_STEP_PENALTY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::NoQubits);
        }
        if self.target.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.n_qubits,
                actual: self.target.amplitudes().len(),
            });
        }
        if !(self.fidelity_threshold > 0.0 && self.fidelity_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fidelity threshold {} outside (0, 1]",
                self.fidelity_threshold
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if self.step_penalty.is_nan() || self.step_penalty < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step penalty {} is negative",
                self.step_penalty
            )));
        }
        self.noise.validate()
    }

    pub fn action_space(&self) -> Vec<GateAction> {
        enumerate_actions(self.n_qubits)
    }

    pub fn observation_dim(&self) -> usize {
        3 * self.n_qubits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub fidelity: f64,
    pub steps_taken: usize,
}

/// Completed (or in-progress) circuit and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub actions: Vec<GateAction>,
    pub final_fidelity: f64,
    pub steps: usize,
    pub score: f64,
}

/// Final fidelity minus the per-gate penalty.
pub fn episode_score(final_fidelity: f64, steps: usize, step_penalty: f64) -> f64 {
    final_fidelity - step_penalty * steps as f64
}

#[derive(Debug, Clone)]
pub struct QasEnv {
    config: EnvConfig,
    actions: Vec<GateAction>,
    state: DensityMatrix,
    circuit: Vec<GateAction>,
    fidelity: f64,
    done: bool,
}

impl QasEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let state = initial_state(config.n_qubits)?;
        let fidelity = fidelity(&state, &config.target)?;
        Ok(QasEnv {
            actions: config.action_space(),
            config,
            state,
            circuit: Vec::new(),
            fidelity,
            // an episode only starts on reset
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_space(&self) -> &[GateAction] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn steps_taken(&self) -> usize {
        self.circuit.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn observation(&self) -> Vec<f64> {
        pauli_expectations(&self.state, &self.config.noise)
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.state = initial_state(self.config.n_qubits).expect("validated qubit count");
        self.circuit.clear();
        self.fidelity = fidelity(&self.state, &self.config.target).expect("validated target");
        self.done = false;
        self.observation()
    }

    /// Places the action at `index` in [`QasEnv::action_space`].
    pub fn step(&mut self, index: usize) -> Result<StepResult> {
        let action = *self.actions.get(index).ok_or(Error::ActionOutOfRange {
            index,
            n_actions: self.actions.len(),
        })?;
        self.step_action(&action)
    }

    pub fn step_action(&mut self, action: &GateAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.state = self.state.apply_gate(action, &self.config.noise)?;
        self.circuit.push(*action);
        self.fidelity = fidelity(&self.state, &self.config.target)?;

        let solved = self.fidelity >= self.config.fidelity_threshold;
        let truncated = self.circuit.len() >= self.config.max_steps;
        self.done = solved || truncated;
        let reward = if solved {
            self.fidelity
        } else {
            -self.config.step_penalty
        };
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            fidelity: self.fidelity,
            steps_taken: self.circuit.len(),
        })
    }

    /// Snapshot of the current circuit and its score.
    pub fn record(&self) -> EpisodeRecord {
        EpisodeRecord {
            actions: self.circuit.clone(),
            final_fidelity: self.fidelity,
            steps: self.circuit.len(),
            score: episode_score(self.fidelity, self.circuit.len(), self.config.step_penalty),
        }
    }
}
