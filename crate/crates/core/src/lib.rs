//! Quantum architecture search with deep Q-learning and probabilistic
//! policy reuse.
//!
//! An agent places gates one at a time on a simulated noisy register until
//! the state is close enough to a target (the two-qubit Bell state by
//! default). Policies learned in one noise environment are kept in a
//! library and reused to speed up learning in the next one.

pub mod dqn;
pub mod env;
pub mod error;
pub mod experiment;
pub mod neural;
pub mod ppr;
pub mod quantum;

pub use dqn::{DqnAgent, DqnConfig, EpsilonSchedule, ReplayMemory, Transition};
pub use env::{EnvConfig, EpisodeRecord, QasEnv, StepResult};
pub use error::{Error, Result};
pub use experiment::{build_environment, ExperimentConfig, Mode, RunLog, RunRow};
pub use neural::{AdamState, Gradients, QNetwork};
pub use ppr::{ExplorationParams, PolicyLibrary, PprHyper, ReuseStats, RunRng};
pub use quantum::{DensityMatrix, GateAction, GateKind, NoiseSpec, TargetState};
