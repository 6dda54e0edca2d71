//! Gated leaky neural networks (GLNNs), gated networks (GNNs) and classical
//! recurrent networks on symbolic sequences, trained by gradient ascent in
//! invariant Riemannian metrics.
//!
//! The crate is organised bottom-up:
//!
//! - [`seqdata`]: alphabets, symbol sequences, prediction masks, statistics.
//! - [`topology`]: sparse random directed graphs with self-loops.
//! - [`dynamics`]: forward evolution of RNN/GNN/GLNN states and softmax output.
//! - [`backprop`]: backpropagation through time and a finite-difference oracle.
//! - [`metric`]: writing-weight Hessian terms, recurrent unitwise outer
//!   product (RUOP) and recurrent backpropagated (RBPM) metrics, dampened
//!   block solves, quasi-diagonal reductions and the time-unfolding oracle.
//! - [`init`]: initialization in the linearized integrating regime.
//! - [`trainer`]: alternating writing/transition gradient steps with
//!   adaptive learning rates.
//! - [`datagen`]: exact generators for the synthetic benchmark tasks, with
//!   true-model log-likelihood oracles.
//! - [`eval`]: regularized validation scoring, regret, sampling, sweeps.

pub mod backprop;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod init;
pub mod linalg;
pub mod metric;
pub mod seqdata;
pub mod topology;
pub mod trainer;

pub use backprop::{backward, BackwardPass, ParamCoord};
pub use datagen::{GeneratedCorpus, Task, TaskSpec};
pub use dynamics::{forward, Activation, ForwardPass, ModelKind, ModelParams, Runner, Tape};
pub use error::{GlnnError, Result};
pub use eval::{ExperimentManifest, RunResult, SweepResult};
pub use init::{initialize, InitPlan};
pub use metric::MetricKind;
pub use seqdata::{Alphabet, MaskRule, SymbolSequence, SymbolStats};
pub use topology::{Connectivity, NetworkTopology};
pub use trainer::{train, TauRule, TrainState, TrainerConfig, WritingRule};

/// Natural-log to bits conversion factor.
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;
