//! Ground-truth traffic assignment on disrupted road networks and a
//! meta-learned gated graph convolutional surrogate for it.
//!
//! The crate is organised bottom-up:
//!
//! * [`netio`]: road networks, OD matrices, datasets, TNTP parsing and the
//!   binary dataset format.
//! * [`assign`]: static user-equilibrium assignment (Frank-Wolfe family).
//! * [`scenario`]: closure tasks, OD perturbation, feature tensors and corpus
//!   generation.
//! * [`tensor`]: a small dense reverse-mode autodiff engine.
//! * [`gnn`]: the gated GCN surrogate and its checkpoint format.
//! * [`meta`]: MAML inner/outer loops.
//! * [`eval`]: meta-test protocol, metrics, reports and the self-test suite.

pub mod assign;
mod binfmt;
pub mod config;
pub mod error;
pub mod eval;
pub mod gnn;
pub mod meta;
pub mod netio;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod tensor;

pub use assign::{solve_ue, AssignmentResult, Method, SolverOptions};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use gnn::{GatedGcn, GatedGcnParams, GnnHyper};
pub use meta::{MetaConfig, MetaTrainState};
pub use netio::{ClosureTask, Dataset, Normalization, OdMatrix, RoadNetwork, Sample};
pub use scenario::GenerationConfig;
pub use tensor::{Tape, Tensor, Var};
