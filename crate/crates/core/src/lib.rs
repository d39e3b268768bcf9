//! Feature selection with a tree of cooperating actor-critic agents.
//!
//! The pipeline characterizes every feature by a hybrid state (a Gaussian
//! mixture fingerprint of its values plus a semantic embedding of its
//! description), clusters the features into a binary agent hierarchy with
//! Ward linkage, and then lets the agents select or drop feature groups
//! top-down. Rewards combine downstream random-forest performance with a
//! compactness term.
//!
//! Module map:
//!
//! * [`dataset`] loads CSV tables and metadata and produces holdout splits.
//! * [`feature_state`] fits mixtures, fetches and projects embeddings and
//!   assembles per-feature and global states.
//! * [`hierarchy`] builds the Ward agent tree and the activation-count
//!   oracle and simulator.
//! * [`rl`] holds the per-node actor-critic brains and prioritized replay.
//! * [`evaluator`] is the downstream random forest and its metrics.
//! * [`engine`] drives traversal, rewards, both training phases and the run
//!   report.

pub mod dataset;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod feature_state;
pub mod hierarchy;
pub mod rl;
pub mod seed;

pub use error::{Error, Result};
