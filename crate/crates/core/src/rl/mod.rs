//! Per-node actor-critic agents with prioritized experience replay.

pub mod brain;
pub mod net;
pub mod replay;

pub use brain::{ActionMode, AgentBrain, LearnOutcome, LearnParams};
pub use net::{Adam, Head, Loss, PolicyNet};
pub use replay::{Experience, PrioritizedReplay, SampledBatch};

/// Hidden layer widths of every actor and critic.
pub const HIDDEN: [usize; 2] = [64, 8];
