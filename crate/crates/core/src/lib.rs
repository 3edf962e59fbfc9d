//! Queueing networks whose scheduler sees the queues only through a noisy
//! channel: simulation, stationary analysis and capacity-factor computation.

pub mod capacity;
pub mod channel;
pub mod config;
pub mod error;
pub mod lp;
pub mod markov;
pub mod network;
pub mod policies;
pub mod sim;
pub mod stoch;

pub use channel::{Channel, EpsMajorDecomposition};
pub use error::{Error, Result};
pub use network::{ArrivalRates, QueueState, ScheduleSet, SystemState};
pub use stoch::RowStochastic;
