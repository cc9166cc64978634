//! Core of the reward-search toolkit: synthetic tasks, the slot policy,
//! GRPO training, native rewards, evaluation and statistics.
//!
//! Numeric code is generic over [`Real`]; the aliases below fix it to `f64`,
//! which is what the trial runner and CLI use.

pub mod audit;
pub mod decimal;
pub mod eval;
pub mod grpo;
pub mod policy;
pub mod rewards;
pub mod scalar;
pub mod stats;
pub mod tasks;
pub mod text;
pub mod trial;

pub use decimal::Decimal;
pub use grpo::{GrpoConfig, StepLog};
pub use rewards::{RewardBatch, RewardFault, RewardFn};
pub use scalar::Real;
pub use tasks::{Dataset, Split, Task};
pub use trial::{TrialResult, TrialStatus};

pub type PolicyParams = policy::PolicyParams<f64>;
pub type Rollout = policy::Rollout<f64>;
pub type TrainState = grpo::TrainState<f64>;
pub type Surrogate = grpo::Surrogate<f64>;

pub type PolicyParamsF32 = policy::PolicyParams<f32>;
pub type TrainStateF32 = grpo::TrainState<f32>;
