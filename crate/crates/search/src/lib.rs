//! Reward search: candidate generation, validation and screening, the ranked
//! pool, and ensemble construction.

pub mod config;
pub mod ensemble;
pub mod generator;
pub mod pool;
pub mod prompt;
pub mod search;

pub use config::{GeneratorKind, HttpSettings, SearchConfig};
pub use ensemble::{select_members, train_ensemble, EnsembleConfig, Selection};
pub use generator::{Candidate, Generator, MockGenerator};
pub use pool::{PoolDir, PoolEntry, RewardPool};
pub use prompt::{build_prompt, Summary};
pub use search::{run_search, SearchEvent, SearchOutcome, SearchRun};
