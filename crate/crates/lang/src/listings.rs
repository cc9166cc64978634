//! Reference programs shipped with the crate.

use crate::sandbox::RewardProgram;

pub const THINKING_STEPS_COUNT: &str = include_str!("../listings/thinking_steps_count.rwd");
pub const STEP_BY_STEP_ACCURACY: &str = include_str!("../listings/step_by_step_accuracy.rwd");
pub const THINKING_HAS_CALC: &str = include_str!("../listings/thinking_has_calc.rwd");

/// (name, source) of every shipped listing.
pub const ALL: &[(&str, &str)] = &[
    ("thinking_steps_count", THINKING_STEPS_COUNT),
    ("step_by_step_accuracy", STEP_BY_STEP_ACCURACY),
    ("thinking_has_calc", THINKING_HAS_CALC),
];

pub fn program(name: &str) -> Option<RewardProgram> {
    ALL.iter()
        .find(|(n, _)| *n == name)
        .map(|(n, src)| RewardProgram::new(*n, *src, "", 0))
}
