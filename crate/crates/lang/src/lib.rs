//! A small Python-like language for reward programs, with a sandboxed
//! interpreter and a staged validator.

pub mod ast;
pub mod interp;
pub mod lexer;
pub mod listings;
pub mod parser;
pub mod regex;
pub mod sandbox;
pub mod value;

pub use sandbox::{validate, GuardedProgram, Rejection, Report, RewardProgram, SandboxLimits, Stage, Status};
