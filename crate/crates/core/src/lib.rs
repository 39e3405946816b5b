//! Switching control between a cheap QUICK policy and an expensive
//! DEEPTHINK policy: exact dynamic-programming solvers, budgeted variants,
//! tabular learners and evaluation harnesses.

pub mod budget;
pub mod cli;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod policies;
pub mod reporting;
pub mod switching;
pub mod trainer;

pub use error::{Error, Result};
