//! Spin-j open-system simulator: exact Lindblad propagation, stochastic
//! pure-state unravelings and coherent-state diagnostics for su(2).

pub mod coherent_states;
pub mod cli_runner;
pub mod config;
pub mod error;
pub mod exact_evolution;
pub mod lie_algebra;
pub mod state_analysis;
pub mod stochastic_evolution;

pub use error::{Error, Result};
