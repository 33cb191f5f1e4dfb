//! Intervention-constrained shared autonomy.
//!
//! A copilot observes the environment state together with the pilot's
//! proposed action and decides what is executed. The library provides the
//! environments, simulated pilots, value learners, the four assistance
//! methods, and the evaluation harness used to measure return, intervention
//! rate and success rate.

pub mod checkpoint;
pub mod config;
pub mod copilots;
pub mod env;
pub mod error;
pub mod harness;
pub mod learners;
pub mod logs;
pub mod mdp;
pub mod pilots;
pub mod rng;

pub use error::{Error, ParseError, Result};
