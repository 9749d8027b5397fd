//! Platoon lane-change simulation with uncertainty-aware constraints and a
//! recurrent soft actor-critic trainer.

pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod sac;
pub mod uncertainty;

pub use error::{Error, Result};
