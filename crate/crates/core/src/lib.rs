//! Multiagent group perception and interaction.
//!
//! A rule-based conversation simulator produces demonstrations, a gated
//! recurrent policy network is fit to them by behavior cloning, and the learned
//! neighbor gate is reused to cluster people into conversational groups.

pub mod error;
pub mod gradcheck;
pub mod groups;
pub mod model;
pub mod nn;
pub mod scene;
pub mod simulator;
pub mod train;

pub use error::{Error, Result};
