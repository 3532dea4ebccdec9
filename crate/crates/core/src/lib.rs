//! Sample-efficient dialog policy learning from real, simulated, and
//! hindsight experience, with an adaptive coordinator that decides how much
//! simulated experience to gather per real dialog.
//!
//! The crate is organised bottom-up:
//!
//! - [`ontology`]: slots, goals, goal sampling, and subgoals.
//! - [`env`]: the scripted user, dialog-state tracker, rewards, and state encoding.
//! - [`nn`]: dense networks with analytic gradients and RMSProp/SGD.
//! - [`agent`]: the DQN dialog agent and replay buffers.
//! - [`worldmodel`]: the learned simulated user.
//! - [`hindsight`]: head/tail segmentation and dialog stitching.
//! - [`coordinator`]: the meta-DQN choosing the simulation ratio `k`.
//! - [`harness`]: training loops, ablations, evaluation, metrics, and outputs.

pub mod agent;
pub mod coordinator;
pub mod env;
pub mod error;
pub mod harness;
pub mod hindsight;
pub mod nn;
pub mod ontology;
pub mod seed;
pub mod worldmodel;

pub use error::{Error, Result};
