//! Hierarchical, terrain-adaptive locomotion for a planar quadruped.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense networks, Adam and the Gaussian policy head.
//! * [`physics`]: sagittal-plane quadruped with PD joints and penalty contact.
//! * [`terrain`]: procedural height profiles and the 10x10 curriculum grid.
//! * [`env`]: observations, reward, randomization and batched stepping.
//! * [`ppo`]: rollouts, advantage estimation and clipped policy updates.
//! * [`hierarchy`]: the gate that picks one of three frozen gait experts.
//! * [`harness`]: evaluation, checkpoints, result tables and plot data.

pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod numerics;
pub mod physics;
pub mod ppo;
pub mod rng;
pub mod terrain;

pub use error::{Error, Result};
