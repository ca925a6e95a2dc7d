//! Simulator and trace verifier for the reduction from two-process
//! crash-tolerant consensus to gathering (and bivalent pattern formation)
//! with one Byzantine robot.
//!
//! Layers, bottom-up: exact [`geometry`], the robot [`model`], the ATOM
//! [`engine`], the shared-memory simulator [`memory`], the [`slot`] object,
//! the [`reduction`] itself, [`analysis`] of its traces, [`formations`], and
//! the [`commands`] behind the CLI.

pub mod algorithms;
pub mod analysis;
pub mod commands;
pub mod engine;
pub mod error;
pub mod formations;
pub mod geometry;
pub mod memory;
pub mod model;
pub mod reduction;
pub mod slot;

pub use error::{Error, Result};
