//! Co-simulation of a feedback-linearized planar manipulator with a
//! steady-state Kalman filter, a windowed chi-squared detector, an active
//! gain-scaling defence and a stealthy incremental sensor attacker.

pub mod attacker;
pub mod controller;
pub mod defence;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod noise;
pub mod numkernel;
pub mod robot;
pub mod world;

pub use error::{Error, Result};
