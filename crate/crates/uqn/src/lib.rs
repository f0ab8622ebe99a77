//! Discrete-time simulator and optimization engine for QoE-driven video
//! delivery over a multi-UAV relay network.
//!
//! The optimizer decomposes the long-horizon network-control problem with
//! virtual queues into a per-slot auxiliary layer (closed form) and a
//! resource layer (serving-UAV selection, transmit power, trajectories)
//! solved by alternating an exact assignment step with two conic programs
//! built from first-order restrictions. Five benchmark policies and a
//! metrics / experiment harness sit on top.

pub mod assign;
pub mod config;
pub mod conic;
pub mod lyapunov;
pub mod output;
pub mod qoe;
pub mod resource;
pub mod runner;
pub mod scenario;

pub use config::{BitrateUnitMode, ConfigError, WorldConfig};
pub use qoe::{RunSummary, SlotRecord};
pub use runner::{PolicyKind, PolicySpec};
pub use scenario::{Association, SubscriberState, UavState, Vec2};
