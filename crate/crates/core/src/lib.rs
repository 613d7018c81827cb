//! Core library for quantity-aware robust federated aggregation: numeric
//! primitives, baseline and quantity-robust aggregation rules, the attack
//! model, synthetic cohorts, and a deterministic simulation engine.

pub mod adversary;
pub mod aggregators;
pub mod cohort;
pub mod config;
pub mod engine;
pub mod error;
pub mod fedra;
pub mod numkit;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
