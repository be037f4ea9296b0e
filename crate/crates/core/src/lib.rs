//! STAR-RIS aided mmWave spectrum sharing.
//!
//! A base station serves `K` secondary users through a simultaneously
//! transmitting and reflecting RIS while keeping its interference at a
//! primary receiver below a budget. The crate synthesizes line-of-sight
//! channels, jointly optimizes the beamformer and the transmit/reflect
//! coefficients by alternating successive convex approximation, evaluates a
//! conventional split-RIS baseline, and runs seeded Monte Carlo campaigns.

pub mod baseline;
pub mod channel;
pub mod config;
pub mod convex;
pub mod error;
pub mod harness;
pub mod sca;
pub mod system_model;

pub use error::{Error, Result};
