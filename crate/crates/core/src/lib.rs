//! Tracking a therapy-device tip in 2D intracardiac echo sequences.
//!
//! The crate covers the full loop: rigid-frame geometry and analytic
//! annotation ([`geometry`]), synthetic sequence generation ([`simulator`]),
//! the on-disk dataset and windowing ([`dataset`]), a prior-state-conditioned
//! sequence transformer ([`model`]), its training loop ([`training`]) and
//! autoregressive evaluation ([`evaluation`]).

pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod model;
pub mod simulator;
pub mod training;
