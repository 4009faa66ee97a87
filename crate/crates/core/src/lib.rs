//! Pilot power allocation for ON/OFF channel estimation in multi-RIS links.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: geometry, unit conversion and large-scale path loss.
//! - [`channel`]: cascaded reflection channel sampling with reproducible RNG streams.
//! - [`estimation`]: the ON/OFF pilot protocol and per-element LS estimates.
//! - [`reflection`]: phase configuration, composite channel and rate.
//! - [`analysis`]: closed-form ergodic gain under imperfect CSI and its
//!   optimisation objective.
//! - [`allocation`]: uniform, closed-form and numerically exact pilot power allocators.
//! - [`montecarlo`]: end-to-end stochastic experiments and user-position sweeps.
//! - [`cli`]: configuration files, commands and CSV/manifest output.

pub mod allocation;
pub mod analysis;
pub mod channel;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod montecarlo;
mod numeric;
pub mod reflection;
pub mod scenario;

pub use error::{Error, Result};
