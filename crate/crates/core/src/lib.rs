//! Leader-follower tracking with noisy relative measurements: topology
//! analysis, gain certificates, the distributed protocol, an Euler–Maruyama
//! simulator and Monte-Carlo ensembles.

pub mod config;
pub mod error;
pub mod experiment;
pub mod format;
pub mod leader;
pub mod protocol;
pub mod sim;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
