//! Relay-assisted carrier-aggregation (RACA) MIMO uplink toolkit.
//!
//! A UE sends one stream set to the AP on a low band `f_L` and a second set
//! to a frequency-translating amplify-and-forward relay on a high band `f_H`;
//! the relay forwards it to the AP on `f_L`. The crate generates channels,
//! designs precoders and the relay matrix (joint WMMSE or separate SVD with
//! water-filling), evaluates comparison systems and runs Monte Carlo sweeps.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod matops;
pub mod metrics;
pub mod protocol;
pub mod svdwf;
pub mod sysmodel;
pub mod trace;
pub mod wmmse;

pub use error::{Error, Result};
