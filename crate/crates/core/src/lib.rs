//! Secure SCADA link protection: the AGA draft protocol (with its replay
//! flaw), a counter-based authenticated point-to-point channel, counter
//! synchronization, delayed-key-disclosure broadcast authentication,
//! commitment-based emergency channels, and a deterministic simulator with a
//! scriptable adversary for exercising all of them.

pub mod aga;
pub mod broadcast;
pub mod crypto;
pub mod emergency;
pub mod error;
pub mod p2p;
pub mod report;
pub mod scenario;
pub mod simnet;
pub mod sync;

pub use error::{Error, Result};
