//! Sequential sharing of bilocal (network) nonlocality.
//!
//! Two independent sources feed an entanglement-swapping node. After the
//! middle party's joint measurement, chains of observers on both sides
//! measure unsharply and pass their qubit on. This crate simulates that
//! protocol exactly on small density matrices, provides the closed-form
//! BRGP and TGB expressions for the optimal strategies, and solves for
//! critical precisions, round counts and entanglement thresholds.

pub mod analytic;
pub mod error;
pub mod measurements;
pub mod protocol;
pub mod qmath;
pub mod solver;
pub mod states;
pub mod verify;

pub use error::{Error, Result};
