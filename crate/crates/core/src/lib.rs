//! Desk-scale simulator of variable-strength qubit measurement mediated by a
//! two-level ancilla.
//!
//! The crate models a solid-state register in which a long-lived system qubit
//! (a nuclear spin) is measured through a short-lived ancilla (an electron
//! spin): a tunable entangling interval sets the measurement strength, the
//! ancilla is read out optically, and the record steers the system qubit in
//! real time. Modules cover the state algebra ([`qubit`]), the Kraus-pair
//! measurement and weak values ([`measurement`]), state and process
//! reconstruction ([`tomography`]), the stochastic fluorescence readout with
//! its calibration ([`readout`]), the adaptive two-step feedback protocol
//! ([`feedback`]) and Ramsey-fringe fitting ([`fringe`]).
//!
//! Every stochastic routine takes either a caller-supplied generator or a
//! `(seed, tag)` pair fed through [`stream::derive_rng`], so all results are
//! reproducible bit for bit regardless of thread count.

pub mod constants;
pub mod error;
pub mod feedback;
pub mod fringe;
pub mod measurement;
pub mod qubit;
pub mod readout;
pub mod stats;
pub mod stream;
pub mod tomography;
pub mod verify;

pub use error::{Error, Result};
