//! Device constants shared by the experiment defaults.

use std::f64::consts::TAU;

/// Hyperfine coupling between the ancilla and the system qubit, rad/s.
pub const HYPERFINE_COUPLING: f64 = TAU * 2.184e6;

/// Inhomogeneous dephasing time of the ancilla (electron spin), seconds.
pub const ELECTRON_T2_STAR: f64 = 1.35e-6;

/// Inhomogeneous dephasing time of the system qubit (nuclear spin), seconds.
pub const NUCLEAR_T2_STAR: f64 = 7.8e-3;

/// Probability that ancilla initialization prepares the intended level.
pub const INIT_FIDELITY_ANCILLA: f64 = 0.983;

/// Probability that system-qubit initialization prepares the intended state.
pub const INIT_FIDELITY_SYSTEM: f64 = 0.95;

/// Single-shot probability of classifying the bright ancilla level correctly.
pub const READOUT_FIDELITY_BRIGHT: f64 = 0.853;

/// Single-shot probability of classifying the dark ancilla level correctly.
pub const READOUT_FIDELITY_DARK: f64 = 0.986;
