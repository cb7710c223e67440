//! Simulation library for an optical spin-parity measurement on a pair of
//! coupled quantum dots.
//!
//! The measurement works in two steps: a spin-selective excitation pulse moves
//! the odd-parity computational population into trion levels, and a monitored
//! radiative relaxation period then either yields a photon click (odd outcome)
//! or silence (even outcome). Lossy detectors make the even projection
//! imperfect; repeating the measurement boosts its fidelity.
//!
//! Layers, bottom up:
//!
//! * [`qcore`] — dense complex linear algebra on small labeled Hilbert spaces;
//! * [`models`] — rotating-frame Hamiltonian builders for the ideal system,
//!   hole mixing, and detuned dots;
//! * [`dynamics`] — unitary / Lindblad / conditional master-equation
//!   integrators and seeded quantum-jump trajectories;
//! * [`parity`] — the two-step protocol, closed-form fidelities, and the
//!   repeated-measurement channel;
//! * [`errmodels`] — spatial separation, hole mixing and spectral detuning
//!   error analyses;
//! * [`analysis`] — fidelity averages over the state 3-sphere;
//! * [`verify`] — stabilizer-based verification of the measurement.

pub mod analysis;
pub mod dynamics;
mod error;
pub mod errmodels;
pub mod models;
pub mod parity;
pub mod qcore;
pub mod verify;

pub use error::{Error, Result};

/// ħ in meV·ps; the native time unit of the crate is ħ/meV ≈ 0.658 ps.
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;

/// ħc in meV·nm, used to convert exciton energies to photon wavevectors.
pub const HBARC_MEV_NM: f64 = 197_327.0;
