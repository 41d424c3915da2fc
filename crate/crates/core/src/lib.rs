//! Simulation and inverse design for multi-exposure coherent-population-trapping
//! (CPT) lithography.
//!
//! A substrate of Λ-type atoms is exposed `N` times. Each exposure drives the
//! atoms into a position-dependent dark state with a pair of standing waves and
//! then quenches the non-retained population into a reservoir level. The
//! probability of an atom remaining in `|g1⟩` is the product of the per-step
//! retention profiles, so `N` phase-shifted sinusoidal exposures produce fringes
//! with `N` times the ordinary spatial frequency.
//!
//! Positions are dimensionless throughout: `ζ = k0·z`.
//!
//! * [`fields`]: standing-wave factors, exposure plans and beam realizations.
//! * [`atom`]: Λ-system master equation, steady states and the quench step.
//! * [`pattern`]: 1D/2D state-density profiles (ideal and decoherent).
//! * [`fourier`]: Laurent coefficients of product profiles and truncated
//!   Fourier baselines.
//! * [`fit`]: multi-start Levenberg–Marquardt fitting of plans to targets.
//! * [`targets`]: square and C-shaped targets, CSV sample loading.

pub mod atom;
pub mod error;
pub mod fields;
pub mod fit;
pub mod fourier;
pub mod pattern;
pub mod targets;

pub use error::{Error, Result};
pub use num_complex::Complex64;
