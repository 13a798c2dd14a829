//! Identification of interval type-2 Takagi-Sugeno fuzzy models from
//! input-output data, and indirect adaptive fuzzy sliding-mode control of a
//! simulated quadrotor built on those models.
//!
//! The pipeline is:
//!
//! 1. [`clustering`] — Gustafson-Kessel fuzzy clustering of the regressor
//!    space, yielding a fuzzy partition with per-cluster norm matrices.
//! 2. [`envelope`] — an envelope-detection algorithm that splits each
//!    cluster's membership projection into upper/lower point sets and fits
//!    Gaussians to them, producing interval membership functions.
//! 3. [`ivfm`] — interval-valued Takagi-Sugeno models: antecedents from the
//!    envelope step, affine consequents from weighted least squares, and
//!    inference by averaging the lower/upper normalized firing strengths.
//! 4. [`quadrotor`] — the twelve-state rigid-body plant, its derived
//!    coefficients, motor mixing, and a fixed-step RK4 integrator.
//! 5. [`controller`] — indirect adaptive fuzzy sliding-mode controllers for
//!    the attitude, altitude, and horizontal-position channels, with
//!    boundary-layer smoothing and projection-bounded parameter adaptation.
//! 6. [`harness`] — experiment orchestration: excitation-data generation,
//!    model identification, closed-loop scenario runs with disturbances,
//!    metrics, comparison reports, and batch sweeps.

pub mod clustering;
pub mod controller;
pub mod envelope;
mod error;
pub mod harness;
pub mod ivfm;
pub mod quadrotor;

pub use error::{Error, Result};
