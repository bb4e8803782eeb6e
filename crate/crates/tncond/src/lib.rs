//! Conditioning and perturbation-error analysis for dense tensor networks.
//!
//! The crate models a tensor network as a graph of named dense tensors,
//! computes environment matrices and the condition numbers built from them,
//! evaluates worst-case and average-case error bounds for sitewise
//! perturbations, and specializes the machinery to matrix product states
//! (chains) and projected entangled pair states (grids). A small experiment
//! harness reproduces the randomized studies used to compare general and
//! canonical representations.
//!
//! Layer map:
//! - [`tensor`]: dense tensors with named legs, contraction, matricization.
//! - [`spectral`]: largest singular values by Gram-operator power iteration.
//! - [`network`]: the graph model, environments, canonical-form checks.
//! - [`perturb`]: sitewise perturbation sampling and error measurement.
//! - [`conditioning`]: condition numbers, worst-case bound and solver,
//!   average-case predictions.
//! - [`mps`]: chains; canonicalization, transfer-based block norms, bounds,
//!   truncation, and the bound-saturating construction.
//! - [`peps`]: grids; column reduction to chains and grid-level bounds.
//! - [`experiment`]: seeded studies with CSV/SVG reporting.

pub mod conditioning;
pub mod error;
pub mod experiment;
pub mod mps;
pub mod network;
pub mod peps;
pub mod perturb;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
