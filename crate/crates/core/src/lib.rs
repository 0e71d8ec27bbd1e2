//! Sparse signal recovery from compressive measurements taken with an
//! imprecisely known sensing matrix.
//!
//! The observed matrix is `B = A + V` with the perturbation `V` bounded by δ.
//! Besides basis pursuit, the Dantzig selector and OMP, the crate implements
//! the anti-uncertainty operator
//!
//! ```text
//! minimize t   subject to   ‖y − Bθ‖₂ ≤ √M δ t,   ‖θ‖₁ ≤ t
//! ```
//!
//! on top of a self-contained conic solver, plus a Monte Carlo harness that
//! measures support-recovery errors.

pub mod bench;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod model;
pub mod recovery;
pub mod rng;

pub use error::{Error, Result};
