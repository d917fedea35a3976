//! Periodic hip-hop orbits of the equal-mass 2N-body problem.
//!
//! 2N equal masses move at the vertices of an antiprism: two regular N-gons
//! in the planes z = ±d(t), rotating about the z-axis. The crate solves the
//! reduced equations of motion by shooting on the boundary-condition systems
//! that force symmetric periodic orbits, traces solution branches in
//! (a, b, T) space by pseudo-arclength continuation, detects bifurcation
//! points where a second family crosses, switches onto that family, and
//! classifies every solution by its half-period rotation angle: number of
//! distinct trajectories, choreographies, and the double- vs single-symmetry
//! split. An independent full 2N-body integration cross-checks the reduced
//! dynamics.

// validation guards use the `!(x > 0)` form so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod continuation;
pub mod error;
pub mod integrate;
pub mod model;
pub mod shoot;
pub mod verify;

pub use error::{Error, Result};
pub use model::{derived_constants, DerivedConstants, Params, ReducedState};
