//! Certified inner/outer approximations of rotation sets and δ-pseudo-rotation
//! sets of torus homeomorphisms isotopic to the identity.
//!
//! The crate is organised bottom-up: [`geometry`] (exact rational convex
//! polygons), [`torus`] (lifts `f̃ = id + φ`), [`graph`] (cell-transition
//! graphs and the max-mean-cycle support oracle), [`estimation`] (orbit and
//! measure based estimates), [`perturbation`] (C0 relocation patches and the
//! destabilizing construction) and [`deviations`] (rotational deviation
//! bounds).

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod deviations;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod graph;
pub mod perturbation;
pub mod torus;

pub use error::{Error, Result};
