//! Numerical tools for ferromagnetic wire/film multistructures: shape
//! coefficients of wire cross-sections, the one- and two-dimensional limit
//! energies of wire–film and wire–wire junctions and their minimization over
//! unit-vector fields, and a 3D magnetostatic validator on the thin domains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod limit_wire_film;
pub mod limit_wire_wire;
pub mod magnetostatic3d;
pub mod mesh2d;
pub mod shape_coeffs;
pub mod sparse;
pub mod sphere_field;
pub mod vector;

pub use error::{Error, Result};
