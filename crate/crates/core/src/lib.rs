//! Finite-strain gradient damage on tetrahedral meshes.
//!
//! The main formulation couples quadratic displacements with linear damage
//! enriched by a volume bubble and enforces irreversibility with an
//! elementwise constant Lagrange multiplier. Bubble and multiplier are
//! condensed out element by element, so the global system only carries the
//! displacement and vertex damage unknowns. A penalty formulation and a plain
//! elastic formulation share the same solver for comparisons.

pub mod element;
pub mod interpolation;
pub mod io;
pub mod material;
pub mod mesh;
pub mod penalty;
pub mod solver;
pub mod verify;
