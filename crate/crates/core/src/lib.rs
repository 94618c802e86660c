//! Multiscale tests for qualitative features of the coefficient density in
//! random coefficient regressions Y = ⟨β, X⟩.

pub mod datagen;
pub mod design_density;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod limit_sim;
pub mod quad;
pub mod seeds;
pub mod special;
pub mod statistics;
pub mod studies;
pub mod testing;

pub use error::{Error, Result};
