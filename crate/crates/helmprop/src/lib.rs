//! Hierarchical source-transfer domain decomposition for the 2D Helmholtz equation.

pub mod cli;
pub mod direct_solver;
pub mod error;
pub mod fast_solver;
pub mod medium_grid;
pub mod quadtree;
pub mod source_transfer;
pub mod trace_engine;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
