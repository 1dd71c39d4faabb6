//! Numerical toolkit for Liouville first passage percolation on `eps Z^d`:
//! log-correlated Gaussian field sampling, exponential vertex-weighted
//! shortest paths, distance-exponent estimation, and the closed-form bound
//! and fixed-point machinery for the fractal dimension.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod exponent;
pub mod fftnd;
pub mod field;
pub mod grid;
pub mod metric;
pub mod stats;
