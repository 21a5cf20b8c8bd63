//! Simulation of multiplicative stochastic differential equations on the
//! rotation group SO(n).
//!
//! The central scheme is the stochastic tangent-space parametrization
//! (S-TaSP): an Euler step `Z` in so(n) followed by the explicit normal
//! correction `sqrt(I - Z^T Z) - I`, which keeps every iterate exactly on
//! the group without evaluating a matrix exponential. The exponential-map
//! update (SL-EM) and a plain Euclidean Euler-Maruyama step are provided as
//! baselines, together with the analysis tools to measure strong order,
//! distributional correctness and geometry preservation.

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod integrators;
pub mod rng;
pub mod sde_model;
pub mod so_n;
pub mod tolerances;

pub use error::{Error, Result};
pub use so_n::{Mat, Rotation, SkewMatrix, SymMatrix};
pub use tolerances::Tolerances;
