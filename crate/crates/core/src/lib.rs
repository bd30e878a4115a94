//! Sample-path large deviations for nearest-neighbour random walks on the
//! d-regular tree, the Cayley graph of the free product of `d` copies of Z/2.
//!
//! The crate is organised bottom-up:
//!
//! - [`tree_walk`]: reduced words, step laws, simulation and brute-force
//!   enumeration of n-step paths.
//! - [`distance_chain`]: exact laws of the distance process `l(Y_n)` and of
//!   the coupled biased walk on Z.
//! - [`mgf`]: checkpointed log-moment generating functions and their
//!   large-n extrapolation.
//! - [`legendre`]: grid Fenchel-Legendre conjugates and the closed-form rate
//!   function of the simple walk.
//! - [`ldp_concat`]: the two-checkpoint path concatenation construction.
//! - [`sample_path`]: step and polygonal paths, Lipschitz classes and the
//!   integral rate functional.
//! - [`montecarlo`]: crude and exponentially tilted box-probability
//!   estimators.
//! - [`acceptance`]: the end-to-end verification battery.

pub mod acceptance;
pub mod distance_chain;
mod error;
mod ext;
pub mod grid;
pub mod ldp_concat;
pub mod legendre;
pub mod mgf;
pub mod montecarlo;
mod numeric;
pub mod sample_path;
pub mod tree_walk;

pub use error::{Error, Result};
pub use ext::{format_float, ExtReal};
pub use grid::{BoxSpec, TimeGrid};
pub use tree_walk::{LatticePath, Letter, ReducedWord, StepDistribution};

/// Version string embedded in every output manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
