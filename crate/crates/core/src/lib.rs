//! Ornstein–Uhlenbeck processes driven by Lévy noise: exact Gaussian laws,
//! simulation, Wasserstein distances and cutoff diagnostics.

pub mod cutoff;
pub mod error;
pub mod format;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod ou;
pub mod rng;
pub mod wasserstein;

pub use error::{Error, Result};
