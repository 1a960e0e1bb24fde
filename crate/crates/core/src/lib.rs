pub mod alignment;
pub mod ctqw;
pub mod cv;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod rng;
pub mod selftest;
pub mod spectral;
pub mod svm;

pub use error::{Error, Result};
