//! Kernel random matrices built from noisy high-dimensional data and the
//! spectral comparison against their noise-free approximants.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod oracle;
pub mod points;
pub mod randsrc;
pub mod rng;
pub mod spectral;

pub use crate::dataset::DataSet;
pub use crate::error::{Error, Result};
pub use crate::linalg::{SpectralSummary, SymMatrix};
pub use crate::points::PointCloud;
