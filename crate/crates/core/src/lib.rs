//! Sampling from determinantal point processes over the rows of a tall
//! matrix. Preprocessing touches the matrix roughly in proportion to its
//! nonzero count and produces a compact state; afterwards every sample costs
//! time independent of the number of rows. A brute-force oracle suite
//! certifies the sampled distributions at small sizes.
//!
//! Pipeline: [`preprocess::build_state`] summarizes X into a regularization
//! matrix A, approximate ridge scores l̃, and a proposal table; [`sampler`]
//! runs a rejection scheme whose accepted proposals are downsampled by the
//! exact mixture sampler in [`exact`]; [`oracle`] checks everything against
//! exhaustive enumeration.

pub mod alias;
pub mod error;
pub mod exact;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod parallel;
pub mod poisson;
pub mod preprocess;
pub mod rng;
pub mod sampler;
pub mod state;
pub mod synth;

pub use error::{Error, Result};
pub use exact::DppSubset;
pub use linalg::{RowMatrix, SymMatrix};
pub use preprocess::Mode;
pub use sampler::{sample_dpp, sample_rdpp};
pub use state::PreprocessedState;
