//! Dense linear algebra, Gaussian sampling and small statistics helpers.

mod compact;
mod matrix;
mod rng;
pub mod stats;

pub use compact::{LinearOperator, Matrix32};
pub use matrix::{dot, gemm, matmul, matvec, outer, sq_norm, Matrix, Trans, Vector};
pub(crate) use matrix::{axpy_slices, dot_slices};
pub use rng::{job_stream_id, sample_gaussian_matrix, RngStream, StreamKey};
