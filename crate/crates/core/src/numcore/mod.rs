//! Deterministic numeric substrate: dense matrices, seeded random streams and
//! the two image-space operations used by the scorer.

mod image;
mod mat;
mod rng;

pub use image::{bilinear_upsample, gaussian_blur, gaussian_kernel, reflect_index};
pub use mat::{dot, matmul, matmul_at, matmul_bt, norm, Mat};
pub use rng::RandomStream;
