//! Neural fields whose Fourier-feature encoding is modulated by the frequency
//! response of a symmetric low-pass kernel.
//!
//! A model trained once against single-sample Monte Carlo estimates of the
//! filtered signal answers `(K_Σ * f)(x)` in one forward pass, for any
//! covariance `Σ` and for Gaussian, Box and Lanczos kernels alike.
//!
//! Module map:
//!
//! * [`kernels`]: covariances, kernel spectra, spatial densities and samplers.
//! * [`encoding`]: random Fourier features and their filtered variant.
//! * [`model`]: the MLP, reverse-mode gradients, Adam and checkpoints.
//! * [`signals`]: periodic grid signals and PPM/PFM/SPNG I/O.
//! * [`trainer`]: Monte Carlo targets, batches and the training loop.
//! * [`oracle`]: brute-force quadrature references.
//! * [`metrics`]: PSNR, MSE, sign-IoU and evaluation sweeps.

pub mod encoding;
mod error;
pub mod exec;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod signals;
pub mod special;
pub mod trainer;

pub use error::{Error, FormatError, Result};

/// Largest supported domain dimension.
pub const MAX_DIM: usize = 3;

/// A point or offset in up to [`MAX_DIM`] dimensions. Unused trailing
/// components are zero.
pub type Coord = [f64; MAX_DIM];

/// Copies a slice of at most [`MAX_DIM`] components into a [`Coord`].
pub fn coord(v: &[f64]) -> Coord {
    let mut c = [0.0; MAX_DIM];
    c[..v.len()].copy_from_slice(v);
    c
}

/// First eight bytes (little-endian) of the SHA-256 digest of `bytes`.
pub fn checksum64(bytes: &[u8]) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}
