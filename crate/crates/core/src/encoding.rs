//! Random Fourier features and their kernel-modulated variant.
//!
//! Convolving `cos(2π bᵀx)` or `sin(2π bᵀx)` with a symmetric kernel only
//! rescales it by the kernel's (real, even) spectrum at `b`. Scaling every
//! feature pair by that amplitude therefore yields the exact convolution of
//! the embedding with `K_Σ`.

use std::f64::consts::TAU;

use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::kernels::KernelSpec;
use crate::{rng, Coord, Error, Result, MAX_DIM};

/// `m` frequency vectors drawn i.i.d. from `N(0, scale²·I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierBasis {
    dim: usize,
    scale: f64,
    seed: u64,
    freqs: Vec<Coord>,
    checksum: u64,
}

/// Draws a basis deterministically from `(seed, dim, count, scale)`.
pub fn init_basis(dim: usize, count: usize, scale: f64, seed: u64) -> Result<FourierBasis> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::invalid(format!("dimension {dim} unsupported")));
    }
    if count == 0 {
        return Err(Error::invalid("fourier basis needs at least one frequency"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("basis scale must be positive, got {scale}")));
    }
    let mut r = rng::stream(seed, &[0x0b45_1500, dim as u64]);
    let freqs: Vec<Coord> = (0..count)
        .map(|_| {
            let mut b = [0.0; MAX_DIM];
            for c in b.iter_mut().take(dim) {
                let z: f64 = StandardNormal.sample(&mut r);
                *c = scale * z;
            }
            b
        })
        .collect();
    let checksum = freq_checksum(dim, &freqs);
    Ok(FourierBasis {
        dim,
        scale,
        seed,
        freqs,
        checksum,
    })
}

fn freq_checksum(dim: usize, freqs: &[Coord]) -> u64 {
    let bytes: Vec<u8> = freqs
        .iter()
        .flat_map(|b| b[..dim].iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    crate::checksum64(&bytes)
}

impl FourierBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of frequencies `m`.
    pub fn count(&self) -> usize {
        self.freqs.len()
    }

    /// Embedding length `2m`.
    pub fn embed_len(&self) -> usize {
        2 * self.freqs.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn freqs(&self) -> &[Coord] {
        &self.freqs
    }

    /// Checksum of the realized frequencies.
    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    /// Spectrum of `spec` at every basis frequency.
    pub fn amplitudes(&self, spec: &KernelSpec) -> Vec<f64> {
        self.freqs.iter().map(|b| spec.amplitude(b)).collect()
    }

    /// Writes `[a_i cos(2π b_iᵀx), a_i sin(2π b_iᵀx)]` into `out`; `a_i = 1`
    /// when `amps` is `None`.
    pub fn embed_into<T: Float>(&self, x: &Coord, amps: Option<&[f64]>, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.embed_len());
        for (i, (b, pair)) in self.freqs.iter().zip(out.chunks_exact_mut(2)).enumerate() {
            let phase = TAU * (0..self.dim).map(|k| b[k] * x[k]).sum::<f64>();
            let (s, c) = phase.sin_cos();
            let a = amps.map_or(1.0, |a| a[i]);
            pair[0] = T::from(a * c).unwrap();
            pair[1] = T::from(a * s).unwrap();
        }
    }

    /// Plain (unfiltered) embedding of `x`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = self.check_point(x)?;
        let mut out = vec![0.0; self.embed_len()];
        self.embed_into(&x, None, &mut out);
        Ok(out)
    }

    /// Embedding of `x` convolved with `spec`.
    pub fn embed_filtered(&self, x: &[f64], spec: &KernelSpec) -> Result<Vec<f64>> {
        let x = self.check_point(x)?;
        if spec.dim() != self.dim {
            return Err(Error::Shape {
                what: "kernel dimension",
                expected: self.dim,
                actual: spec.dim(),
            });
        }
        let amps = self.amplitudes(spec);
        let mut out = vec![0.0; self.embed_len()];
        self.embed_into(&x, Some(&amps), &mut out);
        Ok(out)
    }

    fn check_point(&self, x: &[f64]) -> Result<Coord> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                what: "coordinate",
                expected: self.dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coordinate must be finite"));
        }
        Ok(crate::coord(x))
    }
}
