//! Band-limited synthetic test signals.

use std::f64::consts::TAU;

use rand::Rng;

use super::GridSignal;
use crate::{rng, Result};

/// `0.5 + Σ_k c_k cos(2π k x + φ_k)` for `k = 1..=harmonics`, sampled at
/// `res` cell centers. Amplitudes fall off as `1/k` and sum to 0.45, so the
/// signal stays inside `[0.05, 0.95]`.
pub fn harmonics_1d(res: usize, harmonics: usize, seed: u64) -> Result<GridSignal> {
    let mut r = rng::stream(seed, &[0x5e7, 1]);
    let mut terms: Vec<(f64, f64, f64)> = (1..=harmonics)
        .map(|k| {
            let c = (0.5 + 0.5 * r.random::<f64>()) / k as f64;
            (k as f64, c, TAU * r.random::<f64>())
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.1).sum();
    for t in &mut terms {
        t.1 *= 0.45 / total;
    }
    GridSignal::from_fn(&[res], 1, |x, v| {
        let s: f64 = terms.iter().map(|&(k, c, p)| c * (TAU * k * x[0] + p).cos()).sum();
        v[0] = (0.5 + s) as f32;
    })
}

/// A periodic image made of `waves` plane waves with random integer
/// wave vectors of length at most `max_freq`, in `[0.05, 0.95]`.
pub fn waves_2d(res: usize, waves: usize, max_freq: i64, seed: u64) -> Result<GridSignal> {
    let mut r = rng::stream(seed, &[0x5e7, 2]);
    let mut terms = Vec::with_capacity(waves);
    while terms.len() < waves {
        let kx = r.random_range(-max_freq..=max_freq);
        let ky = r.random_range(0..=max_freq);
        let len2 = kx * kx + ky * ky;
        if len2 == 0 || len2 > max_freq * max_freq {
            continue;
        }
        let c = (0.5 + 0.5 * r.random::<f64>()) / (len2 as f64).sqrt();
        terms.push((kx as f64, ky as f64, c, TAU * r.random::<f64>()));
    }
    let total: f64 = terms.iter().map(|t| t.2).sum();
    GridSignal::from_fn(&[res, res], 1, |x, v| {
        let s: f64 = terms
            .iter()
            .map(|&(kx, ky, c, p)| c * (TAU * (kx * x[0] + ky * x[1]) + p).cos())
            .sum();
        v[0] = (0.5 + 0.45 * s / total) as f32;
    })
}
