//! Discrete grids exposed as continuous periodic signals on `[0,1)ⁿ`.
//!
//! Sample `i` along an axis of resolution `res` sits at `(i + 0.5)/res`.
//! Between samples the signal is multilinear (or nearest-neighbour), and cell
//! indices wrap around so `f(x) = f(x + k)` for every integer vector `k`.

mod io;
pub mod synth;

pub use io::{load_grid, load_image, load_signal, write_grid, write_image, write_signal};

use crate::kernels::KernelSpec;
use crate::{Coord, Error, Result, MAX_DIM};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Interpolation {
    #[default]
    Multilinear,
    Nearest,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "multilinear" => Ok(Interpolation::Multilinear),
            "nearest" => Ok(Interpolation::Nearest),
            other => Err(Error::invalid(format!("unknown interpolation {other:?}"))),
        }
    }
}

/// A regularly sampled, periodic signal with `channels` values per sample.
///
/// Data are stored channel-fastest, then axis 0, axis 1, axis 2.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSignal {
    dim: usize,
    res: [usize; MAX_DIM],
    channels: usize,
    data: Vec<f32>,
    pub interpolation: Interpolation,
    /// Factor by which the stored field extends beyond the normalized domain
    /// (1 for images; SDF grids may carry e.g. 1.2).
    pub extension: f32,
}

impl GridSignal {
    pub fn new(res: &[usize], channels: usize, data: Vec<f32>) -> Result<Self> {
        let dim = res.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid(format!("grid dimension {dim} unsupported")));
        }
        if res.contains(&0) || channels == 0 {
            return Err(Error::invalid("grid resolution and channels must be nonzero"));
        }
        let mut full = [1usize; MAX_DIM];
        full[..dim].copy_from_slice(res);
        let expected = full.iter().product::<usize>() * channels;
        if data.len() != expected {
            return Err(Error::Shape {
                what: "grid data",
                expected,
                actual: data.len(),
            });
        }
        Ok(GridSignal {
            dim,
            res: full,
            channels,
            data,
            interpolation: Interpolation::Multilinear,
            extension: 1.0,
        })
    }

    pub fn zeros(res: &[usize], channels: usize) -> Result<Self> {
        let n: usize = res.iter().product::<usize>() * channels;
        Self::new(res, channels, vec![0.0; n])
    }

    /// Fills a grid by evaluating `f` at every sample position.
    pub fn from_fn(res: &[usize], channels: usize, f: impl Fn(&Coord, &mut [f32])) -> Result<Self> {
        let mut g = Self::zeros(res, channels)?;
        for idx in 0..g.len() {
            let x = g.position(idx);
            let c = g.channels;
            f(&x, &mut g.data[idx * c..(idx + 1) * c]);
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res[..self.dim]
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Number of grid samples (not counting channels).
    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &GridSignal) -> bool {
        self.dim == other.dim && self.res == other.res && self.channels == other.channels
    }

    /// Multi-index of flat sample `idx`.
    pub fn unravel(&self, idx: usize) -> [usize; MAX_DIM] {
        [
            idx % self.res[0],
            (idx / self.res[0]) % self.res[1],
            idx / (self.res[0] * self.res[1]),
        ]
    }

    pub fn ravel(&self, ijk: [usize; MAX_DIM]) -> usize {
        (ijk[2] * self.res[1] + ijk[1]) * self.res[0] + ijk[0]
    }

    /// Continuous coordinate of flat sample `idx` (cell center).
    pub fn position(&self, idx: usize) -> Coord {
        let ijk = self.unravel(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = (ijk[a] as f64 + 0.5) / self.res[a] as f64;
        }
        x
    }

    pub fn value(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    /// Interpolated value at `x`, accumulated into `out` (length `channels`).
    pub fn sample_into(&self, x: &Coord, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let c = self.channels;
        match self.interpolation {
            Interpolation::Nearest => {
                let mut ijk = [0usize; MAX_DIM];
                for a in 0..self.dim {
                    let r = self.res[a] as f64;
                    let t = (x[a] * r - 0.5).round();
                    ijk[a] = t.rem_euclid(r) as usize;
                }
                let base = self.ravel(ijk) * c;
                for (o, &v) in out.iter_mut().zip(&self.data[base..base + c]) {
                    *o = v as f64;
                }
            }
            Interpolation::Multilinear => {
                let mut lo = [0usize; MAX_DIM];
                let mut hi = [0usize; MAX_DIM];
                let mut frac = [0.0f64; MAX_DIM];
                for a in 0..self.dim {
                    let r = self.res[a] as f64;
                    let t = x[a] * r - 0.5;
                    let f = t.floor();
                    frac[a] = t - f;
                    let i0 = f.rem_euclid(r);
                    // rem_euclid may round up to r for tiny negative inputs.
                    let i0 = if i0 >= r { 0 } else { i0 as usize };
                    lo[a] = i0;
                    hi[a] = if i0 + 1 == self.res[a] { 0 } else { i0 + 1 };
                }
                for corner in 0..(1usize << self.dim) {
                    let mut w = 1.0;
                    let mut ijk = [0usize; MAX_DIM];
                    for a in 0..self.dim {
                        if corner >> a & 1 == 1 {
                            w *= frac[a];
                            ijk[a] = hi[a];
                        } else {
                            w *= 1.0 - frac[a];
                            ijk[a] = lo[a];
                        }
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let base = self.ravel(ijk) * c;
                    for (o, &v) in out.iter_mut().zip(&self.data[base..base + c]) {
                        *o += w * v as f64;
                    }
                }
            }
        }
    }

    /// Interpolated value at `x`.
    pub fn sample(&self, x: &[f64]) -> Result<Vec<f64>> {
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
        let mut out = vec![0.0; self.channels];
        self.sample_into(&crate::coord(x), &mut out);
        Ok(out)
    }
}

/// Half-open index box `[lo, hi)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub dim: usize,
    pub lo: [usize; MAX_DIM],
    pub hi: [usize; MAX_DIM],
}

impl Region {
    pub fn full(res: &[usize]) -> Self {
        let mut hi = [1usize; MAX_DIM];
        hi[..res.len()].copy_from_slice(res);
        Region {
            dim: res.len(),
            lo: [0; MAX_DIM],
            hi,
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|a| self.lo[a] >= self.hi[a])
    }

    pub fn contains(&self, ijk: &[usize; MAX_DIM]) -> bool {
        (0..self.dim).all(|a| self.lo[a] <= ijk[a] && ijk[a] < self.hi[a])
    }

    pub fn count(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return f.write_str("empty");
        }
        let parts: Vec<String> = (0..self.dim)
            .map(|a| format!("{}:{}", self.lo[a], self.hi[a]))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Samples whose whole convolution window lies inside the domain.
///
/// The margin per axis is `ceil(res · radius · √λ_max)` where `radius` is the
/// kernel's crop radius in whitened units. Margins that meet or overlap give
/// an empty region.
pub fn valid_region(res: &[usize], spec: &KernelSpec) -> Region {
    let mut region = Region::full(res);
    if spec.is_unfiltered() {
        return region;
    }
    let reach = spec.crop_radius() * spec.cov.max_eigval().sqrt();
    for (a, &r) in res.iter().enumerate() {
        let margin = (r as f64 * reach - 1e-9).ceil().max(0.0);
        let margin = if margin >= r as f64 { r } else { margin as usize };
        region.lo[a] = margin.min(r);
        region.hi[a] = r.saturating_sub(margin);
    }
    region
}
