use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Mat};
use crate::{Coord, Error, Result, MAX_DIM};

/// A symmetric positive-definite covariance, or the zero sentinel standing in
/// for a Dirac delta (`Σ = 0`).
///
/// The eigendecomposition, square root and inverse are computed once at
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    dim: usize,
    entries: Mat,
    eigvals: Coord,
    eigvecs: Mat,
    sqrt: Mat,
    inv: Mat,
    det: f64,
    zero: bool,
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::invalid(format!("dimension must be 1, 2 or 3, got {dim}")))
    }
}

impl Covariance {
    /// The Dirac sentinel.
    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Covariance {
            dim,
            entries: linalg::ZERO,
            eigvals: [0.0; MAX_DIM],
            eigvecs: linalg::identity(dim),
            sqrt: linalg::ZERO,
            inv: linalg::ZERO,
            det: 0.0,
            zero: true,
        }
    }

    /// Builds a covariance from `dim × dim` row-major entries. An all-zero
    /// matrix yields the zero sentinel.
    pub fn new(dim: usize, entries: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::Shape {
                what: "covariance entries",
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance entries must be finite"));
        }
        if entries.iter().all(|&v| v == 0.0) {
            return Ok(Self::zero(dim));
        }
        let mut m = linalg::ZERO;
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = entries[i * dim + j];
            }
        }
        let scale = linalg::frobenius(dim, &m);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
                let avg = 0.5 * (m[i][j] + m[j][i]);
                m[i][j] = avg;
                m[j][i] = avg;
            }
        }
        let (vals, vecs) = linalg::sym_eigen(dim, &m);
        Self::assemble(dim, m, vals, vecs)
    }

    /// Packed upper-triangular form: `[v]`, `[xx, xy, yy]` or
    /// `[xx, xy, xz, yy, yz, zz]`.
    pub fn from_packed(dim: usize, packed: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        let expected = dim * (dim + 1) / 2;
        if packed.len() != expected {
            return Err(Error::Shape {
                what: "packed covariance",
                expected,
                actual: packed.len(),
            });
        }
        let mut full = vec![0.0; dim * dim];
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                full[i * dim + j] = packed[k];
                full[j * dim + i] = packed[k];
                k += 1;
            }
        }
        Self::new(dim, &full)
    }

    /// `variance · I`; a zero variance gives the sentinel.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        check_dim(dim)?;
        if variance == 0.0 {
            return Ok(Self::zero(dim));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!("variance must be positive, got {variance}")));
        }
        Self::from_eigen(dim, &[variance; MAX_DIM][..dim], linalg::identity(dim))
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        let dim = variances.len();
        check_dim(dim)?;
        Self::from_eigen(dim, variances, linalg::identity(dim))
    }

    /// `Q · diag(eigvals) · Qᵀ` with orthonormal eigenvector columns `Q`.
    pub fn from_eigen(dim: usize, eigvals: &[f64], eigvecs: Mat) -> Result<Self> {
        check_dim(dim)?;
        if eigvals.len() != dim {
            return Err(Error::Shape {
                what: "eigenvalues",
                expected: dim,
                actual: eigvals.len(),
            });
        }
        let vals = crate::coord(eigvals);
        let m = linalg::compose(dim, &eigvecs, &vals);
        Self::assemble(dim, m, vals, eigvecs)
    }

    fn assemble(dim: usize, entries: Mat, eigvals: Coord, eigvecs: Mat) -> Result<Self> {
        if eigvals[..dim].iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!(
                "covariance is not positive definite (eigenvalues {:?})",
                &eigvals[..dim]
            )));
        }
        let mut sqrt_vals = [0.0; MAX_DIM];
        let mut inv_vals = [0.0; MAX_DIM];
        for k in 0..dim {
            sqrt_vals[k] = eigvals[k].sqrt();
            inv_vals[k] = 1.0 / eigvals[k];
        }
        Ok(Covariance {
            dim,
            entries,
            eigvals,
            eigvecs,
            sqrt: linalg::compose(dim, &eigvecs, &sqrt_vals),
            inv: linalg::compose(dim, &eigvecs, &inv_vals),
            det: eigvals[..dim].iter().product(),
            zero: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals[..self.dim]
    }

    pub fn eigvecs(&self) -> &Mat {
        &self.eigvecs
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn max_eigval(&self) -> f64 {
        self.eigvals().iter().copied().fold(0.0, f64::max)
    }

    /// Packed upper-triangular entries (inverse of [`Covariance::from_packed`]).
    pub fn to_packed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6);
        for i in 0..self.dim {
            for j in i..self.dim {
                out.push(self.entries[i][j]);
            }
        }
        out
    }

    /// `bᵀ Σ b`.
    pub fn quad(&self, b: &Coord) -> f64 {
        if self.zero {
            return 0.0;
        }
        linalg::quad_form(self.dim, &self.entries, b).max(0.0)
    }

    /// Squared Mahalanobis norm `xᵀ Σ⁻¹ x`. Infinite for the zero sentinel
    /// unless `x = 0`.
    pub fn mahalanobis_sq(&self, x: &Coord) -> f64 {
        if self.zero {
            return if x[..self.dim].iter().all(|&v| v == 0.0) {
                0.0
            } else {
                f64::INFINITY
            };
        }
        linalg::quad_form(self.dim, &self.inv, x).max(0.0)
    }

    /// `Σ^{1/2} u`.
    pub fn mul_sqrt(&self, u: &Coord) -> Coord {
        linalg::mat_vec(self.dim, &self.sqrt, u)
    }

    /// `Σ^{1/2}`; `None` for the zero sentinel.
    pub fn sqrt(&self) -> Option<&Mat> {
        (!self.zero).then_some(&self.sqrt)
    }

    /// `R Σ Rᵀ`.
    pub fn rotated(&self, r: &Mat) -> Result<Self> {
        if self.zero {
            return Ok(self.clone());
        }
        let q = linalg::mat_mul(self.dim, r, &self.eigvecs);
        Self::from_eigen(self.dim, self.eigvals(), q)
    }
}

/// `Q · √Λ · Qᵀ` for a strictly positive-definite covariance.
pub fn sqrt_spd(cov: &Covariance) -> Result<Mat> {
    cov.sqrt()
        .copied()
        .ok_or_else(|| Error::invalid("square root of the zero covariance is not defined"))
}

/// Draws a covariance with principal variances log-uniform in `range` and a
/// uniformly random orientation.
pub fn sample_covariance<R: Rng + ?Sized>(
    dim: usize,
    range: (f64, f64),
    rng: &mut R,
) -> Result<Covariance> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::invalid(format!("bad variance range [{lo}, {hi}]")));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut vals = [0.0; MAX_DIM];
    for v in vals.iter_mut().take(dim) {
        let t: f64 = rng.random();
        *v = (llo + (lhi - llo) * t).exp().clamp(lo, hi);
    }
    let rot = match dim {
        1 => linalg::identity(1),
        2 => linalg::rot2(PI * rng.random::<f64>()),
        3 => {
            let mut q = [0.0f64; 4];
            let norm = loop {
                for c in q.iter_mut() {
                    *c = rng.sample(StandardNormal);
                }
                let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break n;
                }
            };
            linalg::quat_to_mat(q.map(|c| c / norm))
        }
        _ => return Err(Error::invalid(format!("dimension {dim} unsupported"))),
    };
    Covariance::from_eigen(dim, &vals[..dim], rot)
}
