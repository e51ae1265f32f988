//! Symmetric low-pass kernels parameterized by an SPD covariance.
//!
//! Each family is a 1D radial profile evaluated at the Mahalanobis distance
//! `‖x‖_Σ = √(xᵀΣ⁻¹x)`. For every family we provide the analytic frequency
//! response, the normalized spatial density and an importance sampler with
//! density proportional to `|K_Σ|`.

mod covariance;
mod lanczos;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

pub use covariance::{sample_covariance, sqrt_spd, Covariance};
pub use lanczos::{
    build_lanczos_cache, build_lanczos_cache_with, lanczos_normalizer, normalizer as lanczos_mass,
    shared_cache, LanczosSampleCache, LanczosShape, DEFAULT_CACHE_SIZE,
};

use crate::special::{bessel_j1, lanczos_profile, unit_ball_volume};
use crate::{Coord, Error, Result, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelFamily {
    Gaussian,
    Box,
    Lanczos,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [KernelFamily::Gaussian, KernelFamily::Box, KernelFamily::Lanczos];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Box => "box",
            KernelFamily::Lanczos => "lanczos",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(KernelFamily::Gaussian),
            "box" => Ok(KernelFamily::Box),
            "lanczos" => Ok(KernelFamily::Lanczos),
            other => Err(Error::invalid(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// A kernel family together with its covariance (and Lanczos shape).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub cov: Covariance,
    lanczos: LanczosShape,
    lanczos_mass: f64,
}

impl KernelSpec {
    /// Uses the default Lanczos shape (order 2, support `2√2`) when
    /// `family` is Lanczos.
    pub fn new(family: KernelFamily, cov: Covariance) -> Self {
        Self::with_lanczos(family, cov, LanczosShape::default())
    }

    pub fn with_lanczos(family: KernelFamily, cov: Covariance, shape: LanczosShape) -> Self {
        let lanczos_mass = match family {
            KernelFamily::Lanczos => lanczos_mass(&shape, cov.dim()),
            _ => 1.0,
        };
        KernelSpec {
            family,
            cov,
            lanczos: shape,
            lanczos_mass,
        }
    }

    /// The Dirac sentinel: no filtering at all.
    pub fn unfiltered(dim: usize) -> Self {
        Self::new(KernelFamily::Gaussian, Covariance::zero(dim))
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn is_unfiltered(&self) -> bool {
        self.cov.is_zero()
    }

    pub fn lanczos_shape(&self) -> &LanczosShape {
        &self.lanczos
    }

    /// `z_n`, the absolute mass of the truncated unit Lanczos kernel
    /// (1 for the other families).
    pub fn lanczos_mass(&self) -> f64 {
        self.lanczos_mass
    }

    /// Frequency response at `b` assuming `b` is finite.
    pub fn amplitude(&self, b: &Coord) -> f64 {
        if self.cov.is_zero() {
            return 1.0;
        }
        let r = self.cov.quad(b).sqrt();
        radial_spectrum(self.family, self.dim(), r, &self.lanczos, self.lanczos_mass)
    }

    /// Support radius in whitened units used for valid-region cropping:
    /// 3 for Gaussian, 1 for Box, the truncation radius for Lanczos.
    pub fn crop_radius(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => 3.0,
            KernelFamily::Box => 1.0,
            KernelFamily::Lanczos => self.lanczos.support,
        }
    }

    /// Human-readable covariance descriptor, e.g. `s2=0.001` or
    /// `cov=0.2;0.05;0.1`.
    pub fn sigma_desc(&self) -> String {
        let packed = self.cov.to_packed();
        let n = self.dim();
        let iso = (0..n).all(|i| (0..n).all(|j| {
            let v = self.cov.entries()[i][j];
            if i == j {
                v == self.cov.entries()[0][0]
            } else {
                v == 0.0
            }
        }));
        if self.cov.is_zero() {
            "s2=0".to_string()
        } else if iso {
            format!("s2={}", self.cov.entries()[0][0])
        } else {
            let parts: Vec<String> = packed.iter().map(|v| format!("{v}")).collect();
            format!("cov={}", parts.join(";"))
        }
    }
}

/// Frequency response as a function of `r = √(bᵀΣb)`.
fn radial_spectrum(family: KernelFamily, dim: usize, r: f64, shape: &LanczosShape, mass: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => (-2.0 * PI * PI * r * r).exp(),
        KernelFamily::Box => {
            let z = 2.0 * PI * r;
            if dim == 3 && z < 1e-2 {
                // The closed form cancels catastrophically well before r = 1e-6.
                let z2 = z * z;
                return 1.0 - z2 / 10.0 + z2 * z2 / 280.0 - z2 * z2 * z2 / 15_120.0;
            }
            if r < 1e-6 {
                let z2 = z * z;
                return match dim {
                    1 => 1.0 - z2 / 6.0 + z2 * z2 / 120.0,
                    2 => 1.0 - z2 / 8.0 + z2 * z2 / 192.0,
                    _ => 1.0 - z2 / 10.0 + z2 * z2 / 280.0,
                };
            }
            match dim {
                // Γ(3/2)/π^{1/2} · J_{1/2}(z)/r^{1/2}
                1 => z.sin() / z,
                // Γ(2)/π · J_1(z)/r
                2 => 2.0 * bessel_j1(z) / z,
                // Γ(5/2)/π^{3/2} · J_{3/2}(z)/r^{3/2}
                _ => 3.0 * (z.sin() - z * z.cos()) / (z * z * z),
            }
        }
        KernelFamily::Lanczos => {
            let p = shape.order;
            let plateau = 1f64.min(1.0 / p);
            p / mass * ((p + 1.0) / (2.0 * p) - r).min(plateau).max(0.0)
        }
    }
}

/// The kernel's Fourier transform `F{K_Σ}(b)`.
pub fn spectrum(spec: &KernelSpec, b: &[f64]) -> Result<f64> {
    if b.len() != spec.dim() {
        return Err(Error::Shape {
            what: "frequency vector",
            expected: spec.dim(),
            actual: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("frequency vector must be finite"));
    }
    Ok(spec.amplitude(&crate::coord(b)))
}

/// Unit-covariance density as a function of the Mahalanobis radius `rho`.
pub(crate) fn unit_density(spec: &KernelSpec, rho: f64) -> f64 {
    let n = spec.dim();
    match spec.family {
        KernelFamily::Gaussian => (-0.5 * rho * rho).exp() / (2.0 * PI).powf(n as f64 / 2.0),
        KernelFamily::Box => {
            if rho <= 1.0 {
                1.0 / unit_ball_volume(n)
            } else {
                0.0
            }
        }
        KernelFamily::Lanczos => {
            if rho <= spec.lanczos.support {
                lanczos_profile(rho, spec.lanczos.order) / spec.lanczos_mass
            } else {
                0.0
            }
        }
    }
}

/// The normalized spatial kernel `K_Σ(x)`.
pub fn eval_spatial(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    if spec.is_unfiltered() {
        return Err(Error::Unsupported(
            "the zero covariance is a Dirac delta and has no density".into(),
        ));
    }
    if x.len() != spec.dim() {
        return Err(Error::Shape {
            what: "offset",
            expected: spec.dim(),
            actual: x.len(),
        });
    }
    let rho = spec.cov.mahalanobis_sq(&crate::coord(x)).sqrt();
    Ok(unit_density(spec, rho) / spec.cov.det().sqrt())
}

/// Draws an offset with density `p ∝ |K_Σ|` and returns it with the
/// importance weight `K_Σ(offset) / p(offset)`.
pub fn sample_offset<R: Rng + ?Sized>(spec: &KernelSpec, rng: &mut R) -> Result<(Coord, f64)> {
    if spec.is_unfiltered() {
        return Err(Error::Unsupported("cannot sample a Dirac delta".into()));
    }
    let n = spec.dim();
    let mut u = [0.0; MAX_DIM];
    let weight = match spec.family {
        KernelFamily::Gaussian => {
            for c in u.iter_mut().take(n) {
                *c = rng.sample(StandardNormal);
            }
            1.0
        }
        KernelFamily::Box => {
            loop {
                for c in u.iter_mut().take(n) {
                    *c = 2.0 * rng.random::<f64>() - 1.0;
                }
                if u.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                    break;
                }
            }
            1.0
        }
        KernelFamily::Lanczos => {
            let cache = shared_cache(&spec.lanczos, n)?;
            let (v, sign) = cache.draw(rng)?;
            u = v;
            // K/p = (L/z_n) / (|L|/mass) and the cache mass is z_n.
            sign * cache.mass / spec.lanczos_mass
        }
    };
    Ok((spec.cov.mul_sqrt(&u), weight))
}
