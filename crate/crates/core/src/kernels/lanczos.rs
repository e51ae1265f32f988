//! Truncated Lanczos kernels: absolute-mass normalizers and the cache of
//! rejection-sampled unit-covariance offsets.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;

use crate::special::{lanczos_profile, simpson, unit_sphere_area};
use crate::{rng, Coord, Error, Result, MAX_DIM};

/// Samples kept per `(order, dim, support)` cache.
pub const DEFAULT_CACHE_SIZE: usize = 65_536;

const CACHE_SEED: u64 = 0x4c41_4e43_5a4f_5321;

/// Order and truncation radius (in whitened units) of a Lanczos kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosShape {
    pub order: f64,
    pub support: f64,
}

impl LanczosShape {
    /// Truncation at the default radius `2·√order`.
    pub fn new(order: f64) -> Result<Self> {
        Self::with_support(order, 2.0 * order.sqrt())
    }

    pub fn with_support(order: f64, support: f64) -> Result<Self> {
        if !(order > 0.0 && order.is_finite()) {
            return Err(Error::invalid(format!("lanczos order must be positive, got {order}")));
        }
        if !(support > 0.0 && support.is_finite()) {
            return Err(Error::invalid(format!("lanczos support must be positive, got {support}")));
        }
        Ok(LanczosShape { order, support })
    }

    fn key(&self, dim: usize) -> (u64, usize, u64) {
        (self.order.to_bits(), dim, self.support.to_bits())
    }
}

impl Default for LanczosShape {
    fn default() -> Self {
        LanczosShape {
            order: 2.0,
            support: 2.0 * std::f64::consts::SQRT_2,
        }
    }
}

/// `S_{n-1} ∫₀^R |sinc(r)·sinc(r/order)| r^{n-1} dr`, the absolute mass of the
/// truncated unit-covariance kernel.
///
/// Integrated piecewise between the zeros of the integrand so every Simpson
/// panel sees a smooth function.
pub fn lanczos_normalizer(order: f64, dim: usize, support: f64) -> f64 {
    let mut breaks = vec![0.0, support];
    let mut k = 1.0;
    while k < support {
        breaks.push(k);
        k += 1.0;
    }
    let mut k = order;
    while k < support {
        breaks.push(k);
        k += order;
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let power = (dim - 1) as i32;
    let integral: f64 = breaks
        .windows(2)
        .map(|w| simpson(w[0], w[1], 4001, |r| lanczos_profile(r, order).abs() * r.powi(power)))
        .sum();
    unit_sphere_area(dim) * integral
}

fn normalizer_memo() -> &'static Mutex<HashMap<(u64, usize, u64), f64>> {
    static MEMO: OnceLock<Mutex<HashMap<(u64, usize, u64), f64>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

/// Memoized [`lanczos_normalizer`].
pub fn normalizer(shape: &LanczosShape, dim: usize) -> f64 {
    let key = shape.key(dim);
    if let Some(&z) = normalizer_memo().lock().unwrap().get(&key) {
        return z;
    }
    let z = lanczos_normalizer(shape.order, dim, shape.support);
    normalizer_memo().lock().unwrap().insert(key, z);
    z
}

/// Unit-covariance offsets drawn from `|L|` over the truncated support, each
/// tagged with the sign of `L` at that offset.
#[derive(Clone, Debug)]
pub struct LanczosSampleCache {
    pub shape: LanczosShape,
    pub dim: usize,
    pub samples: Vec<Coord>,
    pub signs: Vec<f64>,
    /// Absolute mass `z_n` of the truncated kernel.
    pub mass: f64,
}

impl LanczosSampleCache {
    /// Picks one cached `(offset, sign)` uniformly.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Coord, f64)> {
        if self.samples.is_empty() {
            return Err(Error::EmptyCache {
                order: self.shape.order,
                dim: self.dim,
            });
        }
        let i = rng.random_range(0..self.samples.len());
        Ok((self.samples[i], self.signs[i]))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Builds a cache at the default support `2·√order`.
pub fn build_lanczos_cache<R: Rng + ?Sized>(
    order: f64,
    dim: usize,
    count: usize,
    rng: &mut R,
) -> Result<LanczosSampleCache> {
    build_lanczos_cache_with(LanczosShape::new(order)?, dim, count, rng)
}

/// Rejection sampling from `|L(‖u‖)|`: proposals uniform in the support cube,
/// accepted with probability `|L| / max|L|` (`max|L| = 1` at the origin).
pub fn build_lanczos_cache_with<R: Rng + ?Sized>(
    shape: LanczosShape,
    dim: usize,
    count: usize,
    rng: &mut R,
) -> Result<LanczosSampleCache> {
    if count == 0 {
        return Err(Error::invalid("lanczos cache needs at least one sample"));
    }
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::invalid(format!("dimension {dim} unsupported")));
    }
    let radius = shape.support;
    let mut samples = Vec::with_capacity(count);
    let mut signs = Vec::with_capacity(count);
    while samples.len() < count {
        let mut u = [0.0; MAX_DIM];
        for c in u.iter_mut().take(dim) {
            *c = radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        let r = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r > radius {
            continue;
        }
        let l = lanczos_profile(r, shape.order);
        if rng.random::<f64>() < l.abs() {
            samples.push(u);
            signs.push(if l < 0.0 { -1.0 } else { 1.0 });
        }
    }
    Ok(LanczosSampleCache {
        shape,
        dim,
        samples,
        signs,
        mass: normalizer(&shape, dim),
    })
}

type CacheMap = HashMap<(u64, usize, u64), Arc<LanczosSampleCache>>;

fn registry() -> &'static Mutex<CacheMap> {
    static REGISTRY: OnceLock<Mutex<CacheMap>> = OnceLock::new();
    REGISTRY.get_or_init(Default::default)
}

/// The shared cache for `(shape, dim)`, built on first use from a fixed seed.
pub fn shared_cache(shape: &LanczosShape, dim: usize) -> Result<Arc<LanczosSampleCache>> {
    let key = shape.key(dim);
    let mut map = registry().lock().unwrap();
    if let Some(c) = map.get(&key) {
        return Ok(Arc::clone(c));
    }
    let mut r = rng::stream(CACHE_SEED, &[key.0, key.1 as u64, key.2]);
    let cache = Arc::new(build_lanczos_cache_with(*shape, dim, DEFAULT_CACHE_SIZE, &mut r)?);
    map.insert(key, Arc::clone(&cache));
    Ok(cache)
}
