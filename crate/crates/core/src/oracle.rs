//! Reference values by direct quadrature, independent of the spectral path.
//!
//! Integrals are taken in whitened coordinates `u = Σ^{-1/2}x`, where every
//! kernel is radial with unit covariance:
//!
//! ```text
//! (K_Σ * f)(x) = ∫ k(‖u‖) f(x − Σ^{1/2}u) du
//! ```
//!
//! In one dimension the rule is composite Simpson on `[−R, R]`. Gaussians in
//! 2D/3D use a tensor Simpson rule on the cube `[−R, R]ⁿ`. The compactly
//! supported Box and Lanczos kernels use polar (2D) or spherical (3D)
//! coordinates so their hard edge at `‖u‖ = R` sits on the rule's boundary.

use std::f64::consts::{PI, TAU};

use crate::kernels::{unit_density, KernelFamily, KernelSpec};
use crate::signals::GridSignal;
use crate::special::simpson_rule;
use crate::{exec, Coord, Error, Result, MAX_DIM};

/// Pixels per parallel work item in [`filtered_grid`].
const PIXEL_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Simpson nodes per axis (odd, at least 33).
    pub points: usize,
    /// Node cap per axis for 3D kernels.
    pub points_3d: usize,
    /// Gaussian truncation radius in standard deviations.
    pub gaussian_radius: f64,
    /// Box support radius in whitened units.
    pub box_radius: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            points: 257,
            points_3d: 65,
            gaussian_radius: 5.0,
            box_radius: 1.0,
        }
    }
}

impl QuadratureConfig {
    pub fn with_points(points: usize) -> Self {
        QuadratureConfig {
            points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("points", self.points), ("points_3d", self.points_3d)] {
            if p < 33 || p % 2 == 0 {
                return Err(Error::invalid(format!("quadrature {name} must be odd and >= 33, got {p}")));
            }
        }
        if !(self.gaussian_radius > 0.0 && self.box_radius > 0.0) {
            return Err(Error::invalid("quadrature radii must be positive"));
        }
        Ok(())
    }

    fn radius(&self, spec: &KernelSpec) -> f64 {
        match spec.family {
            KernelFamily::Gaussian => self.gaussian_radius,
            KernelFamily::Box => self.box_radius,
            KernelFamily::Lanczos => spec.lanczos_shape().support,
        }
    }
}

/// Quadrature nodes mapped to spatial offsets, with kernel-weighted weights.
#[derive(Clone, Debug)]
pub struct KernelRule {
    pub offsets: Vec<Coord>,
    pub weights: Vec<f64>,
}

/// Builds the rule approximating `∫ K_Σ(d) g(d) dd ≈ Σ wᵢ g(dᵢ)`.
pub fn kernel_rule(spec: &KernelSpec, quad: &QuadratureConfig) -> Result<KernelRule> {
    quad.validate()?;
    if spec.is_unfiltered() {
        return Err(Error::Unsupported("the zero covariance has no quadrature rule".into()));
    }
    let n = spec.dim();
    let big_r = quad.radius(spec);
    let p = if n == 3 { quad.points_3d.min(quad.points) } else { quad.points };
    // (whitened node, weight, radius)
    let mut nodes: Vec<(Coord, f64, f64)> = Vec::new();
    let (r1, w1) = simpson_rule(-big_r, big_r, p);
    if n == 1 {
        for (&u, &w) in r1.iter().zip(&w1) {
            nodes.push(([u, 0.0, 0.0], w, u.abs()));
        }
    } else if spec.family == KernelFamily::Gaussian {
        for (&a, &wa) in r1.iter().zip(&w1) {
            for (&b, &wb) in r1.iter().zip(&w1) {
                if n == 2 {
                    nodes.push(([a, b, 0.0], wa * wb, a.hypot(b)));
                } else {
                    for (&c, &wc) in r1.iter().zip(&w1) {
                        nodes.push(([a, b, c], wa * wb * wc, (a * a + b * b + c * c).sqrt()));
                    }
                }
            }
        }
    } else {
        let (rs, wr) = simpson_rule(0.0, big_r, p);
        let n_phi = 2 * (p - 1);
        let w_phi = TAU / n_phi as f64;
        let (cs, wc) = simpson_rule(-1.0, 1.0, p);
        for (&r, &w) in rs.iter().zip(&wr) {
            if r == 0.0 {
                continue;
            }
            for k in 0..n_phi {
                let (s, c) = (k as f64 * w_phi).sin_cos();
                if n == 2 {
                    nodes.push(([r * c, r * s, 0.0], w * r * w_phi, r));
                } else {
                    for (&ct, &wt) in cs.iter().zip(&wc) {
                        let st = (1.0 - ct * ct).max(0.0).sqrt();
                        nodes.push(([r * st * c, r * st * s, r * ct], w * r * r * w_phi * wt, r));
                    }
                }
            }
        }
    }
    let mut rule = KernelRule {
        offsets: Vec::with_capacity(nodes.len()),
        weights: Vec::with_capacity(nodes.len()),
    };
    for (u, w, rho) in nodes {
        let k = unit_density(spec, rho);
        if k != 0.0 {
            rule.offsets.push(spec.cov.mul_sqrt(&u));
            rule.weights.push(w * k);
        }
    }
    Ok(rule)
}

impl KernelRule {
    /// `Σ wᵢ f(x − dᵢ)` for every channel.
    pub fn apply(&self, signal: &GridSignal, x: &Coord, out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        out.fill(0.0);
        for (d, &w) in self.offsets.iter().zip(&self.weights) {
            let mut p = *x;
            for k in 0..MAX_DIM {
                p[k] -= d[k];
            }
            signal.sample_into(&p, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += w * v;
            }
        }
    }
}

fn check_dim(signal: &GridSignal, spec: &KernelSpec) -> Result<()> {
    if signal.dim() != spec.dim() {
        return Err(Error::Shape {
            what: "kernel dimension",
            expected: signal.dim(),
            actual: spec.dim(),
        });
    }
    Ok(())
}

/// `(K_Σ * f)(x)` by quadrature; the zero covariance returns `f(x)`.
pub fn filtered_reference(
    signal: &GridSignal,
    spec: &KernelSpec,
    x: &[f64],
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    check_dim(signal, spec)?;
    if spec.is_unfiltered() {
        return signal.sample(x);
    }
    if x.len() != signal.dim() {
        return Err(Error::Shape {
            what: "coordinate",
            expected: signal.dim(),
            actual: x.len(),
        });
    }
    let mut out = vec![0.0; signal.channels()];
    kernel_rule(spec, quad)?.apply(signal, &crate::coord(x), &mut out);
    Ok(out)
}

/// [`filtered_reference`] at every cell center of a grid of resolution `res`.
pub fn filtered_grid(
    signal: &GridSignal,
    spec: &KernelSpec,
    res: &[usize],
    quad: &QuadratureConfig,
) -> Result<GridSignal> {
    check_dim(signal, spec)?;
    let mut grid = GridSignal::zeros(res, signal.channels())?;
    if grid.dim() != signal.dim() {
        return Err(Error::Shape {
            what: "output dimension",
            expected: signal.dim(),
            actual: grid.dim(),
        });
    }
    let rule = if spec.is_unfiltered() {
        None
    } else {
        Some(kernel_rule(spec, quad)?)
    };
    let ch = signal.channels();
    let total = grid.len();
    let positions: Vec<Coord> = (0..total).map(|i| grid.position(i)).collect();
    let blocks = exec::map_indexed(total.div_ceil(PIXEL_CHUNK), |c| {
        let range = c * PIXEL_CHUNK..((c + 1) * PIXEL_CHUNK).min(total);
        let mut vals = vec![0.0; range.len() * ch];
        for (x, out) in positions[range].iter().zip(vals.chunks_exact_mut(ch)) {
            match &rule {
                Some(rule) => rule.apply(signal, x, out),
                None => signal.sample_into(x, out),
            }
        }
        vals
    });
    for (dst, v) in grid.data_mut().iter_mut().zip(blocks.into_iter().flatten()) {
        *dst = v as f32;
    }
    Ok(grid)
}

/// `∫ K_Σ(x) cos(2π bᵀx) dx` over the truncated support.
///
/// # Panics
///
/// If the sine part exceeds `1e-8`, which would mean the rule is not
/// symmetric.
pub fn numeric_spectrum(spec: &KernelSpec, b: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    if b.len() != spec.dim() {
        return Err(Error::Shape {
            what: "frequency vector",
            expected: spec.dim(),
            actual: b.len(),
        });
    }
    let rule = kernel_rule(spec, quad)?;
    let (mut re, mut im) = (0.0, 0.0);
    for (d, &w) in rule.offsets.iter().zip(&rule.weights) {
        let phase = 2.0 * PI * b.iter().zip(d).map(|(b, d)| b * d).sum::<f64>();
        let (s, c) = phase.sin_cos();
        re += w * c;
        im += w * s;
    }
    assert!(im.abs() < 1e-8, "sine part {im} of a symmetric kernel");
    Ok(re)
}
