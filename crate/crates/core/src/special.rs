//! Special functions and small quadrature helpers.

use std::f64::consts::PI;

/// Bessel function of the first kind, order one.
///
/// Polynomial approximations split at `|x| = 3` (Abramowitz & Stegun 9.4.4 and
/// 9.4.6); absolute error stays below `5e-8` on the real line.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let y = (x / 3.0) * (x / 3.0);
        x * (0.5
            + y * (-0.562_499_85
                + y * (0.210_935_73
                    + y * (-0.039_542_89
                        + y * (0.004_433_19 + y * (-0.000_317_61 + y * 0.000_011_09))))))
    } else {
        let y = 3.0 / ax;
        let f = 0.797_884_56
            + y * (0.000_001_56
                + y * (0.016_596_67
                    + y * (0.000_171_05
                        + y * (-0.002_495_11 + y * (0.001_136_53 - y * 0.000_200_33)))));
        let theta = ax - 2.356_194_49
            + y * (0.124_996_12
                + y * (0.000_056_50
                    + y * (-0.006_378_79
                        + y * (0.000_743_48 + y * (0.000_798_24 - y * 0.000_291_66)))));
        x.signum() * f * theta.cos() / ax.sqrt()
    }
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - (PI * x) * (PI * x) / 6.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Radial Lanczos profile `sinc(r)·sinc(r/order)`, untruncated.
pub fn lanczos_profile(r: f64, order: f64) -> f64 {
    sinc(r) * sinc(r / order)
}

/// Volume of the unit `n`-ball, `π^{n/2} / Γ(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 / 3.0 * PI,
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Surface area of the unit `(n-1)`-sphere, `2π^{n/2} / Γ(n/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Composite Simpson weights for `points` (odd, ≥ 3) nodes on `[a, b]`.
pub fn simpson_rule(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 3 && points % 2 == 1, "simpson needs an odd node count");
    let h = (b - a) / (points - 1) as f64;
    let nodes = (0..points).map(|i| a + h * i as f64).collect();
    let weights = (0..points)
        .map(|i| {
            let w = if i == 0 || i == points - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// Simpson integral of `f` over `[a, b]` with `points` nodes.
pub fn simpson(a: f64, b: f64, points: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = simpson_rule(a, b, points);
    x.iter().zip(&w).map(|(&x, &w)| w * f(x)).sum()
}
