//! Tiny fixed-size linear algebra for symmetric matrices of order 1 to 3.

use crate::{Coord, MAX_DIM};

/// Row-major 3×3 storage; only the leading `n×n` block is meaningful.
pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

pub const ZERO: Mat = [[0.0; MAX_DIM]; MAX_DIM];

pub fn identity(n: usize) -> Mat {
    let mut m = ZERO;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub fn mat_vec(n: usize, m: &Mat, v: &Coord) -> Coord {
    let mut out = [0.0; MAX_DIM];
    for i in 0..n {
        out[i] = (0..n).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

pub fn mat_mul(n: usize, a: &Mat, b: &Mat) -> Mat {
    let mut out = ZERO;
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(n: usize, a: &Mat) -> Mat {
    let mut out = ZERO;
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// `vᵀ M v`.
pub fn quad_form(n: usize, m: &Mat, v: &Coord) -> f64 {
    let mv = mat_vec(n, m, v);
    (0..n).map(|i| v[i] * mv[i]).sum()
}

/// Frobenius norm of the leading block.
pub fn frobenius(n: usize, m: &Mat) -> f64 {
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| m[i][j] * m[i][j])
        .sum::<f64>()
        .sqrt()
}

/// `Q · diag(d) · Qᵀ`, where the columns of `q` are eigenvectors.
pub fn compose(n: usize, q: &Mat, d: &Coord) -> Mat {
    let mut out = ZERO;
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| q[i][k] * d[k] * q[j][k]).sum();
        }
    }
    out
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns. Stops after 30 sweeps or once the off-diagonal mass is below
/// `1e-14` relative to the matrix norm.
pub fn sym_eigen(n: usize, m: &Mat) -> (Coord, Mat) {
    let mut a = *m;
    let mut v = identity(n);
    let scale = frobenius(n, m).max(f64::MIN_POSITIVE);
    for _sweep in 0..30 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut().take(n) {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let mut vals = [0.0; MAX_DIM];
    let mut vecs = ZERO;
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = a[src][src];
        for k in 0..n {
            vecs[k][dst] = v[k][src];
        }
    }
    (vals, vecs)
}

/// Rotation matrix from a unit quaternion `(w, x, y, z)`.
pub fn quat_to_mat(q: [f64; 4]) -> Mat {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rot2(angle: f64) -> Mat {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_decomposition(n: usize, m: &Mat) {
        let (vals, vecs) = sym_eigen(n, m);
        let back = compose(n, &vecs, &vals);
        let err = frobenius(n, &sub(n, &back, m));
        assert!(err <= 1e-12 * frobenius(n, m).max(1.0), "err {err}");
        let qtq = mat_mul(n, &transpose(n, &vecs), &vecs);
        assert!(frobenius(n, &sub(n, &qtq, &identity(n))) < 1e-12);
        for i in 1..n {
            assert!(vals[i - 1] <= vals[i]);
        }
    }

    fn sub(n: usize, a: &Mat, b: &Mat) -> Mat {
        let mut out = ZERO;
        for i in 0..n {
            for j in 0..n {
                out[i][j] = a[i][j] - b[i][j];
            }
        }
        out
    }

    #[test]
    fn diagonal_is_fixed_point() {
        let m = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 9.0]];
        let (vals, _) = sym_eigen(3, &m);
        assert_eq!(&vals[..3], &[1.0, 4.0, 9.0]);
    }

    #[test]
    fn dense_matrices_decompose() {
        check_decomposition(2, &[[2.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0; 3]]);
        check_decomposition(3, &[[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]]);
        check_decomposition(3, &[[1e-4, 2e-5, 0.0], [2e-5, 3e-2, 1e-3], [0.0, 1e-3, 0.2]]);
        check_decomposition(1, &[[5.0, 0.0, 0.0], [0.0; 3], [0.0; 3]]);
    }

    #[test]
    fn quaternion_gives_rotation() {
        let n = (0.1f64 * 0.1 + 0.2 * 0.2 + 0.3 * 0.3 + 0.9 * 0.9).sqrt();
        let r = quat_to_mat([0.1 / n, 0.2 / n, 0.3 / n, 0.9 / n]);
        let rtr = mat_mul(3, &transpose(3, &r), &r);
        assert!(frobenius(3, &sub(3, &rtr, &identity(3))) < 1e-14);
    }
}
