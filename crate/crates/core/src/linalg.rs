//! Dense complex linear algebra helpers shared by the simulation modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Padé(13) coefficients of the scaling-and-squaring exponential (Higham 2005).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * C64::from(0.5f64.powi(squarings));

    let id = CMatrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| C64::from(PADE13[k]);

    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is singular; input norm is not finite");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Largest elementwise modulus of `m − m†`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = c(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let mut h = m.clone();
    symmetrize(&mut h);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut h = m.clone();
    symmetrize(&mut h);
    let mut values: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Square root of a positive semi-definite matrix with negative eigenvalues clamped
/// to zero. The second element is the total weight removed by clamping.
pub fn psd_sqrt(m: &CMatrix) -> (CMatrix, f64) {
    let (values, vectors) = hermitian_eigen(m);
    let mut clamped = 0.0;
    let roots: Vec<f64> = values
        .iter()
        .map(|&v| {
            if v < 0.0 {
                clamped += -v;
                0.0
            } else {
                v.sqrt()
            }
        })
        .collect();
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| vectors[(i, j)] * roots[j]);
    (&scaled * vectors.adjoint(), clamped)
}

pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Maximum elementwise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal_matches_scalar_exponentials() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.5, 1.0), c(-3.0, 0.2), c(12.0, -7.0)]));
        let e = expm(&d);
        for k in 0..3 {
            let want = d[(k, k)].exp();
            assert!((e[(k, k)] - want).norm() < 1e-10 * want.norm());
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        // exp(θ [[0, -1], [1, 0]]) is a rotation by θ.
        let theta = 2.3;
        let g = CMatrix::from_row_slice(2, 2, &[ZERO, c(-theta, 0.0), c(theta, 0.0), ZERO]);
        let e = expm(&g);
        assert!((e[(0, 0)].re - theta.cos()).abs() < 1e-13);
        assert!((e[(1, 0)].re - theta.sin()).abs() < 1e-13);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        // Nilpotent part plus a scalar: exp(s I + N) = e^s (I + N).
        let s = 20.0;
        let m = CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(3.0, 0.0), ZERO, c(s, 0.0)]);
        let e = expm(&m);
        let es = s.exp();
        assert!((e[(0, 0)].re / es - 1.0).abs() < 1e-11);
        assert!((e[(0, 1)].re / (3.0 * es) - 1.0).abs() < 1e-11);
        assert!(e[(1, 0)].norm() < 1e-6);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let v = CVector::from_vec(vec![c(1.0, 0.5), c(0.0, -1.0), c(2.0, 0.0)]);
        let w = CVector::from_vec(vec![c(0.0, 1.0), c(1.0, 0.0), c(-1.0, 0.3)]);
        let m = outer(&v) * c(0.3, 0.0) + outer(&w) * c(0.7, 0.0);
        let (r, clamped) = psd_sqrt(&m);
        assert!(clamped < 1e-12);
        assert!(max_abs_diff(&(&r * &r), &m) < 1e-10);
    }
}
