//! Small dense linear algebra: a row-major matrix and a cyclic Jacobi
//! eigensolver for symmetric matrices. Sizes here are client counts (a few
//! hundred at most), so O(n³) per sweep is fine.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.iter().flatten().copied().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols)));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d = *d + a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Frobenius norm of the strictly off-diagonal part.
    pub fn off_diagonal_norm(&self) -> T {
        let mut s = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    s = s + self[(i, j)] * self[(i, j)];
                }
            }
        }
        s.sqrt()
    }

    /// Checks `|a_ij - a_ji| <= tol * max(1, max|a|)` for all pairs.
    pub fn check_symmetric(&self, tol: T) -> Result<()> {
        if !self.is_square() {
            return Err(Error::ShapeMismatch(format!("expected square matrix, got {}x{}", self.rows, self.cols)));
        }
        let bound = tol * self.max_abs().max(T::one());
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let gap = (self[(i, j)] - self[(j, i)]).abs();
                if !(gap <= bound) {
                    return Err(Error::NotSymmetric { row: i, col: j, gap: gap.as_f64() });
                }
            }
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a symmetric matrix: `values` ascending, `vectors` holds the
/// matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    pub values: Vec<T>,
    pub vectors: Mat<T>,
}

impl<T: Scalar> SymEig<T> {
    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.column(k)
    }

    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> Mat<T> {
        let n = self.values.len();
        Mat::from_fn(n, n, |i, j| (0..n).map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)]).sum())
    }
}

pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps over every `(p, q)` pair, annihilating `a_pq` with a plane rotation,
/// until the off-diagonal Frobenius norm drops below `1e-12 · ‖A‖_F`.
pub fn sym_eig<T: Scalar>(a: &Mat<T>) -> Result<SymEig<T>> {
    let sym_tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    a.check_symmetric(sym_tol)?;
    let n = a.rows();
    let mut a = a.clone();
    // Symmetrize exactly so rotations act on a truly symmetric matrix.
    for i in 0..n {
        for j in i + 1..n {
            let m = (a[(i, j)] + a[(j, i)]) / T::lit(2.0);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = Mat::identity(n);
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
    let scale = a.frobenius().max(T::min_positive_value());

    let mut converged = false;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        if a.off_diagonal_norm() <= tol * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = if theta.abs() > T::lit(1e100).min(T::max_value().sqrt()) {
                    T::one() / (T::lit(2.0) * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        let off = a.off_diagonal_norm();
        if off > tol * scale {
            return Err(Error::EigenNotConverged { sweeps: MAX_JACOBI_SWEEPS, off_norm: off.as_f64() });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// `A ← Jᵀ A J`, `V ← V J` for the rotation `J` acting on the `(p, q)` plane.
fn rotate<T: Scalar>(a: &mut Mat<T>, v: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Squared Euclidean distance, accumulated in `T`.
#[inline]
pub fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gram(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.transpose().matmul(&b).unwrap()
    }

    fn orthonormality_gap(v: &Mat<f64>) -> f64 {
        let vtv = v.transpose().matmul(v).unwrap();
        let n = v.cols();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((vtv[(i, j)] - e).abs());
            }
        }
        worst
    }

    #[test]
    fn diagonal_input_sorts_and_permutes() {
        let a = Mat::from_diag(&[3.0f64, -1.0, 2.0]);
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
        // Each eigenvector is a signed unit basis vector.
        let expected_axis = [1, 2, 0];
        for (k, &axis) in expected_axis.iter().enumerate() {
            for r in 0..3 {
                let want = if r == axis { 1.0 } else { 0.0 };
                assert_eq!(eig.vectors[(r, k)].abs(), want);
            }
        }
    }

    #[test]
    fn analytic_two_by_two() {
        let a = Mat::from_rows(&[vec![2.0f64, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 3.0).abs() < 1e-14);
        let v = eig.vector(1);
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((v[0] - v[1]).abs() < 1e-14);
    }

    #[test]
    fn random_gram_reconstructs() {
        for seed in 0..5 {
            let a = random_gram(20, seed);
            let eig = sym_eig(&a).unwrap();
            let rec = eig.reconstruct();
            let mut diff = a.clone();
            for i in 0..20 {
                for j in 0..20 {
                    diff[(i, j)] = a[(i, j)] - rec[(i, j)];
                }
            }
            assert!(diff.frobenius() / a.frobenius() < 1e-8);
            assert!(orthonormality_gap(&eig.vectors) < 1e-10);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            assert!(eig.values[0] > -1e-10);
        }
    }

    #[test]
    fn works_in_f32() {
        let a = Mat::<f32>::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        let trace: f32 = eig.values.iter().sum();
        assert!((trace - 7.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn rejects_non_square_input() {
        let a = Mat::<f64>::zeros(2, 3);
        assert!(matches!(sym_eig(&a), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn empty_matrix_is_trivially_decomposed() {
        let eig = sym_eig(&Mat::<f64>::zeros(0, 0)).unwrap();
        assert!(eig.values.is_empty());
    }
}
