//! Small dense linear algebra over [`Real`] scalars.
//!
//! Matrices here are tiny (parameter counts and state counts at desk scale),
//! so everything is plain `Vec` storage with one-sided Jacobi SVD, cyclic
//! Jacobi eigendecomposition and Cholesky. Column vectors are passed as
//! `&[Vec<T>]` where that reads more naturally than a matrix.

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
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

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<T>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x))
            .collect()
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.data)
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Returns `None` when a non-positive pivot is met.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off + m[(i, j)] * m[(i, j)];
                }
            }
        }
        let scale = m.max_abs();
        if off.sqrt() <= T::epsilon() * scale * T::lit(1e-2) || scale == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (values, vectors)
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// Left singular vectors (one per column of `A`; zero for null directions).
    pub u: Vec<Vec<T>>,
    /// Singular values, descending.
    pub s: Vec<T>,
    /// Right singular vectors as columns.
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    /// Number of singular values above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: T) -> usize {
        let top = self.s.first().copied().unwrap_or(T::zero());
        self.s.iter().filter(|&&x| x > rel_tol * top).count()
    }
}

/// One-sided (Hestenes) Jacobi SVD of the matrix whose columns are `columns`.
///
/// Accurate to high relative precision for small singular values, which the
/// rank and intersection decisions rely on.
pub fn svd_columns<T: Real>(columns: &[Vec<T>]) -> Svd<T> {
    let n = columns.len();
    let mut a: Vec<Vec<T>> = columns.to_vec();
    let mut v = Matrix::identity(n);
    let tol = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = a.split_at_mut(q);
                for (xp, xq) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (ap, aq) = (*xp, *xq);
                    *xp = c * ap - s * aq;
                    *xq = s * ap + c * aq;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = a.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let s: Vec<T> = order.iter().map(|&i| norms[i]).collect();
    let u = order
        .iter()
        .map(|&i| {
            if norms[i] > T::zero() {
                a[i].iter().map(|&x| x / norms[i]).collect()
            } else {
                vec![T::zero(); a[i].len()]
            }
        })
        .collect();
    let v = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Svd { u, s, v }
}

/// Orthonormal basis of the span of `columns`, keeping directions whose
/// singular value exceeds `rel_tol * s_max`.
pub fn orthonormal_basis<T: Real>(columns: &[Vec<T>], rel_tol: T) -> Vec<Vec<T>> {
    let svd = svd_columns(columns);
    let r = svd.rank(rel_tol);
    svd.u.into_iter().take(r).collect()
}

/// Residual of each column of `basis` after removing its component in the
/// span of the orthonormal set `onto`.
pub fn residual_after_projection<T: Real>(basis: &[Vec<T>], onto: &[Vec<T>]) -> Vec<Vec<T>> {
    basis
        .iter()
        .map(|b| {
            let mut r = b.clone();
            for u in onto {
                let c = dot(u, b);
                for (ri, &ui) in r.iter_mut().zip(u) {
                    *ri = *ri - c * ui;
                }
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[6.0, 6.0, 6.0]);
        for xi in x {
            assert!((xi - 1.0_f64).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0_f64 });
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn eigen_of_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1
        let a = Matrix::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0_f64 });
        let (vals, vecs) = symmetric_eigen(&a);
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        let v0 = vecs.column(0);
        assert!((v0[0].abs() - v0[1].abs()).abs() < 1e-14);
    }

    #[test]
    fn svd_detects_rank_deficiency() {
        let c = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 1.0, 0.0_f64]];
        let svd = svd_columns(&c);
        assert_eq!(svd.rank(1e-10), 2);
        assert!(svd.s[2] < 1e-14);
    }

    #[test]
    fn svd_reconstructs() {
        let c = vec![vec![1.0, 0.5, -0.2], vec![0.3, 2.0, 1.0_f64]];
        let svd = svd_columns(&c);
        // A = U S V^T, check column 1
        for (i, &ci) in c[1].iter().enumerate() {
            let x: f64 = (0..2).map(|k| svd.u[k][i] * svd.s[k] * svd.v[(1, k)]).sum();
            assert!((x - ci).abs() < 1e-14);
        }
    }
}
