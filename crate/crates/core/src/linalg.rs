//! Small dense complex matrices: just enough linear algebra for qudit operators,
//! density matrices and their spectra.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use rand::Rng;

use crate::scalar::{c_one, c_zero, Scalar, C};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![c_zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c_one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn diag(entries: &[C<T>]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    /// `|v><v|`.
    pub fn outer(v: &[C<T>], w: &[C<T>]) -> Self {
        Self::from_fn(v.len(), w.len(), |r, c| v[r] * w[c].conj())
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

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(self.cols, v.len(), "mul_vec shape");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).fold(c_zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_vec(self.rows, self.cols, self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_vec(self.rows, self.cols, self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&a| a * s).collect())
    }

    /// Kronecker product, `self` on the more significant index.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| self[(r / r2, c / c2)] * other[(r % r2, c % c2)])
    }

    /// Integer power for square matrices (`k = 0` gives the identity).
    pub fn pow(&self, k: usize) -> Self {
        assert!(self.is_square());
        let mut out = Self::identity(self.rows);
        for _ in 0..k {
            out = out.matmul(self);
        }
        out
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).fold(c_zero(), |a, b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(T::zero(), T::max)
    }

    /// `max |(U^dag U - I)_{ij}|`.
    pub fn unitarity_deviation(&self) -> T {
        if !self.is_square() {
            return T::infinity();
        }
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// If every column has exactly one nonzero entry, returns `(row, value)` per column.
    pub fn monomial_columns(&self) -> Option<Vec<(usize, C<T>)>> {
        let mut cols = Vec::with_capacity(self.cols);
        for c in 0..self.cols {
            let mut hit = None;
            for r in 0..self.rows {
                let v = self[(r, c)];
                if v.re != T::zero() || v.im != T::zero() {
                    if hit.is_some() {
                        return None;
                    }
                    hit = Some((r, v));
                }
            }
            cols.push(hit?);
        }
        Some(cols)
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    ///
    /// Uses the real symmetric embedding `[[A, -B], [B, A]]` of `A + iB` and cyclic
    /// Jacobi rotations; every eigenvalue of the embedding appears twice.
    pub fn hermitian_eigenvalues(&self) -> Vec<T> {
        assert!(self.is_square());
        let n = self.rows;
        let m = 2 * n;
        let mut a = vec![T::zero(); m * m];
        for r in 0..n {
            for c in 0..n {
                let z = self[(r, c)];
                a[r * m + c] = z.re;
                a[(r + n) * m + (c + n)] = z.re;
                a[r * m + (c + n)] = -z.im;
                a[(r + n) * m + c] = z.im;
            }
        }
        // symmetrize to remove rounding asymmetry
        for r in 0..m {
            for c in (r + 1)..m {
                let v = (a[r * m + c] + a[c * m + r]) * T::lit(0.5);
                a[r * m + c] = v;
                a[c * m + r] = v;
            }
        }
        jacobi_eigenvalues(&mut a, m);
        let mut ev: Vec<T> = (0..m).map(|i| a[i * m + i]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev.into_iter().step_by(2).collect()
    }

    /// Haar-random unitary via Gram-Schmidt on a complex Gaussian matrix.
    pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let mut cols: Vec<Vec<C<T>>> = Vec::with_capacity(n);
            let mut ok = true;
            for _ in 0..n {
                let mut v: Vec<C<T>> = (0..n).map(|_| Complex::new(gaussian(rng), gaussian(rng))).collect();
                for u in &cols {
                    let p = dot(u, &v);
                    for (x, &y) in v.iter_mut().zip(u) {
                        *x -= y * p;
                    }
                }
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
                if norm < T::lit(1e-6) {
                    ok = false;
                    break;
                }
                v.iter_mut().for_each(|z| *z /= norm);
                cols.push(v);
            }
            if ok {
                return Self::from_fn(n, n, |r, c| cols[c][r]);
            }
        }
    }

    /// A unitary whose first column is the unit vector `v` (Householder-style completion).
    pub fn completing_unitary(v: &[C<T>]) -> Self {
        let n = v.len();
        let mut basis: Vec<Vec<C<T>>> = vec![v.to_vec()];
        for k in 0..n {
            if basis.len() == n {
                break;
            }
            let mut e = vec![c_zero(); n];
            e[k] = c_one();
            for u in &basis {
                let p = dot(u, &e);
                for (x, &y) in e.iter_mut().zip(u) {
                    *x -= y * p;
                }
            }
            let norm = e.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            if norm > T::lit(1e-8) {
                e.iter_mut().for_each(|z| *z /= norm);
                basis.push(e);
            }
        }
        Self::from_fn(n, n, |r, c| basis[c][r])
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// `<u|v>` (conjugate-linear in the first argument).
pub fn dot<T: Scalar>(u: &[C<T>], v: &[C<T>]) -> C<T> {
    u.iter().zip(v).fold(c_zero(), |acc, (a, b)| acc + a.conj() * b)
}

pub fn norm_sqr<T: Scalar>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    // Box-Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    T::lit((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
}

fn jacobi_eigenvalues<T: Scalar>(a: &mut [T], n: usize) {
    let scale = a.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    if scale == T::zero() {
        return;
    }
    let eps = T::epsilon() * scale * T::lit(1e-2);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for r in 0..n {
            for c in (r + 1)..n {
                off = off.max(a[r * n + c].abs());
            }
        }
        if off <= eps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= eps {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = cs * akp - sn * akq;
                    a[k * n + q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = cs * apk - sn * aqk;
                    a[q * n + k] = sn * apk + cs * aqk;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn pauli_y_eigenvalues() {
        let y = Matrix::from_vec(2, 2, vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        let ev = y.hermitian_eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal_matrix() {
        let m = Matrix::diag(&[c(3., 0.), c(-1., 0.), c(0.5, 0.)]);
        let ev = m.hermitian_eigenvalues();
        assert_eq!(ev.len(), 3);
        for (a, b) in ev.iter().zip([-1.0, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..6 {
            let u: Matrix<f64> = Matrix::random_unitary(n, &mut rng);
            assert!(u.is_unitary(1e-12));
        }
    }

    #[test]
    fn completing_unitary_has_given_first_column() {
        let s = 0.5f64.sqrt();
        let v = vec![c(0., s), c(0., 0.), c(s, 0.)];
        let u = Matrix::completing_unitary(&v);
        assert!(u.is_unitary(1e-12));
        for r in 0..3 {
            assert!((u[(r, 0)] - v[r]).norm() < 1e-15);
        }
    }

    #[test]
    fn monomial_detection() {
        let x: Matrix<f64> = Matrix::from_vec(2, 2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        assert_eq!(x.monomial_columns().unwrap().iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 0]);
        let h = Matrix::from_vec(2, 2, vec![c(1., 0.); 4]);
        assert!(h.monomial_columns().is_none());
    }

    #[test]
    fn kron_orders_left_factor_as_most_significant() {
        let x: Matrix<f64> = Matrix::from_vec(2, 2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let i = Matrix::identity(2);
        let xi = x.kron(&i);
        // |00> -> |10>
        assert_eq!(xi[(2, 0)], c(1., 0.));
    }
}
