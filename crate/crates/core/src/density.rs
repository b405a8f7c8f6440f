use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{c_real, Scalar, C};

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    matrix: Matrix<T>,
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        if !matrix.is_hermitian(T::hermitian_tolerance()) {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        if (matrix.trace().re - T::one()).abs() > T::tolerance() {
            return Err(Error::InvalidState(format!("density matrix trace {} != 1", matrix.trace().re)));
        }
        let rho = Self { matrix };
        let min = rho.eigenvalues().first().copied().unwrap_or(T::zero());
        if min < -T::tolerance() {
            return Err(Error::InvalidState(format!("density matrix has negative eigenvalue {min}")));
        }
        Ok(rho)
    }

    /// Skips validation; used for matrices produced by an exact partial trace.
    pub(crate) fn from_trusted(matrix: Matrix<T>) -> Self {
        Self { matrix }
    }

    /// `(1/d) I`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: Matrix::identity(dim).scale(c_real(T::one() / T::from_usize_lossy(dim))) }
    }

    /// `|v><v|` for a unit vector.
    pub fn pure(v: &[C<T>]) -> Result<Self> {
        Self::new(Matrix::outer(v, v))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.matrix.hermitian_eigenvalues()
    }

    /// `(1/2) ||self - other||_1`.
    pub fn trace_distance(&self, other: &Self) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let diff = self.matrix.sub(&other.matrix);
        let sum: T = diff.hermitian_eigenvalues().into_iter().map(|x| x.abs()).sum();
        Ok((sum * T::lit(0.5)).min(T::one()))
    }

    /// Trace distance from `(1/d) I`.
    pub fn distance_from_maximally_mixed(&self) -> T {
        self.trace_distance(&Self::maximally_mixed(self.dim())).expect("same dimension")
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.matrix.max_abs_diff(&other.matrix)
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> T {
        self.matrix.matmul(&self.matrix).trace().re
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn ket(bits: &[f64]) -> Vec<C<f64>> {
        bits.iter().map(|&x| Complex::new(x, 0.0)).collect()
    }

    #[test]
    fn distance_to_itself_is_zero() {
        let r = DensityMatrix::<f64>::maximally_mixed(3);
        assert!(r.trace_distance(&r).unwrap() < 1e-15);
    }

    #[test]
    fn orthogonal_pure_states_are_at_distance_one() {
        let a = DensityMatrix::pure(&ket(&[1.0, 0.0])).unwrap();
        let b = DensityMatrix::pure(&ket(&[0.0, 1.0])).unwrap();
        assert!((a.trace_distance(&b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_vs_pure_qubit_is_one_half() {
        // eigenvalues of |0><0| - I/2 are +-1/2
        let a = DensityMatrix::pure(&ket(&[1.0, 0.0])).unwrap();
        let b = DensityMatrix::<f64>::maximally_mixed(2);
        assert!((a.trace_distance(&b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = DensityMatrix::<f64>::maximally_mixed(2);
        let b = DensityMatrix::<f64>::maximally_mixed(3);
        assert!(a.trace_distance(&b).is_err());
    }

    #[test]
    fn rejects_non_unit_trace() {
        assert!(DensityMatrix::<f64>::new(Matrix::identity(2)).is_err());
    }

    #[test]
    fn rejects_negative_eigenvalue() {
        let m = Matrix::diag(&ket(&[1.5, -0.5]));
        assert!(DensityMatrix::<f64>::new(m).is_err());
    }
}
