//! Projective measurements described on a list of target registers.

use crate::error::{Error, Result};
use crate::layout::product;
use crate::linalg::{dot, norm_sqr, Matrix};
use crate::scalar::{c_zero, Scalar, C};

/// Largest target space that may be materialized as a dense matrix for validation.
const MATERIALIZE_LIMIT: u128 = 1 << 12;

/// One projector on the joint space of the measured registers.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector<T> {
    /// Arbitrary Hermitian idempotent matrix.
    Dense(Matrix<T>),
    /// Diagonal 0/1 projector in the computational basis.
    Diagonal(Vec<bool>),
    /// `|u><u|` for a unit vector `u`.
    Rank1(Vec<C<T>>),
    /// `|v><v|` with `|v> = D^{-1/2} sum_j phases[j] |j>^{(x)k}` over `k` registers of dimension `D`.
    GhzPhase(Vec<C<T>>),
}

impl<T: Scalar> Projector<T> {
    /// Projector onto a computational basis state of the target space.
    pub fn basis(space: usize, index: usize) -> Self {
        let mut mask = vec![false; space];
        mask[index] = true;
        Projector::Diagonal(mask)
    }

    fn rank(&self) -> u128 {
        match self {
            Projector::Dense(m) => m.trace().re.round().to_u128().unwrap_or(0),
            Projector::Diagonal(mask) => mask.iter().filter(|&&b| b).count() as u128,
            Projector::Rank1(_) | Projector::GhzPhase(_) => 1,
        }
    }

    fn validate(&self, dims: &[usize]) -> Result<()> {
        let space = product(dims.iter().copied());
        let tol = T::tolerance();
        let wrong_len = |len: usize| Error::InvalidProjector(format!("size {len} does not match target space {space}"));
        match self {
            Projector::Dense(m) => {
                if !m.is_square() || m.rows() as u128 != space {
                    return Err(wrong_len(m.rows()));
                }
                if !m.is_hermitian(tol) {
                    return Err(Error::InvalidProjector("matrix is not Hermitian".into()));
                }
                if m.matmul(m).max_abs_diff(m) > tol {
                    return Err(Error::InvalidProjector("matrix is not idempotent".into()));
                }
            }
            Projector::Diagonal(mask) => {
                if mask.len() as u128 != space {
                    return Err(wrong_len(mask.len()));
                }
            }
            Projector::Rank1(u) => {
                if u.len() as u128 != space {
                    return Err(wrong_len(u.len()));
                }
                if (norm_sqr(u) - T::one()).abs() > tol {
                    return Err(Error::InvalidProjector("rank-1 vector is not normalized".into()));
                }
            }
            Projector::GhzPhase(phases) => {
                let d = phases.len();
                if dims.iter().any(|&x| x != d) {
                    return Err(Error::InvalidProjector(format!(
                        "GHZ-phase projector of dimension {d} on registers with dims {dims:?}"
                    )));
                }
                if phases.iter().any(|p| (p.norm() - T::one()).abs() > tol) {
                    return Err(Error::InvalidProjector("GHZ phases must have unit modulus".into()));
                }
            }
        }
        Ok(())
    }

    /// Dense matrix on the target space. Only for small spaces.
    pub fn to_matrix(&self, dims: &[usize]) -> Matrix<T> {
        let space = product(dims.iter().copied()) as usize;
        match self {
            Projector::Dense(m) => m.clone(),
            Projector::Diagonal(mask) => {
                Matrix::diag(&mask.iter().map(|&b| if b { C::new(T::one(), T::zero()) } else { c_zero() }).collect::<Vec<_>>())
            }
            Projector::Rank1(u) => Matrix::outer(u, u),
            Projector::GhzPhase(phases) => {
                let v = ghz_vector(phases, dims.len(), space);
                Matrix::outer(&v, &v)
            }
        }
    }
}

/// Flat index of `|j>^{(x)k}` in a `d^k` space.
pub(crate) fn diagonal_index(j: usize, d: usize, k: usize) -> usize {
    (0..k).fold(0, |acc, _| acc * d + j)
}

fn ghz_vector<T: Scalar>(phases: &[C<T>], k: usize, space: usize) -> Vec<C<T>> {
    let d = phases.len();
    let s = T::one() / T::from_usize_lossy(d).sqrt();
    let mut v = vec![c_zero(); space];
    for (j, &p) in phases.iter().enumerate() {
        v[diagonal_index(j, d, k)] = p * s;
    }
    v
}

fn orthogonal<T: Scalar>(a: &Projector<T>, b: &Projector<T>, dims: &[usize]) -> Result<bool> {
    let tol = T::tolerance();
    let k = dims.len();
    let ok = match (a, b) {
        (Projector::Diagonal(x), Projector::Diagonal(y)) => !x.iter().zip(y).any(|(&p, &q)| p && q),
        (Projector::Rank1(u), Projector::Rank1(v)) => dot(u, v).norm() <= tol,
        (Projector::GhzPhase(p), Projector::GhzPhase(q)) => {
            dot(p, q).norm() / T::from_usize_lossy(p.len()) <= tol
        }
        (Projector::Diagonal(mask), Projector::Rank1(u)) | (Projector::Rank1(u), Projector::Diagonal(mask)) => {
            mask.iter().zip(u).filter(|(&m, _)| m).map(|(_, z)| z.norm_sqr()).sum::<T>() <= tol
        }
        (Projector::Diagonal(mask), Projector::GhzPhase(p)) | (Projector::GhzPhase(p), Projector::Diagonal(mask)) => {
            let d = p.len();
            (0..d).all(|j| !mask[diagonal_index(j, d, k)])
        }
        (Projector::Rank1(u), Projector::GhzPhase(p)) | (Projector::GhzPhase(p), Projector::Rank1(u)) => {
            let d = p.len();
            let s = T::one() / T::from_usize_lossy(d).sqrt();
            let overlap = (0..d).fold(c_zero::<T>(), |acc, j| acc + u[diagonal_index(j, d, k)].conj() * p[j] * s);
            overlap.norm() <= tol
        }
        _ => {
            if product(dims.iter().copied()) > MATERIALIZE_LIMIT {
                return Err(Error::InvalidProjector("target space too large to verify orthogonality".into()));
            }
            a.to_matrix(dims).matmul(&b.to_matrix(dims)).data().iter().all(|z| z.norm() <= tol)
        }
    };
    Ok(ok)
}

/// A validated family of mutually orthogonal projectors, optionally closed by a
/// synthesized remainder `I - sum_k P_k` as the final outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveMeasurement<T> {
    dims: Vec<usize>,
    projectors: Vec<Projector<T>>,
    remainder: bool,
}

impl<T: Scalar> ProjectiveMeasurement<T> {
    /// Requires the projectors to be orthogonal and to sum to the identity.
    pub fn new(dims: Vec<usize>, projectors: Vec<Projector<T>>) -> Result<Self> {
        let (m, deficit) = Self::build(dims, projectors)?;
        if deficit > 0 {
            return Err(Error::IncompleteMeasurement(format!(
                "projectors miss {deficit} dimensions of the target space"
            )));
        }
        Ok(m)
    }

    /// Like [`new`](Self::new), but closes an incomplete family with the remainder projector.
    pub fn with_remainder(dims: Vec<usize>, projectors: Vec<Projector<T>>) -> Result<Self> {
        let (mut m, deficit) = Self::build(dims, projectors)?;
        m.remainder = deficit > 0;
        Ok(m)
    }

    /// Computational-basis measurement of the target registers.
    pub fn computational(dims: Vec<usize>) -> Result<Self> {
        let space = product(dims.iter().copied());
        if space > MATERIALIZE_LIMIT {
            return Err(Error::InvalidProjector("computational measurement space too large".into()));
        }
        let space = space as usize;
        let projectors = (0..space).map(|i| Projector::basis(space, i)).collect();
        Ok(Self { dims, projectors, remainder: false })
    }

    fn build(dims: Vec<usize>, projectors: Vec<Projector<T>>) -> Result<(Self, u128)> {
        if projectors.is_empty() {
            return Err(Error::InvalidProjector("empty projector list".into()));
        }
        if dims.is_empty() {
            return Err(Error::InvalidProjector("no target registers".into()));
        }
        for p in &projectors {
            p.validate(&dims)?;
        }
        for i in 0..projectors.len() {
            for j in (i + 1)..projectors.len() {
                if !orthogonal(&projectors[i], &projectors[j], &dims)? {
                    return Err(Error::InvalidProjector(format!("projectors {i} and {j} are not orthogonal")));
                }
            }
        }
        let space = product(dims.iter().copied());
        let rank: u128 = projectors.iter().map(|p| p.rank()).sum();
        if rank > space {
            return Err(Error::InvalidProjector("total rank exceeds the target space".into()));
        }
        Ok((Self { dims, projectors, remainder: false }, space - rank))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn projectors(&self) -> &[Projector<T>] {
        &self.projectors
    }

    pub fn has_remainder(&self) -> bool {
        self.remainder
    }

    /// Number of outcomes including the remainder.
    pub fn outcome_count(&self) -> usize {
        self.projectors.len() + usize::from(self.remainder)
    }

    /// Index of the remainder outcome, if any.
    pub fn remainder_outcome(&self) -> Option<usize> {
        self.remainder.then_some(self.projectors.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::root_of_unity;
    use num_complex::Complex;

    #[test]
    fn computational_is_complete() {
        let m = ProjectiveMeasurement::<f64>::computational(vec![2, 3]).unwrap();
        assert_eq!(m.outcome_count(), 6);
        assert!(!m.has_remainder());
    }

    #[test]
    fn incomplete_family_is_rejected_without_remainder() {
        let p = vec![Projector::<f64>::basis(2, 0)];
        assert!(matches!(
            ProjectiveMeasurement::new(vec![2], p.clone()),
            Err(Error::IncompleteMeasurement(_))
        ));
        let m = ProjectiveMeasurement::with_remainder(vec![2], p).unwrap();
        assert_eq!(m.remainder_outcome(), Some(1));
    }

    #[test]
    fn overlapping_projectors_rejected() {
        let s = 0.5f64.sqrt();
        let plus = vec![Complex::new(s, 0.0), Complex::new(s, 0.0)];
        let p = vec![Projector::basis(2, 0), Projector::Rank1(plus)];
        assert!(ProjectiveMeasurement::with_remainder(vec![2], p).is_err());
    }

    #[test]
    fn ghz_phase_family_is_orthogonal() {
        let d = 3;
        let proj: Vec<Projector<f64>> =
            (0..d).map(|q| Projector::GhzPhase((0..d).map(|j| root_of_unity((j * q) as i64, d)).collect())).collect();
        let m = ProjectiveMeasurement::with_remainder(vec![3; 4], proj).unwrap();
        assert!(m.has_remainder());
        assert_eq!(m.outcome_count(), 4);
    }

    #[test]
    fn empty_projector_list_rejected() {
        assert!(ProjectiveMeasurement::<f64>::with_remainder(vec![2], vec![]).is_err());
    }
}
