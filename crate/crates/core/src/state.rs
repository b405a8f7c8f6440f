//! Dense state vectors: the exact oracle backend.

use crate::backend::QuantumState;
use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::layout::{RegisterLayout, Subspace};
use crate::linalg::{dot, norm_sqr, Matrix};
use crate::measurement::{diagonal_index, Projector, ProjectiveMeasurement};
use crate::scalar::{c_one, c_real, c_zero, is_finite, Scalar, C};

/// Full tensor-product state vector over a [`RegisterLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState<T> {
    layout: RegisterLayout,
    amps: Vec<C<T>>,
}

impl<T: Scalar> DenseState<T> {
    /// Validates length, finiteness and normalization.
    pub fn new(layout: RegisterLayout, amps: Vec<C<T>>) -> Result<Self> {
        let size = layout.dense_size()?;
        if amps.len() != size {
            return Err(Error::DimensionMismatch { expected: size, found: amps.len() });
        }
        if !amps.iter().all(|&z| is_finite(z)) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let n = norm_sqr(&amps);
        if (n - T::one()).abs() > T::tolerance() {
            return Err(Error::InvalidState(format!("state norm^2 {n} != 1")));
        }
        Ok(Self { layout, amps })
    }

    pub(crate) fn raw(layout: RegisterLayout, amps: Vec<C<T>>) -> Self {
        Self { layout, amps }
    }

    /// Computational basis state with the given per-register digits.
    pub fn basis(layout: RegisterLayout, digits: &[usize]) -> Result<Self> {
        let size = layout.dense_size()?;
        if digits.len() != layout.len() || digits.iter().zip(layout.dims()).any(|(&x, &d)| x >= d) {
            return Err(Error::InvalidState(format!("basis digits {digits:?} invalid for {:?}", layout.dims())));
        }
        let mut amps = vec![c_zero(); size];
        amps[layout.index_of(digits)] = c_one();
        Ok(Self { layout, amps })
    }

    /// Tensor product of single-register states.
    pub fn product(factors: &[Vec<C<T>>]) -> Result<Self> {
        let layout = RegisterLayout::new(factors.iter().map(|f| f.len()).collect())?;
        layout.dense_size()?;
        let mut amps = vec![c_one()];
        for f in factors {
            amps = amps.iter().flat_map(|&a| f.iter().map(move |&b| a * b)).collect();
        }
        Self::new(layout, amps)
    }

    /// `(1/sqrt(D)) sum_j |j>^{(x)N}`.
    pub fn uniform_ghz(dim: usize, registers: usize) -> Result<Self> {
        if registers == 0 {
            return Err(Error::InvalidDimension("GHZ state needs at least one register".into()));
        }
        let layout = RegisterLayout::uniform(dim, registers)?;
        let size = layout.dense_size()?;
        let mut amps = vec![c_zero(); size];
        let a = c_real(T::one() / T::from_usize_lossy(dim).sqrt());
        for j in 0..dim {
            amps[diagonal_index(j, dim, registers)] = a;
        }
        Ok(Self { layout, amps })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amps(&self) -> &[C<T>] {
        &self.amps
    }

    pub fn amplitude(&self, digits: &[usize]) -> C<T> {
        self.amps[self.layout.index_of(digits)]
    }

    /// `<self|other>`.
    pub fn inner_product(&self, other: &Self) -> Result<C<T>> {
        if self.layout != other.layout {
            return Err(Error::InvalidState("inner product of states with different layouts".into()));
        }
        Ok(dot(&self.amps, &other.amps))
    }

    /// `|self> (x) |other>`.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout);
        layout.dense_size()?;
        let amps = self.amps.iter().flat_map(|&a| other.amps.iter().map(move |&b| a * b)).collect();
        Ok(Self { layout, amps })
    }

    /// Partial trace keeping `keep` (in the given order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix<T>> {
        Ok(DensityMatrix::from_trusted(reduced_operator(&self.layout, &self.amps, &self.amps, keep)?))
    }

    /// Maximum amplitude difference after aligning global phases: each state is
    /// rotated so that its largest-magnitude amplitude is real and positive.
    pub fn max_deviation_up_to_phase(&self, other: &Self) -> Result<T> {
        if self.layout != other.layout {
            return Err(Error::InvalidState("comparing states with different layouts".into()));
        }
        let a = phase_aligned(&self.amps);
        let b = phase_aligned(&other.amps);
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(T::zero(), T::max))
    }

    /// `1 - |<self|other>|`, zero iff equal up to global phase.
    pub fn infidelity(&self, other: &Self) -> Result<T> {
        Ok(T::one() - self.inner_product(other)?.norm())
    }

    fn renormalized(mut self) -> Self {
        let n = norm_sqr(&self.amps).sqrt();
        if n > T::zero() {
            self.amps.iter_mut().for_each(|z| *z /= n);
        }
        self
    }

    fn check_operator(&self, registers: &[usize], op: &Matrix<T>, require_unitary: bool) -> Result<()> {
        self.layout.check_targets(registers)?;
        let space: usize = registers.iter().map(|&r| self.layout.dim(r)).product();
        if !op.is_square() || op.rows() != space {
            return Err(Error::DimensionMismatch { expected: space, found: op.rows() });
        }
        if require_unitary {
            let dev = op.unitarity_deviation();
            if dev > T::tolerance() {
                return Err(Error::NotUnitary { deviation: dev.to_f64_lossy() });
            }
        }
        Ok(())
    }
}

/// Rotates a vector so its largest-magnitude entry is real positive.
pub(crate) fn phase_aligned<T: Scalar>(v: &[C<T>]) -> Vec<C<T>> {
    let pivot = v
        .iter()
        .copied()
        .fold(c_zero::<T>(), |best, z| if z.norm() > best.norm() + T::lit(1e-13) { z } else { best });
    if pivot.norm() == T::zero() {
        return v.to_vec();
    }
    let phase = pivot.conj() / pivot.norm();
    v.iter().map(|&z| z * phase).collect()
}

/// `Tr_{not keep} |a><b|` for two vectors on the same layout.
pub(crate) fn reduced_operator<T: Scalar>(
    layout: &RegisterLayout,
    a: &[C<T>],
    b: &[C<T>],
    keep: &[usize],
) -> Result<Matrix<T>> {
    layout.check_targets(keep)?;
    let sub = Subspace::new(layout, keep);
    let k = sub.offsets.len();
    if k > crate::branch::DENSITY_BUDGET {
        return Err(Error::BudgetExceeded { requested: k as u128, limit: crate::branch::DENSITY_BUDGET });
    }
    let mut m = Matrix::zeros(k, k);
    for &base in &sub.bases {
        for (i, &oi) in sub.offsets.iter().enumerate() {
            let ai = a[base + oi];
            if ai.re == T::zero() && ai.im == T::zero() {
                continue;
            }
            for (j, &oj) in sub.offsets.iter().enumerate() {
                m[(i, j)] += ai * b[base + oj].conj();
            }
        }
    }
    Ok(m)
}

/// Applies `op` to `targets` of a flat vector (no validation).
pub(crate) fn apply_operator<T: Scalar>(layout: &RegisterLayout, amps: &[C<T>], targets: &[usize], op: &Matrix<T>) -> Vec<C<T>> {
    let sub = Subspace::new(layout, targets);
    let mut out = vec![c_zero(); amps.len()];
    if let Some(cols) = op.monomial_columns() {
        for &base in &sub.bases {
            for (c, &(r, v)) in cols.iter().enumerate() {
                out[base + sub.offsets[r]] += v * amps[base + sub.offsets[c]];
            }
        }
        return out;
    }
    let k = sub.offsets.len();
    let mut gathered = vec![c_zero(); k];
    for &base in &sub.bases {
        for (g, &o) in gathered.iter_mut().zip(&sub.offsets) {
            *g = amps[base + o];
        }
        for r in 0..k {
            let row = op.row(r);
            let mut acc = c_zero();
            for (x, y) in row.iter().zip(&gathered) {
                acc += x * y;
            }
            out[base + sub.offsets[r]] = acc;
        }
    }
    out
}

/// Unnormalized projection of a flat vector.
pub(crate) fn apply_projector<T: Scalar>(
    layout: &RegisterLayout,
    amps: &[C<T>],
    targets: &[usize],
    projector: &Projector<T>,
) -> Vec<C<T>> {
    match projector {
        Projector::Dense(m) => apply_operator(layout, amps, targets, m),
        Projector::Diagonal(mask) => {
            let sub = Subspace::new(layout, targets);
            let mut out = vec![c_zero(); amps.len()];
            for &base in &sub.bases {
                for (s, &o) in sub.offsets.iter().enumerate() {
                    if mask[s] {
                        out[base + o] = amps[base + o];
                    }
                }
            }
            out
        }
        Projector::Rank1(u) => {
            let sub = Subspace::new(layout, targets);
            let mut out = vec![c_zero(); amps.len()];
            for &base in &sub.bases {
                let a = sub.offsets.iter().zip(u).fold(c_zero::<T>(), |acc, (&o, us)| acc + us.conj() * amps[base + o]);
                for (&o, &us) in sub.offsets.iter().zip(u) {
                    out[base + o] = a * us;
                }
            }
            out
        }
        Projector::GhzPhase(phases) => {
            let d = phases.len();
            let strides = layout.strides();
            let diag_stride: usize = targets.iter().map(|&t| strides[t]).sum();
            let s = T::one() / T::from_usize_lossy(d).sqrt();
            let mut out = vec![c_zero(); amps.len()];
            // every flat index whose target digits are all zero
            let rest = Subspace::new(layout, targets);
            for &o in &rest.bases {
                let a = (0..d).fold(c_zero::<T>(), |acc, j| acc + phases[j].conj() * s * amps[o + j * diag_stride]);
                for (j, &p) in phases.iter().enumerate() {
                    out[o + j * diag_stride] = a * p * s;
                }
            }
            out
        }
    }
}

impl<T: Scalar> QuantumState<T> for DenseState<T> {
    fn ghz(dim: usize, registers: usize) -> Result<Self> {
        Self::uniform_ghz(dim, registers)
    }

    fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    fn apply_local(&self, register: usize, op: &Matrix<T>) -> Result<Self> {
        self.apply_joint(&[register], op)
    }

    fn apply_joint(&self, registers: &[usize], op: &Matrix<T>) -> Result<Self> {
        self.check_operator(registers, op, true)?;
        let amps = apply_operator(&self.layout, &self.amps, registers, op);
        Ok(Self { layout: self.layout.clone(), amps }.renormalized())
    }

    fn swap_registers(&self, a: usize, b: usize) -> Result<Self> {
        self.layout.check_targets(&[a, b])?;
        if self.layout.dim(a) != self.layout.dim(b) {
            return Err(Error::DimensionMismatch { expected: self.layout.dim(a), found: self.layout.dim(b) });
        }
        let mut amps = vec![c_zero(); self.amps.len()];
        for (i, &z) in self.amps.iter().enumerate() {
            let mut digits = self.layout.digits(i);
            digits.swap(a, b);
            amps[self.layout.index_of(&digits)] = z;
        }
        Ok(Self { layout: self.layout.clone(), amps })
    }

    fn attach(&self, dim: usize, amps: &[C<T>]) -> Result<Self> {
        let factor = Self::new(RegisterLayout::new(vec![dim])?, amps.to_vec())?;
        self.tensor(&factor)
    }

    fn detach(&self, register: usize, label: usize) -> Result<Self> {
        self.layout.check_register(register)?;
        let d = self.layout.dim(register);
        if label >= d {
            return Err(Error::InvalidState(format!("label {label} >= dimension {d}")));
        }
        let layout = self.layout.without(register);
        let mut amps = vec![c_zero(); self.amps.len() / d];
        let mut leaked = T::zero();
        for (i, &z) in self.amps.iter().enumerate() {
            let mut digits = self.layout.digits(i);
            let x = digits.remove(register);
            if x == label {
                amps[layout.index_of(&digits)] = z;
            } else {
                leaked += z.norm_sqr();
            }
        }
        if leaked > T::tolerance() {
            return Err(Error::NotProduct(register));
        }
        Ok(Self { layout, amps }.renormalized())
    }

    fn project(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>, outcome: usize) -> Result<Self> {
        let amps = if Some(outcome) == meas.remainder_outcome() {
            let mut rest = self.amps.clone();
            for p in meas.projectors() {
                let part = apply_projector(&self.layout, &self.amps, registers, p);
                rest.iter_mut().zip(part).for_each(|(r, x)| *r -= x);
            }
            rest
        } else {
            apply_projector(&self.layout, &self.amps, registers, &meas.projectors()[outcome])
        };
        Ok(Self { layout: self.layout.clone(), amps })
    }

    fn norm_sqr(&self) -> T {
        norm_sqr(&self.amps)
    }

    fn rescale(&self, factor: T) -> Self {
        Self { layout: self.layout.clone(), amps: self.amps.iter().map(|&z| z * factor).collect() }
    }

    fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix<T>> {
        self.partial_trace(keep)
    }

    fn to_dense(&self) -> Result<DenseState<T>> {
        Ok(self.clone())
    }
}

/// Operators shared by the protocols.
pub mod ops {
    use super::*;
    use crate::scalar::{cis, root_of_unity};

    /// `E+^k |j> = |j + k mod d>`.
    pub fn shift<T: Scalar>(d: usize, k: i64) -> Matrix<T> {
        let k = k.rem_euclid(d as i64) as usize;
        let mut m = Matrix::zeros(d, d);
        for j in 0..d {
            m[((j + k) % d, j)] = c_one();
        }
        m
    }

    /// `F^k = sum_j e^{2 pi i j k / d} |j><j|`.
    pub fn clock<T: Scalar>(d: usize, k: i64) -> Matrix<T> {
        Matrix::diag(&(0..d).map(|j| root_of_unity(j as i64 * k, d)).collect::<Vec<_>>())
    }

    /// `sum_j e^{i j theta} |j><j|`.
    pub fn phase_ramp<T: Scalar>(d: usize, theta: T) -> Matrix<T> {
        Matrix::diag(&(0..d).map(|j| cis(theta * T::from_usize_lossy(j))).collect::<Vec<_>>())
    }

    /// Discrete Fourier transform `|j> -> d^{-1/2} sum_l e^{2 pi i j l / d} |l>`.
    pub fn fourier<T: Scalar>(d: usize) -> Matrix<T> {
        let s = T::one() / T::from_usize_lossy(d).sqrt();
        Matrix::from_fn(d, d, |l, j| root_of_unity::<T>((j * l) as i64, d) * s)
    }

    /// Swap of two registers of dimension `d`.
    pub fn swap<T: Scalar>(d: usize) -> Matrix<T> {
        let mut m = Matrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                m[(b * d + a, a * d + b)] = c_one();
            }
        }
        m
    }

    /// `|psi(theta)> = d^{-1/2} sum_j e^{i j theta} |j>`.
    pub fn phase_state<T: Scalar>(d: usize, theta: T) -> Vec<C<T>> {
        let s = T::one() / T::from_usize_lossy(d).sqrt();
        (0..d).map(|j| cis(theta * T::from_usize_lossy(j)) * s).collect()
    }

    /// Fourier basis vector `d^{-1/2} sum_k e^{2 pi i m k / d} |k>`.
    pub fn fourier_vector<T: Scalar>(d: usize, m: usize) -> Vec<C<T>> {
        let s = T::one() / T::from_usize_lossy(d).sqrt();
        (0..d).map(|k| root_of_unity::<T>((m * k) as i64, d) * s).collect()
    }

    pub fn basis_vector<T: Scalar>(d: usize, j: usize) -> Vec<C<T>> {
        let mut v = vec![c_zero(); d];
        v[j] = c_one();
        v
    }

    pub fn pauli_x<T: Scalar>() -> Matrix<T> {
        shift(2, 1)
    }

    pub fn pauli_y<T: Scalar>() -> Matrix<T> {
        let i = C::new(T::zero(), T::one());
        Matrix::from_vec(2, 2, vec![c_zero(), -i, i, c_zero()])
    }

    pub fn pauli_z<T: Scalar>() -> Matrix<T> {
        clock(2, 1)
    }
}
