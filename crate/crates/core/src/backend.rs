//! The operation set shared by the dense oracle and the branch backend.

use std::fmt::Debug;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::layout::RegisterLayout;
use crate::linalg::Matrix;
use crate::measurement::ProjectiveMeasurement;
use crate::rng::SimRng;
use crate::scalar::{Scalar, C};
use crate::state::DenseState;

/// Result of a sampled measurement.
#[derive(Debug, Clone)]
pub struct Measured<S, T> {
    pub outcome: usize,
    pub probability: T,
    pub state: S,
}

/// A pure state over a register layout. Values are immutable: every operation
/// returns a new state.
pub trait QuantumState<T: Scalar>: Clone + Debug + Send + Sync + Sized {
    /// `(1/sqrt(dim)) sum_j |j>^{(x) registers}`.
    fn ghz(dim: usize, registers: usize) -> Result<Self>;

    fn layout(&self) -> &RegisterLayout;

    fn apply_local(&self, register: usize, op: &Matrix<T>) -> Result<Self>;

    /// Applies `op` on the joint space of `registers` (first listed is most significant).
    fn apply_joint(&self, registers: &[usize], op: &Matrix<T>) -> Result<Self>;

    fn swap_registers(&self, a: usize, b: usize) -> Result<Self>;

    /// Appends a new register in the given (normalized) local state.
    fn attach(&self, dim: usize, amps: &[C<T>]) -> Result<Self>;

    /// Removes `register`, which must be in product with the rest and in `|label>`.
    fn detach(&self, register: usize, label: usize) -> Result<Self>;

    /// Unnormalized `P_k |psi>` for outcome `outcome` of `meas` on `registers`.
    fn project(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>, outcome: usize) -> Result<Self>;

    fn norm_sqr(&self) -> T;

    /// Multiplies every amplitude by `factor`.
    fn rescale(&self, factor: T) -> Self;

    fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix<T>>;

    fn to_dense(&self) -> Result<DenseState<T>>;

    fn check_measurement(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>) -> Result<()> {
        self.layout().check_targets(registers)?;
        let dims = self.layout().sub_dims(registers);
        if dims != meas.dims() {
            return Err(Error::InvalidProjector(format!(
                "measurement defined on dims {:?} applied to registers with dims {dims:?}",
                meas.dims()
            )));
        }
        Ok(())
    }

    /// Born probabilities of every outcome, remainder last.
    fn outcome_probabilities(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>) -> Result<Vec<T>> {
        self.check_measurement(registers, meas)?;
        let probs = (0..meas.projectors().len())
            .map(|k| Ok(self.project(registers, meas, k)?.norm_sqr()))
            .collect::<Result<Vec<T>>>()?;
        complete_probabilities(probs, self.norm_sqr(), meas)
    }

    /// Post-measurement state for a chosen outcome, with its probability.
    fn collapse(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>, outcome: usize) -> Result<(T, Self)> {
        self.check_measurement(registers, meas)?;
        if outcome >= meas.outcome_count() {
            return Err(Error::Protocol(format!("outcome {outcome} out of range")));
        }
        let projected = self.project(registers, meas, outcome)?;
        let p = projected.norm_sqr();
        if p <= T::epsilon() {
            return Err(Error::Protocol(format!("outcome {outcome} has zero probability")));
        }
        Ok((p, projected.rescale(T::one() / p.sqrt())))
    }

    /// Samples an outcome with Born probabilities using one uniform draw.
    fn measure(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>, rng: &mut SimRng) -> Result<Measured<Self, T>> {
        let probs = self.outcome_probabilities(registers, meas)?;
        let outcome = sample_index(&probs, rng);
        let (probability, state) = self.collapse(registers, meas, outcome)?;
        Ok(Measured { outcome, probability, state })
    }
}

/// Appends the remainder outcome to explicit-projector probabilities and checks completeness.
pub fn complete_probabilities<T: Scalar>(mut probs: Vec<T>, total: T, meas: &ProjectiveMeasurement<T>) -> Result<Vec<T>> {
    if meas.has_remainder() {
        let explicit: T = probs.iter().copied().sum();
        probs.push((total - explicit).max(T::zero()));
    }
    let sum: T = probs.iter().copied().sum();
    if (sum - T::one()).abs() > T::tolerance() {
        return Err(Error::IncompleteMeasurement(format!("outcome probabilities sum to {sum}")));
    }
    Ok(probs)
}

/// Inverse-CDF sampling of a discrete distribution with one uniform draw.
pub fn sample_index<T: Scalar>(probs: &[T], rng: &mut SimRng) -> usize {
    let total: f64 = probs.iter().map(|p| p.to_f64_lossy()).sum();
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc && p > 0.0 {
            return i;
        }
    }
    last_nonzero
}

/// Runtime backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Branch,
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dense" => Ok(Backend::Dense),
            "branch" => Ok(Backend::Branch),
            other => Err(format!("unknown backend '{other}' (expected dense or branch)")),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Dense => "dense",
            Backend::Branch => "branch",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_skips_zero_probability_outcomes() {
        let mut rng = SimRng::new(3);
        for _ in 0..200 {
            let k = sample_index(&[0.0f64, 0.5, 0.0, 0.5], &mut rng);
            assert!(k == 1 || k == 3);
        }
    }

    #[test]
    fn backend_parses() {
        assert_eq!("branch".parse::<Backend>().unwrap(), Backend::Branch);
        assert!("gpu".parse::<Backend>().is_err());
    }
}
