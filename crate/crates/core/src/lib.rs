//! Entanglement-based anonymous voting, distributed group multiplication and
//! the attacks against them, on a generic-precision qudit simulator.
//!
//! Two interchangeable backends implement [`backend::QuantumState`]: a dense
//! state vector bounded by a fixed amplitude budget, and a sparse branch
//! representation that keeps GHZ-type states linear in the number of parties.
//! Register 0 is the most significant digit of a basis index.

/// Calls `$f::<S, T>` with the state type selected by a [`backend::Backend`].
macro_rules! dispatch {
    ($backend:expr, $f:ident, $($arg:expr),*) => {
        match $backend {
            $crate::backend::Backend::Dense => $f::<$crate::state::DenseState<T>, T>($($arg),*),
            $crate::backend::Backend::Branch => $f::<$crate::branch::BranchState<T>, T>($($arg),*),
        }
    };
}

pub mod backend;
pub mod branch;
pub mod density;
pub mod error;
pub mod layout;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod scalar;
pub mod state;
pub mod protocols;
pub mod group;
pub mod anticheat;
pub mod adversary;
pub mod runner;

pub use backend::{Backend, QuantumState};
pub use error::{Error, Result};
pub use rng::SimRng;
pub use scalar::Scalar;

/// Double-precision dense state vector.
pub type Dense64 = state::DenseState<f64>;
/// Double-precision branch state.
pub type Branch64 = branch::BranchState<f64>;
/// Double-precision density matrix.
pub type Density64 = density::DensityMatrix<f64>;
/// Double-precision complex matrix.
pub type Matrix64 = linalg::Matrix<f64>;
/// Double-precision complex amplitude.
pub type Complex64 = scalar::C<f64>;
