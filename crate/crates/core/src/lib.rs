//! Solvers for sequences of parametrized Lyapunov equations
//!
//! ```text
//! A(v) X + X A(v)^T = -Q,      A(v) = A0 - Bl D(v) Br^T,   D(v) = diag(v)
//! ```
//!
//! Two online strategies share the same offline data:
//!
//! * [`smw`]: a Sherman-Morrison-Woodbury reformulation that reduces each
//!   equation to a `2nk x 2nk` linear system, solved with recycled
//!   Krylov iterations ([`gcrodr`]).
//! * [`ek`]: an extended Krylov projection whose basis is shared by all
//!   parameters and grown on demand.
//!
//! The application modules build concrete problem families
//! ([`vibration`], [`multiagent`]) and [`bench`] drives them end to end.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod dense;
pub mod ek;
pub mod error;
pub mod gcrodr;
pub mod multiagent;
pub mod optim;
pub mod problem;
pub mod selftest;
pub mod smw;
pub mod vibration;

pub use error::{LyapError, Result};
pub use problem::ParamLyapProblem;

pub type C64 = num_complex::Complex<f64>;
pub type RMat = nalgebra::DMatrix<f64>;
pub type CMat = nalgebra::DMatrix<C64>;
pub type RVec = nalgebra::DVector<f64>;
pub type CVec = nalgebra::DVector<C64>;

pub(crate) fn to_complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}
