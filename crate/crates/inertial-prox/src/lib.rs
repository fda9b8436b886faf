//! Two-step inertial proximal point methods.
//!
//! The central iteration solves the monotone inclusion `0 in A(x)` by
//! extrapolating over the last three iterates and applying the resolvent
//! `J = (I + lambda A)^{-1}`:
//!
//! ```text
//! y_n     = x_n + theta (x_n - x_{n-1}) + delta (x_{n-1} - x_{n-2})
//! x_{n+1} = (1 - rho) y_n + rho J(y_n)
//! ```
//!
//! with `0 <= theta < 1/3` and `(3 theta - 1) / (3 + 4 theta) < delta <= 0`.
//! The crate provides:
//!
//! - [`engine`]: parameter validation, the iteration itself, Lyapunov
//!   certificates, and the `O(1/n)` residual rate bound;
//! - [`operators`]: resolvents and proximal maps for concrete operator
//!   classes (linear monotone maps, the l1 norm, projections, quadratic
//!   least-squares penalties, Douglas-Rachford compositions);
//! - [`saddle`]: the proximal method of multipliers driven by the same
//!   inertial engine, with a basis-pursuit inner solver;
//! - [`splitting`]: inertial primal-dual (PDHG), Douglas-Rachford,
//!   and ADMM steps, plus a total-variation least-squares ADMM driver;
//! - [`bench`]: seeded, bit-reproducible instance generators and a
//!   method-comparison harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`);
//! the `*64` aliases below fix the common double-precision case.

pub mod bench;
pub mod engine;
mod linalg;
pub mod operators;
mod rng;
pub mod saddle;
pub mod splitting;

use ndarray::{Array1, Array2};

/// Floating-point scalar the whole crate is generic over.
///
/// `ndarray::NdFloat` bundles `num_traits::Float` with the arithmetic and
/// operand traits needed for array expressions; `FromPrimitive` admits
/// lossless construction of constants from `f64` literals.
pub trait Scalar: ndarray::NdFloat + num_traits::FromPrimitive + Send + Sync {}

impl<T: ndarray::NdFloat + num_traits::FromPrimitive + Send + Sync> Scalar for T {}

/// Dense column vector.
pub type Vector<S> = Array1<S>;
/// Dense matrix.
pub type Matrix<S> = Array2<S>;

/// Double-precision vector.
pub type Vector64 = Vector<f64>;
/// Double-precision matrix.
pub type Matrix64 = Matrix<f64>;
/// Double-precision iteration parameters.
pub type InertialParams64 = engine::InertialParams<f64>;
/// Double-precision run configuration.
pub type RunConfig64 = engine::RunConfig<f64>;
/// Double-precision run record.
pub type RunRecord64 = engine::RunRecord<f64>;
/// Double-precision engine state.
pub type EngineState64 = engine::EngineState<f64>;

/// Converts an `f64` constant to the generic scalar type.
///
/// # Panics
///
/// Panics if the value is not representable, which cannot happen for the
/// finite literals this crate passes in.
pub(crate) fn real<S: Scalar>(value: f64) -> S {
    S::from_f64(value).expect("finite f64 constant must convert to the scalar type")
}

/// Euclidean norm of a vector view.
pub(crate) fn norm<S: Scalar>(v: ndarray::ArrayView1<'_, S>) -> S {
    v.iter()
        .map(|&x| x * x)
        .fold(S::zero(), |a, b| a + b)
        .sqrt()
}

/// Squared Euclidean distance between two equal-length vectors.
pub(crate) fn dist_sq<S: Scalar>(a: &Vector<S>, b: &Vector<S>) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(S::zero(), |acc, t| acc + t)
}

/// True when every entry is finite.
pub(crate) fn all_finite<S: Scalar>(v: &Vector<S>) -> bool {
    v.iter().all(|x| x.is_finite())
}
