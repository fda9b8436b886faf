//! Resolvents and proximal maps for concrete operator classes.
//!
//! Everything here is a firmly nonexpansive map: resolvents of maximal
//! monotone operators, proximal operators of convex functions, orthogonal
//! projections, and the Douglas-Rachford composition. Each operator
//! validates its data at construction and caches whatever factorization
//! its evaluation needs, so per-iteration work is a solve, not a
//! factorization.

use ndarray::ArrayView1;

use crate::linalg::{CholeskyFactors, FactorError, LuFactors};
use crate::rng::InstanceRng;
use crate::{all_finite, real, Matrix, Scalar, Vector};

/// Operator construction and evaluation failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("threshold must be nonnegative and finite, got {tau}")]
    InvalidThreshold { tau: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("linear system is numerically singular")]
    Singular,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("operator is not monotone: probe direction with x'(Q + Q')x = {value}")]
    NotMonotone { value: f64 },
    #[error("basis is not orthonormal: |<b_{i}, b_{j}> - {expected}| = {deviation}")]
    NotOrthonormal {
        i: usize,
        j: usize,
        expected: f64,
        deviation: f64,
    },
    #[error("basis must contain at least one vector")]
    EmptyBasis,
    #[error("constraint matrix does not have full row rank")]
    RankDeficient,
    #[error("step sizes violate tau * sigma * ||K||^2 < 1, got {value}")]
    UnstableStepSizes { value: f64 },
    #[error(
        "inner solver stopped after {iterations} iterations with mapping norm {mapping_norm} above tolerance {tol}"
    )]
    InnerSolve {
        iterations: usize,
        mapping_norm: f64,
        tol: f64,
    },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error(
        "cached factorization was built for lambda = {cached}, step requested lambda = {requested}"
    )]
    StaleFactorization { cached: f64, requested: f64 },
}

fn as_f64<S: Scalar>(x: S) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

impl From<FactorError> for OperatorError {
    fn from(err: FactorError) -> Self {
        match err {
            FactorError::Singular => OperatorError::Singular,
            FactorError::NotPositiveDefinite => OperatorError::NotPositiveDefinite,
        }
    }
}

/// A single-valued firmly nonexpansive map, typically the resolvent
/// `(I + lambda A)^{-1}` of a maximal monotone operator.
pub trait Resolvent<S: Scalar>: Send + Sync {
    /// Ambient dimension of the operator's domain.
    fn dimension(&self) -> usize;

    /// Applies the map to one point.
    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError>;
}

fn check_dimension<S: Scalar>(
    point: &ArrayView1<'_, S>,
    expected: usize,
) -> Result<(), OperatorError> {
    if point.len() != expected {
        return Err(OperatorError::DimensionMismatch {
            expected,
            got: point.len(),
        });
    }
    Ok(())
}

fn check_finite_matrix<S: Scalar>(
    m: &Matrix<S>,
    context: &'static str,
) -> Result<(), OperatorError> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OperatorError::NonFinite { context })
    }
}

fn check_finite_vector<S: Scalar>(
    v: &Vector<S>,
    context: &'static str,
) -> Result<(), OperatorError> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(OperatorError::NonFinite { context })
    }
}

/// The identity map, the resolvent of the zero operator.
#[derive(Debug, Clone)]
pub struct IdentityResolvent {
    dimension: usize,
}

impl IdentityResolvent {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }
}

impl<S: Scalar> Resolvent<S> for IdentityResolvent {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        Ok(point.to_owned())
    }
}

/// Elementwise soft threshold `sign(z_i) * max(|z_i| - tau, 0)`, the
/// proximal map of `tau * ||.||_1`, with `sign(0) = 0`.
pub fn soft_threshold<S: Scalar>(z: ArrayView1<'_, S>, tau: S) -> Result<Vector<S>, OperatorError> {
    if !tau.is_finite() || tau < S::zero() {
        return Err(OperatorError::InvalidThreshold { tau: as_f64(tau) });
    }
    Ok(z.mapv(|z_i| {
        if z_i > tau {
            z_i - tau
        } else if z_i < -tau {
            z_i + tau
        } else {
            S::zero()
        }
    }))
}

/// Soft thresholding packaged as the resolvent of `threshold * d||.||_1`.
#[derive(Debug, Clone)]
pub struct L1Resolvent<S> {
    dimension: usize,
    threshold: S,
}

impl<S: Scalar> L1Resolvent<S> {
    pub fn new(dimension: usize, threshold: S) -> Result<Self, OperatorError> {
        if !threshold.is_finite() || threshold < S::zero() {
            return Err(OperatorError::InvalidThreshold {
                tau: as_f64(threshold),
            });
        }
        Ok(Self {
            dimension,
            threshold,
        })
    }
}

impl<S: Scalar> Resolvent<S> for L1Resolvent<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        soft_threshold(point, self.threshold)
    }
}

/// The linear monotone inclusion `0 in Q x`, i.e. the operator `A = Q`
/// with `x' Q x >= 0` for all `x`, paired with a resolvent parameter.
///
/// Monotonicity cannot be certified exhaustively, so construction checks
/// `x'(Q + Q')x >= 0` on a fixed set of deterministic random probe
/// directions and rejects any certified violation.
#[derive(Debug, Clone)]
pub struct LinearMonotoneProblem<S> {
    q: Matrix<S>,
    lambda: S,
}

impl<S: Scalar> LinearMonotoneProblem<S> {
    pub fn new(q: Matrix<S>, lambda: S) -> Result<Self, OperatorError> {
        if q.nrows() != q.ncols() {
            return Err(OperatorError::NotSquare {
                rows: q.nrows(),
                cols: q.ncols(),
            });
        }
        check_finite_matrix(&q, "Q")?;
        if !lambda.is_finite() || lambda <= S::zero() {
            return Err(OperatorError::NotPositive {
                name: "lambda",
                value: as_f64(lambda),
            });
        }
        let n = q.nrows();
        let mut rng = InstanceRng::new(0x6d6f_6e6f_746f_6e65);
        let slack = real::<S>(-1e-8);
        for _ in 0..8 {
            let x: Vector<S> = rng.normal_vector(n);
            let quad = x.dot(&q.dot(&x));
            let scale = S::one() + x.dot(&x);
            if quad < slack * scale {
                return Err(OperatorError::NotMonotone {
                    value: as_f64(quad + quad),
                });
            }
        }
        Ok(Self { q, lambda })
    }

    pub fn q(&self) -> &Matrix<S> {
        &self.q
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }
}

/// Resolvent `(I + lambda Q)^{-1}` with the LU factorization cached.
pub struct LinearResolvent<S> {
    factors: LuFactors<S>,
    dimension: usize,
}

/// Builds the cached resolvent of a linear monotone problem.
pub fn resolvent_linear<S: Scalar>(
    problem: &LinearMonotoneProblem<S>,
) -> Result<LinearResolvent<S>, OperatorError> {
    let n = problem.q.nrows();
    let mut m = problem.q.mapv(|v| v * problem.lambda);
    for i in 0..n {
        m[[i, i]] += S::one();
    }
    let factors = LuFactors::new(m)?;
    Ok(LinearResolvent {
        factors,
        dimension: n,
    })
}

impl<S: Scalar> Resolvent<S> for LinearResolvent<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        Ok(self.factors.solve(point))
    }
}

/// Proximal map of `x -> (weight/2) ||F x - b||^2`, evaluated by solving
/// `(weight F'F + I) x = y + weight F'b`.
pub struct QuadraticProx<S> {
    factors: CholeskyFactors<S>,
    shifted_rhs: Vector<S>,
    dimension: usize,
}

impl<S: Scalar> QuadraticProx<S> {
    pub fn new(f: &Matrix<S>, b: &Vector<S>, weight: S) -> Result<Self, OperatorError> {
        if b.len() != f.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: f.nrows(),
                got: b.len(),
            });
        }
        check_finite_matrix(f, "F")?;
        check_finite_vector(b, "b")?;
        if !weight.is_finite() || weight <= S::zero() {
            return Err(OperatorError::NotPositive {
                name: "weight",
                value: as_f64(weight),
            });
        }
        let n = f.ncols();
        let mut gram = f.t().dot(f).mapv(|v| v * weight);
        for i in 0..n {
            gram[[i, i]] += S::one();
        }
        let factors = CholeskyFactors::new(&gram)?;
        let shifted_rhs = f.t().dot(b).mapv(|v| v * weight);
        Ok(Self {
            factors,
            shifted_rhs,
            dimension: n,
        })
    }
}

impl<S: Scalar> Resolvent<S> for QuadraticProx<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        let rhs = &point.to_owned() + &self.shifted_rhs;
        Ok(self.factors.solve(rhs.view()))
    }
}

/// One-shot quadratic proximal evaluation; see [`QuadraticProx`] for the
/// cached form.
pub fn prox_quadratic<S: Scalar>(
    y: ArrayView1<'_, S>,
    f: &Matrix<S>,
    b: &Vector<S>,
    weight: S,
) -> Result<Vector<S>, OperatorError> {
    QuadraticProx::new(f, b, weight)?.evaluate(y)
}

/// Orthogonal projection onto the affine set `{x : A x = b}` for a full
/// row rank `A`, with the factorization of `A A'` cached.
pub struct AffineProjector<S> {
    a: Matrix<S>,
    b: Vector<S>,
    gram_factors: CholeskyFactors<S>,
    dimension: usize,
}

impl<S: Scalar> AffineProjector<S> {
    pub fn new(a: Matrix<S>, b: Vector<S>) -> Result<Self, OperatorError> {
        if b.len() != a.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        check_finite_matrix(&a, "A")?;
        check_finite_vector(&b, "b")?;
        let gram = a.dot(&a.t());
        let gram_factors = CholeskyFactors::new(&gram).map_err(|_| OperatorError::RankDeficient)?;
        let dimension = a.ncols();
        Ok(Self {
            a,
            b,
            gram_factors,
            dimension,
        })
    }
}

impl<S: Scalar> Resolvent<S> for AffineProjector<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        let violation = &self.a.dot(&point) - &self.b;
        let multiplier = self.gram_factors.solve(violation.view());
        Ok(&point.to_owned() - &self.a.t().dot(&multiplier))
    }
}

/// One-shot affine projection `x - A'(A A')^{-1}(A x - b)`.
pub fn project_affine<S: Scalar>(
    x: ArrayView1<'_, S>,
    a: &Matrix<S>,
    b: &Vector<S>,
) -> Result<Vector<S>, OperatorError> {
    AffineProjector::new(a.clone(), b.clone())?.evaluate(x)
}

/// Orthogonal projection onto the span of an orthonormal basis.
///
/// Orthonormality is verified at construction to an absolute tolerance
/// of 1e-10 (or a machine-precision floor for low-precision scalars).
#[derive(Clone, Debug)]
pub struct SubspaceProjector<S> {
    basis: Matrix<S>,
    dimension: usize,
}

impl<S: Scalar> SubspaceProjector<S> {
    pub fn new(basis_vectors: &[Vector<S>]) -> Result<Self, OperatorError> {
        let first = basis_vectors.first().ok_or(OperatorError::EmptyBasis)?;
        let dimension = first.len();
        let count = basis_vectors.len();
        let mut basis = Matrix::zeros((count, dimension));
        for (i, v) in basis_vectors.iter().enumerate() {
            if v.len() != dimension {
                return Err(OperatorError::DimensionMismatch {
                    expected: dimension,
                    got: v.len(),
                });
            }
            check_finite_vector(v, "basis vector")?;
            basis.row_mut(i).assign(v);
        }
        let floor = S::epsilon() * real::<S>(16.0) * real::<S>(dimension as f64);
        let tol = real::<S>(1e-10).max(floor);
        for i in 0..count {
            for j in i..count {
                let inner = basis_vectors[i].dot(&basis_vectors[j]);
                let expected = if i == j { S::one() } else { S::zero() };
                let deviation = (inner - expected).abs();
                if deviation > tol {
                    return Err(OperatorError::NotOrthonormal {
                        i,
                        j,
                        expected: as_f64(expected),
                        deviation: as_f64(deviation),
                    });
                }
            }
        }
        Ok(Self { basis, dimension })
    }
}

impl<S: Scalar> Resolvent<S> for SubspaceProjector<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        let coords = self.basis.dot(&point);
        Ok(self.basis.t().dot(&coords))
    }
}

/// One-shot projection onto the span of orthonormal `basis` vectors.
pub fn project_subspace<S: Scalar>(
    x: ArrayView1<'_, S>,
    basis: &[Vector<S>],
) -> Result<Vector<S>, OperatorError> {
    SubspaceProjector::new(basis)?.evaluate(x)
}

/// The Douglas-Rachford map `G(x) = J_A(2 J_B(x) - x) + x - J_B(x)`.
pub fn dr_operator<S: Scalar>(
    x: ArrayView1<'_, S>,
    j_a: &dyn Resolvent<S>,
    j_b: &dyn Resolvent<S>,
) -> Result<Vector<S>, OperatorError> {
    let shadow = j_b.evaluate(x)?;
    let reflected = &shadow.mapv(|v| v + v) - &x.to_owned();
    let outer = j_a.evaluate(reflected.view())?;
    Ok(&(&outer + &x.to_owned()) - &shadow)
}

/// Douglas-Rachford composition of two resolvents, itself firmly
/// nonexpansive, with the shadow map `J_B` exposed.
pub struct DouglasRachford<S: Scalar> {
    j_a: Box<dyn Resolvent<S>>,
    j_b: Box<dyn Resolvent<S>>,
    dimension: usize,
}

impl<S: Scalar> DouglasRachford<S> {
    pub fn new(
        j_a: Box<dyn Resolvent<S>>,
        j_b: Box<dyn Resolvent<S>>,
    ) -> Result<Self, OperatorError> {
        let dimension = j_a.dimension();
        if j_b.dimension() != dimension {
            return Err(OperatorError::DimensionMismatch {
                expected: dimension,
                got: j_b.dimension(),
            });
        }
        Ok(Self {
            j_a,
            j_b,
            dimension,
        })
    }

    /// The shadow point `J_B(x)`, which converges to a solution of the
    /// underlying inclusion as the governing sequence converges.
    pub fn shadow(&self, x: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        self.j_b.evaluate(x)
    }
}

impl<S: Scalar> Resolvent<S> for DouglasRachford<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        check_dimension(&point, self.dimension)?;
        dr_operator(point, self.j_a.as_ref(), self.j_b.as_ref())
    }
}
