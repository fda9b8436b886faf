//! Inertial proximal methods for linearly constrained saddle problems.
//!
//! For `min f(u)` subject to `A u = b` with Lagrangian
//! `L(u, v) = f(u) + <v, A u - b>`, the proximal method of multipliers
//! iterates on the stacked vector `x = (u, v)`:
//!
//! ```text
//! u_{n+1} = argmin_u { f(u) + <v_hat_n, A u - b>
//!                      + (lambda/2) ||A u - b||^2
//!                      + (1/(2 lambda)) ||u - u_hat_n||^2 }
//! v_{n+1} = v_hat_n + lambda (A u_{n+1} - b)
//! ```
//!
//! followed by the two-step inertial extrapolation of the engine on the
//! stacked vector. The u-subproblem is delegated to a caller-supplied
//! capability; this module ships an exact solver for quadratic `f` and
//! an accelerated proximal-gradient solver for the basis-pursuit case
//! `f = ||.||_1`.

use ndarray::{concatenate, ArrayView1, Axis};

use crate::engine::{self, EngineState, InertialParams, RunConfig, RunRecord};
use crate::linalg::LuFactors;
use crate::operators::{soft_threshold, OperatorError, Resolvent};
use crate::{all_finite, norm, real, Matrix, Scalar, Vector};

/// Capability solving the u-subproblem given `(v_hat, u_hat, lambda)`.
pub trait USubproblemSolver<S: Scalar>: Send + Sync {
    fn solve(
        &self,
        v_hat: ArrayView1<'_, S>,
        u_hat: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError>;
}

/// A linearly constrained problem `min f(u) s.t. A u = b` together with
/// the capability that solves its proximal u-subproblem.
pub struct LagrangianProblem<S, P> {
    a: Matrix<S>,
    b: Vector<S>,
    objective_prox_solver: P,
}

impl<S: Scalar, P: USubproblemSolver<S>> LagrangianProblem<S, P> {
    pub fn new(
        a: Matrix<S>,
        b: Vector<S>,
        objective_prox_solver: P,
    ) -> Result<Self, OperatorError> {
        if b.len() != a.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if !a.iter().all(|x| x.is_finite()) || !all_finite(&b) {
            return Err(OperatorError::NonFinite {
                context: "constraint data",
            });
        }
        Ok(Self {
            a,
            b,
            objective_prox_solver,
        })
    }

    pub fn a(&self) -> &Matrix<S> {
        &self.a
    }

    pub fn b(&self) -> &Vector<S> {
        &self.b
    }

    pub fn solver(&self) -> &P {
        &self.objective_prox_solver
    }

    pub fn primal_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn dual_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Primal-dual pair view of a stacked iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct PmmState<S> {
    pub u: Vector<S>,
    pub v: Vector<S>,
}

impl<S: Scalar> PmmState<S> {
    /// Splits a stacked vector of length `primal_dim + dual_dim`.
    pub fn from_stacked(
        stacked: ArrayView1<'_, S>,
        primal_dim: usize,
    ) -> Result<Self, OperatorError> {
        if stacked.len() < primal_dim {
            return Err(OperatorError::DimensionMismatch {
                expected: primal_dim,
                got: stacked.len(),
            });
        }
        Ok(Self {
            u: stacked.slice(ndarray::s![..primal_dim]).to_owned(),
            v: stacked.slice(ndarray::s![primal_dim..]).to_owned(),
        })
    }

    /// Stacks the pair back into a single engine vector.
    pub fn stacked(&self) -> Vector<S> {
        concatenate(Axis(0), &[self.u.view(), self.v.view()])
            .expect("one-dimensional concatenation cannot fail")
    }
}

/// The PMM update packaged as a resolvent on the stacked vector, so that
/// the engine's inertial machinery applies unchanged.
pub struct PmmResolvent<'a, S, P> {
    problem: &'a LagrangianProblem<S, P>,
    lambda: S,
}

impl<'a, S: Scalar, P: USubproblemSolver<S>> PmmResolvent<'a, S, P> {
    pub fn new(problem: &'a LagrangianProblem<S, P>, lambda: S) -> Self {
        Self { problem, lambda }
    }
}

impl<S: Scalar, P: USubproblemSolver<S>> Resolvent<S> for PmmResolvent<'_, S, P> {
    fn dimension(&self) -> usize {
        self.problem.primal_dim() + self.problem.dual_dim()
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        let n = self.problem.primal_dim();
        if point.len() != n + self.problem.dual_dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: n + self.problem.dual_dim(),
                got: point.len(),
            });
        }
        let u_hat = point.slice(ndarray::s![..n]);
        let v_hat = point.slice(ndarray::s![n..]);
        let u_next = self
            .problem
            .objective_prox_solver
            .solve(v_hat, u_hat, self.lambda)?;
        if u_next.len() != n {
            return Err(OperatorError::DimensionMismatch {
                expected: n,
                got: u_next.len(),
            });
        }
        let mut v_next = self.problem.a.dot(&u_next);
        v_next.zip_mut_with(&self.problem.b, |r, &b_i| *r -= b_i);
        v_next.mapv_inplace(|r| r * self.lambda);
        v_next.zip_mut_with(&v_hat.to_owned(), |r, &v_i| *r += v_i);
        Ok(concatenate(Axis(0), &[u_next.view(), v_next.view()])
            .expect("one-dimensional concatenation cannot fail"))
    }
}

/// One inertial PMM step on the stacked state.
pub fn pmm_step<S: Scalar, P: USubproblemSolver<S>>(
    problem: &LagrangianProblem<S, P>,
    state: EngineState<S>,
    params: &InertialParams<S>,
) -> Result<EngineState<S>, engine::EngineError> {
    let resolvent = PmmResolvent::new(problem, params.lambda());
    engine::ppa_step(&resolvent, state, params)
}

/// Caller-supplied exact saddle-prox oracle for the generic saddle
/// iteration; implementors evaluate the resolvent of the saddle
/// subdifferential at a primal-dual pair.
pub trait SaddleProx<S: Scalar>: Send + Sync {
    fn primal_dim(&self) -> usize;
    fn dual_dim(&self) -> usize;
    fn evaluate(
        &self,
        u_hat: ArrayView1<'_, S>,
        v_hat: ArrayView1<'_, S>,
    ) -> Result<(Vector<S>, Vector<S>), OperatorError>;
}

/// Adapter running a [`SaddleProx`] oracle under the stacked engine.
pub struct SaddleResolvent<P> {
    oracle: P,
}

impl<P> SaddleResolvent<P> {
    pub fn new(oracle: P) -> Self {
        Self { oracle }
    }
}

impl<S: Scalar, P: SaddleProx<S>> Resolvent<S> for SaddleResolvent<P> {
    fn dimension(&self) -> usize {
        self.oracle.primal_dim() + self.oracle.dual_dim()
    }

    fn evaluate(&self, point: ArrayView1<'_, S>) -> Result<Vector<S>, OperatorError> {
        let n = self.oracle.primal_dim();
        if point.len() != n + self.oracle.dual_dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: n + self.oracle.dual_dim(),
                got: point.len(),
            });
        }
        let (u, v) = self
            .oracle
            .evaluate(point.slice(ndarray::s![..n]), point.slice(ndarray::s![n..]))?;
        Ok(concatenate(Axis(0), &[u.view(), v.view()])
            .expect("one-dimensional concatenation cannot fail"))
    }
}

/// Exact u-subproblem solver for quadratic objectives
/// `f(u) = (1/2) u' P u + q' u`: the optimality system
/// `(P + lambda A'A + I/lambda) u = u_hat/lambda - q - A'v_hat + lambda A'b`
/// is solved directly.
pub struct QuadraticUSolver<S> {
    p: Matrix<S>,
    q: Vector<S>,
    a: Matrix<S>,
    b: Vector<S>,
}

impl<S: Scalar> QuadraticUSolver<S> {
    pub fn new(
        p: Matrix<S>,
        q: Vector<S>,
        a: Matrix<S>,
        b: Vector<S>,
    ) -> Result<Self, OperatorError> {
        let n = a.ncols();
        if p.nrows() != n || p.ncols() != n {
            return Err(OperatorError::DimensionMismatch {
                expected: n,
                got: p.nrows().max(p.ncols()),
            });
        }
        if q.len() != n {
            return Err(OperatorError::DimensionMismatch {
                expected: n,
                got: q.len(),
            });
        }
        if b.len() != a.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        Ok(Self { p, q, a, b })
    }
}

impl<S: Scalar> USubproblemSolver<S> for QuadraticUSolver<S> {
    fn solve(
        &self,
        v_hat: ArrayView1<'_, S>,
        u_hat: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError> {
        if lambda <= S::zero() || !lambda.is_finite() {
            return Err(OperatorError::NotPositive {
                name: "lambda",
                value: num_traits::ToPrimitive::to_f64(&lambda).unwrap_or(f64::NAN),
            });
        }
        let n = self.a.ncols();
        let inv_lambda = S::one() / lambda;
        let mut system = &self.p + &self.a.t().dot(&self.a).mapv(|x| x * lambda);
        for i in 0..n {
            system[[i, i]] += inv_lambda;
        }
        let mut rhs = u_hat.to_owned().mapv(|x| x * inv_lambda);
        rhs.zip_mut_with(&self.q, |r, &q_i| *r -= q_i);
        rhs.zip_mut_with(&self.a.t().dot(&v_hat.to_owned()), |r, &av| *r -= av);
        rhs.zip_mut_with(&self.a.t().dot(&self.b), |r, &ab| *r += lambda * ab);
        Ok(LuFactors::new(system)?.solve(rhs.view()))
    }
}

/// A planted basis-pursuit instance: `min ||u||_1 s.t. A u = b` with
/// `b = A u_true` for a known sparse `u_true`.
#[derive(Debug, Clone)]
pub struct BasisPursuitInstance<S> {
    pub a: Matrix<S>,
    pub b: Vector<S>,
    pub u_true: Vector<S>,
    pub sparsity: usize,
}

/// Result of the accelerated inner solve, flagged rather than erroring
/// when the iteration budget runs out so the caller decides.
#[derive(Debug, Clone)]
pub struct InnerSolution<S> {
    pub point: Vector<S>,
    pub iterations: usize,
    pub mapping_norm: S,
    pub converged: bool,
    /// Subproblem objective at each visited iterate, starting at `u_hat`.
    pub objective_trace: Vec<S>,
}

/// Solves the basis-pursuit u-subproblem
/// `min_u ||u||_1 + <v_hat, A u - b> + (lambda/2) ||A u - b||^2
///  + (1/(2 lambda)) ||u - u_hat||^2`
/// by proximal gradient with the strong-convexity momentum coefficient
/// `(sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu))`, where
/// `L = lambda ||A||^2 + 1/lambda` and `mu = 1/lambda`; the prox step is
/// soft thresholding with `tau = 1/L`. Stops when the prox-gradient
/// mapping norm `L ||w - prox(w - grad s(w)/L)||` falls to `inner_tol`.
///
/// `norm_a` must be the largest singular value of `a`; use
/// [`solve_bp_subproblem`] to have it computed on the fly.
#[allow(clippy::too_many_arguments)]
pub fn solve_bp_subproblem_with_norm<S: Scalar>(
    a: &Matrix<S>,
    b: &Vector<S>,
    v_hat: ArrayView1<'_, S>,
    u_hat: ArrayView1<'_, S>,
    lambda: S,
    inner_tol: S,
    inner_max_iter: usize,
    norm_a: S,
) -> Result<InnerSolution<S>, OperatorError> {
    if !lambda.is_finite() || lambda <= S::zero() {
        return Err(OperatorError::NotPositive {
            name: "lambda",
            value: num_traits::ToPrimitive::to_f64(&lambda).unwrap_or(f64::NAN),
        });
    }
    if !inner_tol.is_finite() || inner_tol <= S::zero() {
        return Err(OperatorError::NotPositive {
            name: "inner_tol",
            value: num_traits::ToPrimitive::to_f64(&inner_tol).unwrap_or(f64::NAN),
        });
    }
    let n = a.ncols();
    if b.len() != a.nrows() {
        return Err(OperatorError::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if v_hat.len() != a.nrows() {
        return Err(OperatorError::DimensionMismatch {
            expected: a.nrows(),
            got: v_hat.len(),
        });
    }
    if u_hat.len() != n {
        return Err(OperatorError::DimensionMismatch {
            expected: n,
            got: u_hat.len(),
        });
    }

    let inv_lambda = S::one() / lambda;
    let big_l = lambda * norm_a * norm_a + inv_lambda;
    let mu = inv_lambda;
    let beta = (big_l.sqrt() - mu.sqrt()) / (big_l.sqrt() + mu.sqrt());
    let tau = S::one() / big_l;
    let u_hat = u_hat.to_owned();
    let v_hat = v_hat.to_owned();
    let half = real::<S>(0.5);

    // Constant part of grad s: A'(v_hat - lambda b).
    let shifted_dual = &v_hat - &b.mapv(|x| x * lambda);
    let grad_const = a.t().dot(&shifted_dual);

    let objective = |w: &Vector<S>, residual: &Vector<S>| -> S {
        let l1 = w.iter().fold(S::zero(), |acc, &x| acc + x.abs());
        let fit = residual.dot(residual);
        let coupling = v_hat.dot(residual);
        let prox_term = crate::dist_sq(w, &u_hat);
        l1 + coupling + half * lambda * fit + half * inv_lambda * prox_term
    };
    let gradient = |w: &Vector<S>, aw: &Vector<S>| -> Vector<S> {
        let mut g = &grad_const + &a.t().dot(aw).mapv(|x| x * lambda);
        g.zip_mut_with(&(w - &u_hat), |g_i, &d| *g_i += inv_lambda * d);
        g
    };

    let mut w = u_hat.clone();
    let mut momentum = w.clone();
    let mut trace = Vec::new();
    for iteration in 0..=inner_max_iter {
        let aw = a.dot(&w);
        let residual = &aw - b;
        trace.push(objective(&w, &residual));
        let grad_w = gradient(&w, &aw);
        let candidate = soft_threshold((&w - &grad_w.mapv(|g| g * tau)).view(), tau)?;
        let mapping_norm = big_l * norm((&w - &candidate).view());
        if mapping_norm <= inner_tol {
            return Ok(InnerSolution {
                point: w,
                iterations: iteration,
                mapping_norm,
                converged: true,
                objective_trace: trace,
            });
        }
        if iteration == inner_max_iter {
            return Ok(InnerSolution {
                point: w,
                iterations: iteration,
                mapping_norm,
                converged: false,
                objective_trace: trace,
            });
        }
        let am = a.dot(&momentum);
        let grad_m = gradient(&momentum, &am);
        let next = soft_threshold((&momentum - &grad_m.mapv(|g| g * tau)).view(), tau)?;
        momentum = &next + &(&next - &w).mapv(|d| d * beta);
        w = next;
    }
    unreachable!("loop returns at or before inner_max_iter");
}

/// [`solve_bp_subproblem_with_norm`] with `||A||` computed by power
/// iteration; prefer the cached [`BpProxSolver`] inside outer loops.
#[allow(clippy::too_many_arguments)]
pub fn solve_bp_subproblem<S: Scalar>(
    a: &Matrix<S>,
    b: &Vector<S>,
    v_hat: ArrayView1<'_, S>,
    u_hat: ArrayView1<'_, S>,
    lambda: S,
    inner_tol: S,
    inner_max_iter: usize,
) -> Result<InnerSolution<S>, OperatorError> {
    let norm_a = crate::linalg::spectral_norm(a);
    solve_bp_subproblem_with_norm(
        a,
        b,
        v_hat,
        u_hat,
        lambda,
        inner_tol,
        inner_max_iter,
        norm_a,
    )
}

/// Default inner tolerance for the basis-pursuit subproblem.
pub const BP_INNER_TOL: f64 = 1e-10;
/// Default inner iteration cap for the basis-pursuit subproblem.
pub const BP_INNER_MAX_ITER: usize = 2000;

/// Basis-pursuit u-subproblem capability with `||A||` cached.
///
/// A non-converged inner solve is escalated to an error carrying the
/// inner diagnostics, since an unreliable subproblem solution silently
/// poisons the outer iteration.
pub struct BpProxSolver<S> {
    a: Matrix<S>,
    b: Vector<S>,
    norm_a: S,
    inner_tol: S,
    inner_max_iter: usize,
}

impl<S: Scalar> BpProxSolver<S> {
    pub fn new(a: Matrix<S>, b: Vector<S>) -> Result<Self, OperatorError> {
        Self::with_inner_controls(a, b, real(BP_INNER_TOL), BP_INNER_MAX_ITER)
    }

    pub fn with_inner_controls(
        a: Matrix<S>,
        b: Vector<S>,
        inner_tol: S,
        inner_max_iter: usize,
    ) -> Result<Self, OperatorError> {
        if b.len() != a.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if !inner_tol.is_finite() || inner_tol <= S::zero() {
            return Err(OperatorError::NotPositive {
                name: "inner_tol",
                value: num_traits::ToPrimitive::to_f64(&inner_tol).unwrap_or(f64::NAN),
            });
        }
        let norm_a = crate::linalg::spectral_norm(&a);
        Ok(Self {
            a,
            b,
            norm_a,
            inner_tol,
            inner_max_iter,
        })
    }
}

impl<S: Scalar> USubproblemSolver<S> for BpProxSolver<S> {
    fn solve(
        &self,
        v_hat: ArrayView1<'_, S>,
        u_hat: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError> {
        let solution = solve_bp_subproblem_with_norm(
            &self.a,
            &self.b,
            v_hat,
            u_hat,
            lambda,
            self.inner_tol,
            self.inner_max_iter,
            self.norm_a,
        )?;
        if !solution.converged {
            return Err(OperatorError::InnerSolve {
                iterations: solution.iterations,
                mapping_norm: num_traits::ToPrimitive::to_f64(&solution.mapping_norm)
                    .unwrap_or(f64::NAN),
                tol: num_traits::ToPrimitive::to_f64(&self.inner_tol).unwrap_or(f64::NAN),
            });
        }
        Ok(solution.point)
    }
}

/// Full inertial PMM run on a basis-pursuit instance from the stacked
/// zero vector, with the engine recording `D_n = ||y_n - x_{n+1}||` on
/// the stacked iterates.
pub fn run_pmm_basis_pursuit<S: Scalar>(
    instance: &BasisPursuitInstance<S>,
    params: &InertialParams<S>,
    config: &RunConfig<S>,
) -> Result<RunRecord<S>, engine::EngineError> {
    let solver = BpProxSolver::new(instance.a.clone(), instance.b.clone())?;
    let problem = LagrangianProblem::new(instance.a.clone(), instance.b.clone(), solver)?;
    let resolvent = PmmResolvent::new(&problem, params.lambda());
    let x0 = Vector::zeros(problem.primal_dim() + problem.dual_dim());
    engine::run(&resolvent, &x0, params, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::InstanceRng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn params(theta: f64, delta: f64, lambda: f64) -> InertialParams<f64> {
        InertialParams::new(theta, delta, lambda).unwrap()
    }

    fn spd_matrix(rng: &mut InstanceRng, n: usize) -> Matrix<f64> {
        let half: Matrix<f64> = rng.normal_matrix(n, n);
        let mut p = half.t().dot(&half);
        for i in 0..n {
            p[[i, i]] += 0.5;
        }
        p
    }

    #[test]
    fn quadratic_pmm_matches_a_classical_reference_at_zero_inertia() {
        let mut rng = InstanceRng::new(31);
        let n = 5;
        let m = 2;
        let p_mat = spd_matrix(&mut rng, n);
        let q: Vector<f64> = rng.normal_vector(n);
        let a: Matrix<f64> = rng.normal_matrix(m, n);
        let b: Vector<f64> = rng.normal_vector(m);
        let lambda = 0.7;
        let solver = QuadraticUSolver::new(p_mat.clone(), q.clone(), a.clone(), b.clone()).unwrap();
        let problem = LagrangianProblem::new(a.clone(), b.clone(), solver).unwrap();
        let zero = params(0.0, 0.0, lambda);

        let mut state = EngineState::new(Vector::zeros(n + m));
        let mut u_ref: Vector<f64> = Vector::zeros(n);
        let mut v_ref: Vector<f64> = Vector::zeros(m);
        let reference_solver =
            QuadraticUSolver::new(p_mat.clone(), q.clone(), a.clone(), b.clone()).unwrap();
        for _ in 0..30 {
            state = pmm_step(&problem, state, &zero).unwrap();
            let u_next = reference_solver
                .solve(v_ref.view(), u_ref.view(), lambda)
                .unwrap();
            let v_next = &v_ref + &(&a.dot(&u_next) - &b).mapv(|r| r * lambda);
            u_ref = u_next;
            v_ref = v_next;
            let split = PmmState::from_stacked(state.x_curr.view(), n).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(split.u[i], u_ref[i], epsilon = 1e-10);
            }
            for j in 0..m {
                assert_abs_diff_eq!(split.v[j], v_ref[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn kkt_point_is_a_fixed_point_and_feasibility_freezes_the_dual() {
        let mut rng = InstanceRng::new(32);
        let n = 6;
        let m = 3;
        let p_mat = spd_matrix(&mut rng, n);
        let a: Matrix<f64> = rng.normal_matrix(m, n);
        let u_star: Vector<f64> = rng.normal_vector(n);
        let v_star: Vector<f64> = rng.normal_vector(m);
        let q = -(&p_mat.dot(&u_star) + &a.t().dot(&v_star));
        let b = a.dot(&u_star);
        let solver = QuadraticUSolver::new(p_mat, q, a.clone(), b.clone()).unwrap();
        let problem = LagrangianProblem::new(a, b, solver).unwrap();

        let start = PmmState {
            u: u_star.clone(),
            v: v_star.clone(),
        };
        let state = EngineState::new(start.stacked());
        let stepped = pmm_step(&problem, state, &params(0.1, -0.1, 0.9)).unwrap();
        let split = PmmState::from_stacked(stepped.x_curr.view(), 6).unwrap();
        assert!(norm((&split.u - &u_star).view()) <= 1e-8);
        assert!(norm((&split.v - &v_star).view()) <= 1e-8);
    }

    #[test]
    fn saddle_oracle_run_equals_pmm_run() {
        struct QuadraticSaddle {
            solver: QuadraticUSolver<f64>,
            a: Matrix<f64>,
            b: Vector<f64>,
            lambda: f64,
        }

        impl SaddleProx<f64> for QuadraticSaddle {
            fn primal_dim(&self) -> usize {
                self.a.ncols()
            }

            fn dual_dim(&self) -> usize {
                self.a.nrows()
            }

            fn evaluate(
                &self,
                u_hat: ArrayView1<'_, f64>,
                v_hat: ArrayView1<'_, f64>,
            ) -> Result<(Vector<f64>, Vector<f64>), OperatorError> {
                let u = self.solver.solve(v_hat, u_hat, self.lambda)?;
                let v = &v_hat.to_owned() + &(&self.a.dot(&u) - &self.b).mapv(|r| r * self.lambda);
                Ok((u, v))
            }
        }

        let mut rng = InstanceRng::new(33);
        let n = 4;
        let m = 2;
        let p_mat = spd_matrix(&mut rng, n);
        let q: Vector<f64> = rng.normal_vector(n);
        let a: Matrix<f64> = rng.normal_matrix(m, n);
        let b: Vector<f64> = rng.normal_vector(m);
        let lambda = 1.3;
        let inertial = params(0.2, -0.05, lambda);

        let pmm_problem = LagrangianProblem::new(
            a.clone(),
            b.clone(),
            QuadraticUSolver::new(p_mat.clone(), q.clone(), a.clone(), b.clone()).unwrap(),
        )
        .unwrap();
        let oracle = SaddleResolvent::new(QuadraticSaddle {
            solver: QuadraticUSolver::new(p_mat, q, a.clone(), b.clone()).unwrap(),
            a,
            b,
            lambda,
        });

        let mut pmm_state = EngineState::new(Vector::zeros(n + m));
        let mut saddle_state = EngineState::new(Vector::zeros(n + m));
        for _ in 0..25 {
            pmm_state = pmm_step(&pmm_problem, pmm_state, &inertial).unwrap();
            saddle_state = engine::ppa_step(&oracle, saddle_state, &inertial).unwrap();
            for (x, y) in pmm_state.x_curr.iter().zip(saddle_state.x_curr.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_design_reduces_the_subproblem_to_soft_thresholding() {
        let a: Matrix<f64> = Matrix::zeros((3, 4));
        let b = Vector::zeros(3);
        let u_hat = array![2.0, -0.4, 0.1, -3.0];
        let v_hat = Vector::zeros(3);
        let lambda = 0.5;
        let solution =
            solve_bp_subproblem(&a, &b, v_hat.view(), u_hat.view(), lambda, 1e-12, 500).unwrap();
        assert!(solution.converged);
        let expected = soft_threshold(u_hat.view(), lambda).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(solution.point[i], expected[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn restarting_at_the_minimizer_stops_immediately() {
        let mut rng = InstanceRng::new(34);
        let a: Matrix<f64> = rng.normal_matrix(2, 4);
        let b: Vector<f64> = rng.normal_vector(2);
        let lambda = 0.3;
        let v_hat = b.mapv(|x| x * lambda);
        let u_hat = Vector::zeros(4);
        let sol =
            solve_bp_subproblem(&a, &b, v_hat.view(), u_hat.view(), lambda, 1e-10, 2000).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.objective_trace.len(), 1);
        assert_eq!(sol.point, u_hat);
    }

    #[test]
    fn tiny_subproblem_matches_a_plain_proximal_gradient_oracle() {
        let mut rng = InstanceRng::new(35);
        let a: Matrix<f64> = rng.normal_matrix(2, 4);
        let b: Vector<f64> = rng.normal_vector(2);
        let v_hat: Vector<f64> = rng.normal_vector(2);
        let u_hat: Vector<f64> = rng.normal_vector(4);
        let lambda = 0.4;
        let fast =
            solve_bp_subproblem(&a, &b, v_hat.view(), u_hat.view(), lambda, 1e-12, 5000).unwrap();
        assert!(fast.converged);

        let norm_a = crate::linalg::spectral_norm(&a);
        let big_l = lambda * norm_a * norm_a + 1.0 / lambda;
        let tau = 1.0 / big_l;
        let mut w = u_hat.clone();
        for _ in 0..20_000 {
            let grad = &a
                .t()
                .dot(&(&v_hat + &(&a.dot(&w) - &b).mapv(|r| r * lambda)))
                + &(&w - &u_hat).mapv(|d| d / lambda);
            w = soft_threshold((&w - &grad.mapv(|g| g * tau)).view(), tau).unwrap();
        }
        for i in 0..4 {
            assert_abs_diff_eq!(fast.point[i], w[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn inner_objective_trace_is_nonincreasing_on_a_small_instance() {
        let mut rng = InstanceRng::new(36);
        let a: Matrix<f64> = rng.normal_matrix(8, 20);
        let b: Vector<f64> = rng.normal_vector(8);
        let v_hat: Vector<f64> = rng.normal_vector(8);
        let u_hat: Vector<f64> = rng.normal_vector(20);
        let solution =
            solve_bp_subproblem(&a, &b, v_hat.view(), u_hat.view(), 0.05, 1e-10, 2000).unwrap();
        assert!(solution.converged);
        assert!(solution.objective_trace.len() >= 2);
        let slack = 1e-9 * solution.objective_trace[0].abs().max(1.0);
        for pair in solution.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + slack, "objective rose: {pair:?}");
        }
    }

    #[test]
    fn exhausted_budget_returns_a_flagged_result_and_the_adapter_escalates() {
        let mut rng = InstanceRng::new(37);
        let a: Matrix<f64> = rng.normal_matrix(3, 6);
        let b: Vector<f64> = rng.normal_vector(3);
        let v_hat: Vector<f64> = rng.normal_vector(3);
        let u_hat: Vector<f64> = rng.normal_vector(6);
        let starved =
            solve_bp_subproblem(&a, &b, v_hat.view(), u_hat.view(), 0.5, 1e-14, 1).unwrap();
        assert!(!starved.converged);
        assert_eq!(starved.iterations, 1);
        assert!(starved.mapping_norm > 1e-14);

        let solver = BpProxSolver::with_inner_controls(a.clone(), b.clone(), 1e-14, 1).unwrap();
        let err = solver.solve(v_hat.view(), u_hat.view(), 0.5).unwrap_err();
        assert!(matches!(err, OperatorError::InnerSolve { .. }));
    }

    #[test]
    fn run_pmm_produces_a_stacked_record_from_zero() {
        let mut rng = InstanceRng::new(38);
        let n = 30;
        let m = 10;
        let a: Matrix<f64> = rng.normal_matrix(m, n);
        let mut u_true = Vector::zeros(n);
        u_true[3] = 1.5;
        u_true[17] = -0.75;
        let b = a.dot(&u_true);
        let instance = BasisPursuitInstance {
            a,
            b,
            u_true,
            sparsity: 2,
        };
        let config = RunConfig::new(200, 1e-6).unwrap();
        let record = run_pmm_basis_pursuit(&instance, &params(0.1, -0.1, 0.5), &config).unwrap();
        assert_eq!(record.final_point.len(), n + m);
        assert_eq!(record.residuals.len(), record.iterations_used);
        assert!(record.iterations_used >= 1);
    }

    #[test]
    fn lagrangian_problem_rejects_inconsistent_dimensions() {
        let a: Matrix<f64> = Matrix::zeros((2, 3));
        let b = Vector::zeros(5);
        let solver = QuadraticUSolver::new(
            Matrix::zeros((3, 3)),
            Vector::zeros(3),
            Matrix::zeros((2, 3)),
            Vector::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            LagrangianProblem::new(a, b, solver),
            Err(OperatorError::DimensionMismatch {
                expected: 2,
                got: 5
            })
        ));
    }
}
