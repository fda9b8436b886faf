//! Two-step inertial operator-splitting iterations.
//!
//! Three schemes share the engine's extrapolation rule:
//!
//! - primal-dual hybrid gradient (PDHG) on a coupled saddle problem
//!   `min_u max_v f(u) + <K u, v> - g*(v)`, stepping through the two
//!   proximal maps and extrapolating the stacked `(u, v)` pair;
//! - Douglas-Rachford splitting, which extrapolates the governing
//!   sequence of the DR operator;
//! - ADMM for `min f(x) + g(z)` subject to `A x + B z = c`, where the
//!   inertia acts on the dual prediction `eta_hat` instead (with the
//!   first two iterations pinned to `eta_hat = v_hat`), plus a
//!   closed-form specialization to total-variation least squares.

use ndarray::{concatenate, ArrayView1, Axis};

use crate::engine::{self, EngineState, InertialParams, RunConfig, RunRecord, RunStatus};
use crate::linalg::CholeskyFactors;
use crate::operators::{dr_operator, soft_threshold, OperatorError, Resolvent};
use crate::{all_finite, Matrix, Scalar, Vector};

fn as_f64<S: Scalar>(x: S) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// Proximal-map capability `(y, step) -> argmin h(u) + (1/(2 step)) ||u - y||^2`.
pub trait ProxOperator<S: Scalar>: Send + Sync {
    fn prox(&self, point: ArrayView1<'_, S>, step: S) -> Result<Vector<S>, OperatorError>;
}

impl<S, F> ProxOperator<S> for F
where
    S: Scalar,
    F: Fn(ArrayView1<'_, S>, S) -> Result<Vector<S>, OperatorError> + Send + Sync,
{
    fn prox(&self, point: ArrayView1<'_, S>, step: S) -> Result<Vector<S>, OperatorError> {
        self(point, step)
    }
}

/// Coupled saddle problem data for PDHG: proximal maps of `f` and `g`,
/// the coupling matrix `K`, and step sizes `tau`, `sigma` satisfying
/// `tau sigma ||K||^2 < 1`, which makes the implicit PDHG preconditioner
/// positive definite. The product condition is checked at construction
/// with a power-iteration estimate of `||K||`.
pub struct PdhgProblem<S: Scalar> {
    prox_f: Box<dyn ProxOperator<S>>,
    prox_g: Box<dyn ProxOperator<S>>,
    k: Matrix<S>,
    tau: S,
    sigma: S,
}

impl<S: Scalar> std::fmt::Debug for PdhgProblem<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdhgProblem")
            .field("k", &self.k)
            .field("tau", &self.tau)
            .field("sigma", &self.sigma)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> PdhgProblem<S> {
    pub fn new(
        prox_f: Box<dyn ProxOperator<S>>,
        prox_g: Box<dyn ProxOperator<S>>,
        k: Matrix<S>,
        tau: S,
        sigma: S,
    ) -> Result<Self, OperatorError> {
        if !k.iter().all(|x| x.is_finite()) {
            return Err(OperatorError::NonFinite { context: "K" });
        }
        for (name, value) in [("tau", tau), ("sigma", sigma)] {
            if !value.is_finite() || value <= S::zero() {
                return Err(OperatorError::NotPositive {
                    name,
                    value: as_f64(value),
                });
            }
        }
        let norm_k = crate::linalg::spectral_norm(&k);
        let product = tau * sigma * norm_k * norm_k;
        if product >= S::one() {
            return Err(OperatorError::UnstableStepSizes {
                value: as_f64(product),
            });
        }
        Ok(Self {
            prox_f,
            prox_g,
            k,
            tau,
            sigma,
        })
    }

    pub fn primal_dim(&self) -> usize {
        self.k.ncols()
    }

    pub fn dual_dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn tau(&self) -> S {
        self.tau
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn k(&self) -> &Matrix<S> {
        &self.k
    }
}

/// One inertial PDHG step on the stacked `(u, v)` state:
/// `u_{n+1} = prox_f(u_hat - tau K' v_hat, tau)`,
/// `v_{n+1} = prox_g(v_hat + sigma K (2 u_{n+1} - u_hat), sigma)`,
/// then the engine extrapolation produces the next `(u_hat, v_hat)`.
pub fn pdhg_step<S: Scalar>(
    problem: &PdhgProblem<S>,
    state: EngineState<S>,
    params: &InertialParams<S>,
) -> Result<EngineState<S>, engine::EngineError> {
    let n = problem.primal_dim();
    let m = problem.dual_dim();
    if state.x_curr.len() != n + m {
        return Err(engine::EngineError::DimensionMismatch {
            expected: n + m,
            got: state.x_curr.len(),
        });
    }
    engine::step_with(state, params, |y| {
        let u_hat = y.slice(ndarray::s![..n]);
        let v_hat = y.slice(ndarray::s![n..]);
        let pull = problem.k.t().dot(&v_hat);
        let u_arg = &u_hat.to_owned() - &pull.mapv(|x| x * problem.tau);
        let u_next = problem.prox_f.prox(u_arg.view(), problem.tau)?;
        if u_next.len() != n {
            return Err(OperatorError::DimensionMismatch {
                expected: n,
                got: u_next.len(),
            });
        }
        let reflected = &u_next.mapv(|x| x + x) - &u_hat;
        let push = problem.k.dot(&reflected);
        let v_arg = &v_hat.to_owned() + &push.mapv(|x| x * problem.sigma);
        let v_next = problem.prox_g.prox(v_arg.view(), problem.sigma)?;
        if v_next.len() != m {
            return Err(OperatorError::DimensionMismatch {
                expected: m,
                got: v_next.len(),
            });
        }
        Ok(concatenate(Axis(0), &[u_next.view(), v_next.view()])
            .expect("one-dimensional concatenation cannot fail"))
    })
}

/// One inertial Douglas-Rachford step: the DR operator of `(J_A, J_B)`
/// plays the resolvent role and the engine extrapolates its governing
/// sequence.
pub fn dr_step<S: Scalar>(
    j_a: &dyn Resolvent<S>,
    j_b: &dyn Resolvent<S>,
    state: EngineState<S>,
    params: &InertialParams<S>,
) -> Result<EngineState<S>, engine::EngineError> {
    engine::step_with(state, params, |u| dr_operator(u.view(), j_a, j_b))
}

/// Capability solving the ADMM x-update given `(v_hat, z, lambda)`.
pub trait AdmmXSolver<S: Scalar>: Send + Sync {
    fn solve(
        &self,
        v_hat: ArrayView1<'_, S>,
        z: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError>;
}

/// Capability solving the ADMM z-update given `(eta_hat, x, lambda)`.
pub trait AdmmZSolver<S: Scalar>: Send + Sync {
    fn solve(
        &self,
        eta_hat: ArrayView1<'_, S>,
        x: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError>;
}

/// Constraint data and subproblem capabilities for
/// `min f(x) + g(z)` subject to `A x + B z = c`.
pub struct AdmmProblem<S: Scalar> {
    x_subproblem: Box<dyn AdmmXSolver<S>>,
    prox_g_composite: Box<dyn AdmmZSolver<S>>,
    a: Matrix<S>,
    b: Matrix<S>,
    c: Vector<S>,
    lambda: S,
}

impl<S: Scalar> AdmmProblem<S> {
    pub fn new(
        x_subproblem: Box<dyn AdmmXSolver<S>>,
        prox_g_composite: Box<dyn AdmmZSolver<S>>,
        a: Matrix<S>,
        b: Matrix<S>,
        c: Vector<S>,
        lambda: S,
    ) -> Result<Self, OperatorError> {
        if b.nrows() != a.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        if c.len() != a.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: a.nrows(),
                got: c.len(),
            });
        }
        if !lambda.is_finite() || lambda <= S::zero() {
            return Err(OperatorError::NotPositive {
                name: "lambda",
                value: as_f64(lambda),
            });
        }
        Ok(Self {
            x_subproblem,
            prox_g_composite,
            a,
            b,
            c,
            lambda,
        })
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn primal_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn splitting_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn constraint_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// ADMM iterate window: current primal pair, the dual prediction, and
/// the two levels of dual history feeding the inertial rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<S> {
    pub x: Vector<S>,
    pub z: Vector<S>,
    pub v_hat: Vector<S>,
    pub v_hat_prev: Vector<S>,
    pub v_hat_prev2: Vector<S>,
    pub x_prev: Vector<S>,
    pub iter: usize,
}

impl<S: Scalar> AdmmState<S> {
    /// Initial state; the history fields start as copies and are only
    /// read once `iter >= 2`.
    pub fn new(x0: Vector<S>, z0: Vector<S>, v0: Vector<S>) -> Self {
        Self {
            x_prev: x0.clone(),
            x: x0,
            z: z0,
            v_hat_prev: v0.clone(),
            v_hat_prev2: v0.clone(),
            v_hat: v0,
            iter: 0,
        }
    }
}

fn check_admm_dims<S: Scalar>(
    state: &AdmmState<S>,
    primal: usize,
    splitting: usize,
    constraint: usize,
) -> Result<(), OperatorError> {
    let checks = [
        (state.x.len(), primal),
        (state.x_prev.len(), primal),
        (state.z.len(), splitting),
        (state.v_hat.len(), constraint),
        (state.v_hat_prev.len(), constraint),
        (state.v_hat_prev2.len(), constraint),
    ];
    for (got, expected) in checks {
        if got != expected {
            return Err(OperatorError::DimensionMismatch { expected, got });
        }
    }
    Ok(())
}

/// Dual prediction shared by the generic and specialized ADMM steps:
/// `eta_hat = v_hat` for the first two iterations, afterwards
/// `v_hat + theta (v_hat - v_hat_prev + lambda A (x_next - x))
///        + delta (v_hat_prev - v_hat_prev2 + lambda A (x - x_prev))`.
/// Zero-coefficient terms are skipped so baselines reduce bit for bit.
fn admm_eta_hat<S: Scalar>(
    a: &Matrix<S>,
    state: &AdmmState<S>,
    x_next: &Vector<S>,
    params: &InertialParams<S>,
    lambda: S,
) -> Vector<S> {
    if state.iter < 2 {
        return state.v_hat.clone();
    }
    let mut eta = state.v_hat.clone();
    let theta = params.theta();
    if theta != S::zero() {
        let momentum =
            &(&state.v_hat - &state.v_hat_prev) + &a.dot(&(x_next - &state.x)).mapv(|r| r * lambda);
        eta.zip_mut_with(&momentum, |e, &m| *e += theta * m);
    }
    let delta = params.delta();
    if delta != S::zero() {
        let momentum = &(&state.v_hat_prev - &state.v_hat_prev2)
            + &a.dot(&(&state.x - &state.x_prev)).mapv(|r| r * lambda);
        eta.zip_mut_with(&momentum, |e, &m| *e += delta * m);
    }
    eta
}

/// One inertial ADMM step. The proximal parameter is the problem's
/// `lambda`; `params` contributes the inertial weights `theta`, `delta`.
pub fn admm_step<S: Scalar>(
    problem: &AdmmProblem<S>,
    state: AdmmState<S>,
    params: &InertialParams<S>,
) -> Result<AdmmState<S>, OperatorError> {
    check_admm_dims(
        &state,
        problem.primal_dim(),
        problem.splitting_dim(),
        problem.constraint_dim(),
    )?;
    let lambda = problem.lambda;
    let x_next = problem
        .x_subproblem
        .solve(state.v_hat.view(), state.z.view(), lambda)?;
    if x_next.len() != problem.primal_dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: problem.primal_dim(),
            got: x_next.len(),
        });
    }
    let eta_hat = admm_eta_hat(&problem.a, &state, &x_next, params, lambda);
    let z_next = problem
        .prox_g_composite
        .solve(eta_hat.view(), x_next.view(), lambda)?;
    if z_next.len() != problem.splitting_dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: problem.splitting_dim(),
            got: z_next.len(),
        });
    }
    let mut residual = problem.a.dot(&x_next);
    residual.zip_mut_with(&problem.b.dot(&z_next), |r, &bz| *r += bz);
    residual.zip_mut_with(&problem.c, |r, &c_i| *r -= c_i);
    let v_next = &eta_hat + &residual.mapv(|r| r * lambda);
    Ok(AdmmState {
        x_prev: state.x,
        x: x_next,
        z: z_next,
        v_hat_prev2: state.v_hat_prev,
        v_hat_prev: state.v_hat,
        v_hat: v_next,
        iter: state.iter + 1,
    })
}

/// A planted total-variation least-squares instance
/// `min (1/2) ||F x - b||^2 + gamma ||D x||_1` with `F` of shape `p x N`
/// and `D` the `(N-1) x N` first-difference matrix.
#[derive(Debug, Clone)]
pub struct TvLsInstance<S> {
    pub f: Matrix<S>,
    pub b: Vector<S>,
    pub d: Matrix<S>,
    pub gamma: S,
    pub x_true: Vector<S>,
}

impl<S: Scalar> TvLsInstance<S> {
    pub fn signal_dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn difference_dim(&self) -> usize {
        self.d.nrows()
    }
}

/// Cached Cholesky factorization of `F'F + lambda D'D` plus the constant
/// right-hand-side contribution `F'b`, valid for one `lambda`.
pub struct TvFactorization<S> {
    factors: CholeskyFactors<S>,
    ftb: Vector<S>,
    lambda: S,
}

impl<S: Scalar> TvFactorization<S> {
    pub fn new(instance: &TvLsInstance<S>, lambda: S) -> Result<Self, OperatorError> {
        if !lambda.is_finite() || lambda <= S::zero() {
            return Err(OperatorError::NotPositive {
                name: "lambda",
                value: as_f64(lambda),
            });
        }
        if instance.d.ncols() != instance.f.ncols() {
            return Err(OperatorError::DimensionMismatch {
                expected: instance.f.ncols(),
                got: instance.d.ncols(),
            });
        }
        if instance.b.len() != instance.f.nrows() {
            return Err(OperatorError::DimensionMismatch {
                expected: instance.f.nrows(),
                got: instance.b.len(),
            });
        }
        let gram = &instance.f.t().dot(&instance.f)
            + &instance.d.t().dot(&instance.d).mapv(|x| x * lambda);
        let factors = CholeskyFactors::new(&gram)?;
        let ftb = instance.f.t().dot(&instance.b);
        Ok(Self {
            factors,
            ftb,
            lambda,
        })
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    /// Solves the x-update system for the given `(v_hat, z)`:
    /// `(F'F + lambda D'D) x = D'(lambda z - v_hat) + F'b`.
    pub fn solve_x(
        &self,
        d: &Matrix<S>,
        v_hat: ArrayView1<'_, S>,
        z: ArrayView1<'_, S>,
    ) -> Vector<S> {
        let shifted = &z.to_owned().mapv(|x| x * self.lambda) - &v_hat;
        let rhs = &d.t().dot(&shifted) + &self.ftb;
        self.factors.solve(rhs.view())
    }
}

/// One inertial TV-ADMM step, the closed-form specialization of
/// [`admm_step`] with `A = D`, `B = -I`, `c = 0`:
/// x from the cached solve, `z = soft_threshold(D x + eta_hat / lambda,
/// gamma / lambda)`, and `v_hat = eta_hat + lambda (D x - z)`.
pub fn tv_admm_step<S: Scalar>(
    instance: &TvLsInstance<S>,
    state: AdmmState<S>,
    params: &InertialParams<S>,
    cached_factorization: &TvFactorization<S>,
) -> Result<AdmmState<S>, OperatorError> {
    let lambda = params.lambda();
    if cached_factorization.lambda != lambda {
        return Err(OperatorError::StaleFactorization {
            cached: as_f64(cached_factorization.lambda),
            requested: as_f64(lambda),
        });
    }
    let n = instance.signal_dim();
    let m = instance.difference_dim();
    check_admm_dims(&state, n, m, m)?;
    let x_next = cached_factorization.solve_x(&instance.d, state.v_hat.view(), state.z.view());
    let eta_hat = admm_eta_hat(&instance.d, &state, &x_next, params, lambda);
    let dx_next = instance.d.dot(&x_next);
    let inv_lambda = S::one() / lambda;
    let z_arg = &dx_next + &eta_hat.mapv(|e| e * inv_lambda);
    let z_next = soft_threshold(z_arg.view(), instance.gamma / lambda)?;
    let v_next = &eta_hat + &(&dx_next - &z_next).mapv(|r| r * lambda);
    Ok(AdmmState {
        x_prev: state.x,
        x: x_next,
        z: z_next,
        v_hat_prev2: state.v_hat_prev,
        v_hat_prev: state.v_hat,
        v_hat: v_next,
        iter: state.iter + 1,
    })
}

/// x-update capability matching the TV specialization, for driving the
/// generic [`admm_step`] on a [`TvLsInstance`].
pub struct TvLsXSolver<S> {
    d: Matrix<S>,
    cache: TvFactorization<S>,
}

impl<S: Scalar> TvLsXSolver<S> {
    pub fn new(instance: &TvLsInstance<S>, lambda: S) -> Result<Self, OperatorError> {
        Ok(Self {
            d: instance.d.clone(),
            cache: TvFactorization::new(instance, lambda)?,
        })
    }
}

impl<S: Scalar> AdmmXSolver<S> for TvLsXSolver<S> {
    fn solve(
        &self,
        v_hat: ArrayView1<'_, S>,
        z: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError> {
        if self.cache.lambda != lambda {
            return Err(OperatorError::StaleFactorization {
                cached: as_f64(self.cache.lambda),
                requested: as_f64(lambda),
            });
        }
        Ok(self.cache.solve_x(&self.d, v_hat, z))
    }
}

/// z-update capability matching the TV specialization:
/// `soft_threshold(D x + eta_hat / lambda, gamma / lambda)`.
pub struct TvLsZSolver<S> {
    d: Matrix<S>,
    gamma: S,
}

impl<S: Scalar> TvLsZSolver<S> {
    pub fn new(instance: &TvLsInstance<S>) -> Self {
        Self {
            d: instance.d.clone(),
            gamma: instance.gamma,
        }
    }
}

impl<S: Scalar> AdmmZSolver<S> for TvLsZSolver<S> {
    fn solve(
        &self,
        eta_hat: ArrayView1<'_, S>,
        x: ArrayView1<'_, S>,
        lambda: S,
    ) -> Result<Vector<S>, OperatorError> {
        let inv_lambda = S::one() / lambda;
        let arg = &self.d.dot(&x) + &eta_hat.to_owned().mapv(|e| e * inv_lambda);
        soft_threshold(arg.view(), self.gamma / lambda)
    }
}

/// Assembles the generic [`AdmmProblem`] whose steps the TV
/// specialization must reproduce.
pub fn tv_admm_problem<S: Scalar>(
    instance: &TvLsInstance<S>,
    lambda: S,
) -> Result<AdmmProblem<S>, OperatorError> {
    let m = instance.difference_dim();
    let mut minus_identity: Matrix<S> = Matrix::eye(m);
    minus_identity.mapv_inplace(|x| -x);
    AdmmProblem::new(
        Box::new(TvLsXSolver::new(instance, lambda)?),
        Box::new(TvLsZSolver::new(instance)),
        instance.d.clone(),
        minus_identity,
        Vector::zeros(m),
        lambda,
    )
}

/// Full inertial TV-ADMM run from `x = z = v_hat = 0`, recording the
/// squared consensus residual `D_n = ||D x_n - z_n||^2` per iteration
/// and stopping when it reaches `config.tol`.
///
/// The configured stop metric is ignored: this driver's residual is
/// pinned to the squared consensus norm. Lyapunov recording is not
/// available for ADMM runs.
pub fn run_tv_admm<S: Scalar>(
    instance: &TvLsInstance<S>,
    params: &InertialParams<S>,
    config: &RunConfig<S>,
) -> Result<RunRecord<S>, engine::EngineError> {
    if config.record_lyapunov_target().is_some() {
        return Err(engine::EngineError::UnsupportedConfig {
            what: "Lyapunov recording applies to resolvent-engine runs, not ADMM",
        });
    }
    let cache = TvFactorization::new(instance, params.lambda())?;
    let n = instance.signal_dim();
    let m = instance.difference_dim();
    let mut state = AdmmState::new(Vector::zeros(n), Vector::zeros(m), Vector::zeros(m));
    let start = std::time::Instant::now();
    let mut residuals = Vec::new();
    let mut iterates = config
        .record_iterates_enabled()
        .then(|| vec![state.x.clone()]);
    let mut status = RunStatus::MaxIterReached;
    for _ in 0..config.max_iter() {
        state = tv_admm_step(instance, state, params, &cache)?;
        let consensus = &instance.d.dot(&state.x) - &state.z;
        let metric = consensus.dot(&consensus);
        residuals.push(metric);
        if let Some(iterates) = &mut iterates {
            iterates.push(state.x.clone());
        }
        if !metric.is_finite() || !all_finite(&state.x) {
            status = RunStatus::Diverged;
            break;
        }
        if metric <= config.tol() {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(RunRecord {
        iterations_used: residuals.len(),
        residuals,
        status,
        wall_time: start.elapsed(),
        final_point: state.x,
        lyapunov: None,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm;
    use crate::operators::SubspaceProjector;
    use crate::rng::InstanceRng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn params(theta: f64, delta: f64, lambda: f64) -> InertialParams<f64> {
        InertialParams::new(theta, delta, lambda).unwrap()
    }

    fn identity_prox() -> Box<dyn ProxOperator<f64>> {
        Box::new(|y: ArrayView1<'_, f64>, _s: f64| Ok(y.to_owned()))
    }

    fn shifted_quadratic_prox(center: Vector<f64>) -> Box<dyn ProxOperator<f64>> {
        Box::new(move |y: ArrayView1<'_, f64>, s: f64| {
            Ok((&y.to_owned() + &center.mapv(|c| c * s)).mapv(|v| v / (1.0 + s)))
        })
    }

    #[test]
    fn pdhg_construction_enforces_the_step_size_product() {
        let k = array![[2.0]];
        assert!(PdhgProblem::new(identity_prox(), identity_prox(), k.clone(), 0.4, 0.4).is_ok());
        let err = PdhgProblem::new(identity_prox(), identity_prox(), k, 0.5, 0.5).unwrap_err();
        assert!(matches!(err, OperatorError::UnstableStepSizes { .. }));
    }

    #[test]
    fn pdhg_preconditioner_is_positive_definite_whenever_construction_succeeds() {
        let cases = [
            (array![[1.5]], 0.3, 0.9),
            (array![[1.0, -2.0], [0.5, 0.25]], 0.2, 0.8),
        ];
        for (k, tau, sigma) in cases {
            let problem =
                PdhgProblem::new(identity_prox(), identity_prox(), k.clone(), tau, sigma).unwrap();
            let n = problem.primal_dim();
            let m = problem.dual_dim();
            let mut block: Matrix<f64> = Matrix::zeros((n + m, n + m));
            for i in 0..n {
                block[[i, i]] = 1.0 / tau;
            }
            for j in 0..m {
                block[[n + j, n + j]] = 1.0 / sigma;
            }
            for i in 0..n {
                for j in 0..m {
                    block[[i, n + j]] = -k[[j, i]];
                    block[[n + j, i]] = -k[[j, i]];
                }
            }
            assert!(crate::linalg::CholeskyFactors::new(&block).is_ok());
        }
        let too_big = array![[1.0]];
        let block = array![[1.0, -1.0], [-1.0, 1.0]];
        assert!(PdhgProblem::new(identity_prox(), identity_prox(), too_big, 1.0, 1.0).is_err());
        assert!(crate::linalg::CholeskyFactors::new(&block).is_err());
    }

    #[test]
    fn zero_coupling_decouples_the_two_prox_iterations() {
        let k: Matrix<f64> = Matrix::zeros((2, 2));
        let problem = PdhgProblem::new(
            shifted_quadratic_prox(array![1.0, 2.0]),
            shifted_quadratic_prox(array![-3.0, 4.0]),
            k,
            0.5,
            0.5,
        )
        .unwrap();
        let state = EngineState::new(array![0.0, 0.0, 0.0, 0.0]);
        let next = pdhg_step(&problem, state, &params(0.0, 0.0, 1.0)).unwrap();
        for (i, expected) in [1.0, 2.0, -3.0, 4.0].iter().enumerate() {
            assert_abs_diff_eq!(next.x_curr[i], expected * 0.5 / 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn plain_pdhg_matches_a_hand_rolled_reference() {
        let k = array![[0.8, -0.3], [0.2, 0.5]];
        let tau = 0.6;
        let sigma = 0.7;
        let problem =
            PdhgProblem::new(identity_prox(), identity_prox(), k.clone(), tau, sigma).unwrap();
        let zero = params(0.0, 0.0, 1.0);

        let mut state = EngineState::new(array![0.3, -0.4, 0.1, 0.9]);
        let mut u = array![0.3, -0.4];
        let mut v = array![0.1, 0.9];
        for _ in 0..12 {
            state = pdhg_step(&problem, state, &zero).unwrap();
            let u_next = &u - &k.t().dot(&v).mapv(|x| x * tau);
            let v_next = &v + &k.dot(&(&u_next.mapv(|x| 2.0 * x) - &u)).mapv(|x| x * sigma);
            u = u_next;
            v = v_next;
            for i in 0..2 {
                assert_abs_diff_eq!(state.x_curr[i], u[i], epsilon = 1e-12);
                assert_abs_diff_eq!(state.x_curr[2 + i], v[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pdhg_saddle_point_is_a_fixed_point() {
        let k = array![[0.7, 0.1], [-0.2, 0.4]];
        let mut rng = InstanceRng::new(55);
        let u_star: Vector<f64> = rng.normal_vector(2);
        let v_star: Vector<f64> = rng.normal_vector(2);
        let a_center = &u_star + &k.t().dot(&v_star);
        let c_center = &v_star - &k.dot(&u_star);
        assert!(norm((&(&u_star - &a_center) + &k.t().dot(&v_star)).view()) < 1e-12);
        assert!(norm((&(&v_star - &c_center) - &k.dot(&u_star)).view()) < 1e-12);

        let problem = PdhgProblem::new(
            shifted_quadratic_prox(a_center),
            shifted_quadratic_prox(c_center),
            k,
            0.5,
            0.6,
        )
        .unwrap();
        let stacked = concatenate(Axis(0), &[u_star.view(), v_star.view()]).unwrap();
        let mut state = EngineState::new(stacked.clone());
        for _ in 0..5 {
            state = pdhg_step(&problem, state, &params(0.1, -0.05, 1.0)).unwrap();
        }
        assert!(norm((&state.x_curr - &stacked).view()) <= 1e-8);
    }

    #[test]
    fn dr_step_governing_sequence_reaches_the_subspace_intersection() {
        let angle = std::f64::consts::FRAC_PI_4;
        let p1 = SubspaceProjector::new(&[array![1.0, 0.0]]).unwrap();
        let p2 = SubspaceProjector::new(&[array![angle.cos(), angle.sin()]]).unwrap();
        let mut state = EngineState::new(array![1.0, 0.0]);
        let p = params(0.1, -0.05, 1.0);
        for _ in 0..200 {
            state = dr_step(&p1, &p2, state, &p).unwrap();
        }
        let shadow = p2.evaluate(state.x_curr.view()).unwrap();
        assert!(norm(shadow.view()) <= 1e-6, "shadow {shadow}");
    }

    #[test]
    fn dr_fixed_point_is_stationary() {
        let p1 = SubspaceProjector::new(&[array![1.0, 0.0]]).unwrap();
        let p2 = SubspaceProjector::new(&[array![0.0, 1.0]]).unwrap();
        let mut state = EngineState::new(array![0.0, 0.0]);
        for _ in 0..3 {
            state = dr_step(&p1, &p2, state, &params(0.2, -0.1, 1.0)).unwrap();
            assert_eq!(state.x_curr, array![0.0, 0.0]);
        }
    }

    fn tiny_instance(rng: &mut InstanceRng, n: usize, p: usize, gamma: f64) -> TvLsInstance<f64> {
        let f: Matrix<f64> = rng.normal_matrix(p, n);
        let x_true: Vector<f64> = rng.normal_vector(n);
        let b = f.dot(&x_true);
        TvLsInstance {
            f,
            b,
            d: crate::bench::difference_matrix(n).unwrap(),
            gamma,
            x_true,
        }
    }

    #[test]
    fn plain_admm_matches_a_hand_rolled_reference_on_tv() {
        let mut rng = InstanceRng::new(61);
        let instance = tiny_instance(&mut rng, 8, 3, 0.05);
        let lambda = 0.4;
        let problem = tv_admm_problem(&instance, lambda).unwrap();
        let zero = params(0.0, 0.0, lambda);

        let chol = CholeskyFactors::new(
            &(&instance.f.t().dot(&instance.f)
                + &instance.d.t().dot(&instance.d).mapv(|x| x * lambda)),
        )
        .unwrap();
        let ftb = instance.f.t().dot(&instance.b);
        let mut x = Vector::<f64>::zeros(8);
        let mut z = Vector::<f64>::zeros(7);
        let mut v = Vector::<f64>::zeros(7);
        let mut state = AdmmState::new(x.clone(), z.clone(), v.clone());
        for _ in 0..30 {
            state = admm_step(&problem, state, &zero).unwrap();
            let rhs = &instance.d.t().dot(&(&z.mapv(|zi| zi * lambda) - &v)) + &ftb;
            x = chol.solve(rhs.view());
            z = soft_threshold(
                (&instance.d.dot(&x) + &v.mapv(|vi| vi / lambda)).view(),
                instance.gamma / lambda,
            )
            .unwrap();
            v = &v + &(&instance.d.dot(&x) - &z).mapv(|r| r * lambda);
            assert!(norm((&state.x - &x).view()) <= 1e-10);
            assert!(norm((&state.z - &z).view()) <= 1e-10);
            assert!(norm((&state.v_hat - &v).view()) <= 1e-10);
        }
    }

    #[test]
    fn first_two_iterations_pin_the_dual_prediction() {
        let mut rng = InstanceRng::new(62);
        let instance = tiny_instance(&mut rng, 6, 2, 0.1);
        let lambda = 0.3;
        let cache = TvFactorization::new(&instance, lambda).unwrap();
        let inertial = params(0.3, -0.02, lambda);
        let plain = params(0.0, 0.0, lambda);

        let s0 = AdmmState::new(Vector::zeros(6), Vector::zeros(5), Vector::zeros(5));
        let s0_plain = s0.clone();
        let s1 = tv_admm_step(&instance, s0, &inertial, &cache).unwrap();
        let s1_plain = tv_admm_step(&instance, s0_plain, &plain, &cache).unwrap();
        assert_eq!(s1, s1_plain);
        let s2 = tv_admm_step(&instance, s1.clone(), &inertial, &cache).unwrap();
        let s2_plain = tv_admm_step(&instance, s1, &plain, &cache).unwrap();
        assert_eq!(s2, s2_plain);
        let s3 = tv_admm_step(&instance, s2.clone(), &inertial, &cache).unwrap();
        let s3_plain = tv_admm_step(&instance, s2, &plain, &cache).unwrap();
        assert_ne!(s3, s3_plain);
    }

    #[test]
    fn admm_dual_update_identity_holds_exactly() {
        let mut rng = InstanceRng::new(63);
        let instance = tiny_instance(&mut rng, 7, 3, 0.08);
        let lambda = 0.25;
        let problem = tv_admm_problem(&instance, lambda).unwrap();
        let inertial = params(0.15, -0.05, lambda);
        let mut state = AdmmState::new(
            rng.normal_vector(7),
            rng.normal_vector(6),
            rng.normal_vector(6),
        );
        for _ in 0..5 {
            let before = state.clone();
            state = admm_step(&problem, state, &inertial).unwrap();
            let x_next = &state.x;
            let eta_hat = admm_eta_hat(&instance.d, &before, x_next, &inertial, lambda);
            let mut residual = instance.d.dot(x_next);
            residual.zip_mut_with(&state.z, |r, &z_i| *r -= z_i);
            let expected = &eta_hat + &residual.mapv(|r| r * lambda);
            assert_eq!(state.v_hat, expected);
        }
    }

    #[test]
    fn specialized_and_generic_steps_agree() {
        let mut rng = InstanceRng::new(64);
        let instance = tiny_instance(&mut rng, 10, 4, 0.12);
        let lambda = 0.5;
        let cache = TvFactorization::new(&instance, lambda).unwrap();
        let problem = tv_admm_problem(&instance, lambda).unwrap();
        let inertial = params(0.1, -0.01, lambda);

        let mut fast = AdmmState::new(Vector::zeros(10), Vector::zeros(9), Vector::zeros(9));
        let mut generic = fast.clone();
        for _ in 0..50 {
            fast = tv_admm_step(&instance, fast, &inertial, &cache).unwrap();
            generic = admm_step(&problem, generic, &inertial).unwrap();
            assert!(norm((&fast.x - &generic.x).view()) <= 1e-12);
            assert!(norm((&fast.z - &generic.z).view()) <= 1e-12);
            assert!(norm((&fast.v_hat - &generic.v_hat).view()) <= 1e-12);
        }
    }

    #[test]
    fn zero_gamma_makes_the_splitting_exact() {
        let mut rng = InstanceRng::new(65);
        let mut instance = tiny_instance(&mut rng, 5, 2, 0.0);
        instance.gamma = 0.0;
        let lambda = 0.7;
        let cache = TvFactorization::new(&instance, lambda).unwrap();
        let x0: Vector<f64> = rng.normal_vector(5);
        let z0: Vector<f64> = rng.normal_vector(4);
        let v0: Vector<f64> = rng.normal_vector(4);
        let state = AdmmState::new(x0, z0, v0.clone());
        let next = tv_admm_step(&instance, state, &params(0.1, -0.1, lambda), &cache).unwrap();
        let dx = instance.d.dot(&next.x);
        let inv_lambda = 1.0 / lambda;
        let expected = &dx + &v0.mapv(|v| v * inv_lambda);
        assert_eq!(next.z, expected);
    }

    #[test]
    fn constant_signal_truth_is_stationary_under_warm_start() {
        let mut rng = InstanceRng::new(66);
        let n = 8;
        let f: Matrix<f64> = rng.normal_matrix(3, n);
        let x_true = Vector::from_elem(n, 1.25);
        let b = f.dot(&x_true);
        let instance = TvLsInstance {
            f,
            b,
            d: crate::bench::difference_matrix(n).unwrap(),
            gamma: 0.05,
            x_true: x_true.clone(),
        };
        let lambda = 0.6;
        let cache = TvFactorization::new(&instance, lambda).unwrap();
        let mut state = AdmmState::new(x_true.clone(), Vector::zeros(n - 1), Vector::zeros(n - 1));
        for _ in 0..4 {
            state = tv_admm_step(&instance, state, &params(0.2, -0.1, lambda), &cache).unwrap();
            assert!(norm((&state.x - &x_true).view()) <= 1e-8);
            assert!(norm(state.z.view()) <= 1e-8);
            assert!(norm(state.v_hat.view()) <= 1e-8);
        }
    }

    #[test]
    fn stale_factorization_is_rejected() {
        let mut rng = InstanceRng::new(67);
        let instance = tiny_instance(&mut rng, 5, 2, 0.1);
        let cache = TvFactorization::new(&instance, 0.5).unwrap();
        let state = AdmmState::new(Vector::zeros(5), Vector::zeros(4), Vector::zeros(4));
        let err = tv_admm_step(&instance, state, &params(0.1, 0.0, 0.25), &cache).unwrap_err();
        assert!(matches!(err, OperatorError::StaleFactorization { .. }));
    }

    #[test]
    fn run_tv_admm_records_the_squared_consensus_residual() {
        let mut rng = InstanceRng::new(68);
        let instance = tiny_instance(&mut rng, 12, 4, 0.02);
        let config = RunConfig::new(400, 1e-9).unwrap();
        let record = run_tv_admm(&instance, &params(0.1, -0.001, 0.5), &config).unwrap();
        assert_eq!(record.status, RunStatus::Converged);
        assert_eq!(record.residuals.len(), record.iterations_used);
        let last = *record.residuals.last().unwrap();
        assert!(last <= 1e-9);
        assert!(record.residuals.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn plain_and_one_step_tv_admm_also_converge() {
        let mut rng = InstanceRng::new(69);
        let instance = tiny_instance(&mut rng, 12, 4, 0.02);
        let config = RunConfig::new(5000, 1e-9).unwrap();
        for p in [params(0.0, 0.0, 0.5), params(0.1, 0.0, 0.5)] {
            let record = run_tv_admm(&instance, &p, &config).unwrap();
            assert_eq!(record.status, RunStatus::Converged);
        }
    }

    #[test]
    fn run_tv_admm_refuses_lyapunov_recording() {
        let mut rng = InstanceRng::new(70);
        let instance = tiny_instance(&mut rng, 5, 2, 0.1);
        let config = RunConfig::new(10, 1e-6)
            .unwrap()
            .with_record_lyapunov(Vector::zeros(5));
        assert!(matches!(
            run_tv_admm(&instance, &params(0.1, 0.0, 0.5), &config),
            Err(engine::EngineError::UnsupportedConfig { .. })
        ));
    }
}
