//! The two-step inertial proximal point iteration and its certificates.
//!
//! Given a resolvent `J = (I + lambda A)^{-1}` of a maximal monotone
//! operator `A`, the engine iterates
//!
//! ```text
//! y_n     = x_n + theta (x_n - x_{n-1}) + delta (x_{n-1} - x_{n-2})
//! x_{n+1} = (1 - rho) y_n + rho J(y_n)
//! ```
//!
//! from `x_0 = x_{-1} = x_{-2}`. Convergence is guaranteed on the
//! parameter region `0 <= theta < 1/3`, `(3 theta - 1)/(3 + 4 theta) <
//! delta <= 0`; [`validate_params`] enforces exactly that region and
//! [`coefficients`] exposes the constants `c1`, `c2` whose positivity
//! drives the Lyapunov and rate certificates.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::operators::{OperatorError, Resolvent};
use crate::{all_finite, dist_sq, norm, real, Scalar, Vector};

/// Rejection reasons for iteration parameters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("theta must be >= 0, got {theta}")]
    ThetaNegative { theta: f64 },
    #[error("theta must be < 1/3, got {theta}")]
    ThetaTooLarge { theta: f64 },
    #[error("delta must be <= 0, got {delta}")]
    DeltaPositive { delta: f64 },
    #[error("delta below lower bound: delta = {delta} but delta must exceed (3*theta - 1)/(3 + 4*theta) = {bound}")]
    DeltaBelowLowerBound { delta: f64, bound: f64 },
    #[error("lambda must be > 0, got {lambda}")]
    LambdaNotPositive { lambda: f64 },
    #[error("rho must lie in (0, 1], got {rho}")]
    RhoOutOfRange { rho: f64 },
    #[error("parameters must be finite")]
    NonFinite,
}

/// Engine-level failures.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("initial point must be finite")]
    NonFiniteInput,
    #[error("max_iter must be at least 1")]
    ZeroMaxIter,
    #[error("tol must be positive and finite, got {tol}")]
    NonPositiveTol { tol: f64 },
    #[error("certificates require rho = 1, got {rho}")]
    RhoNotOne { rho: f64 },
    #[error("rate bound is defined for n >= 2, got {n}")]
    RateBoundIndex { n: usize },
    #[error("unsupported configuration: {what}")]
    UnsupportedConfig { what: &'static str },
    #[error("rate bound undefined: c2 = {c2} is not positive")]
    NonPositiveC2 { c2: f64 },
}

fn as_f64<S: Scalar>(x: S) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// Lower end of the admissible `delta` interval for the given `theta`:
/// `(3 theta - 1) / (3 + 4 theta)`. The interval is open at this value.
pub fn delta_lower_bound<S: Scalar>(theta: S) -> S {
    let three = real::<S>(3.0);
    let four = real::<S>(4.0);
    (three * theta - S::one()) / (three + four * theta)
}

/// Checks `(theta, delta)` against the convergence region and `lambda > 0`.
pub fn validate_params<S: Scalar>(theta: S, delta: S, lambda: S) -> Result<(), ParamError> {
    if !theta.is_finite() || !delta.is_finite() || !lambda.is_finite() {
        return Err(ParamError::NonFinite);
    }
    if theta < S::zero() {
        return Err(ParamError::ThetaNegative {
            theta: as_f64(theta),
        });
    }
    let third = S::one() / real::<S>(3.0);
    if theta >= third {
        return Err(ParamError::ThetaTooLarge {
            theta: as_f64(theta),
        });
    }
    if delta > S::zero() {
        return Err(ParamError::DeltaPositive {
            delta: as_f64(delta),
        });
    }
    let bound = delta_lower_bound(theta);
    if delta <= bound {
        return Err(ParamError::DeltaBelowLowerBound {
            delta: as_f64(delta),
            bound: as_f64(bound),
        });
    }
    if lambda <= S::zero() {
        return Err(ParamError::LambdaNotPositive {
            lambda: as_f64(lambda),
        });
    }
    Ok(())
}

/// Validated iteration parameters.
///
/// `theta` and `delta` are the two inertial weights, `lambda` the
/// resolvent parameter, and `rho` an optional relaxation in `(0, 1]`
/// (default 1, meaning no relaxation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams<S> {
    theta: S,
    delta: S,
    lambda: S,
    rho: S,
}

impl<S: Scalar> InertialParams<S> {
    /// Builds parameters with `rho = 1`, rejecting anything outside the
    /// convergence region.
    pub fn new(theta: S, delta: S, lambda: S) -> Result<Self, ParamError> {
        validate_params(theta, delta, lambda)?;
        Ok(Self {
            theta,
            delta,
            lambda,
            rho: S::one(),
        })
    }

    /// Replaces the relaxation factor, requiring `rho` in `(0, 1]`.
    pub fn with_rho(mut self, rho: S) -> Result<Self, ParamError> {
        if !rho.is_finite() || rho <= S::zero() || rho > S::one() {
            return Err(ParamError::RhoOutOfRange { rho: as_f64(rho) });
        }
        self.rho = rho;
        Ok(self)
    }

    /// Builds parameters without region validation.
    ///
    /// Intended for demonstrating certificate failure outside the
    /// region; every convergence guarantee is void for such parameters.
    pub fn new_unchecked(theta: S, delta: S, lambda: S) -> Self {
        Self {
            theta,
            delta,
            lambda,
            rho: S::one(),
        }
    }

    pub fn theta(&self) -> S {
        self.theta
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn rho(&self) -> S {
        self.rho
    }
}

/// The constants of the convergence analysis:
/// `c1 = -(3 theta - 1 + (1 + theta)(|delta| - delta))` and
/// `c2 = 1 - 3 theta - 2|delta| - 2 theta |delta| + 2 theta delta + delta`.
/// Both are strictly positive on the interior of the admissible region;
/// `c2` hits zero exactly at the open `delta` boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients<S> {
    pub c1: S,
    pub c2: S,
}

impl<S: Scalar> Coefficients<S> {
    /// Evaluates the defining formulas without any region check.
    pub fn evaluate(theta: S, delta: S) -> Self {
        let one = S::one();
        let two = real::<S>(2.0);
        let three = real::<S>(3.0);
        let abs_delta = delta.abs();
        let c1 = -(three * theta - one + (one + theta) * (abs_delta - delta));
        let c2 = one - three * theta - two * abs_delta - two * theta * abs_delta
            + two * theta * delta
            + delta;
        Self { c1, c2 }
    }
}

/// Coefficients for validated parameters.
pub fn coefficients<S: Scalar>(params: &InertialParams<S>) -> Coefficients<S> {
    Coefficients::evaluate(params.theta, params.delta)
}

/// The engine's three-iterate window plus the current extrapolated point.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState<S> {
    pub x_prev2: Vector<S>,
    pub x_prev: Vector<S>,
    pub x_curr: Vector<S>,
    pub y_curr: Vector<S>,
    pub iter: usize,
}

impl<S: Scalar> EngineState<S> {
    /// Initial window with `x_0 = x_{-1} = x_{-2}`, which makes the
    /// first extrapolated point equal `x_0` for any parameters.
    pub fn new(x0: Vector<S>) -> Self {
        Self {
            x_prev2: x0.clone(),
            x_prev: x0.clone(),
            y_curr: x0.clone(),
            x_curr: x0,
            iter: 0,
        }
    }
}

/// Computes `x + theta (x - x_prev) + delta (x_prev - x_prev2)`.
///
/// Terms with a zero coefficient are skipped entirely, so setting
/// `theta = 0` or `delta = 0` reproduces the lower-order schemes bit for
/// bit rather than up to rounding.
pub fn inertial_extrapolate<S: Scalar>(
    x: &Vector<S>,
    x_prev: &Vector<S>,
    x_prev2: &Vector<S>,
    params: &InertialParams<S>,
) -> Result<Vector<S>, EngineError> {
    for earlier in [x_prev, x_prev2] {
        if earlier.len() != x.len() {
            return Err(EngineError::DimensionMismatch {
                expected: x.len(),
                got: earlier.len(),
            });
        }
    }
    let mut y = x.clone();
    let theta = params.theta;
    if theta != S::zero() {
        ndarray::Zip::from(&mut y)
            .and(x)
            .and(x_prev)
            .for_each(|y_i, &x_i, &p_i| *y_i += theta * (x_i - p_i));
    }
    let delta = params.delta;
    if delta != S::zero() {
        ndarray::Zip::from(&mut y)
            .and(x_prev)
            .and(x_prev2)
            .for_each(|y_i, &p_i, &q_i| *y_i += delta * (p_i - q_i));
    }
    Ok(y)
}

/// One inertial step around an arbitrary vector-to-vector map.
///
/// Shared by the resolvent engine and the splitting-module steps, which
/// differ only in what plays the role of `J`.
pub(crate) fn step_with<S, F>(
    state: EngineState<S>,
    params: &InertialParams<S>,
    apply: F,
) -> Result<EngineState<S>, EngineError>
where
    S: Scalar,
    F: FnOnce(&Vector<S>) -> Result<Vector<S>, OperatorError>,
{
    let mapped = apply(&state.y_curr)?;
    let x_next = if params.rho == S::one() {
        mapped
    } else {
        let kept = S::one() - params.rho;
        let mut combined = &state.y_curr * kept;
        combined.scaled_add(params.rho, &mapped);
        combined
    };
    let y_next = inertial_extrapolate(&x_next, &state.x_curr, &state.x_prev, params)?;
    Ok(EngineState {
        x_prev2: state.x_prev,
        x_prev: state.x_curr,
        x_curr: x_next,
        y_curr: y_next,
        iter: state.iter + 1,
    })
}

/// Advances the iteration by one resolvent application.
pub fn ppa_step<S: Scalar, R: Resolvent<S> + ?Sized>(
    resolvent: &R,
    state: EngineState<S>,
    params: &InertialParams<S>,
) -> Result<EngineState<S>, EngineError> {
    step_with(state, params, |y| resolvent.evaluate(y.view()))
}

/// Caller-supplied residual function for [`StopMetric::Custom`].
pub type MetricFn<S> = Arc<dyn Fn(&EngineState<S>) -> S + Send + Sync>;

/// Residual measured after each step to decide termination.
#[derive(Clone)]
pub enum StopMetric<S> {
    /// `||x_{n+1} - y_n||`, the quantity the rate bound controls.
    ExtrapolationResidual,
    /// `||x_{n+1} - x_n||`.
    StepNorm,
    /// Caller-supplied residual of the post-step state.
    Custom(MetricFn<S>),
}

impl<S> fmt::Debug for StopMetric<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopMetric::ExtrapolationResidual => f.write_str("ExtrapolationResidual"),
            StopMetric::StepNorm => f.write_str("StepNorm"),
            StopMetric::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIterReached,
    Diverged,
}

/// Run controls: iteration cap, tolerance, residual choice, and optional
/// recording of iterates and Lyapunov values (the latter needs a known
/// solution `x_star`).
#[derive(Debug, Clone)]
pub struct RunConfig<S> {
    max_iter: usize,
    tol: S,
    stop_metric: StopMetric<S>,
    record_iterates: bool,
    record_lyapunov: Option<Vector<S>>,
}

impl<S: Scalar> RunConfig<S> {
    pub fn new(max_iter: usize, tol: S) -> Result<Self, EngineError> {
        if max_iter == 0 {
            return Err(EngineError::ZeroMaxIter);
        }
        if !tol.is_finite() || tol <= S::zero() {
            return Err(EngineError::NonPositiveTol { tol: as_f64(tol) });
        }
        Ok(Self {
            max_iter,
            tol,
            stop_metric: StopMetric::ExtrapolationResidual,
            record_iterates: false,
            record_lyapunov: None,
        })
    }

    pub fn with_stop_metric(mut self, metric: StopMetric<S>) -> Self {
        self.stop_metric = metric;
        self
    }

    pub fn with_record_iterates(mut self, record: bool) -> Self {
        self.record_iterates = record;
        self
    }

    /// Enables Lyapunov recording against the given solution.
    pub fn with_record_lyapunov(mut self, x_star: Vector<S>) -> Self {
        self.record_lyapunov = Some(x_star);
        self
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }

    pub fn tol(&self) -> S {
        self.tol
    }

    pub fn stop_metric(&self) -> &StopMetric<S> {
        &self.stop_metric
    }

    pub fn record_iterates_enabled(&self) -> bool {
        self.record_iterates
    }

    pub fn record_lyapunov_target(&self) -> Option<&Vector<S>> {
        self.record_lyapunov.as_ref()
    }
}

/// Lyapunov values along a run: `gamma[n]` and `gamma_bar[n]` hold the
/// certificate values at iterate `n`, with entry 0 describing `x_0`.
#[derive(Debug, Clone)]
pub struct LyapunovTrace<S> {
    pub gamma: Vec<S>,
    pub gamma_bar: Vec<S>,
    pub x_star: Vector<S>,
}

/// Everything observed during a run.
#[derive(Debug, Clone)]
pub struct RunRecord<S> {
    /// Residual recorded after each step, before the stopping test.
    pub residuals: Vec<S>,
    pub iterations_used: usize,
    pub status: RunStatus,
    pub wall_time: Duration,
    pub final_point: Vector<S>,
    pub lyapunov: Option<LyapunovTrace<S>>,
    pub iterates: Option<Vec<Vector<S>>>,
}

/// The certificate pair for one window position:
/// `Gamma_n = ||x_n - x*||^2 - theta ||x_{n-1} - x*||^2
///            - delta ||x_{n-2} - x*||^2
///            + (1 - |delta| - theta) ||x_n - x_{n-1}||^2`
/// and `GammaBar_n = Gamma_n + c1 ||x_{n-1} - x_{n-2}||^2`.
pub fn lyapunov_values<S: Scalar>(
    x_curr: &Vector<S>,
    x_prev: &Vector<S>,
    x_prev2: &Vector<S>,
    x_star: &Vector<S>,
    params: &InertialParams<S>,
) -> Result<(S, S), EngineError> {
    let dim = x_curr.len();
    for v in [x_prev, x_prev2, x_star] {
        if v.len() != dim {
            return Err(EngineError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let theta = params.theta;
    let delta = params.delta;
    let gamma = dist_sq(x_curr, x_star)
        - theta * dist_sq(x_prev, x_star)
        - delta * dist_sq(x_prev2, x_star)
        + (S::one() - delta.abs() - theta) * dist_sq(x_curr, x_prev);
    let c1 = Coefficients::evaluate(theta, delta).c1;
    let gamma_bar = gamma + c1 * dist_sq(x_prev, x_prev2);
    Ok((gamma, gamma_bar))
}

/// The `O(1/n)` residual certificate: for `n >= 2`,
/// `min_{0<=j<=n-2} ||x_{j+1} - y_j||^2 <=
///  3 (1 + theta^2 + delta^2) (1 - theta - delta) ||x_0 - x*||^2 / (c2 (n - 1))`.
///
/// Only meaningful for `rho = 1` and positive `c2`; both are enforced.
pub fn rate_bound<S: Scalar>(
    params: &InertialParams<S>,
    x0: &Vector<S>,
    x_star: &Vector<S>,
    n: usize,
) -> Result<S, EngineError> {
    if params.rho != S::one() {
        return Err(EngineError::RhoNotOne {
            rho: as_f64(params.rho),
        });
    }
    if n < 2 {
        return Err(EngineError::RateBoundIndex { n });
    }
    if x0.len() != x_star.len() {
        return Err(EngineError::DimensionMismatch {
            expected: x0.len(),
            got: x_star.len(),
        });
    }
    let c2 = Coefficients::evaluate(params.theta, params.delta).c2;
    if c2 <= S::zero() {
        return Err(EngineError::NonPositiveC2 { c2: as_f64(c2) });
    }
    let theta = params.theta;
    let delta = params.delta;
    let three = real::<S>(3.0);
    let numerator = three
        * (S::one() + theta * theta + delta * delta)
        * (S::one() - theta - delta)
        * dist_sq(x0, x_star);
    Ok(numerator / (c2 * real::<S>((n - 1) as f64)))
}

/// Runs the iteration until the chosen residual drops to `tol`, the
/// iteration budget is exhausted, or a non-finite value appears.
///
/// The residual of each step is recorded before the stopping test, so
/// `residuals.len() == iterations_used` always holds. Lyapunov recording
/// produces entries for `n = 0..=iterations_used` and requires `rho = 1`,
/// since the certificate is proved for the unrelaxed scheme.
pub fn run<S: Scalar, R: Resolvent<S> + ?Sized>(
    resolvent: &R,
    x0: &Vector<S>,
    params: &InertialParams<S>,
    config: &RunConfig<S>,
) -> Result<RunRecord<S>, EngineError> {
    let dim = resolvent.dimension();
    if x0.len() != dim {
        return Err(EngineError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    if !all_finite(x0) {
        return Err(EngineError::NonFiniteInput);
    }
    if let Some(x_star) = &config.record_lyapunov {
        if x_star.len() != dim {
            return Err(EngineError::DimensionMismatch {
                expected: dim,
                got: x_star.len(),
            });
        }
        if params.rho != S::one() {
            return Err(EngineError::RhoNotOne {
                rho: as_f64(params.rho),
            });
        }
    }

    let start = Instant::now();
    let mut state = EngineState::new(x0.clone());
    let mut residuals = Vec::new();
    let mut iterates = config.record_iterates.then(|| vec![x0.clone()]);
    let mut trace = match &config.record_lyapunov {
        Some(x_star) => {
            let (gamma, gamma_bar) =
                lyapunov_values(&state.x_curr, &state.x_prev, &state.x_prev2, x_star, params)?;
            Some(LyapunovTrace {
                gamma: vec![gamma],
                gamma_bar: vec![gamma_bar],
                x_star: x_star.clone(),
            })
        }
        None => None,
    };

    let mut status = RunStatus::MaxIterReached;
    for _ in 0..config.max_iter {
        let y_n = state.y_curr.clone();
        state = ppa_step(resolvent, state, params)?;
        let residual = match &config.stop_metric {
            StopMetric::ExtrapolationResidual => norm((&state.x_curr - &y_n).view()),
            StopMetric::StepNorm => norm((&state.x_curr - &state.x_prev).view()),
            StopMetric::Custom(metric) => metric(&state),
        };
        residuals.push(residual);
        if let Some(iterates) = &mut iterates {
            iterates.push(state.x_curr.clone());
        }
        if let Some(trace) = &mut trace {
            let (gamma, gamma_bar) = lyapunov_values(
                &state.x_curr,
                &state.x_prev,
                &state.x_prev2,
                &trace.x_star,
                params,
            )?;
            trace.gamma.push(gamma);
            trace.gamma_bar.push(gamma_bar);
        }
        if !residual.is_finite() || !all_finite(&state.x_curr) {
            status = RunStatus::Diverged;
            break;
        }
        if residual <= config.tol {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(RunRecord {
        iterations_used: residuals.len(),
        residuals,
        status,
        wall_time: start.elapsed(),
        final_point: state.x_curr,
        lyapunov: trace,
        iterates,
    })
}
