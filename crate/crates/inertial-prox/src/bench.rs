//! Seeded instance generators and the method-comparison harness.
//!
//! Instances are produced by the versioned generator in [`GENERATOR_VERSION`]:
//! equal seeds yield bit-identical instances on every platform. Each
//! generator documents its draw order, which is part of that contract.

use ndarray::array;

use crate::engine::{self, EngineState, InertialParams, RunConfig, RunStatus, StopMetric};
use crate::operators::{OperatorError, Resolvent, SubspaceProjector};
use crate::rng::InstanceRng;
pub use crate::rng::GENERATOR_VERSION;
use crate::saddle::{self, BasisPursuitInstance};
use crate::splitting::{self, TvLsInstance};
use crate::{norm, real, Matrix, Scalar, Vector};

/// Benchmark failures.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("angle must lie strictly inside (0, pi/2), got {angle}")]
    DegenerateAngle { angle: f64 },
    #[error("method '{name}' with family {family:?} does not apply to instance '{descriptor}'")]
    NotApplicable {
        name: String,
        family: MethodFamily,
        descriptor: String,
    },
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Seed for the versioned instance generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

/// Which algorithm a [`MethodSpec`] drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodFamily {
    Pmm,
    TvAdmm,
    Dr,
    Pdhg,
    GenericPpa,
}

/// A named parameterization of one algorithm family.
#[derive(Debug, Clone)]
pub struct MethodSpec<S> {
    pub name: String,
    pub params: InertialParams<S>,
    pub family: MethodFamily,
}

/// One line of a comparison: how a single method fared.
#[derive(Debug, Clone)]
pub struct ComparisonRow<S> {
    pub method: String,
    pub iterations: usize,
    pub final_residual: S,
    pub wall_time_s: f64,
    pub status: RunStatus,
}

/// All methods run against one instance from one initial point.
#[derive(Debug, Clone)]
pub struct ComparisonReport<S> {
    pub rows: Vec<ComparisonRow<S>>,
    pub instance_descriptor: String,
    pub seed: u64,
}

/// Default planted sparsity for basis pursuit: `max(1, round(M/5))`.
pub fn default_sparsity(m: usize) -> usize {
    ((m as f64 / 5.0).round() as usize).max(1)
}

/// Generates a basis-pursuit instance.
///
/// Draw order: `A` row-major standard normal, then the support of the
/// planted solution (`sparsity` distinct positions), then the support
/// values, each standard normal; finally `b = A u_true` exactly.
pub fn gen_basis_pursuit<S: Scalar>(
    n: usize,
    m: usize,
    sparsity: usize,
    seed: Seed,
) -> Result<BasisPursuitInstance<S>, BenchError> {
    if m >= n {
        return Err(BenchError::InvalidDims(format!(
            "basis pursuit requires M < N, got N = {n}, M = {m}"
        )));
    }
    if sparsity == 0 || sparsity > n {
        return Err(BenchError::InvalidDims(format!(
            "sparsity must satisfy 0 < sparsity <= N, got {sparsity} with N = {n}"
        )));
    }
    let mut rng = InstanceRng::new(seed.0);
    let a: Matrix<S> = rng.normal_matrix(m, n);
    let support = rng.distinct_indices(n, sparsity);
    let mut u_true = Vector::zeros(n);
    for index in support {
        u_true[index] = rng.normal();
    }
    let b = a.dot(&u_true);
    Ok(BasisPursuitInstance {
        a,
        b,
        u_true,
        sparsity,
    })
}

/// The `(N-1) x N` first-difference matrix with row `i` holding `+1` at
/// column `i` and `-1` at column `i + 1`.
pub fn difference_matrix<S: Scalar>(n: usize) -> Result<Matrix<S>, BenchError> {
    if n < 2 {
        return Err(BenchError::InvalidDims(format!(
            "difference matrix requires N >= 2, got {n}"
        )));
    }
    let mut d = Matrix::zeros((n - 1, n));
    for i in 0..n - 1 {
        d[[i, i]] = S::one();
        d[[i, i + 1]] = -S::one();
    }
    Ok(d)
}

/// Default TV observation-noise scale: `0.01 ||F x_true|| / sqrt(p)`.
pub fn default_tv_noise_scale<S: Scalar>(clean: &Vector<S>) -> S {
    real::<S>(0.01) * norm(clean.view()) / real::<S>(clean.len() as f64).sqrt()
}

/// Default number of constant segments in the planted TV signal.
pub const DEFAULT_TV_PIECES: usize = 5;
/// Default TV regularization weight carried on generated instances.
pub const DEFAULT_TV_GAMMA: f64 = 0.01;

/// Generates a total-variation least-squares instance.
///
/// The planted signal is piecewise constant with `pieces` segments
/// (breakpoints drawn without replacement, then sorted; one standard
/// normal level per segment). Draw order: breakpoints, levels, `F`
/// row-major, then the observation noise; `noise_scale = None` applies
/// the default `0.01 ||F x_true|| / sqrt(p)`. Generated instances carry
/// `gamma = 0.01`, adjustable on the returned value.
pub fn gen_tv_ls<S: Scalar>(
    n: usize,
    m: usize,
    p: usize,
    noise_scale: Option<S>,
    pieces: usize,
    seed: Seed,
) -> Result<TvLsInstance<S>, BenchError> {
    if n < 2 || m != n - 1 {
        return Err(BenchError::InvalidDims(format!(
            "total-variation instances require M = N - 1 with N >= 2, got N = {n}, M = {m}"
        )));
    }
    if p < 1 {
        return Err(BenchError::InvalidDims("p must be at least 1".into()));
    }
    if pieces < 1 || pieces > n {
        return Err(BenchError::InvalidDims(format!(
            "pieces must satisfy 1 <= pieces <= N, got {pieces} with N = {n}"
        )));
    }
    if let Some(scale) = noise_scale {
        if !scale.is_finite() || scale < S::zero() {
            return Err(BenchError::InvalidDims(
                "noise_scale must be finite and nonnegative".into(),
            ));
        }
    }
    let mut rng = InstanceRng::new(seed.0);
    let mut breakpoints = rng.distinct_indices(n - 1, pieces - 1);
    breakpoints.iter_mut().for_each(|b| *b += 1);
    breakpoints.sort_unstable();
    breakpoints.push(n);
    let mut x_true = Vector::zeros(n);
    let mut start = 0;
    for &end in &breakpoints {
        let level: S = rng.normal();
        for i in start..end {
            x_true[i] = level;
        }
        start = end;
    }
    let f: Matrix<S> = rng.normal_matrix(p, n);
    let clean = f.dot(&x_true);
    let scale = noise_scale.unwrap_or_else(|| default_tv_noise_scale(&clean));
    let noise: Vector<S> = rng.normal_vector(p);
    let b = &clean + &noise.mapv(|w| w * scale);
    Ok(TvLsInstance {
        f,
        b,
        d: difference_matrix(n)?,
        gamma: real(DEFAULT_TV_GAMMA),
        x_true,
    })
}

/// Two lines through the origin in the plane meeting only at the origin.
pub struct TwoSubspaceInstance<S: Scalar> {
    pub projector_a: SubspaceProjector<S>,
    pub projector_b: SubspaceProjector<S>,
    pub angle: S,
}

/// Generates the two-subspace feasibility instance: `T_1 = span{(1, 0)}`
/// and `T_2 = span{(cos angle, sin angle)}` for an angle strictly inside
/// `(0, pi/2)`, so the intersection is exactly the origin.
pub fn gen_two_subspace<S: Scalar>(angle: S) -> Result<TwoSubspaceInstance<S>, BenchError> {
    let half_pi = real::<S>(std::f64::consts::FRAC_PI_2);
    if !angle.is_finite() || angle <= S::zero() || angle >= half_pi {
        return Err(BenchError::DegenerateAngle {
            angle: num_traits::ToPrimitive::to_f64(&angle).unwrap_or(f64::NAN),
        });
    }
    let projector_a = SubspaceProjector::new(&[array![S::one(), S::zero()]])?;
    let projector_b = SubspaceProjector::new(&[array![angle.cos(), angle.sin()]])?;
    Ok(TwoSubspaceInstance {
        projector_a,
        projector_b,
        angle,
    })
}

/// A strongly monotone linear inclusion with known zero at the origin.
pub struct LinearMonotoneInstance<S> {
    pub q: Matrix<S>,
    pub x0: Vector<S>,
}

/// Generates `Q = B'B + 0.1 I` (so the operator is strongly monotone and
/// its unique zero is the origin) plus a standard-normal starting point.
/// Draw order: `B` row-major, then `x0`.
pub fn gen_linear_monotone<S: Scalar>(
    dim: usize,
    seed: Seed,
) -> Result<LinearMonotoneInstance<S>, BenchError> {
    if dim == 0 {
        return Err(BenchError::InvalidDims("dimension must be positive".into()));
    }
    let mut rng = InstanceRng::new(seed.0);
    let half: Matrix<S> = rng.normal_matrix(dim, dim);
    let mut q = half.t().dot(&half);
    let shift = real::<S>(0.1);
    for i in 0..dim {
        q[[i, i]] += shift;
    }
    let x0 = rng.normal_vector(dim);
    Ok(LinearMonotoneInstance { q, x0 })
}

/// The concrete problem a comparison runs against.
pub enum InstanceKind<S: Scalar> {
    BasisPursuit(BasisPursuitInstance<S>),
    TvLs(TvLsInstance<S>),
    Feasibility(TwoSubspaceInstance<S>),
    LinearMonotone(LinearMonotoneInstance<S>),
}

/// An instance plus the provenance needed for reporting.
pub struct BenchInstance<S: Scalar> {
    pub kind: InstanceKind<S>,
    pub seed: Seed,
    pub descriptor: String,
}

impl<S: Scalar> BenchInstance<S> {
    pub fn basis_pursuit(
        n: usize,
        m: usize,
        sparsity: usize,
        seed: Seed,
    ) -> Result<Self, BenchError> {
        let instance = gen_basis_pursuit(n, m, sparsity, seed)?;
        Ok(Self {
            kind: InstanceKind::BasisPursuit(instance),
            seed,
            descriptor: format!("basis_pursuit(N={n}, M={m}, sparsity={sparsity})"),
        })
    }

    pub fn tv_ls(
        n: usize,
        m: usize,
        p: usize,
        noise_scale: Option<S>,
        pieces: usize,
        gamma: Option<S>,
        seed: Seed,
    ) -> Result<Self, BenchError> {
        let mut instance = gen_tv_ls(n, m, p, noise_scale, pieces, seed)?;
        if let Some(gamma) = gamma {
            if !gamma.is_finite() || gamma <= S::zero() {
                return Err(BenchError::InvalidDims(
                    "gamma must be positive and finite".into(),
                ));
            }
            instance.gamma = gamma;
        }
        let gamma_desc = num_traits::ToPrimitive::to_f64(&instance.gamma).unwrap_or(f64::NAN);
        Ok(Self {
            kind: InstanceKind::TvLs(instance),
            seed,
            descriptor: format!("tv_ls(N={n}, M={m}, p={p}, pieces={pieces}, gamma={gamma_desc})"),
        })
    }

    pub fn feasibility(angle: S, seed: Seed) -> Result<Self, BenchError> {
        let instance = gen_two_subspace(angle)?;
        let angle_desc = num_traits::ToPrimitive::to_f64(&angle).unwrap_or(f64::NAN);
        Ok(Self {
            kind: InstanceKind::Feasibility(instance),
            seed,
            descriptor: format!("feasibility(angle={angle_desc})"),
        })
    }

    pub fn linear_monotone(dim: usize, seed: Seed) -> Result<Self, BenchError> {
        let instance = gen_linear_monotone(dim, seed)?;
        Ok(Self {
            kind: InstanceKind::LinearMonotone(instance),
            seed,
            descriptor: format!("linear_monotone(dim={dim})"),
        })
    }
}

/// Runs a single method against an instance with the family-pinned
/// initial point and stopping metric (see [`run_comparison`]), returning
/// the full run record including residuals and any requested traces.
pub fn run_method<S: Scalar>(
    instance: &BenchInstance<S>,
    method: &MethodSpec<S>,
    config: &RunConfig<S>,
) -> Result<engine::RunRecord<S>, BenchError> {
    let not_applicable = || BenchError::NotApplicable {
        name: method.name.clone(),
        family: method.family,
        descriptor: instance.descriptor.clone(),
    };
    match (&instance.kind, method.family) {
        (InstanceKind::BasisPursuit(bp), MethodFamily::Pmm) => {
            let base = RunConfig::new(config.max_iter(), config.tol())?
                .with_stop_metric(StopMetric::ExtrapolationResidual)
                .with_record_iterates(config.record_iterates_enabled());
            Ok(saddle::run_pmm_basis_pursuit(bp, &method.params, &base)?)
        }
        (InstanceKind::TvLs(tv), MethodFamily::TvAdmm) => {
            Ok(splitting::run_tv_admm(tv, &method.params, config)?)
        }
        (InstanceKind::Feasibility(fs), MethodFamily::Dr) => {
            let dr = crate::operators::DouglasRachford::new(
                Box::new(fs.projector_a.clone()),
                Box::new(fs.projector_b.clone()),
            )?;
            let shadow_projector = fs.projector_b.clone();
            let metric = StopMetric::Custom(std::sync::Arc::new(move |state: &EngineState<S>| {
                let shadow = shadow_projector
                    .evaluate(state.x_curr.view())
                    .expect("projector dimension matches the run dimension");
                norm(shadow.view())
            }));
            let base = RunConfig::new(config.max_iter(), config.tol())?
                .with_stop_metric(metric)
                .with_record_iterates(config.record_iterates_enabled());
            let start = array![S::one(), S::zero()];
            Ok(engine::run(&dr, &start, &method.params, &base)?)
        }
        (InstanceKind::LinearMonotone(lm), MethodFamily::GenericPpa) => {
            let problem =
                crate::operators::LinearMonotoneProblem::new(lm.q.clone(), method.params.lambda())?;
            let resolvent = crate::operators::resolvent_linear(&problem)?;
            Ok(engine::run(&resolvent, &lm.x0, &method.params, config)?)
        }
        _ => Err(not_applicable()),
    }
}

/// Runs every method against the same instance from the same initial
/// point and collects a report row per method, in input order.
///
/// The initial point is pinned per family: the stacked zero vector for
/// basis pursuit, all-zero `(x, z, v_hat)` for TV, `(1, 0)` for the
/// two-subspace feasibility demo, and the instance's own `x0` for linear
/// monotone problems. The stopping metric is likewise pinned per family
/// (extrapolation residual, squared consensus residual, shadow norm)
/// except for `GenericPpa`, which honors `config.stop_metric`. A method
/// that diverges contributes a row with its divergence status; only
/// structural failures (inapplicable family, inner-solver breakdown)
/// abort the comparison.
pub fn run_comparison<S: Scalar>(
    instance: &BenchInstance<S>,
    methods: &[MethodSpec<S>],
    config: &RunConfig<S>,
) -> Result<ComparisonReport<S>, BenchError> {
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let record = run_method(instance, method, config)?;
        rows.push(ComparisonRow {
            method: method.name.clone(),
            iterations: record.iterations_used,
            final_residual: record.residuals.last().copied().unwrap_or_else(S::zero),
            wall_time_s: record.wall_time.as_secs_f64(),
            status: record.status,
        });
    }
    Ok(ComparisonReport {
        rows,
        instance_descriptor: instance.descriptor.clone(),
        seed: instance.seed.0,
    })
}
