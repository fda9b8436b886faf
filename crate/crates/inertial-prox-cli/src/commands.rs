//! Command implementations: validate, run, bench, certify.

use std::io::Write;
use std::path::{Path, PathBuf};

use inertial_prox::bench::{run_method, BenchError, BenchInstance, MethodSpec, GENERATOR_VERSION};
use inertial_prox::engine::{
    delta_lower_bound, rate_bound, validate_params, Coefficients, RunConfig, RunRecord, RunStatus,
};
use inertial_prox::Vector64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigFamily, ExperimentConfig, InstanceFamily, MethodConfig};
use crate::CliError;

fn status_str(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Converged => "converged",
        RunStatus::MaxIterReached => "max_iter_reached",
        RunStatus::Diverged => "diverged",
    }
}

fn status_exit(status: RunStatus) -> u8 {
    match status {
        RunStatus::Converged => 0,
        RunStatus::MaxIterReached => 3,
        RunStatus::Diverged => 4,
    }
}

fn bench_error(err: BenchError) -> CliError {
    CliError::Rejected(err.to_string())
}

fn io_error(path: &Path, err: std::io::Error) -> CliError {
    CliError::Io(format!("cannot write '{}': {err}", path.display()))
}

/// Prints the admissible delta interval and the coefficient values for
/// the given pair; exit 0 when accepted, 2 when rejected.
pub fn cmd_validate(theta: f64, delta: f64) -> Result<u8, CliError> {
    println!("theta = {theta}");
    println!("delta = {delta}");
    if theta.is_finite() && (0.0..1.0 / 3.0).contains(&theta) {
        println!(
            "admissible delta interval: ({}, 0]",
            delta_lower_bound(theta)
        );
    } else {
        println!("admissible delta interval: empty (theta must lie in [0, 1/3))");
    }
    let c = Coefficients::evaluate(theta, delta);
    println!("c1 = {}", c.c1);
    println!("c2 = {}", c.c2);
    match validate_params(theta, delta, 1.0) {
        Ok(()) => {
            println!("parameters accepted");
            Ok(0)
        }
        Err(e) => {
            println!("parameters rejected: {e}");
            Ok(2)
        }
    }
}

#[derive(Serialize)]
struct MethodRecord {
    name: String,
    family: &'static str,
    theta: f64,
    delta: f64,
    lambda: f64,
    rho: f64,
}

#[derive(Serialize)]
struct RunRecordJson {
    family: &'static str,
    descriptor: String,
    seed: u64,
    generator_version: &'static str,
    method: MethodRecord,
    status: &'static str,
    iterations: usize,
    final_residual: Option<f64>,
    wall_time_s: f64,
}

fn family_str(family: ConfigFamily) -> &'static str {
    match family {
        ConfigFamily::Pmm => "pmm",
        ConfigFamily::TvAdmm => "tv_admm",
        ConfigFamily::Dr => "dr",
        ConfigFamily::Pdhg => "pdhg",
        ConfigFamily::GenericPpa => "generic_ppa",
    }
}

fn output_dir(config: &ExperimentConfig, override_path: Option<&str>) -> PathBuf {
    PathBuf::from(override_path.unwrap_or(&config.output_path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
    file.write_all(contents).map_err(|e| io_error(path, e))?;
    Ok(())
}

fn single_method(config: &ExperimentConfig) -> Result<&MethodConfig, CliError> {
    match config.methods.as_slice() {
        [method] => Ok(method),
        other => Err(CliError::Rejected(format!(
            "this command requires exactly one method, got {}",
            other.len()
        ))),
    }
}

fn run_config_for(
    config: &ExperimentConfig,
    method: &MethodSpec<f64>,
) -> Result<RunConfig<f64>, CliError> {
    let mut run_config = RunConfig::new(config.max_iter, config.tol)
        .map_err(|e| CliError::Rejected(e.to_string()))?;
    if config.family == InstanceFamily::LinearMonotone && method.params.rho() == 1.0 {
        let dim = config.dims.dim.unwrap();
        run_config = run_config.with_record_lyapunov(Vector64::zeros(dim));
    }
    Ok(run_config)
}

/// Runs one method and writes `record.json` plus `residuals.csv` into
/// the output directory. The CSV column `iter` counts computed steps
/// from 0; when a reference solution is available (linear monotone
/// family with rho = 1) the columns `gamma,gamma_bar` carry the
/// Lyapunov values of the iterate each step produced.
pub fn cmd_run(config_path: &str, override_out: Option<&str>) -> Result<u8, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let method_config = single_method(&config)?;
    let spec = method_config.to_spec(false)?;
    let instance = config.build_instance()?;
    let run_config = run_config_for(&config, &spec)?;
    let record = run_method(&instance, &spec, &run_config).map_err(bench_error)?;

    let dir = output_dir(&config, override_out);
    ensure_dir(&dir)?;

    let json = RunRecordJson {
        family: config.family.as_str(),
        descriptor: instance.descriptor.clone(),
        seed: config.seed,
        generator_version: GENERATOR_VERSION,
        method: MethodRecord {
            name: spec.name.clone(),
            family: family_str(method_config.family),
            theta: spec.params.theta(),
            delta: spec.params.delta(),
            lambda: spec.params.lambda(),
            rho: spec.params.rho(),
        },
        status: status_str(record.status),
        iterations: record.iterations_used,
        final_residual: record.residuals.last().copied(),
        wall_time_s: record.wall_time.as_secs_f64(),
    };
    let mut body = serde_json::to_string_pretty(&json)
        .map_err(|e| CliError::Io(format!("cannot serialize record: {e}")))?;
    body.push('\n');
    write_file(&dir.join("record.json"), body.as_bytes())?;

    write_residuals_csv(&dir.join("residuals.csv"), &record)?;
    Ok(status_exit(record.status))
}

fn write_residuals_csv(path: &Path, record: &RunRecord<f64>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| CliError::Io(format!("cannot write '{}': {e}", path.display()));
    match &record.lyapunov {
        Some(trace) => {
            writer
                .write_record(["iter", "residual", "gamma", "gamma_bar"])
                .map_err(to_io)?;
            for (iter, residual) in record.residuals.iter().enumerate() {
                writer
                    .write_record([
                        iter.to_string(),
                        format!("{residual}"),
                        format!("{}", trace.gamma[iter + 1]),
                        format!("{}", trace.gamma_bar[iter + 1]),
                    ])
                    .map_err(to_io)?;
            }
        }
        None => {
            writer.write_record(["iter", "residual"]).map_err(to_io)?;
            for (iter, residual) in record.residuals.iter().enumerate() {
                writer
                    .write_record([iter.to_string(), format!("{residual}")])
                    .map_err(to_io)?;
            }
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Io(format!("cannot write '{}': {e}", path.display())))?;
    write_file(path, &bytes)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("INERTIAL_PROX_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => builder = builder.num_threads(n),
            _ => {
                return Err(CliError::Usage(format!(
                    "INERTIAL_PROX_THREADS must be a positive integer, got '{raw}'"
                )))
            }
        }
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))
}

/// Runs every configured method against the shared instance (in
/// parallel, capped by `INERTIAL_PROX_THREADS`) and writes
/// `comparison.csv` with one row per method in input order.
pub fn cmd_bench(config_path: &str, override_out: Option<&str>) -> Result<u8, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let specs = config.build_methods(false)?;
    let instance = config.build_instance()?;
    let run_config = RunConfig::new(config.max_iter, config.tol)
        .map_err(|e| CliError::Rejected(e.to_string()))?;

    let pool = thread_pool()?;
    let records: Vec<RunRecord<f64>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| run_method(&instance, spec, &run_config))
            .collect::<Result<Vec<_>, _>>()
            .map_err(bench_error)
    })?;

    let dir = output_dir(&config, override_out);
    ensure_dir(&dir)?;
    let path = dir.join("comparison.csv");
    let mut writer = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| CliError::Io(format!("cannot write '{}': {e}", path.display()));
    writer
        .write_record([
            "method",
            "iterations",
            "final_residual",
            "wall_time_s",
            "status",
        ])
        .map_err(to_io)?;
    for (spec, record) in specs.iter().zip(&records) {
        let final_residual = record.residuals.last().copied().unwrap_or(0.0);
        writer
            .write_record([
                spec.name.clone(),
                record.iterations_used.to_string(),
                format!("{final_residual}"),
                format!("{}", record.wall_time.as_secs_f64()),
                status_str(record.status).to_string(),
            ])
            .map_err(to_io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Io(format!("cannot write '{}': {e}", path.display())))?;
    write_file(&path, &bytes)?;
    Ok(0)
}

/// Runs the engine on a linear monotone instance (known solution: the
/// origin) and checks the Lyapunov monotonicity certificate and the
/// iterate-residual rate bound at every step, printing the worst margin
/// for each. Exit 0 if both hold, 5 with the offending iteration index
/// otherwise.
pub fn cmd_certify(config_path: &str, skip_validation: bool) -> Result<u8, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    if config.family != InstanceFamily::LinearMonotone {
        return Err(CliError::Rejected(format!(
            "cmd_certify requires family 'linear_monotone', got '{}'",
            config.family.as_str()
        )));
    }
    let method_config = single_method(&config)?;
    let spec = method_config.to_spec(skip_validation)?;
    if skip_validation {
        println!("validation bypass active: parameters accepted unchecked");
    }
    let instance = config.build_instance()?;
    let run_config = run_config_for(&config, &spec)?;
    let record = run_method(&instance, &spec, &run_config).map_err(bench_error)?;
    println!(
        "run: {} iterations, status {}",
        record.iterations_used,
        status_str(record.status)
    );

    let trace = record.lyapunov.as_ref().ok_or_else(|| {
        CliError::Rejected("certificates require rho = 1 so the Lyapunov trace is recorded".into())
    })?;
    let slack = 1e-10 * trace.gamma_bar[0].abs().max(1.0);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut first_rise: Option<usize> = None;
    for n in 1..trace.gamma_bar.len() {
        let rise = trace.gamma_bar[n] - trace.gamma_bar[n - 1];
        worst_rise = worst_rise.max(rise);
        if rise > slack && first_rise.is_none() {
            first_rise = Some(n);
        }
    }
    println!("lyapunov monotonicity: worst rise {worst_rise} (tolerance {slack})");

    let x_star: Vector64 = Vector64::zeros(instance_dim(&instance));
    let x0 = instance_x0(&instance);
    let mut worst_margin = f64::INFINITY;
    let mut first_violation: Option<usize> = None;
    let mut best = f64::INFINITY;
    let mut bound_failure: Option<String> = None;
    for n in 2..=record.iterations_used {
        let r = record.residuals[n - 2];
        best = best.min(r * r);
        match rate_bound(&spec.params, x0, &x_star, n) {
            Ok(bound) => {
                worst_margin = worst_margin.min(bound - best);
                if best > bound * (1.0 + 1e-10) && first_violation.is_none() {
                    first_violation = Some(n);
                }
            }
            Err(e) => {
                bound_failure = Some(e.to_string());
                if first_violation.is_none() {
                    first_violation = Some(n);
                }
                break;
            }
        }
    }
    match &bound_failure {
        Some(reason) => println!("rate bound: inapplicable ({reason})"),
        None => println!("rate bound: worst margin {worst_margin}"),
    }

    if let Some(n) = first_rise {
        println!("certificate FAILED: lyapunov rise at iteration {n}");
        return Ok(5);
    }
    if let Some(n) = first_violation {
        println!("certificate FAILED: rate bound violated at iteration {n}");
        return Ok(5);
    }
    println!("certificate holds");
    Ok(0)
}

fn instance_dim(instance: &BenchInstance<f64>) -> usize {
    match &instance.kind {
        inertial_prox::bench::InstanceKind::LinearMonotone(lm) => lm.x0.len(),
        _ => unreachable!("certify is limited to linear monotone instances"),
    }
}

fn instance_x0(instance: &BenchInstance<f64>) -> &Vector64 {
    match &instance.kind {
        inertial_prox::bench::InstanceKind::LinearMonotone(lm) => &lm.x0,
        _ => unreachable!("certify is limited to linear monotone instances"),
    }
}
