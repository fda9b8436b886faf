//! JSON experiment configuration: strict schema, family-specific size
//! validation, and conversion into library types.

use inertial_prox::bench::{
    default_sparsity, BenchInstance, InstanceKind, MethodFamily, MethodSpec, Seed,
};
use inertial_prox::engine::InertialParams;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFamily {
    BasisPursuit,
    TvLs,
    Feasibility,
    LinearMonotone,
}

impl InstanceFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstanceFamily::BasisPursuit => "basis_pursuit",
            InstanceFamily::TvLs => "tv_ls",
            InstanceFamily::Feasibility => "feasibility",
            InstanceFamily::LinearMonotone => "linear_monotone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigFamily {
    Pmm,
    TvAdmm,
    Dr,
    Pdhg,
    GenericPpa,
}

impl From<ConfigFamily> for MethodFamily {
    fn from(value: ConfigFamily) -> Self {
        match value {
            ConfigFamily::Pmm => MethodFamily::Pmm,
            ConfigFamily::TvAdmm => MethodFamily::TvAdmm,
            ConfigFamily::Dr => MethodFamily::Dr,
            ConfigFamily::Pdhg => MethodFamily::Pdhg,
            ConfigFamily::GenericPpa => MethodFamily::GenericPpa,
        }
    }
}

/// Family-specific size record, kept flat so unknown keys are rejected
/// globally; `validate_for` rejects keys that do not belong to the
/// configured family.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<usize>,
    pub sparsity: Option<usize>,
    pub pieces: Option<usize>,
    pub noise_scale: Option<f64>,
    pub gamma: Option<f64>,
    pub angle: Option<f64>,
    pub dim: Option<usize>,
    pub x0_zero: Option<bool>,
}

impl Dims {
    fn reject_extraneous(&self, family: InstanceFamily, allowed: &[&str]) -> Result<(), CliError> {
        let present: [(&str, bool); 10] = [
            ("n", self.n.is_some()),
            ("m", self.m.is_some()),
            ("p", self.p.is_some()),
            ("sparsity", self.sparsity.is_some()),
            ("pieces", self.pieces.is_some()),
            ("noise_scale", self.noise_scale.is_some()),
            ("gamma", self.gamma.is_some()),
            ("angle", self.angle.is_some()),
            ("dim", self.dim.is_some()),
            ("x0_zero", self.x0_zero.is_some()),
        ];
        for (key, is_present) in present {
            if is_present && !allowed.contains(&key) {
                return Err(CliError::Rejected(format!(
                    "dims key '{key}' does not apply to family '{}'",
                    family.as_str()
                )));
            }
        }
        Ok(())
    }

    fn require(value: Option<usize>, key: &str, family: InstanceFamily) -> Result<usize, CliError> {
        value.ok_or_else(|| {
            CliError::Rejected(format!(
                "dims key '{key}' is required for family '{}'",
                family.as_str()
            ))
        })
    }

    pub fn validate_for(&self, family: InstanceFamily) -> Result<(), CliError> {
        match family {
            InstanceFamily::BasisPursuit => {
                self.reject_extraneous(family, &["n", "m", "sparsity"])?;
                Self::require(self.n, "n", family)?;
                Self::require(self.m, "m", family)?;
            }
            InstanceFamily::TvLs => {
                self.reject_extraneous(family, &["n", "m", "p", "pieces", "noise_scale", "gamma"])?;
                Self::require(self.n, "n", family)?;
                Self::require(self.m, "m", family)?;
                Self::require(self.p, "p", family)?;
            }
            InstanceFamily::Feasibility => {
                self.reject_extraneous(family, &["angle"])?;
                if self.angle.is_none() {
                    return Err(CliError::Rejected(
                        "dims key 'angle' is required for family 'feasibility'".into(),
                    ));
                }
            }
            InstanceFamily::LinearMonotone => {
                self.reject_extraneous(family, &["dim", "x0_zero"])?;
                Self::require(self.dim, "dim", family)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    pub family: ConfigFamily,
    pub theta: f64,
    pub delta: f64,
    pub lambda: f64,
    pub rho: Option<f64>,
}

impl MethodConfig {
    /// Builds validated inertial parameters; `skip_validation` constructs
    /// them unchecked so out-of-region values can be driven through the
    /// certificate checker deliberately.
    pub fn to_params(&self, skip_validation: bool) -> Result<InertialParams<f64>, CliError> {
        if skip_validation {
            if self.rho.is_some_and(|rho| rho != 1.0) {
                return Err(CliError::Rejected(format!(
                    "method '{}': validation bypass supports only rho = 1",
                    self.name
                )));
            }
            return Ok(InertialParams::new_unchecked(
                self.theta,
                self.delta,
                self.lambda,
            ));
        }
        let params = InertialParams::new(self.theta, self.delta, self.lambda)
            .map_err(|e| CliError::Rejected(format!("method '{}': {e}", self.name)))?;
        match self.rho {
            Some(rho) => params
                .with_rho(rho)
                .map_err(|e| CliError::Rejected(format!("method '{}': {e}", self.name))),
            None => Ok(params),
        }
    }

    pub fn to_spec(&self, skip_validation: bool) -> Result<MethodSpec<f64>, CliError> {
        Ok(MethodSpec {
            name: self.name.clone(),
            params: self.to_params(skip_validation)?,
            family: self.family.into(),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: InstanceFamily,
    pub dims: Dims,
    pub methods: Vec<MethodConfig>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub output_path: String,
}

impl ExperimentConfig {
    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config '{path}': {e}")))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config '{path}' is not valid: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(CliError::Rejected(format!(
                "tol must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(CliError::Rejected("max_iter must be at least 1".into()));
        }
        self.dims.validate_for(self.family)?;
        for method in &self.methods {
            if method.name.is_empty() {
                return Err(CliError::Rejected("method names must be non-empty".into()));
            }
        }
        Ok(())
    }

    /// Validates every method's parameters against the convergence
    /// region (done eagerly so a bad method rejects before any
    /// computation starts).
    pub fn build_methods(&self, skip_validation: bool) -> Result<Vec<MethodSpec<f64>>, CliError> {
        self.methods
            .iter()
            .map(|m| m.to_spec(skip_validation))
            .collect()
    }

    pub fn build_instance(&self) -> Result<BenchInstance<f64>, CliError> {
        let reject = |e: inertial_prox::bench::BenchError| CliError::Rejected(e.to_string());
        match self.family {
            InstanceFamily::BasisPursuit => {
                let n = self.dims.n.unwrap();
                let m = self.dims.m.unwrap();
                let sparsity = self.dims.sparsity.unwrap_or_else(|| default_sparsity(m));
                BenchInstance::basis_pursuit(n, m, sparsity, Seed(self.seed)).map_err(reject)
            }
            InstanceFamily::TvLs => {
                let n = self.dims.n.unwrap();
                let m = self.dims.m.unwrap();
                let p = self.dims.p.unwrap();
                let pieces = self
                    .dims
                    .pieces
                    .unwrap_or(inertial_prox::bench::DEFAULT_TV_PIECES);
                BenchInstance::tv_ls(
                    n,
                    m,
                    p,
                    self.dims.noise_scale,
                    pieces,
                    self.dims.gamma,
                    Seed(self.seed),
                )
                .map_err(reject)
            }
            InstanceFamily::Feasibility => {
                BenchInstance::feasibility(self.dims.angle.unwrap(), Seed(self.seed))
                    .map_err(reject)
            }
            InstanceFamily::LinearMonotone => {
                let mut instance =
                    BenchInstance::linear_monotone(self.dims.dim.unwrap(), Seed(self.seed))
                        .map_err(reject)?;
                if self.dims.x0_zero.unwrap_or(false) {
                    if let InstanceKind::LinearMonotone(lm) = &mut instance.kind {
                        lm.x0.fill(0.0);
                    }
                }
                Ok(instance)
            }
        }
    }
}
