//! Experiment configuration read from TOML.
//!
//! ```toml
//! [problem]
//! kind = "advection_diffusion"   # toy | advection_diffusion | imported
//!
//! [problem.model]                # advection-diffusion settings
//! nx = 24
//!
//! [objective]
//! criterion = "a_optimal"
//! penalty = "budget"
//! alpha = 1.0
//! budget = 8
//!
//! [optimizer]
//! seed = 3
//! max_iters = 20
//!
//! [outputs]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stochoed::container::read_problem;
use stochoed::models::{assemble_ad_problem, toy_problem, AdConfig};
use stochoed::oracle::DEFAULT_GUARD;
use stochoed::{BaselineMode, InverseProblem, ObjectiveSpec, OptimizerConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Toy,
    AdvectionDiffusion,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub model: AdConfig,
    /// Container file for imported problems, relative to the config file.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Largest sensor count for which enumeration is allowed.
    pub guard: usize,
    /// Record the enumerated expected objective in the run trace.
    pub exact_objective: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            guard: DEFAULT_GUARD,
            exact_objective: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub grid_n: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self { grid_n: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Exact,
    Plain,
    Empirical,
    Optimal,
}

impl EstimatorMode {
    pub fn baseline(self) -> Option<BaselineMode> {
        match self {
            EstimatorMode::Exact => None,
            EstimatorMode::Plain => Some(BaselineMode::None),
            EstimatorMode::Empirical => Some(BaselineMode::Empirical),
            EstimatorMode::Optimal => Some(BaselineMode::Optimal),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorMode::Exact => "exact",
            EstimatorMode::Plain => "plain",
            EstimatorMode::Empirical => "empirical",
            EstimatorMode::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckConfig {
    pub grid_n: usize,
    pub replicates: usize,
    pub estimator: EstimatorMode,
    /// Value held by components beyond the first two.
    pub fixed_theta: f64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self {
            grid_n: 9,
            replicates: 100,
            estimator: EstimatorMode::Optimal,
            fixed_theta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineStudyConfig {
    pub replicates: usize,
    /// Policy at which the estimators are compared; all 0.5 when absent.
    pub theta: Option<Vec<f64>>,
}

impl Default for BaselineStudyConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerConfig,
    pub outputs: OutputConfig,
    pub oracle: OracleConfig,
    pub surface: SurfaceConfig,
    pub gradient_check: GradientCheckConfig,
    pub baseline_study: BaselineStudyConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(p) = &config.problem.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.problem.path = Some(base.join(p));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.objective.validate()?;
        self.optimizer.validate()?;
        if self.problem.kind == ProblemKind::AdvectionDiffusion {
            self.problem.model.validate()?;
        }
        if self.problem.kind == ProblemKind::Imported {
            match &self.problem.path {
                None => return Err(CliError::Config("imported problem needs `path`".into())),
                Some(p) if !p.is_file() => {
                    return Err(CliError::Config(format!("problem file {} not found", p.display())))
                }
                _ => {}
            }
        }
        if self.surface.grid_n < 2 || self.gradient_check.grid_n < 2 {
            return Err(CliError::Config("grid_n must be at least 2".into()));
        }
        if self.gradient_check.replicates == 0 || self.baseline_study.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gradient_check.fixed_theta) {
            return Err(CliError::Config("fixed_theta must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Arc<InverseProblem>, CliError> {
        let problem = match self.problem.kind {
            ProblemKind::Toy => toy_problem(),
            ProblemKind::AdvectionDiffusion => assemble_ad_problem(&self.problem.model)?,
            ProblemKind::Imported => {
                let path = self.problem.path.as_ref().expect("validated");
                let file = std::fs::File::open(path)
                    .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
                read_problem(std::io::BufReader::new(file))?
            }
        };
        Ok(Arc::new(problem))
    }
}
