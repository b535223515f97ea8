//! Run configurations. Every document rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use ope_lab::io::ProblemDoc;
use ope_lab::scenarios::{PopulationSpec, Scenario};
use ope_lab::sweeps::SweepMethod;
use ope_lab::{EstimatorId, Problem};

use crate::CliError;

/// Where a problem comes from. Relative file paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Inline(ProblemDoc),
    File(PathBuf),
    Scenario(Scenario),
}

impl ProblemSource {
    pub fn load(&self, base: &Path) -> Result<Problem, CliError> {
        let problem = match self {
            ProblemSource::Inline(doc) => doc.to_problem(),
            ProblemSource::File(p) => {
                let path = base.join(p);
                ProblemDoc::read(&path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                    .to_problem()
            }
            ProblemSource::Scenario(s) => s.build(),
        };
        problem.map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub problem: ProblemSource,
}

fn default_estimators() -> Vec<EstimatorId> {
    vec![EstimatorId::Is, EstimatorId::Pdis, EstimatorId::Sis]
}

fn default_method() -> SweepMethod {
    SweepMethod::ExactDp
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub problem: ProblemSource,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorId>,
    #[serde(default = "default_method")]
    pub method: SweepMethod,
    /// `[t][s][a]` weights for `asis`.
    #[serde(default)]
    pub asis_weights: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsisConfig {
    pub horizon: usize,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// The scenario's own horizon is replaced by each grid value.
    pub family: Scenario,
    pub horizons: Vec<usize>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorId>,
    #[serde(default = "default_method")]
    pub method: SweepMethod,
    /// Discounts for the PDIS regime classification.
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub asis: Option<AsisConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Thm1,
    Thm2,
    Lemma2,
}

fn all_checks() -> Vec<Check> {
    vec![Check::Thm1, Check::Thm2, Check::Lemma2]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsConfig {
    /// Single problem; when absent the population is checked.
    #[serde(default)]
    pub problem: Option<ProblemSource>,
    #[serde(default)]
    pub population: PopulationSpec,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
}

fn default_count() -> usize {
    100
}

fn default_two_lane_horizons() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLaneConfig {
    #[serde(default = "default_two_lane_horizons")]
    pub horizons: Vec<usize>,
}

impl Default for TwoLaneConfig {
    fn default() -> Self {
        Self { horizons: default_two_lane_horizons() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCheckConfig {
    pub problem: ProblemSource,
    pub horizon: usize,
    pub num_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Parsed config plus the directory relative paths resolve against.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

pub fn require<T: DeserializeOwned>(path: Option<&Path>, command: &str) -> Result<(T, PathBuf), CliError> {
    match path {
        Some(p) => read(p),
        None => Err(CliError::Config(format!("{command} needs --config"))),
    }
}
