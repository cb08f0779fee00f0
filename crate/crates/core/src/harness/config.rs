use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gasleak::WarehouseScenario;
use crate::statespace::{AffineFamily, AffineSensor, ParamBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Irpe,
    Hybrid,
    Centralized,
    LiftedCheck,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Irpe, Mode::Hybrid, Mode::Centralized, Mode::LiftedCheck];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Irpe => "irpe",
            Mode::Hybrid => "hybrid",
            Mode::Centralized => "centralized",
            Mode::LiftedCheck => "lifted-check",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub deployment: DeploymentConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Gasleak {
        scenario: WarehouseScenario,
    },
    /// Random stable family on `[0, 1]^d` (see [`AffineFamily::random`]).
    RandomLinear {
        sensors: usize,
        state_dim: usize,
        obs_dim: usize,
        param_dim: usize,
        model_seed: u64,
        truth: Vec<f64>,
    },
    /// Affine family given inline, matrices as lists of rows.
    Custom {
        sensors: Vec<CustomSensor>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        truth: Vec<f64>,
    },
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSensor {
    pub transition_base: Rows,
    pub transition_terms: Vec<Rows>,
    pub observation: Rows,
    pub process_base: Rows,
    pub process_terms: Vec<Rows>,
    pub measurement_cov: Rows,
}

fn matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{what}: rows have unequal lengths")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

impl CustomSensor {
    fn build(&self) -> Result<AffineSensor> {
        let many = |ms: &[Rows], what: &str| ms.iter().map(|m| matrix(m, what)).collect::<Result<Vec<_>>>();
        Ok(AffineSensor {
            transition_base: matrix(&self.transition_base, "transition_base")?,
            transition_terms: many(&self.transition_terms, "transition_terms")?,
            observation: matrix(&self.observation, "observation")?,
            process_base: matrix(&self.process_base, "process_base")?,
            process_terms: many(&self.process_terms, "process_terms")?,
            measurement_cov: matrix(&self.measurement_cov, "measurement_cov")?,
        })
    }
}

pub(crate) fn build_custom(sensors: &[CustomSensor], lower: &[f64], upper: &[f64]) -> Result<AffineFamily> {
    let built = sensors.iter().map(CustomSensor::build).collect::<Result<Vec<_>>>()?;
    AffineFamily::new(built, ParamBox::new(lower.to_vec(), upper.to_vec())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    #[serde(flatten)]
    pub layout: Layout,
    /// Explicit visiting order; defaults to the greedy nearest-neighbour ring.
    #[serde(default)]
    pub ring: Option<Vec<usize>>,
    /// Defaults to the middle of the region.
    #[serde(default)]
    pub fusion_center: Option<[f64; 2]>,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Uniform {
                seed: 0,
                count: None,
                size: None,
            },
            ring: None,
            fusion_center: None,
        }
    }
}

/// Region defaults to the warehouse for the gas-leak model and the unit square otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum Layout {
    GridJittered {
        grid: usize,
        extras_per_grid: usize,
        jitter_radius: f64,
        seed: u64,
        #[serde(default)]
        size: Option<[f64; 2]>,
    },
    Uniform {
        seed: u64,
        /// Defaults to the model's sensor count; required for the gas-leak model.
        #[serde(default)]
        count: Option<usize>,
        #[serde(default)]
        size: Option<[f64; 2]>,
    },
    Explicit {
        positions: Vec<[f64; 2]>,
        /// Member lists; the first member of each is its head.
        #[serde(default)]
        clusters: Option<Vec<Vec<usize>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub mode: Mode,
    /// Step sizes `α_k = mu / (k + k0)`.
    pub mu: f64,
    #[serde(default)]
    pub k0: u64,
    pub cycles: usize,
    /// Seed of the simulated data.
    #[serde(default)]
    pub seed: u64,
    /// Initial iterate; defaults to the box centroid.
    #[serde(default)]
    pub x_start: Option<Vec<f64>>,
    /// Rebuild each sensor's predictor every this many cycles.
    #[serde(default = "one")]
    pub refresh_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}
