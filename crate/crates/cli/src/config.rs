//! JSON experiment configurations. Every field has a default, so an empty
//! object (or no file) runs the reference experiment for the command.

use crate::error::{CliError, CliResult};
use likefree::bcel::{AmisDenominator, LikelihoodFlavor};
use likefree::copula::BcopConstraint;
use likefree::el::{ConstraintFunction, MeanConstraint, QuantileConstraint};
use likefree::models::{GkParametricConstraint, GkParams, QuantileConstraintSpec, GK_DEFAULT_C};
use likefree::synthetic::EstimatorFlavor;
use likefree::PriorSpec;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn gk(a: f64, b: f64, g: f64, k: f64) -> GkParams {
    GkParams { a, b, g, k, c: GK_DEFAULT_C }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulatorSpec {
    /// Summary = one draw of N(θ, covariance).
    MvnToy { covariance: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BslConfig {
    pub seed: Option<u64>,
    pub model: SimulatorSpec,
    pub observed: Vec<f64>,
    pub prior: PriorSpec,
    /// Defaults to the observed summary.
    pub initial: Option<Vec<f64>>,
    pub replicates: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_covariance: Option<Vec<Vec<f64>>>,
    pub flavor: EstimatorFlavor,
}

impl Default for BslConfig {
    fn default() -> Self {
        Self {
            seed: None,
            model: SimulatorSpec::MvnToy { covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]] },
            observed: vec![1.0, -0.5],
            prior: PriorSpec::Uniform { lower: vec![-20.0, -20.0], upper: vec![20.0, 20.0] },
            initial: None,
            replicates: 20,
            iterations: 10_000,
            burn_in: 1_000,
            proposal_covariance: Some(vec![vec![1.5, 0.0], vec![0.0, 1.5]]),
            flavor: EstimatorFlavor::Plugin,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// `n` draws from N(mean, sd²).
    NormalMean { n: usize, mean: f64, sd: f64 },
    /// `n` draws from a g-and-k distribution.
    GAndK { n: usize, params: GkParams },
    /// Numeric CSV, one observation per row.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    /// `h(y, θ) = y - θ`.
    Mean,
    /// `h(y, θ) = 1{y < θ} - p`.
    Quantile { probability: f64 },
    /// g-and-k quantile constraints, θ = (a, b, g, k).
    GkQuantiles {
        #[serde(default = "default_probabilities")]
        probabilities: Vec<f64>,
    },
}

fn default_probabilities() -> Vec<f64> {
    QuantileConstraintSpec::default().probabilities
}

impl ConstraintSpec {
    /// Builds the constraint and checks it against the data width and the
    /// parameter dimension.
    pub fn build(&self, data_dim: usize, param_dim: usize) -> CliResult<Arc<dyn ConstraintFunction>> {
        let (h, theta_dim, y_dim): (Arc<dyn ConstraintFunction>, usize, usize) = match self {
            ConstraintSpec::Mean => (Arc::new(MeanConstraint { dim: data_dim }), data_dim, data_dim),
            ConstraintSpec::Quantile { probability } => {
                if !(*probability > 0.0 && *probability < 1.0) {
                    return Err(CliError::Config(format!(
                        "quantile probability must lie in (0, 1), got {probability}"
                    )));
                }
                (Arc::new(QuantileConstraint { probability: *probability }), 1, 1)
            }
            ConstraintSpec::GkQuantiles { probabilities } => {
                let spec = QuantileConstraintSpec { probabilities: probabilities.clone() };
                spec.validate()?;
                (Arc::new(GkParametricConstraint { spec, c: GK_DEFAULT_C }), 4, 1)
            }
        };
        if y_dim != data_dim {
            return Err(CliError::Config(format!("constraint expects {y_dim}-column data, found {data_dim}")));
        }
        if theta_dim != param_dim {
            return Err(CliError::Config(format!(
                "constraint has a {theta_dim}-dimensional parameter but the prior has {param_dim}"
            )));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcelCmdConfig {
    pub seed: Option<u64>,
    pub data: DataSpec,
    pub prior: PriorSpec,
    pub constraint: ConstraintSpec,
    pub draws: usize,
    pub flavor: LikelihoodFlavor,
    pub resample_count: Option<usize>,
}

impl Default for BcelCmdConfig {
    fn default() -> Self {
        Self {
            seed: None,
            data: DataSpec::NormalMean { n: 100, mean: 10.0, sd: 1.0 },
            prior: PriorSpec::Uniform { lower: vec![-10.0], upper: vec![30.0] },
            constraint: ConstraintSpec::Mean,
            draws: 5_000,
            flavor: LikelihoodFlavor::El,
            resample_count: Some(5_000),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmisCmdConfig {
    pub seed: Option<u64>,
    pub data: DataSpec,
    pub prior: PriorSpec,
    pub constraint: ConstraintSpec,
    pub draws: usize,
    pub generations: usize,
    pub jitter: Option<f64>,
    pub denominator: AmisDenominator,
    pub flavor: LikelihoodFlavor,
}

impl Default for AmisCmdConfig {
    fn default() -> Self {
        let base = BcelCmdConfig::default();
        Self {
            seed: None,
            data: base.data,
            prior: base.prior,
            constraint: base.constraint,
            draws: 1_000,
            generations: 5,
            jitter: None,
            denominator: AmisDenominator::AsPrinted,
            flavor: LikelihoodFlavor::El,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GkBfConfig {
    pub seed: Option<u64>,
    pub replicates: usize,
    pub sample_sizes: Vec<usize>,
    /// The data-generating model, compared against each alternative.
    pub reference: GkParams,
    pub alternatives: Vec<GkParams>,
    pub probabilities: Vec<f64>,
}

impl Default for GkBfConfig {
    fn default() -> Self {
        Self {
            seed: None,
            replicates: 100,
            sample_sizes: vec![100, 500],
            reference: gk(0.0, 1.0, 1.0, 0.0),
            alternatives: vec![gk(0.0, 1.0, 0.5, 0.0), gk(0.0, 1.0, 0.0, 0.0)],
            probabilities: default_probabilities(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaDataSpec {
    /// Clayton copula with g-and-k margins.
    ClaytonGk { n: usize, dim: usize, psi: f64, margins: GkParams },
    /// Numeric CSV, one observation per row, one variable per column.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcopCmdConfig {
    pub seed: Option<u64>,
    pub data: CopulaDataSpec,
    pub prior: PriorSpec,
    pub draws: usize,
    pub constraint: BcopConstraint,
    pub flavor: LikelihoodFlavor,
}

impl Default for BcopCmdConfig {
    fn default() -> Self {
        Self {
            seed: None,
            data: CopulaDataSpec::ClaytonGk { n: 1000, dim: 5, psi: 1.076, margins: gk(0.0, 1.0, 0.5, 0.0) },
            prior: PriorSpec::Uniform { lower: vec![-1.0], upper: vec![1.0] },
            draws: 100_000,
            constraint: BcopConstraint::PerObservation,
            flavor: LikelihoodFlavor::El,
        }
    }
}
