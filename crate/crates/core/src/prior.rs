//! Prior distributions over the parameter vector.

use crate::error::{Error, Result};
use crate::types::ParameterVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// A one-dimensional prior factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::Domain(format!(
                        "uniform prior needs finite lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            Marginal::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return Err(Error::Domain(format!(
                        "normal prior needs finite mean and sd > 0, got ({mean}, {sd})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if x >= lower && x <= upper {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Marginal::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }
}

/// Independent prior over every coordinate of θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    Normal { mean: Vec<f64>, sd: Vec<f64> },
    Product { marginals: Vec<Marginal> },
}

impl PriorSpec {
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let prior = PriorSpec::Uniform { lower, upper };
        prior.validate()?;
        Ok(prior)
    }

    pub fn normal(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        let prior = PriorSpec::Normal { mean, sd };
        prior.validate()?;
        Ok(prior)
    }

    pub fn product(marginals: Vec<Marginal>) -> Result<Self> {
        let prior = PriorSpec::Product { marginals };
        prior.validate()?;
        Ok(prior)
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Uniform { lower, .. } => lower.len(),
            PriorSpec::Normal { mean, .. } => mean.len(),
            PriorSpec::Product { marginals } => marginals.len(),
        }
    }

    pub fn marginal(&self, i: usize) -> Marginal {
        match self {
            PriorSpec::Uniform { lower, upper } => Marginal::Uniform { lower: lower[i], upper: upper[i] },
            PriorSpec::Normal { mean, sd } => Marginal::Normal { mean: mean[i], sd: sd[i] },
            PriorSpec::Product { marginals } => marginals[i].clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = match self {
            PriorSpec::Uniform { lower, upper } => (lower.len(), upper.len()),
            PriorSpec::Normal { mean, sd } => (mean.len(), sd.len()),
            PriorSpec::Product { marginals } => (marginals.len(), marginals.len()),
        };
        if a != b {
            return Err(Error::DimensionMismatch { expected: a, found: b });
        }
        if a == 0 {
            return Err(Error::Domain("prior must have at least one coordinate".into()));
        }
        (0..a).try_for_each(|i| self.marginal(i).validate())
    }

    /// Log density at θ; `-inf` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        theta.iter().enumerate().map(|(i, &x)| self.marginal(i).log_density(x)).sum()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.log_density(theta) > f64::NEG_INFINITY
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        ParameterVector::new((0..self.dim()).map(|i| self.marginal(i).sample(rng)).collect())
    }
}
