//! Built-in models: the multivariate-normal toy simulator, the normal-mean
//! example, and the g-and-k distribution with quantile constraints.

use crate::el::{el_maximize_values, ConstraintFunction};
use crate::error::{Error, Result};
use crate::mvt::cholesky;
use crate::prior::PriorSpec;
use crate::rng::{RngStream, StreamRng};
use crate::special::normal_quantile;
use crate::synthetic::SimulatorModel;
use crate::types::{ParameterVector, SummaryVector};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

pub const GK_DEFAULT_C: f64 = 0.8;

fn default_c() -> f64 {
    GK_DEFAULT_C
}

/// g-and-k parameters. `c` is conventionally fixed at 0.8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkParams {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub k: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

impl GkParams {
    pub fn new(a: f64, b: f64, g: f64, k: f64) -> Result<Self> {
        let p = Self { a, b, g, k, c: GK_DEFAULT_C };
        p.validate()?;
        Ok(p)
    }

    pub fn with_c(mut self, c: f64) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.b, self.g, self.k, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("g-and-k parameters must be finite".into()));
        }
        if self.b <= 0.0 {
            return Err(Error::Domain(format!("g-and-k scale must be positive, got {}", self.b)));
        }
        if self.k <= -0.5 {
            return Err(Error::Domain(format!("g-and-k kurtosis must exceed -1/2, got {}", self.k)));
        }
        Ok(())
    }

    /// The quantile at standard normal deviate `z`.
    pub fn transform(&self, z: f64) -> f64 {
        // (1 - e^{-gz}) / (1 + e^{-gz}) = tanh(gz / 2)
        let skew = 1.0 + self.c * (0.5 * self.g * z).tanh();
        self.a + self.b * skew * (1.0 + z * z).powf(self.k) * z
    }
}

pub fn gk_quantile(p: f64, params: &GkParams) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(params.transform(normal_quantile(p)?))
}

/// `nobs` draws by inverting open-interval uniforms.
pub fn gk_simulate<R: Rng + ?Sized>(nobs: usize, params: &GkParams, rng: &mut R) -> Vec<f64> {
    (0..nobs)
        .map(|_| {
            let u: f64 = Open01.sample(rng);
            params.transform(normal_quantile(u).expect("uniform lies in the open unit interval"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileConstraintSpec {
    pub probabilities: Vec<f64>,
}

impl Default for QuantileConstraintSpec {
    fn default() -> Self {
        Self { probabilities: vec![0.1, 0.25, 0.5, 0.75, 0.9] }
    }
}

impl QuantileConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.probabilities;
        if p.is_empty() {
            return Err(Error::Domain("at least one probability is required".into()));
        }
        if p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain("probabilities must lie in (0, 1)".into()));
        }
        if p.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("probabilities must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// `h_j(y) = 1{y < Q(p_j; θ)} - p_j` for the model quantiles of fixed
/// parameters. The θ argument of [`ConstraintFunction`] is ignored; the
/// constraint is deterministic given the data and the parameters it was
/// built with.
#[derive(Debug, Clone, PartialEq)]
pub struct GkQuantileConstraint {
    pub probabilities: Vec<f64>,
    pub quantiles: Vec<f64>,
}

impl GkQuantileConstraint {
    pub fn new(params: &GkParams, spec: &QuantileConstraintSpec) -> Result<Self> {
        params.validate()?;
        spec.validate()?;
        let quantiles = spec.probabilities.iter().map(|&p| gk_quantile(p, params)).collect::<Result<_>>()?;
        Ok(Self { probabilities: spec.probabilities.clone(), quantiles })
    }

    pub fn matrix(&self, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(data.len(), self.quantiles.len(), |i, j| {
            let below = if data[i] < self.quantiles[j] { 1.0 } else { 0.0 };
            below - self.probabilities[j]
        })
    }
}

impl ConstraintFunction for GkQuantileConstraint {
    fn dim(&self) -> usize {
        self.quantiles.len()
    }

    fn eval(&self, y: &[f64], _theta: &[f64], out: &mut [f64]) {
        for ((o, q), p) in out.iter_mut().zip(&self.quantiles).zip(&self.probabilities) {
            *o = if y[0] < *q { 1.0 } else { 0.0 } - p;
        }
    }
}

/// g-and-k quantile constraints whose model quantiles are recomputed from
/// the candidate θ = (a, b, g, k) on each call, for sampling over θ.
#[derive(Debug, Clone, PartialEq)]
pub struct GkParametricConstraint {
    pub spec: QuantileConstraintSpec,
    pub c: f64,
}

impl ConstraintFunction for GkParametricConstraint {
    fn dim(&self) -> usize {
        self.spec.probabilities.len()
    }

    fn eval(&self, y: &[f64], theta: &[f64], out: &mut [f64]) {
        let m = self.values(&[y.to_vec()], theta);
        out.copy_from_slice(m.row(0).transpose().as_slice());
    }

    fn values(&self, data: &[Vec<f64>], theta: &[f64]) -> DMatrix<f64> {
        let params = GkParams { a: theta[0], b: theta[1], g: theta[2], k: theta[3], c: self.c };
        match GkQuantileConstraint::new(&params, &self.spec) {
            Ok(h) => {
                let ys: Vec<f64> = data.iter().map(|y| y[0]).collect();
                h.matrix(&ys)
            }
            // outside the valid parameter region every h_j is positive, so the
            // empirical likelihood is zero
            Err(_) => DMatrix::from_fn(data.len(), self.dim(), |_, j| 1.0 - self.spec.probabilities[j]),
        }
    }
}

/// EL log Bayes factor of `params1` against `params2`,
/// `-(neg2llr_1 - neg2llr_2) / 2`.
pub fn gk_log_bayes_factor(
    data: &[f64],
    params1: &GkParams,
    params2: &GkParams,
    spec: &QuantileConstraintSpec,
) -> Result<f64> {
    let n1 = el_maximize_values(&GkQuantileConstraint::new(params1, spec)?.matrix(data))?.neg2llr;
    let n2 = el_maximize_values(&GkQuantileConstraint::new(params2, spec)?.matrix(data))?.neg2llr;
    match (n1.is_finite(), n2.is_finite()) {
        (true, true) => Ok(-0.5 * (n1 - n2)),
        (false, true) => Ok(f64::NEG_INFINITY),
        (true, false) => Ok(f64::INFINITY),
        (false, false) => {
            Err(Error::Degenerate("both empirical likelihoods are zero; the Bayes factor is undefined".into()))
        }
    }
}

/// Summary = one draw of `N(θ, Σ)` with fixed `Σ`.
#[derive(Debug, Clone)]
pub struct MvnToySimulator {
    factor: DMatrix<f64>,
    deterministic: bool,
}

impl MvnToySimulator {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        crate::mvt::check_symmetric(&covariance, 1e-10)?;
        let chol = cholesky(&covariance, "toy covariance")?;
        Ok(Self { factor: chol.l(), deterministic: false })
    }

    /// The `Σ → 0` limit: the summary equals θ.
    pub fn deterministic(dim: usize) -> Self {
        Self { factor: DMatrix::zeros(dim, dim), deterministic: true }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }
}

impl SimulatorModel for MvnToySimulator {
    fn param_dim(&self) -> usize {
        self.dim()
    }

    fn summary_dim(&self) -> usize {
        self.dim()
    }

    fn simulate(&self, theta: &ParameterVector, rng: &mut StreamRng) -> std::result::Result<SummaryVector, String> {
        if self.deterministic {
            return Ok(SummaryVector::from(theta.to_vec()));
        }
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        Ok(SummaryVector::from(&**theta + &self.factor * z))
    }
}

/// Normal-mean example: `n` observations from `N(mean, sd²)`, uniform prior
/// on `(lower, upper)`, mean constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMeanExample {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub prior_lower: f64,
    pub prior_upper: f64,
}

impl Default for NormalMeanExample {
    fn default() -> Self {
        Self { n: 100, mean: 10.0, sd: 1.0, prior_lower: -10.0, prior_upper: 30.0 }
    }
}

impl NormalMeanExample {
    pub fn data(&self, stream: &RngStream) -> Result<Vec<f64>> {
        let dist = Normal::new(self.mean, self.sd).map_err(|e| Error::Domain(e.to_string()))?;
        let mut rng = stream.rng();
        Ok((0..self.n).map(|_| dist.sample(&mut rng)).collect())
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        PriorSpec::uniform(vec![self.prior_lower], vec![self.prior_upper])
    }
}
