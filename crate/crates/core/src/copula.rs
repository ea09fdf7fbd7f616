//! Clayton copulas, pseudo-observations, multivariate Spearman's ρ and the
//! empirical-likelihood posterior for ρ.
//!
//! The multivariate Spearman's ρ of a copula `C` on `[0,1]^d` is
//! `h(d) (2^d ∫ C(u) du - 1)` with `h(d) = (d + 1) / (2^d - d - 1)`. Since
//! `∫ C(u) du = E Π_j (1 - U_j)`, it is estimated from pseudo-observations by
//! `h(d) ((2^d / n) Σ_i Π_j (1 - u_ij) - 1)`.

use crate::bcel::{log_likelihood_ratio, LikelihoodFlavor};
use crate::el::MeanConstraint;
use crate::error::{Error, Result};
use crate::prior::{Marginal, PriorSpec};
use crate::rng::RngStream;
use crate::weights::{log_sum_exp, WeightedSample};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Clayton copula `C(u) = (Σ u_j^{-ψ} - d + 1)^{-1/ψ}`, or the independence
/// copula in the `ψ → 0` limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaytonCopula {
    dim: usize,
    psi: Option<f64>,
}

impl ClaytonCopula {
    /// `ψ ∈ [-1, ∞) \ {0}`; negative ψ only for `d = 2`.
    pub fn new(dim: usize, psi: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain(format!("copula dimension must be at least 2, got {dim}")));
        }
        if !psi.is_finite() || psi < -1.0 || psi == 0.0 {
            return Err(Error::Domain(format!("Clayton parameter must lie in [-1, inf) without 0, got {psi}")));
        }
        if dim > 2 && psi < 0.0 {
            return Err(Error::Domain("negative Clayton parameters are only valid in two dimensions".into()));
        }
        Ok(Self { dim, psi: Some(psi) })
    }

    pub fn independence(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain(format!("copula dimension must be at least 2, got {dim}")));
        }
        Ok(Self { dim, psi: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `None` for the independence copula.
    pub fn psi(&self) -> Option<f64> {
        self.psi
    }

    pub fn cdf(&self, u: &[f64]) -> f64 {
        match self.psi {
            None => u.iter().product(),
            Some(psi) => {
                let s: f64 = u.iter().map(|x| x.powf(-psi)).sum::<f64>() - self.dim as f64 + 1.0;
                if s <= 0.0 {
                    0.0
                } else {
                    s.powf(-1.0 / psi)
                }
            }
        }
    }
}

/// `n` draws as the rows of an `n × d` matrix.
///
/// Positive ψ uses the Marshall–Olkin frailty construction
/// `U_j = (1 + E_j / V)^{-1/ψ}` with `V ~ Gamma(1/ψ, 1)`; negative ψ
/// (bivariate only) inverts the conditional distribution of `U_2 | U_1`.
pub fn clayton_sample<R: Rng + ?Sized>(n: usize, copula: &ClaytonCopula, rng: &mut R) -> DMatrix<f64> {
    let d = copula.dim;
    let mut out = DMatrix::zeros(n, d);
    match copula.psi {
        None => {
            for i in 0..n {
                for j in 0..d {
                    out[(i, j)] = Open01.sample(rng);
                }
            }
        }
        Some(psi) if psi > 0.0 => {
            let frailty = Gamma::new(1.0 / psi, 1.0).expect("shape and scale are positive");
            for i in 0..n {
                let v: f64 = frailty.sample(rng);
                for j in 0..d {
                    let e: f64 = Exp1.sample(rng);
                    out[(i, j)] = (-(e / v).ln_1p() / psi).exp().max(f64::MIN_POSITIVE);
                }
            }
        }
        Some(psi) => {
            for i in 0..n {
                let u1: f64 = Open01.sample(rng);
                let w: f64 = Open01.sample(rng);
                out[(i, 0)] = u1;
                out[(i, 1)] = if psi == -1.0 {
                    1.0 - u1
                } else {
                    let inner = u1.powf(-psi) * (w.powf(-psi / (1.0 + psi)) - 1.0) + 1.0;
                    inner.max(0.0).powf(-1.0 / psi)
                };
            }
        }
    }
    out
}

/// Columnwise ranks divided by `n`, ties sharing their average rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservations {
    u: DMatrix<f64>,
}

impl PseudoObservations {
    /// Wraps values already on the unit scale, e.g. probability-integral
    /// transforms from fitted marginals.
    pub fn from_matrix(u: DMatrix<f64>) -> Result<Self> {
        if u.nrows() < 2 || u.ncols() < 2 {
            return Err(Error::Precondition("need at least two observations of at least two variables".into()));
        }
        if u.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::Data("pseudo-observations must lie in (0, 1]".into()));
        }
        Ok(Self { u })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Entry `(i, j)` with 1 replaced by `1 - 1/(2n)`, so no product of
    /// `1 - u` vanishes exactly.
    fn clipped(&self, i: usize, j: usize) -> f64 {
        let v = self.u[(i, j)];
        if v >= 1.0 {
            1.0 - 0.5 / self.n() as f64
        } else {
            v
        }
    }
}

fn average_ranks(column: &[f64]) -> Vec<f64> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && column[order[end]] == column[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = 0.5 * ((start + 1 + end) as f64);
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pseudo_observations(data: &DMatrix<f64>) -> Result<PseudoObservations> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::Precondition("pseudo-observations need at least two rows".into()));
    }
    if d < 2 {
        return Err(Error::Precondition("pseudo-observations need at least two columns".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("data contain non-finite values".into()));
    }
    let mut u = DMatrix::zeros(n, d);
    for j in 0..d {
        let col: Vec<f64> = data.column(j).iter().copied().collect();
        for (i, r) in average_ranks(&col).into_iter().enumerate() {
            u[(i, j)] = r / n as f64;
        }
    }
    Ok(PseudoObservations { u })
}

/// `h(d) = (d + 1) / (2^d - (d + 1))`.
pub fn spearman_h(d: usize) -> f64 {
    let d = d as f64;
    (d + 1.0) / (2f64.powf(d) - (d + 1.0))
}

/// Per-observation terms `h(d) (2^d Π_j (1 - u_ij) - 1)`, whose mean is ρ̂.
pub fn spearman_terms(u: &PseudoObservations) -> Vec<f64> {
    let d = u.dim();
    let (h, scale) = (spearman_h(d), 2f64.powi(d as i32));
    (0..u.n())
        .map(|i| {
            let prod: f64 = (0..d).map(|j| 1.0 - u.clipped(i, j)).product();
            h * (scale * prod - 1.0)
        })
        .collect()
}

pub fn spearman_rho_multivariate(u: &PseudoObservations) -> f64 {
    let terms = spearman_terms(u);
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Jackknife pseudo-values `n ρ̂ - (n - 1) ρ̂_{(-i)}`, where each
/// leave-one-out estimate re-ranks the remaining observations.
pub fn spearman_jackknife(u: &PseudoObservations) -> Vec<f64> {
    let (n, d) = (u.n(), u.dim());
    let full = spearman_rho_multivariate(u);
    let (h, scale) = (spearman_h(d), 2f64.powi(d as i32));
    let m = (n - 1) as f64;
    let ranks = u.matrix() * n as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut total = 0.0;
            for k in (0..n).filter(|&k| k != i) {
                let mut prod = 1.0;
                for j in 0..d {
                    let (rk, ri) = (ranks[(k, j)], ranks[(i, j)]);
                    // removing observation i lowers the rank of values above
                    // it by one and of tied values by one half
                    let shift = if ri < rk {
                        1.0
                    } else if ri == rk {
                        0.5
                    } else {
                        0.0
                    };
                    let mut v = (rk - shift) / m;
                    if v >= 1.0 {
                        v = 1.0 - 0.5 / m;
                    }
                    prod *= 1.0 - v;
                }
                total += prod;
            }
            let loo = h * (scale / m * total - 1.0);
            n as f64 * full - m * loo
        })
        .collect()
}

/// Moment condition used for ρ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcopConstraint {
    /// `E[h(d) (2^d Π_j (1 - U_j) - 1)] - ρ = 0` over the observations.
    #[default]
    PerObservation,
    /// Jackknife pseudo-values of the estimator minus ρ.
    EstimatorResidual,
}

/// Where the pseudo-observations come from.
#[derive(Debug, Clone)]
pub enum MarginalSource {
    /// Ranks of the raw data (a single marginal draw).
    Nonparametric(DMatrix<f64>),
    /// One set of pseudo-observations per marginal posterior draw.
    Draws(Vec<PseudoObservations>),
}

#[derive(Debug, Clone)]
pub struct BcopConfig {
    /// Prior draws `B`.
    pub draws: usize,
    /// One-dimensional prior on ρ with support inside `[-1, 1]`.
    pub prior: PriorSpec,
    pub constraint: BcopConstraint,
    pub flavor: LikelihoodFlavor,
}

impl BcopConfig {
    pub fn new(draws: usize, prior: PriorSpec) -> Self {
        Self { draws, prior, constraint: BcopConstraint::PerObservation, flavor: LikelihoodFlavor::El }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::Precondition("at least two prior draws are required".into()));
        }
        self.prior.validate()?;
        if self.prior.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.prior.dim() });
        }
        match self.prior.marginal(0) {
            Marginal::Uniform { lower, upper } if lower >= -1.0 && upper <= 1.0 => Ok(()),
            _ => Err(Error::Domain("the prior on rho must be uniform with support inside [-1, 1]".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BcopOutput {
    /// ρ draws with weights averaged over the marginal draws.
    pub sample: WeightedSample,
    /// Point estimate ρ̂ from the first set of pseudo-observations.
    pub rho_hat: f64,
}

/// Empirical-likelihood posterior for multivariate Spearman's ρ.
pub fn run_bcop(marginals: &MarginalSource, config: &BcopConfig, stream: &RngStream) -> Result<BcopOutput> {
    config.validate()?;
    let sets = match marginals {
        MarginalSource::Nonparametric(data) => vec![pseudo_observations(data)?],
        MarginalSource::Draws(sets) if sets.is_empty() => {
            return Err(Error::Precondition("at least one set of marginal draws is required".into()))
        }
        MarginalSource::Draws(sets) => sets.clone(),
    };
    let values: Vec<Vec<Vec<f64>>> = sets
        .iter()
        .map(|u| {
            let v = match config.constraint {
                BcopConstraint::PerObservation => spearman_terms(u),
                BcopConstraint::EstimatorResidual => spearman_jackknife(u),
            };
            v.into_iter().map(|x| vec![x]).collect()
        })
        .collect();
    let rho_hat = spearman_rho_multivariate(&sets[0]);

    let draws = stream.substream(1);
    let prior = &config.prior;
    let points: Vec<_> =
        (0..config.draws).into_par_iter().map(|b| prior.sample(&mut draws.substream(b as u64).rng())).collect();
    let constraint = MeanConstraint { dim: 1 };
    let s = values.len() as f64;
    let log_w = points
        .par_iter()
        .map(|rho| {
            let per_set = values
                .iter()
                .map(|v| log_likelihood_ratio(v, rho.as_slice(), &constraint, config.flavor))
                .collect::<Result<Vec<_>>>()?;
            Ok(log_sum_exp(&per_set) - s.ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    if log_w.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(Error::Degenerate("every prior draw of rho has zero empirical likelihood".into()));
    }
    let generations = vec![1; points.len()];
    Ok(BcopOutput { sample: WeightedSample::from_log_weights(points, log_w, generations)?, rho_hat })
}
