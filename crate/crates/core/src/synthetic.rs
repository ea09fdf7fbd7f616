//! Synthetic likelihood: a multivariate normal fitted to simulated summary
//! statistics.
//!
//! [`fit_moments`] simulates `n` replicates at θ and returns the sample mean
//! and covariance. Two density estimates are built from a fit: the plug-in
//! normal density [`sl_logdensity`] and the Ghurye–Olkin estimator
//! [`ghurye_olkin_log_unbiased`], which is exactly unbiased for the normal
//! density when the summaries are normal and `n > d + 3`.

use crate::error::{Error, Result};
use crate::mcmc::{run_mcmc_bsl, McmcConfig, McmcTrace};
use crate::mvt::{cholesky, log_det, mahalanobis_sq};
use crate::prior::PriorSpec;
use crate::rng::{RngStream, StreamRng};
use crate::special::ln_gamma;
use crate::types::{ParameterVector, SummaryVector};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A generative model reduced to its summary statistic.
///
/// `simulate` must draw all of its randomness from `rng`; the samplers give
/// replicate `j` of every fit the stream with id `j`, which makes fits
/// reproducible and independent of thread scheduling.
pub trait SimulatorModel: Send + Sync {
    fn param_dim(&self) -> usize;
    fn summary_dim(&self) -> usize;
    fn simulate(&self, theta: &ParameterVector, rng: &mut StreamRng) -> std::result::Result<SummaryVector, String>;
}

/// Sample mean and covariance of `n` simulated summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLikelihoodFit {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl SyntheticLikelihoodFit {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `M_n = (n - 1) Σ_n`, the scatter matrix.
    pub fn scatter(&self) -> DMatrix<f64> {
        &self.sigma * (self.n as f64 - 1.0)
    }

    /// Moments of an explicit set of summaries.
    pub fn from_summaries(summaries: &[DVector<f64>]) -> Result<Self> {
        let n = summaries.len();
        if n < 2 {
            return Err(Error::Precondition("need at least two replicates".into()));
        }
        let d = summaries[0].len();
        let mut mu = DVector::zeros(d);
        for s in summaries {
            mu += s;
        }
        mu /= n as f64;
        let mut sigma = DMatrix::zeros(d, d);
        for s in summaries {
            let r = s - &mu;
            sigma.ger(1.0, &r, &r, 1.0);
        }
        sigma /= n as f64 - 1.0;
        sigma = (&sigma + sigma.transpose()) * 0.5;
        Ok(Self { mu, sigma, n })
    }
}

/// Log synthetic-likelihood value. The unbiased estimator is exactly zero
/// with positive probability; that outcome is kept distinct from any float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlEstimate {
    Finite(f64),
    ZeroMass,
}

impl SlEstimate {
    /// The log value, `-inf` for zero mass.
    pub fn log_value(&self) -> f64 {
        match *self {
            SlEstimate::Finite(v) => v,
            SlEstimate::ZeroMass => f64::NEG_INFINITY,
        }
    }

    pub fn is_zero_mass(&self) -> bool {
        matches!(self, SlEstimate::ZeroMass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorFlavor {
    /// `N(s_obs; μ_n, Σ_n)` (BSL).
    #[default]
    Plugin,
    /// Ghurye–Olkin unbiased estimate (uBSL).
    Unbiased,
}

/// Simulate `n` replicates at `theta`; replicate `j` uses `stream.substream(j)`.
pub fn fit_moments<M: SimulatorModel + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    n: usize,
    stream: &RngStream,
) -> Result<SyntheticLikelihoodFit> {
    if n < 2 {
        return Err(Error::Precondition(format!("need n >= 2 replicates, got {n}")));
    }
    let d = model.summary_dim();
    let summaries: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|j| {
            let mut rng = stream.substream(j as u64).rng();
            let s = model.simulate(theta, &mut rng).map_err(|message| Error::Simulation { replicate: j, message })?;
            if s.dim() != d {
                return Err(Error::Simulation {
                    replicate: j,
                    message: format!("summary has dimension {}, expected {d}", s.dim()),
                });
            }
            if !s.is_finite() {
                return Err(Error::Simulation { replicate: j, message: "non-finite summary".into() });
            }
            Ok(s.into_inner())
        })
        .collect::<Result<_>>()?;
    SyntheticLikelihoodFit::from_summaries(&summaries)
}

fn check_obs(s_obs: &SummaryVector, fit: &SyntheticLikelihoodFit) -> Result<()> {
    if s_obs.dim() != fit.dim() {
        return Err(Error::DimensionMismatch { expected: fit.dim(), found: s_obs.dim() });
    }
    Ok(())
}

/// Plug-in log density `log N(s_obs; μ_n, Σ_n)`.
pub fn sl_logdensity(s_obs: &SummaryVector, fit: &SyntheticLikelihoodFit) -> Result<f64> {
    check_obs(s_obs, fit)?;
    let chol = cholesky(&fit.sigma, "synthetic-likelihood covariance")?;
    let d = fit.dim() as f64;
    let r = &**s_obs - &fit.mu;
    Ok(-0.5 * d * LN_2PI - 0.5 * log_det(&chol) - 0.5 * mahalanobis_sq(&chol, &r))
}

/// `log c(d, n-2) - log c(d, n-1)` for the Ghurye–Olkin constant
/// `c(k, v) = 2^{-kv/2} π^{-k(k-1)/4} / Π_{i=1}^k Γ((v - i + 1)/2)`.
fn log_go_constant_ratio(d: usize, n: usize) -> f64 {
    let n = n as f64;
    let gammas: f64 = (1..=d)
        .map(|i| {
            let i = i as f64;
            ln_gamma(0.5 * (n - i)) - ln_gamma(0.5 * (n - 1.0 - i))
        })
        .sum();
    0.5 * d as f64 * std::f64::consts::LN_2 + gammas
}

/// Log of the Ghurye–Olkin unbiased estimate of `N(s_obs; μ, Σ)`.
///
/// With `M = (n-1)Σ_n` and `r = s_obs - μ_n`, the estimate is
/// `(2π)^{-d/2} c(d,n-2)/(c(d,n-1)(1-1/n)^{d/2}) |M|^{-(n-d-2)/2} ψ(M - r rᵀ/(1-1/n))^{(n-d-3)/2}`
/// where `ψ(A) = |A|` for positive definite `A` and zero otherwise. The
/// downdated determinant is `|M| (1 - rᵀM⁻¹r/(1-1/n))`, so `A` is positive
/// definite exactly when that factor is positive.
pub fn ghurye_olkin_log_unbiased(s_obs: &SummaryVector, fit: &SyntheticLikelihoodFit) -> Result<SlEstimate> {
    check_obs(s_obs, fit)?;
    let d = fit.dim();
    let n = fit.n;
    if n <= d + 3 {
        return Err(Error::Precondition(format!("unbiased estimator needs n > d + 3, got n = {n}, d = {d}")));
    }
    let m = fit.scatter();
    let chol = cholesky(&m, "scatter matrix M_n")?;
    let shrink = 1.0 - 1.0 / n as f64;
    let r = &**s_obs - &fit.mu;
    let q = mahalanobis_sq(&chol, &r) / shrink;
    if !(q < 1.0) {
        return Ok(SlEstimate::ZeroMass);
    }
    let (df, nf) = (d as f64, n as f64);
    let log_det_m = log_det(&chol);
    let log_det_a = log_det_m + (-q).ln_1p();
    Ok(SlEstimate::Finite(
        -0.5 * df * LN_2PI + log_go_constant_ratio(d, n) - 0.5 * df * shrink.ln() - 0.5 * (nf - df - 2.0) * log_det_m
            + 0.5 * (nf - df - 3.0) * log_det_a,
    ))
}

pub fn estimate_log_sl(
    flavor: EstimatorFlavor,
    s_obs: &SummaryVector,
    fit: &SyntheticLikelihoodFit,
) -> Result<SlEstimate> {
    match flavor {
        EstimatorFlavor::Plugin => sl_logdensity(s_obs, fit).map(SlEstimate::Finite),
        EstimatorFlavor::Unbiased => ghurye_olkin_log_unbiased(s_obs, fit),
    }
}

#[derive(Debug, Clone)]
pub struct MaxSlEstimate {
    pub theta: ParameterVector,
    pub log_sl: f64,
    pub trace: McmcTrace,
}

/// Maximum synthetic-likelihood point estimate: run the MH chain and keep
/// the visited state with the highest estimated log SL.
pub fn max_synthetic_likelihood<M: SimulatorModel + ?Sized>(
    model: &M,
    s_obs: &SummaryVector,
    prior: &PriorSpec,
    config: &McmcConfig,
    stream: &RngStream,
) -> Result<MaxSlEstimate> {
    let trace = run_mcmc_bsl(model, s_obs, prior, config, stream)?;
    let best = trace
        .log_sl
        .iter()
        .enumerate()
        .filter(|(_, v)| v.log_value().is_finite())
        .max_by(|a, b| a.1.log_value().total_cmp(&b.1.log_value()))
        .map(|(i, v)| (i, v.log_value()))
        .ok_or_else(|| Error::Degenerate("no visited state has an estimable synthetic likelihood".into()))?;
    Ok(MaxSlEstimate { theta: trace.states[best.0].clone(), log_sl: best.1, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningRow {
    pub n: usize,
    pub mean_log_sl: f64,
    /// Sample standard deviation over the finite estimates.
    pub sd_log_sl: f64,
    /// Replications that gave zero mass or a non-positive-definite fit.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningTable {
    pub rows: Vec<TuningRow>,
    /// Smallest candidate whose log-SL standard deviation is at most
    /// [`TARGET_LOG_SL_SD`].
    pub recommended: Option<usize>,
}

/// Candidate `n` values are judged by the spread of the log SL at a point of
/// high posterior support; a standard deviation near 2 tends to be efficient.
pub const TARGET_LOG_SL_SD: f64 = 2.0;

pub fn tune_n_diagnostic<M: SimulatorModel + ?Sized>(
    model: &M,
    s_obs: &SummaryVector,
    theta_ref: &ParameterVector,
    candidates: &[usize],
    replications: usize,
    flavor: EstimatorFlavor,
    stream: &RngStream,
) -> Result<TuningTable> {
    if replications < 2 {
        return Err(Error::Precondition("need at least two replications".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for (c, &n) in candidates.iter().enumerate() {
        let base = stream.substream(c as u64);
        let mut values = Vec::with_capacity(replications);
        let mut failures = 0;
        for r in 0..replications {
            let fit = fit_moments(model, theta_ref, n, &base.substream(r as u64))?;
            match estimate_log_sl(flavor, s_obs, &fit) {
                Ok(SlEstimate::Finite(v)) => values.push(v),
                Ok(SlEstimate::ZeroMass) | Err(Error::NotPositiveDefinite(_)) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        let (mean_log_sl, sd_log_sl) = if values.len() >= 2 {
            (crate::stats::mean(&values), crate::stats::variance(&values).sqrt())
        } else {
            (f64::NAN, f64::INFINITY)
        };
        rows.push(TuningRow { n, mean_log_sl, sd_log_sl, failures });
    }
    let recommended = rows.iter().filter(|r| r.sd_log_sl <= TARGET_LOG_SL_SD).map(|r| r.n).min();
    Ok(TuningTable { rows, recommended })
}


#[cfg(test)]
mod tests {
    use super::test_models::*;
    use super::*;
    use statrs::function::gamma::gamma;

    struct Constant(Vec<f64>);
    impl SimulatorModel for Constant {
        fn param_dim(&self) -> usize {
            1
        }
        fn summary_dim(&self) -> usize {
            self.0.len()
        }
        fn simulate(&self, _: &ParameterVector, _: &mut StreamRng) -> std::result::Result<SummaryVector, String> {
            Ok(SummaryVector::new(self.0.clone()))
        }
    }

    struct Failing;
    impl SimulatorModel for Failing {
        fn param_dim(&self) -> usize {
            1
        }
        fn summary_dim(&self) -> usize {
            1
        }
        fn simulate(&self, _: &ParameterVector, rng: &mut StreamRng) -> std::result::Result<SummaryVector, String> {
            if rng.get_stream() == 3 {
                Err("boom".into())
            } else {
                Ok(SummaryVector::new(vec![0.0]))
            }
        }
    }

    fn fit(mu: Vec<f64>, sigma: DMatrix<f64>, n: usize) -> SyntheticLikelihoodFit {
        SyntheticLikelihoodFit { mu: DVector::from_vec(mu), sigma, n }
    }

    #[test]
    fn constant_simulator_has_zero_covariance() {
        let f = fit_moments(&Constant(vec![1.5, -2.0]), &vec![0.0].into(), 10, &RngStream::from_seed(1)).unwrap();
        assert_eq!(f.mu.as_slice(), &[1.5, -2.0]);
        assert!(f.sigma.iter().all(|v| *v == 0.0));
        assert!(matches!(sl_logdensity(&vec![1.5, -2.0].into(), &f), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn failure_reports_replicate() {
        let err = fit_moments(&Failing, &vec![0.0].into(), 8, &RngStream::from_seed(1)).unwrap_err();
        assert_eq!(err, Error::Simulation { replicate: 3, message: "boom".into() });
        assert!(fit_moments(&Failing, &vec![0.0].into(), 1, &RngStream::from_seed(1)).is_err());
    }

    #[test]
    fn fit_is_reproducible_and_symmetric() {
        let m = UnitNormal { dim: 3 };
        let theta: ParameterVector = vec![1.0, 2.0, 3.0].into();
        let a = fit_moments(&m, &theta, 500, &RngStream::new(3, 1)).unwrap();
        let b = fit_moments(&m, &theta, 500, &RngStream::new(3, 1)).unwrap();
        assert_eq!(a, b);
        assert!((&a.sigma - a.sigma.transpose()).amax() < 1e-10);
    }

    #[test]
    fn fit_recovers_known_moments() {
        let m = UnitNormal { dim: 2 };
        let theta: ParameterVector = vec![0.5, -1.0].into();
        let n = 100_000;
        let f = fit_moments(&m, &theta, n, &RngStream::new(7, 0)).unwrap();
        let se = 1.0 / (n as f64).sqrt();
        assert!((&f.mu - &*theta).amax() < 5.0 * se);
        // var of a sample variance entry ≈ 2/n, of a covariance entry ≈ 1/n
        assert!((f.sigma[(0, 0)] - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
        assert!(f.sigma[(0, 1)].abs() < 5.0 * se);
    }

    #[test]
    fn plugin_density_simple_cases() {
        let f1 = fit(vec![0.0], DMatrix::identity(1, 1), 10);
        let v = sl_logdensity(&vec![0.0].into(), &f1).unwrap();
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
        let f2 = fit(vec![3.0, 4.0], DMatrix::identity(2, 2), 10);
        let v = sl_logdensity(&vec![3.0, 4.0].into(), &f2).unwrap();
        assert!((v + LN_2PI).abs() < 1e-15);
    }

    fn inverse_3x3(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let c = |i: usize, j: usize| {
            let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
            let s: Vec<usize> = (0..3).filter(|&k| k != j).collect();
            let minor = m[(r[0], s[0])] * m[(r[1], s[1])] - m[(r[0], s[1])] * m[(r[1], s[0])];
            if (i + j) % 2 == 0 {
                minor
            } else {
                -minor
            }
        };
        let det = (0..3).map(|j| m[(0, j)] * c(0, j)).sum::<f64>();
        (DMatrix::from_fn(3, 3, |i, j| c(j, i) / det), det)
    }

    #[test]
    fn plugin_density_matches_explicit_inverse() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.5, 0.2, -0.4, 0.2, 0.9]);
        let mu = vec![0.1, -0.7, 1.3];
        let s = vec![0.5, 0.2, 0.4];
        let (inv, det) = inverse_3x3(&sigma);
        let r = DVector::from_vec(s.iter().zip(&mu).map(|(a, b)| a - b).collect());
        let oracle = -1.5 * LN_2PI - 0.5 * det.ln() - 0.5 * (r.transpose() * inv * &r)[(0, 0)];
        let v = sl_logdensity(&s.into(), &fit(mu, sigma, 50)).unwrap();
        assert!((v - oracle).abs() < 1e-10);
    }

    #[test]
    fn plugin_density_permutation_invariant() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.5, 0.2, -0.4, 0.2, 0.9]);
        let mu = vec![0.1, -0.7, 1.3];
        let s = vec![0.5, 0.2, 0.4];
        let perm = [2, 0, 1];
        let sigma_p = DMatrix::from_fn(3, 3, |i, j| sigma[(perm[i], perm[j])]);
        let a = sl_logdensity(&s.clone().into(), &fit(mu.clone(), sigma, 9)).unwrap();
        let b = sl_logdensity(
            &perm.iter().map(|&i| s[i]).collect::<Vec<_>>().into(),
            &fit(perm.iter().map(|&i| mu[i]).collect(), sigma_p, 9),
        )
        .unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn unbiased_scalar_formula() {
        // d = 1: c(1, v) = 2^{-v/2} / Γ(v/2), evaluated directly.
        let c = |v: f64| 2f64.powf(-v / 2.0) / gamma(v / 2.0);
        for &(n, mu, s2, s) in &[(10usize, 0.2, 1.3, 0.5), (7, -1.0, 0.4, -0.8), (25, 0.0, 2.0, 1.1)] {
            let nf = n as f64;
            let m = (nf - 1.0) * s2;
            let shrink = 1.0 - 1.0 / nf;
            let a = m - (s - mu) * (s - mu) / shrink;
            let oracle = (2.0 * std::f64::consts::PI).powf(-0.5) * c(nf - 2.0) / (c(nf - 1.0) * shrink.sqrt())
                * m.powf(-(nf - 3.0) / 2.0)
                * a.powf((nf - 4.0) / 2.0);
            let v =
                ghurye_olkin_log_unbiased(&vec![s].into(), &fit(vec![mu], DMatrix::from_element(1, 1, s2), n)).unwrap();
            match v {
                SlEstimate::Finite(l) => assert!((l.exp() - oracle).abs() < 1e-12 * oracle.max(1.0), "{n}"),
                SlEstimate::ZeroMass => panic!("unexpected zero mass"),
            }
        }
    }

    #[test]
    fn unbiased_zero_mass_far_from_cloud() {
        let f = fit(vec![0.0, 0.0], DMatrix::identity(2, 2), 20);
        assert_eq!(ghurye_olkin_log_unbiased(&vec![10.0, -10.0].into(), &f).unwrap(), SlEstimate::ZeroMass);
        assert_eq!(SlEstimate::ZeroMass.log_value(), f64::NEG_INFINITY);
    }

    #[test]
    fn unbiased_preconditions() {
        let f = fit(vec![0.0, 0.0], DMatrix::identity(2, 2), 5);
        assert!(matches!(ghurye_olkin_log_unbiased(&vec![0.0, 0.0].into(), &f), Err(Error::Precondition(_))));
        let f = fit(vec![0.0, 0.0], DMatrix::zeros(2, 2), 50);
        assert!(matches!(ghurye_olkin_log_unbiased(&vec![0.0, 0.0].into(), &f), Err(Error::NotPositiveDefinite(_))));
        let boundary = fit(vec![0.0, 0.0], DMatrix::identity(2, 2), 6);
        assert!(ghurye_olkin_log_unbiased(&vec![0.1, 0.0].into(), &boundary).is_ok());
    }

    #[test]
    fn unbiased_agrees_with_plugin_for_large_n() {
        let m = UnitNormal { dim: 2 };
        let theta: ParameterVector = vec![0.0, 0.0].into();
        let s_obs: SummaryVector = vec![0.2, -0.3].into();
        let f = fit_moments(&m, &theta, 10_000, &RngStream::new(12, 0)).unwrap();
        let a = sl_logdensity(&s_obs, &f).unwrap();
        let b = ghurye_olkin_log_unbiased(&s_obs, &f).unwrap().log_value();
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }

    #[test]
    fn tuning_balanced_simulator_has_zero_spread() {
        let candidates = [5, 10, 20];
        let m = Balanced::new(20);
        let table = tune_n_diagnostic(
            &m,
            &vec![0.3].into(),
            &vec![0.0].into(),
            &candidates,
            5,
            EstimatorFlavor::Plugin,
            &RngStream::from_seed(1),
        )
        .unwrap();
        assert_eq!(table.rows.len(), candidates.len());
        assert!(table.rows.iter().all(|r| r.sd_log_sl == 0.0 || r.sd_log_sl < 1e-12));
        assert_eq!(table.recommended, Some(5));
    }

    #[test]
    fn tuning_spread_shrinks_with_n() {
        let candidates = [5, 10, 20, 40, 80];
        let m = UnitNormal { dim: 3 };
        let table = tune_n_diagnostic(
            &m,
            &vec![0.5, -0.5, 0.2].into(),
            &vec![0.0, 0.0, 0.0].into(),
            &candidates,
            150,
            EstimatorFlavor::Plugin,
            &RngStream::from_seed(21),
        )
        .unwrap();
        let inversions = table.rows.windows(2).filter(|w| w[1].sd_log_sl > w[0].sd_log_sl).count();
        assert!(inversions <= 1, "{:?}", table.rows);
        assert_eq!(table.rows.len(), 5);
    }
}
