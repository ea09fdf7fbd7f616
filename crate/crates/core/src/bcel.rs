//! Importance sampling with empirical-likelihood weights.
//!
//! [`run_bcel`] draws `M` parameters from the prior and weights each by its
//! empirical likelihood ratio `exp(-neg2llr / 2)`, which is proportional to
//! `Π p_i` and so gives the same self-normalized posterior. Draws for which
//! zero lies outside the hull of the constraint values get weight zero.
//!
//! [`run_bcel_amis`] adapts the proposal: after the prior generation, each
//! generation draws from a Student t₃ fitted to every weighted point so far,
//! and all points are re-weighted against a mixture of the proposals used.
//!
//! Stream layout: generation `g` (1-based) draws point `i` from
//! `stream.substream(g).substream(i)`; resampling uses `stream.substream(0)`.

use crate::el::{betel_maximize_values, el_maximize_values, ConstraintFunction};
use crate::error::{Error, Result};
use crate::mvt::MvtStudentT3;
use crate::prior::PriorSpec;
use crate::rng::RngStream;
use crate::types::ParameterVector;
use crate::weights::{ess_from_log_weights, log_sum_exp, multinomial_resample, weighted_moments, WeightedSample};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodFlavor {
    #[default]
    El,
    Betel,
}

#[derive(Clone)]
pub struct BcelConfig {
    /// Draws per generation, `M`.
    pub draws: usize,
    pub prior: PriorSpec,
    pub constraint: Arc<dyn ConstraintFunction>,
    pub flavor: LikelihoodFlavor,
    /// Size of the equal-weight resample; defaults to `draws`.
    pub resample_count: Option<usize>,
}

impl std::fmt::Debug for BcelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BcelConfig")
            .field("draws", &self.draws)
            .field("prior", &self.prior)
            .field("constraints", &self.constraint.dim())
            .field("flavor", &self.flavor)
            .field("resample_count", &self.resample_count)
            .finish()
    }
}

impl BcelConfig {
    pub fn new(draws: usize, prior: PriorSpec, constraint: Arc<dyn ConstraintFunction>) -> Self {
        Self { draws, prior, constraint, flavor: LikelihoodFlavor::El, resample_count: None }
    }

    pub fn with_flavor(mut self, flavor: LikelihoodFlavor) -> Self {
        self.flavor = flavor;
        self
    }

    pub fn with_resample_count(mut self, count: usize) -> Self {
        self.resample_count = Some(count);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::Precondition("at least two draws per generation are required".into()));
        }
        if self.resample_count == Some(0) {
            return Err(Error::Precondition("resample count must be at least 1".into()));
        }
        self.prior.validate()
    }
}

/// Log empirical likelihood ratio `log Π n p_i` at θ; `-inf` when infeasible.
pub fn log_likelihood_ratio(
    data: &[Vec<f64>],
    theta: &[f64],
    constraint: &dyn ConstraintFunction,
    flavor: LikelihoodFlavor,
) -> Result<f64> {
    let h = constraint.values(data, theta);
    match flavor {
        LikelihoodFlavor::El => Ok(el_maximize_values(&h)?.log_ratio()),
        LikelihoodFlavor::Betel => {
            let n = data.len() as f64;
            Ok(betel_maximize_values(&h)?.log_likelihood + n * n.ln())
        }
    }
}

fn no_mass() -> Error {
    Error::Degenerate(
        "every draw has zero empirical likelihood; widen the constraints or the prior, or increase the number of draws"
            .into(),
    )
}

fn draw_generation(
    draw: &(dyn Fn(&RngStream) -> ParameterVector + Sync),
    count: usize,
    stream: &RngStream,
) -> Vec<ParameterVector> {
    (0..count).into_par_iter().map(|i| draw(&stream.substream(i as u64))).collect()
}

/// `log L(θ)`, skipped (`-inf`) outside the prior support.
fn log_likelihoods(data: &[Vec<f64>], points: &[ParameterVector], config: &BcelConfig) -> Result<Vec<f64>> {
    points
        .par_iter()
        .map(|theta| {
            if !config.prior.contains(theta.as_slice()) {
                return Ok(f64::NEG_INFINITY);
            }
            log_likelihood_ratio(data, theta.as_slice(), config.constraint.as_ref(), config.flavor)
        })
        .collect()
}

/// Prior importance sampling with empirical-likelihood weights.
pub fn run_bcel(data: &[Vec<f64>], config: &BcelConfig, stream: &RngStream) -> Result<WeightedSample> {
    config.validate()?;
    let prior = &config.prior;
    let points = draw_generation(&|s: &RngStream| prior.sample(&mut s.rng()), config.draws, &stream.substream(1));
    let log_w = log_likelihoods(data, &points, config)?;
    if log_w.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(no_mass());
    }
    let generations = vec![1; points.len()];
    WeightedSample::from_log_weights(points, log_w, generations)
}

/// [`run_bcel`] followed by a multinomial resample to equal weights.
pub fn run_bcel_resampled(data: &[Vec<f64>], config: &BcelConfig, stream: &RngStream) -> Result<Vec<ParameterVector>> {
    let sample = run_bcel(data, config, stream)?;
    let ess = sample.ess()?;
    if ess < 2.0 {
        return Err(Error::Degenerate(format!(
            "effective sample size {ess:.3} is below 2; resampling would repeat one draw"
        )));
    }
    multinomial_resample(&sample, config.resample_count.unwrap_or(config.draws), &stream.substream(0))
}

/// Denominator used when weighting AMIS draws after generation `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmisDenominator {
    /// `Σ_{s=1}^{t-1} q_s(θ)`, with `q_1` the prior; generation 1 alone uses
    /// the prior.
    #[default]
    AsPrinted,
    /// The deterministic mixture `(1/t) Σ_{s=1}^{t} q_s(θ)`.
    Standard,
}

#[derive(Debug, Clone)]
pub struct AmisConfig {
    pub base: BcelConfig,
    /// Number of generations `T_M`, including the prior generation.
    pub generations: usize,
    /// Ridge added once when a fitted covariance is singular; defaults to
    /// `1e-8 · trace(Σ) / p`.
    pub jitter: Option<f64>,
    pub denominator: AmisDenominator,
}

impl AmisConfig {
    pub fn new(base: BcelConfig, generations: usize) -> Self {
        Self { base, generations, jitter: None, denominator: AmisDenominator::AsPrinted }
    }

    pub fn with_denominator(mut self, denominator: AmisDenominator) -> Self {
        self.denominator = denominator;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = Some(jitter);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.generations == 0 {
            return Err(Error::Precondition("AMIS needs at least one generation".into()));
        }
        if let Some(j) = self.jitter {
            if !(j >= 0.0 && j.is_finite()) {
                return Err(Error::Domain(format!("jitter must be finite and nonnegative, got {j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AmisOutput {
    /// All points with final weights, tagged by generation.
    pub sample: WeightedSample,
    /// t₃ proposals of generations `2..`, in order.
    pub proposals: Vec<MvtStudentT3>,
    pub generations_completed: usize,
    /// Set when a generation's own ESS fell below 2; that generation is
    /// dropped and the previous weights are returned.
    pub stopped_early: bool,
}

/// `log` of the AMIS denominator for one point after `t` generations, given
/// `log q_s(θ)` for `s = 1..` (index 0 is the prior).
fn log_denominator(log_q: &[f64], t: usize, rule: AmisDenominator) -> f64 {
    match rule {
        AmisDenominator::AsPrinted if t == 1 => log_q[0],
        AmisDenominator::AsPrinted => log_sum_exp(&log_q[..t - 1]),
        AmisDenominator::Standard => log_sum_exp(&log_q[..t]) - (t as f64).ln(),
    }
}

/// `log L + log π - log D`, with `log π = log q_1`. The prior term is
/// combined with the denominator first so generation-1 weights equal the
/// plain EL weights exactly.
fn amis_log_weights(log_lik: &[f64], log_q: &[Vec<f64>], t: usize, rule: AmisDenominator) -> Vec<f64> {
    log_lik
        .iter()
        .zip(log_q)
        .map(|(&ll, q)| if ll == f64::NEG_INFINITY { ll } else { ll + (q[0] - log_denominator(q, t, rule)) })
        .collect()
}

fn fit_proposal(sample: &WeightedSample, jitter: Option<f64>, generation: usize) -> Result<MvtStudentT3> {
    let moments = weighted_moments(sample)?;
    let p = moments.mean.len();
    let mut scale = moments.covariance;
    if moments.singular {
        let eps = jitter.unwrap_or(1e-8 * scale.trace() / p as f64);
        scale += DMatrix::identity(p, p) * eps;
    }
    MvtStudentT3::new(moments.mean, scale).map_err(|_| {
        Error::NotPositiveDefinite(format!("generation {generation}: weighted covariance stays singular after jitter"))
    })
}

/// Adaptive multiple importance sampling with empirical-likelihood weights.
pub fn run_bcel_amis(data: &[Vec<f64>], config: &AmisConfig, stream: &RngStream) -> Result<AmisOutput> {
    config.validate()?;
    let base = &config.base;
    let prior = &base.prior;
    let m = base.draws;

    let mut points = draw_generation(&|s: &RngStream| prior.sample(&mut s.rng()), m, &stream.substream(1));
    let mut log_lik = log_likelihoods(data, &points, base)?;
    let mut log_q: Vec<Vec<f64>> = points.iter().map(|p| vec![prior.log_density(p.as_slice())]).collect();
    let mut generations = vec![1u32; m];
    let mut log_w = amis_log_weights(&log_lik, &log_q, 1, config.denominator);
    if log_w.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(no_mass());
    }
    if ess_from_log_weights(&log_w)? < 2.0 {
        return Err(Error::Degenerate("first generation has effective sample size below 2".into()));
    }

    let mut proposals = Vec::new();
    let mut stopped_early = false;
    let mut completed = 1;
    for t in 2..=config.generations {
        let current = WeightedSample::from_log_weights(points.clone(), log_w.clone(), generations.clone())?;
        let proposal = fit_proposal(&current, config.jitter, t)?;

        let fresh = draw_generation(
            &|s: &RngStream| ParameterVector::from(proposal.sample(&mut s.rng())),
            m,
            &stream.substream(t as u64),
        );
        let fresh_lik = log_likelihoods(data, &fresh, base)?;
        let log_pdf = |p: &ParameterVector| proposal.logpdf(p).expect("dimension checked by construction");
        let earlier = &proposals;
        let fresh_q: Vec<Vec<f64>> = fresh
            .par_iter()
            .map(|p| {
                let mut q = Vec::with_capacity(t);
                q.push(prior.log_density(p.as_slice()));
                q.extend(
                    earlier.iter().map(|d: &MvtStudentT3| d.logpdf(p).expect("dimension checked by construction")),
                );
                q.push(log_pdf(p));
                q
            })
            .collect();
        let old_q_new: Vec<f64> = points.par_iter().map(log_pdf).collect();

        let mut all_q = log_q.clone();
        for (q, v) in all_q.iter_mut().zip(old_q_new) {
            q.push(v);
        }
        all_q.extend(fresh_q);
        let mut all_lik = log_lik.clone();
        all_lik.extend_from_slice(&fresh_lik);
        let new_w = amis_log_weights(&all_lik, &all_q, t, config.denominator);

        let incremental = ess_from_log_weights(&new_w[points.len()..]).unwrap_or(0.0);
        if incremental < 2.0 {
            stopped_early = true;
            break;
        }
        points.extend(fresh);
        generations.extend(std::iter::repeat_n(t as u32, m));
        log_lik = all_lik;
        log_q = all_q;
        log_w = new_w;
        proposals.push(proposal);
        completed = t;
    }

    let sample = WeightedSample::from_log_weights(points, log_w, generations)?;
    Ok(AmisOutput { sample, proposals, generations_completed: completed, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::el::{scalar_observations, MeanConstraint};
    use crate::models::NormalMeanExample;
    use nalgebra::DVector;

    /// `h ≡ 0`: every θ satisfies the constraint.
    struct Vacuous;

    impl ConstraintFunction for Vacuous {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    fn example_one(seed: u64) -> (Vec<Vec<f64>>, PriorSpec) {
        let ex = NormalMeanExample::default();
        (scalar_observations(&ex.data(&RngStream::new(seed, 99)).unwrap()), ex.prior().unwrap())
    }

    #[test]
    fn vacuous_constraint_returns_prior() {
        let (data, prior) = example_one(1);
        let config = BcelConfig::new(200, prior, Arc::new(Vacuous));
        let s = run_bcel(&data, &config, &RngStream::from_seed(2)).unwrap();
        assert!((s.ess().unwrap() - 200.0).abs() < 1e-9);
        assert!(s.log_weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn example_one_posterior() {
        let (data, prior) = example_one(3);
        let config = BcelConfig::new(5000, prior, Arc::new(MeanConstraint { dim: 1 }));
        let s = run_bcel(&data, &config, &RngStream::from_seed(4)).unwrap();
        let (mean, sd) = s.coordinate_summary(0).unwrap();
        assert!((9.8..=10.3).contains(&mean), "{mean}");
        assert!((0.05..=0.25).contains(&sd), "{sd}");
        // draws outside the data range carry no weight
        let (min, max) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y[0]), b.max(y[0])));
        for (p, w) in s.points().iter().zip(s.log_weights()) {
            if p[0] <= min || p[0] >= max {
                assert_eq!(*w, f64::NEG_INFINITY);
            }
        }
        assert_eq!(s, run_bcel(&data, &config, &RngStream::from_seed(4)).unwrap());
    }

    #[test]
    fn betel_flavor_agrees_with_el() {
        let (data, prior) = example_one(5);
        let el = BcelConfig::new(3000, prior, Arc::new(MeanConstraint { dim: 1 }));
        let bt = el.clone().with_flavor(LikelihoodFlavor::Betel);
        let a = run_bcel(&data, &el, &RngStream::from_seed(6)).unwrap().coordinate_summary(0).unwrap();
        let b = run_bcel(&data, &bt, &RngStream::from_seed(6)).unwrap().coordinate_summary(0).unwrap();
        assert!((a.0 - b.0).abs() < 0.05 && (a.1 / b.1 - 1.0).abs() < 0.2, "{a:?} {b:?}");
    }

    #[test]
    fn degenerate_weights_error() {
        let data = scalar_observations(&[1.0, 1.1, 1.2, 1.3]);
        let prior = PriorSpec::uniform(vec![50.0], vec![60.0]).unwrap();
        let config = BcelConfig::new(50, prior, Arc::new(MeanConstraint { dim: 1 }));
        assert!(matches!(run_bcel(&data, &config, &RngStream::from_seed(1)), Err(Error::Degenerate(_))));
        assert!(BcelConfig::new(1, PriorSpec::uniform(vec![0.0], vec![1.0]).unwrap(), Arc::new(Vacuous))
            .validate()
            .is_err());
    }

    #[test]
    fn resampled_mean_tracks_weighted_mean() {
        let (data, prior) = example_one(7);
        let config = BcelConfig::new(2000, prior, Arc::new(MeanConstraint { dim: 1 })).with_resample_count(100_000);
        let stream = RngStream::from_seed(8);
        let weighted = run_bcel(&data, &config, &stream).unwrap();
        let (mean, sd) = weighted.coordinate_summary(0).unwrap();
        let draws: Vec<f64> = run_bcel_resampled(&data, &config, &stream).unwrap().iter().map(|p| p[0]).collect();
        assert_eq!(draws.len(), 100_000);
        let se = sd / (draws.len() as f64).sqrt();
        assert!((crate::stats::mean(&draws) - mean).abs() < 3.0 * se);
    }

    #[test]
    fn one_generation_amis_is_bcel() {
        let (data, prior) = example_one(9);
        let base = BcelConfig::new(500, prior, Arc::new(MeanConstraint { dim: 1 }));
        let stream = RngStream::from_seed(10);
        let plain = run_bcel(&data, &base, &stream).unwrap();
        let amis = run_bcel_amis(&data, &AmisConfig::new(base.clone(), 1), &stream).unwrap();
        assert_eq!(amis.sample, plain);
        // generation 1 of a longer run carries the same draws and EL values
        let longer = run_bcel_amis(&data, &AmisConfig::new(base, 3), &stream).unwrap();
        assert_eq!(&longer.sample.points()[..500], plain.points());
    }

    fn t3_logpdf_1d(x: f64, m: f64, s2: f64) -> f64 {
        // Γ(2) / (Γ(3/2) √(3π s²)) (1 + (x-m)²/(3 s²))^{-2}
        let gamma_3_2 = 0.5 * std::f64::consts::PI.sqrt();
        (1.0 / (gamma_3_2 * (3.0 * std::f64::consts::PI * s2).sqrt())).ln()
            - 2.0 * (1.0 + (x - m).powi(2) / (3.0 * s2)).ln()
    }

    #[test]
    fn flat_likelihood_weights_equal_prior_over_mixture() {
        let data = scalar_observations(&[0.0, 1.0, 2.0]);
        let (lo, hi) = (-3.0, 5.0);
        let prior = PriorSpec::uniform(vec![lo], vec![hi]).unwrap();
        let base = BcelConfig::new(400, prior, Arc::new(Vacuous));
        for rule in [AmisDenominator::AsPrinted, AmisDenominator::Standard] {
            let out = run_bcel_amis(
                &data,
                &AmisConfig::new(base.clone(), 4).with_denominator(rule),
                &RngStream::from_seed(12),
            )
            .unwrap();
            assert_eq!(out.generations_completed, 4);
            let t = out.generations_completed;
            let params: Vec<(f64, f64)> = out.proposals.iter().map(|d| (d.mean()[0], d.scale()[(0, 0)])).collect();
            let w = out.sample.normalized_weights().unwrap();
            let expected: Vec<f64> = out
                .sample
                .points()
                .iter()
                .map(|p| {
                    let x = p[0];
                    if x <= lo || x >= hi {
                        return 0.0;
                    }
                    let prior_density = 1.0 / (hi - lo);
                    let q: Vec<f64> = std::iter::once(prior_density)
                        .chain(params.iter().map(|&(m, s2)| t3_logpdf_1d(x, m, s2).exp()))
                        .collect();
                    let mixture = match rule {
                        AmisDenominator::AsPrinted => q[..t - 1].iter().sum::<f64>(),
                        AmisDenominator::Standard => q.iter().sum::<f64>() / t as f64,
                    };
                    prior_density / mixture
                })
                .collect();
            let total: f64 = expected.iter().sum();
            for (a, b) in w.iter().zip(&expected) {
                let b = b / total;
                assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn amis_agrees_with_plain_importance_sampling() {
        let (data, prior) = example_one(13);
        let base = BcelConfig::new(1000, prior.clone(), Arc::new(MeanConstraint { dim: 1 }));
        let config = AmisConfig::new(base, 5).with_denominator(AmisDenominator::Standard);
        let amis = run_bcel_amis(&data, &config, &RngStream::from_seed(14)).unwrap();
        assert!(!amis.stopped_early);
        assert_eq!(amis.sample.len(), 5000);
        let plain = run_bcel(
            &data,
            &BcelConfig::new(5000, prior, Arc::new(MeanConstraint { dim: 1 })),
            &RngStream::from_seed(15),
        )
        .unwrap();
        let (ma, sa) = amis.sample.coordinate_summary(0).unwrap();
        let (mb, sb) = plain.coordinate_summary(0).unwrap();
        let se = (sa * sa / amis.sample.ess().unwrap() + sb * sb / plain.ess().unwrap()).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "{ma} vs {mb} (se {se})");
        assert!(amis.sample.ess().unwrap() > plain.ess().unwrap());
    }

    #[test]
    fn singular_fit_uses_jitter() {
        let points = vec![ParameterVector::new(vec![1.0, 2.0]), ParameterVector::new(vec![2.0, 4.0])];
        let s = WeightedSample::from_log_weights(points, vec![0.0, 0.0], vec![1, 1]).unwrap();
        let d = fit_proposal(&s, None, 2).unwrap();
        assert_eq!(d.mean(), &DVector::from_vec(vec![1.5, 3.0]));
        assert!(fit_proposal(&s, Some(0.0), 2).is_err());
    }
}
