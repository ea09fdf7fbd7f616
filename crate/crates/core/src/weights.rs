//! Weighted samples: normalization, effective sample size, resampling and
//! weighted moments.
//!
//! Weights are kept as natural logarithms. A zero weight is `-inf`.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::ParameterVector;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalized weights from log weights. Fails when every weight is zero or
/// any log weight is NaN or `+inf`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.is_empty() {
        return Err(Error::InvalidWeights("no weights".into()));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidWeights("non-finite log weight".into()));
    }
    let total = log_sum_exp(log_weights);
    if total == f64::NEG_INFINITY {
        return Err(Error::InvalidWeights("all weights are zero".into()));
    }
    let mut w: Vec<f64> = log_weights.iter().map(|&lw| (lw - total).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Ok(w)
}

fn check_linear(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
    }
    Ok(())
}

fn ess_normalized(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}

/// Kish effective sample size `1 / Σ (w_i / Σ w_j)²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    check_linear(weights)?;
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    ess_from_log_weights(&log_w)
}

pub fn ess_from_log_weights(log_weights: &[f64]) -> Result<f64> {
    Ok(ess_normalized(&normalize_log_weights(log_weights)?))
}

/// Parameter draws with unnormalized importance weights and the generation
/// each draw came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    points: Vec<ParameterVector>,
    log_weights: Vec<f64>,
    generations: Vec<u32>,
}

impl WeightedSample {
    pub fn new(points: Vec<ParameterVector>, weights: Vec<f64>) -> Result<Self> {
        check_linear(&weights)?;
        let generations = vec![0; points.len()];
        Self::from_log_weights(points, weights.iter().map(|w| w.ln()).collect(), generations)
    }

    pub fn from_log_weights(
        points: Vec<ParameterVector>,
        log_weights: Vec<f64>,
        generations: Vec<u32>,
    ) -> Result<Self> {
        if points.len() != log_weights.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: log_weights.len() });
        }
        if points.len() != generations.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: generations.len() });
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidWeights("non-finite log weight".into()));
        }
        Ok(Self { points, log_weights, generations })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.dim())
    }

    pub fn points(&self) -> &[ParameterVector] {
        &self.points
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn generations(&self) -> &[u32] {
        &self.generations
    }

    /// Unnormalized weights `exp(log w)`; may underflow to zero.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights)
    }

    pub fn ess(&self) -> Result<f64> {
        ess_from_log_weights(&self.log_weights)
    }

    /// Self-normalized mean and standard deviation of coordinate `i`.
    pub fn coordinate_summary(&self, i: usize) -> Result<(f64, f64)> {
        let w = self.normalized_weights()?;
        let mean: f64 = w.iter().zip(&self.points).map(|(w, p)| w * p[i]).sum();
        let var: f64 = w.iter().zip(&self.points).map(|(w, p)| w * (p[i] - mean).powi(2)).sum();
        Ok((mean, var.sqrt()))
    }
}

/// Draw `count` indices i.i.d. from normalized weights `w`.
pub fn resample_indices<R: Rng + ?Sized>(w: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &x in w {
        acc += x;
        cumulative.push(acc);
    }
    let last_positive = w.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect()
}

/// Multinomial resampling: `count` equally weighted draws from the weighted
/// sample.
pub fn multinomial_resample(sample: &WeightedSample, count: usize, stream: &RngStream) -> Result<Vec<ParameterVector>> {
    if count == 0 {
        return Err(Error::Precondition("resample count must be at least 1".into()));
    }
    let w = sample.normalized_weights()?;
    let mut rng = stream.rng();
    Ok(resample_indices(&w, count, &mut rng).into_iter().map(|i| sample.points[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub mean: DVector<f64>,
    /// `Σ w̃_i (θ_i - m)(θ_i - m)ᵀ` with weights normalized to sum to one.
    pub covariance: DMatrix<f64>,
    /// Set when the covariance cannot be Cholesky-factorized; callers that
    /// need a proposal from it add their own jitter.
    pub singular: bool,
}

pub fn weighted_moments(sample: &WeightedSample) -> Result<WeightedMoments> {
    let w = sample.normalized_weights()?;
    let p = sample.dim();
    let mut mean = DVector::zeros(p);
    for (wi, x) in w.iter().zip(&sample.points) {
        if *wi > 0.0 {
            mean.axpy(*wi, x, 1.0);
        }
    }
    let mut covariance = DMatrix::zeros(p, p);
    for (wi, x) in w.iter().zip(&sample.points) {
        if *wi > 0.0 {
            let r = &**x - &mean;
            covariance.ger(*wi, &r, &r, 1.0);
        }
    }
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let singular = covariance.diagonal().iter().any(|v| *v <= 0.0) || covariance.clone().cholesky().is_none();
    Ok(WeightedMoments { mean, covariance, singular })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(xs: &[f64]) -> Vec<ParameterVector> {
        xs.iter().map(|&x| ParameterVector::new(vec![x])).collect()
    }

    #[test]
    fn ess_uniform_and_degenerate() {
        assert!((ess(&[0.3; 50]).unwrap() - 50.0).abs() < 1e-10);
        let mut w = vec![0.0; 10];
        w[4] = 1.0;
        assert!((ess(&w).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ess_hand_example() {
        // normalized (0.25, 0.25, 0.5): 1 / (1/16 + 1/16 + 1/4) = 8/3
        assert!((ess(&[1.0, 1.0, 2.0]).unwrap() - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ess_rejects_bad_weights() {
        assert!(matches!(ess(&[0.0, 0.0]), Err(Error::InvalidWeights(_))));
        assert!(ess(&[1.0, f64::NAN]).is_err());
        assert!(ess(&[1.0, -1.0]).is_err());
        assert!(ess(&[]).is_err());
    }

    #[test]
    fn log_weights_survive_underflow() {
        let lw = vec![-2000.0, -2000.0 + 2f64.ln(), f64::NEG_INFINITY];
        let w = normalize_log_weights(&lw).unwrap();
        // -2000 + ln 2 is only representable to about 2e-13
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn resample_point_mass() {
        let s = WeightedSample::new(pts(&[1.0, 2.0, 3.0]), vec![0.0, 5.0, 0.0]).unwrap();
        let out = multinomial_resample(&s, 100, &RngStream::from_seed(1)).unwrap();
        assert!(out.iter().all(|p| p[0] == 2.0));
    }

    #[test]
    fn resample_is_deterministic() {
        let s = WeightedSample::new(pts(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let a = multinomial_resample(&s, 500, &RngStream::new(9, 2)).unwrap();
        let b = multinomial_resample(&s, 500, &RngStream::new(9, 2)).unwrap();
        assert_eq!(a, b);
        assert!(multinomial_resample(&s, 0, &RngStream::new(9, 2)).is_err());
    }

    #[test]
    fn resample_frequencies_match_equal_weights() {
        let m = 8;
        let s = WeightedSample::new(pts(&(0..m).map(|i| i as f64).collect::<Vec<_>>()), vec![1.0; m]).unwrap();
        let count = 100_000;
        let mut rng = RngStream::from_seed(5).rng();
        let idx = resample_indices(&s.normalized_weights().unwrap(), count, &mut rng);
        let mut freq = vec![0usize; m];
        idx.iter().for_each(|&i| freq[i] += 1);
        for f in freq {
            assert!((f as f64 / count as f64 - 1.0 / m as f64).abs() < 0.02);
        }
    }

    #[test]
    fn resample_goodness_of_fit() {
        let w = [1.0, 3.0, 0.5, 2.5, 3.0];
        let s = WeightedSample::new(pts(&[0.0, 1.0, 2.0, 3.0, 4.0]), w.to_vec()).unwrap();
        let wn = s.normalized_weights().unwrap();
        let count = 100_000;
        let mut rng = RngStream::new(17, 3).rng();
        let mut freq = [0usize; 5];
        resample_indices(&wn, count, &mut rng).into_iter().for_each(|i| freq[i] += 1);
        let stat: f64 = freq
            .iter()
            .zip(&wn)
            .map(|(&o, &p)| {
                let e = p * count as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let p_value = crate::special::chi2_sf(stat, 4).unwrap();
        assert!(p_value > 0.001, "chi-square {stat}");
    }

    #[test]
    fn moments_equal_weights_population_normalized() {
        let s = WeightedSample::new(pts(&[1.0, 2.0, 3.0, 6.0]), vec![1.0; 4]).unwrap();
        let m = weighted_moments(&s).unwrap();
        assert!((m.mean[0] - 3.0).abs() < 1e-15);
        assert!((m.covariance[(0, 0)] - 14.0 / 4.0).abs() < 1e-14);
        assert!(!m.singular);
    }

    #[test]
    fn moments_point_mass_is_singular() {
        let s = WeightedSample::new(pts(&[1.0, 7.0]), vec![0.0, 1.0]).unwrap();
        let m = weighted_moments(&s).unwrap();
        assert_eq!(m.mean[0], 7.0);
        assert_eq!(m.covariance[(0, 0)], 0.0);
        assert!(m.singular);
    }

    #[test]
    fn moments_two_points() {
        let s = WeightedSample::new(pts(&[-1.0, 1.0]), vec![0.5, 0.5]).unwrap();
        let m = weighted_moments(&s).unwrap();
        assert!(m.mean[0].abs() < 1e-15);
        assert!((m.covariance[(0, 0)] - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn ess_scale_invariant_and_bounded(
            w in proptest::collection::vec(0.0f64..10.0, 1..40),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(w.iter().any(|&x| x > 0.0));
            let e = ess(&w).unwrap();
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            prop_assert!((ess(&scaled).unwrap() - e).abs() < 1e-9 * e);
            prop_assert!(e >= 1.0 - 1e-12 && e <= w.len() as f64 + 1e-9);
        }
    }
}
