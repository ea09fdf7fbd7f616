//! Sample diagnostics: autocorrelation ESS, Kolmogorov–Smirnov tests,
//! weighted quantiles and histograms.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Effective sample size of a correlated series, `N / τ` with the integrated
/// autocorrelation time `τ` truncated by Geyer's initial positive sequence.
pub fn autocorrelation_ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Precondition("series too short for an ESS estimate".into()));
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let gamma0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(Error::Degenerate("series is constant, ESS is undefined".into()));
    }
    let autocorr = |lag: usize| -> f64 {
        centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / gamma0
    };
    // Γ_k = ρ_{2k} + ρ_{2k+1}, summed while positive and forced nonincreasing.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let rho_even = if k == 0 { 1.0 } else { autocorr(2 * k) };
        let pair = rho_even + autocorr(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    Ok(n as f64 / tau.max(1.0 / n as f64))
}

/// Monte Carlo standard error of the mean of a correlated series.
pub fn mc_standard_error(series: &[f64]) -> Result<f64> {
    let ess = autocorrelation_ess(series)?;
    Ok((variance(series) / ess).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.27 {
        return 1.0;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous `cdf`, with
/// Stephens' finite-sample adjustment of the asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    let p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * statistic);
    KsResult { statistic, p_value }
}

/// Sample median; infinite values sort to the ends.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quantile of a weighted sample: the smallest value whose cumulative
/// normalized weight reaches `prob`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], prob: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i] / total;
        if acc >= prob {
            return values[i];
        }
    }
    values[*order.last().expect("non-empty sample")]
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    /// Normalized mass in the bin.
    pub mass: f64,
    /// Mass divided by bin width.
    pub density: f64,
}

/// Weighted histogram with `bins` equal-width bins on `[lower, upper]`.
/// Values outside the range are dropped before normalization.
pub fn histogram(values: &[f64], weights: &[f64], bins: usize, lower: f64, upper: f64) -> Vec<HistogramBin> {
    let width = (upper - lower) / bins as f64;
    let mut mass = vec![0.0; bins];
    for (&v, &w) in values.iter().zip(weights) {
        if v < lower || v > upper || w <= 0.0 {
            continue;
        }
        let b = (((v - lower) / width) as usize).min(bins - 1);
        mass[b] += w;
    }
    let total: f64 = mass.iter().sum();
    (0..bins)
        .map(|b| {
            let m = if total > 0.0 { mass[b] / total } else { 0.0 };
            HistogramBin {
                lower: lower + b as f64 * width,
                upper: lower + (b + 1) as f64 * width,
                mass: m,
                density: m / width,
            }
        })
        .collect()
}

/// Midpoint of the heaviest bin.
pub fn histogram_mode(bins: &[HistogramBin]) -> f64 {
    let best = bins.iter().max_by(|a, b| a.mass.total_cmp(&b.mass)).expect("at least one bin");
    0.5 * (best.lower + best.upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn white_noise_ess_close_to_length() {
        let mut rng = RngStream::from_seed(2).rng();
        let xs: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = autocorrelation_ess(&xs).unwrap();
        assert!((e / xs.len() as f64 - 1.0).abs() < 0.1, "{e}");
    }

    #[test]
    fn ar1_ess_matches_closed_form() {
        let rho: f64 = 0.5;
        let mut rng = RngStream::from_seed(4).rng();
        let mut x = 0.0;
        let innov = (1.0 - rho * rho).sqrt();
        let xs: Vec<f64> = (0..50_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + innov * z;
                x
            })
            .collect();
        let ratio = autocorrelation_ess(&xs).unwrap() / xs.len() as f64;
        let expected = (1.0 - rho) / (1.0 + rho);
        assert!((ratio / expected - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn constant_series_has_no_ess() {
        assert!(matches!(autocorrelation_ess(&[2.0; 500]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = RngStream::from_seed(8).rng();
        let xs: Vec<f64> = (0..5000).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        assert!(ks_test(&xs, uniform).p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9 + 0.1).collect();
        assert!(ks_test(&shifted, uniform).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_critical_value() {
        // classical 1% critical value of the limiting distribution
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn weighted_quantile_and_histogram() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 1.0, 1.0, 5.0];
        assert_eq!(weighted_quantile(&v, &w, 0.5), 4.0);
        assert_eq!(weighted_quantile(&v, &w, 0.1), 1.0);
        let h = histogram(&v, &w, 4, 0.5, 4.5);
        assert!((h.iter().map(|b| b.mass).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(histogram_mode(&h), 4.0);
    }
}
