//! Multivariate Student t with three degrees of freedom, the AMIS proposal
//! family.

use crate::error::{Error, Result};
use crate::special::ln_gamma;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEGREES_OF_FREEDOM: f64 = 3.0;

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(format!("{what} is not positive definite")))
}

pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `‖L⁻¹ r‖²`, i.e. `rᵀ Σ⁻¹ r` for `Σ = L Lᵀ`.
pub(crate) fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, r: &DVector<f64>) -> f64 {
    let y = chol.l_dirty().lower_triangle().solve_lower_triangular(r).expect("cholesky factor has positive diagonal");
    y.norm_squared()
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::Domain(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MvtStudentT3 {
    mean: DVector<f64>,
    scale: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl MvtStudentT3 {
    pub fn new(mean: DVector<f64>, scale: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&scale, 1e-10)?;
        if scale.nrows() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: scale.nrows() });
        }
        let chol = cholesky(&scale, "t3 scale matrix")?;
        let p = mean.len() as f64;
        let nu = DEGREES_OF_FREEDOM;
        let log_norm = ln_gamma(0.5 * (nu + p))
            - ln_gamma(0.5 * nu)
            - 0.5 * p * (nu * std::f64::consts::PI).ln()
            - 0.5 * log_det(&chol);
        Ok(Self { mean, scale, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let nu = DEGREES_OF_FREEDOM;
        let p = self.dim() as f64;
        let q = mahalanobis_sq(&self.chol, &(x - &self.mean));
        Ok(self.log_norm - 0.5 * (nu + p) * (q / nu).ln_1p())
    }

    /// `m + L z sqrt(ν / W)` with `z ~ N(0, I)` and `W ~ χ²_ν`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let w: f64 = (0..3)
            .map(|_| {
                let g: f64 = StandardNormal.sample(rng);
                g * g
            })
            .sum();
        let scale = (DEGREES_OF_FREEDOM / w).sqrt();
        &self.mean + self.chol.l_dirty().lower_triangle() * z * scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use std::f64::consts::PI;

    fn scalar(m: f64, s2: f64) -> MvtStudentT3 {
        MvtStudentT3::new(DVector::from_vec(vec![m]), DMatrix::from_vec(1, 1, vec![s2])).unwrap()
    }

    #[test]
    fn scalar_density_at_mode() {
        // Γ(2) / (Γ(3/2) sqrt(3π)) = 2 / (sqrt(3) π)
        let t = scalar(0.0, 1.0);
        let expected = (2.0 / (3f64.sqrt() * PI)).ln();
        assert!((t.logpdf(&DVector::from_vec(vec![0.0])).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn integrates_to_one() {
        // x = tan(u) maps (-π/2, π/2) onto the line; dx = sec²(u) du.
        let t = scalar(0.3, 2.0);
        let m = 200_000;
        let h = PI / m as f64;
        let total: f64 = (0..m)
            .map(|i| {
                let u = -PI / 2.0 + (i as f64 + 0.5) * h;
                let x = u.tan();
                t.logpdf(&DVector::from_vec(vec![x])).unwrap().exp() / u.cos().powi(2) * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn symmetric_and_peaked_at_mean() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let t = MvtStudentT3::new(mean.clone(), scale).unwrap();
        let v = DVector::from_vec(vec![0.7, -0.4]);
        let a = t.logpdf(&(&mean + &v)).unwrap();
        let b = t.logpdf(&(&mean - &v)).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(t.logpdf(&mean).unwrap() > a);
    }

    #[test]
    fn rejects_non_pd_and_asymmetric() {
        let m = DVector::zeros(2);
        assert!(MvtStudentT3::new(m.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(MvtStudentT3::new(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
    }

    #[test]
    fn sample_covariance_is_three_times_scale() {
        // Cov of t_ν is ν/(ν-2) Σ = 3Σ; the fourth moment is infinite, so
        // compare medians of |x| instead: median |t3| = 0.7648923 for Σ = 1.
        let t = scalar(0.0, 1.0);
        let mut rng = RngStream::from_seed(11).rng();
        let mut xs: Vec<f64> = (0..100_000).map(|_| t.sample(&mut rng)[0].abs()).collect();
        xs.sort_by(f64::total_cmp);
        let med = xs[xs.len() / 2];
        assert!((med - 0.764_892_3).abs() < 0.01, "{med}");
    }
}
