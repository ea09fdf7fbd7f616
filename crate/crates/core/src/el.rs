//! Empirical likelihood under moment constraints.
//!
//! For observations `y_1..y_n` and an estimating function `h(y, θ)` with
//! values in `R^q`, the empirical likelihood maximizes `Π p_i` over the
//! simplex subject to `Σ p_i h(y_i, θ) = 0`. The maximizer is
//! `p_i = 1 / (n (1 + λᵀh_i))` where `λ` minimizes the convex dual
//! `-Σ log(1 + λᵀh_i)`. The dual is solved by damped Newton using Owen's
//! pseudo-logarithm, which continues `log` quadratically below `1/n` so
//! every iterate is defined. When zero is not interior to the convex hull
//! of the `h_i` the dual is unbounded; that case is reported as an infinite
//! `-2 log` likelihood ratio rather than an error.
//!
//! The exponentially tilted variant ([`betel_maximize_values`]) replaces the
//! objective by the entropy and gives `p_i ∝ exp(λᵀh_i)`.

use crate::error::{Error, Result};
use crate::special::{chi2_sf, chi2_upper_quantile};
use nalgebra::{DMatrix, DVector};

/// Constraint residual tolerance `‖Σ p_i h_i‖∞`, scaled by `max(1, max|h|)`.
pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

/// Estimating function `h(y, θ)`.
pub trait ConstraintFunction: Send + Sync {
    /// Number of constraints `q`.
    fn dim(&self) -> usize;

    fn eval(&self, y: &[f64], theta: &[f64], out: &mut [f64]);

    /// The `n × q` matrix of constraint values. Override when part of `h`
    /// depends only on θ and can be computed once.
    fn values(&self, data: &[Vec<f64>], theta: &[f64]) -> DMatrix<f64> {
        let q = self.dim();
        let mut m = DMatrix::zeros(data.len(), q);
        let mut buf = vec![0.0; q];
        for (i, y) in data.iter().enumerate() {
            self.eval(y, theta, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// `h(y, θ) = y - θ`, the mean functional.
#[derive(Debug, Clone, Copy)]
pub struct MeanConstraint {
    pub dim: usize,
}

impl ConstraintFunction for MeanConstraint {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64], theta: &[f64], out: &mut [f64]) {
        for (o, (a, b)) in out.iter_mut().zip(y.iter().zip(theta)) {
            *o = a - b;
        }
    }
}

/// `h(y, θ) = 1{y < θ} - p`, the scalar `p`-quantile functional.
#[derive(Debug, Clone, Copy)]
pub struct QuantileConstraint {
    pub probability: f64,
}

impl ConstraintFunction for QuantileConstraint {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, y: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = if y[0] < theta[0] { 1.0 } else { 0.0 } - self.probability;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElResult {
    /// Maximizing weights; empty when infeasible.
    pub weights: Vec<f64>,
    pub lambda: DVector<f64>,
    /// `-2 Σ log(n p_i)`; `+inf` when zero is not interior to the hull.
    pub neg2llr: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ElResult {
    pub fn is_feasible(&self) -> bool {
        self.neg2llr.is_finite()
    }

    /// `log Π n p_i = -neg2llr / 2`, the log likelihood ratio.
    pub fn log_ratio(&self) -> f64 {
        -0.5 * self.neg2llr
    }

    fn infeasible(q: usize, lambda: Option<DVector<f64>>, iterations: usize) -> Self {
        Self {
            weights: Vec::new(),
            lambda: lambda.unwrap_or_else(|| DVector::zeros(q)),
            neg2llr: f64::INFINITY,
            converged: false,
            iterations,
        }
    }
}

fn validate(h: &DMatrix<f64>) -> Result<()> {
    let (n, q) = h.shape();
    if q == 0 {
        return Err(Error::Precondition("at least one constraint is required".into()));
    }
    if q >= n {
        return Err(Error::Precondition(format!("need more observations than constraints (n = {n}, q = {q})")));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("constraint function is not finite on the data".into()));
    }
    Ok(())
}

/// Owen's pseudo-logarithm and its first two derivatives.
fn log_star(z: f64, eps: f64) -> (f64, f64, f64) {
    if z >= eps {
        (z.ln(), 1.0 / z, -1.0 / (z * z))
    } else {
        let r = z / eps;
        (eps.ln() - 1.5 + 2.0 * r - 0.5 * r * r, (2.0 - r) / eps, -1.0 / (eps * eps))
    }
}

/// Solves `(A + δI) x = b`, raising `δ` until the Cholesky factor exists.
fn damped_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c.solve(b));
    }
    let q = a.nrows();
    let scale = (a.trace() / q as f64).abs().max(1e-300);
    let mut delta = 1e-12 * scale;
    for _ in 0..14 {
        let damped = a + DMatrix::identity(q, q) * delta;
        if let Some(c) = damped.cholesky() {
            return Some(c.solve(b));
        }
        delta *= 100.0;
    }
    None
}

fn scalar_outside_hull(h: &DMatrix<f64>) -> bool {
    let (min, max) = h.column(0).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let all_zero = min == 0.0 && max == 0.0;
    !all_zero && (min >= 0.0 || max <= 0.0)
}

/// Empirical likelihood for precomputed constraint values (`n × q`).
pub fn el_maximize_values(h: &DMatrix<f64>) -> Result<ElResult> {
    validate(h)?;
    let (n, q) = h.shape();
    if q == 1 && scalar_outside_hull(h) {
        return Ok(ElResult::infeasible(q, None, 0));
    }
    let nf = n as f64;
    let eps = 1.0 / nf;
    let tol = TOLERANCE * h.amax().max(1.0);

    let objective = |z: &DVector<f64>| -> f64 { -z.iter().map(|&zi| log_star(zi, eps).0).sum::<f64>() };

    let mut lambda = DVector::zeros(q);
    let mut z = DVector::from_element(n, 1.0);
    let mut f = objective(&z);
    for iteration in 0..=MAX_ITERATIONS {
        if z.iter().all(|&zi| zi >= eps) {
            let p = z.map(|zi| 1.0 / (nf * zi));
            let residual = h.tr_mul(&p).amax();
            let total = p.sum();
            if residual < tol && (total - 1.0).abs() < 1e-6 {
                let neg2llr = 2.0 * z.iter().map(|zi| zi.ln()).sum::<f64>();
                let weights = p.iter().map(|pi| pi / total).collect();
                return Ok(ElResult {
                    weights,
                    lambda,
                    neg2llr: neg2llr.max(0.0),
                    converged: true,
                    iterations: iteration,
                });
            }
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let mut d1 = DVector::zeros(n);
        let mut d2 = DVector::zeros(n);
        for i in 0..n {
            let (_, a, b) = log_star(z[i], eps);
            d1[i] = a;
            d2[i] = -b;
        }
        let grad = -h.tr_mul(&d1);
        let weighted = DMatrix::from_fn(n, q, |i, j| h[(i, j)] * d2[i]);
        let hess = h.tr_mul(&weighted);
        let Some(step) = damped_solve(&hess, &(-&grad)) else { break };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &lambda + &step * t;
            let zc = h * &cand + DVector::from_element(n, 1.0);
            let fc = objective(&zc);
            if fc <= f + 1e-4 * t * slope {
                lambda = cand;
                z = zc;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(ElResult::infeasible(q, Some(lambda), MAX_ITERATIONS))
}

pub fn el_maximize<C: ConstraintFunction + ?Sized>(data: &[Vec<f64>], theta: &[f64], h: &C) -> Result<ElResult> {
    el_maximize_values(&h.values(data, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElTest {
    pub neg2llr: f64,
    /// Wilks p-value from the χ²_q tail; zero when infeasible.
    pub p_value: f64,
    pub lambda: DVector<f64>,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub infeasible: bool,
}

/// Empirical likelihood ratio test of `E h(Y, θ) = 0`.
pub fn el_test<C: ConstraintFunction + ?Sized>(data: &[Vec<f64>], theta: &[f64], h: &C) -> Result<ElTest> {
    let r = el_maximize(data, theta, h)?;
    let infeasible = !r.is_feasible();
    let p_value = if infeasible { 0.0 } else { chi2_sf(r.neg2llr, h.dim() as u32)? };
    Ok(ElTest {
        neg2llr: r.neg2llr,
        p_value,
        lambda: r.lambda,
        weights: r.weights,
        iterations: r.iterations,
        infeasible,
    })
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let scale = a.abs().max(b.abs()).max(1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 * scale {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `(1 - alpha)` empirical-likelihood confidence interval for a scalar θ:
/// `{θ : -2 log R(θ) <= χ²_1 upper-alpha quantile}`.
///
/// The minimizer of `-2 log R` is located by golden section inside
/// `bracket`, then each endpoint by bisection. Returned endpoints always
/// satisfy the inequality, so they stay inside the region where the
/// likelihood is positive.
pub fn el_confint<C: ConstraintFunction + ?Sized>(
    data: &[Vec<f64>],
    h: &C,
    alpha: f64,
    bracket: (f64, f64),
) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {alpha}")));
    }
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(Error::Domain("confidence bracket must satisfy lower < upper".into()));
    }
    let crit = chi2_upper_quantile(alpha, 1)?;
    let stat = |t: f64| -> Result<f64> { Ok(el_maximize(data, &[t], h)?.neg2llr) };
    // Errors cannot occur at one θ and not another (validation only
    // depends on shapes and finiteness), so probe once.
    stat(0.5 * (lo + hi))?;
    let f = |t: f64| stat(t).unwrap_or(f64::INFINITY);
    let center = golden_section_min(f, lo, hi);
    if f(center) > crit {
        return Err(Error::Degenerate("empirical likelihood never reaches the confidence level".into()));
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let crossing = |mut outside: f64, mut inside: f64| -> f64 {
        if f(outside) <= crit {
            return outside;
        }
        for _ in 0..200 {
            if (outside - inside).abs() <= 1e-12 * scale {
                break;
            }
            let mid = 0.5 * (outside + inside);
            if f(mid) <= crit {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    Ok((crossing(lo, center), crossing(hi, center)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetelResult {
    /// Tilted weights `exp(λᵀh_i) / Σ_j exp(λᵀh_j)`; empty when infeasible.
    pub weights: Vec<f64>,
    pub lambda: DVector<f64>,
    /// `Σ log p*_i`; `-inf` when infeasible.
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Exponentially tilted empirical likelihood. Feasibility is decided by the
/// empirical-likelihood solver so both likelihoods agree on the support.
pub fn betel_maximize_values(h: &DMatrix<f64>) -> Result<BetelResult> {
    let el = el_maximize_values(h)?;
    let (n, q) = h.shape();
    if !el.is_feasible() {
        return Ok(BetelResult {
            weights: Vec::new(),
            lambda: DVector::zeros(q),
            log_likelihood: f64::NEG_INFINITY,
            converged: false,
            iterations: el.iterations,
        });
    }
    let tol = TOLERANCE * h.amax().max(1.0);
    // returns (log Σ exp(a_i), softmax, a)
    let evaluate = |lambda: &DVector<f64>| {
        let a = h * lambda;
        let max = a.max();
        let s: f64 = a.iter().map(|ai| (ai - max).exp()).sum();
        let lse = max + s.ln();
        let p = a.map(|ai| (ai - lse).exp());
        (lse, p, a)
    };
    let mut lambda = DVector::zeros(q);
    let (mut g_val, mut p, mut a) = evaluate(&lambda);
    let mut converged = false;
    let mut iterations = 0;
    for iteration in 0..=MAX_ITERATIONS {
        iterations = iteration;
        let grad = h.tr_mul(&p);
        if grad.amax() < tol {
            converged = true;
            break;
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let weighted = DMatrix::from_fn(n, q, |i, j| h[(i, j)] * p[i]);
        let hess = h.tr_mul(&weighted) - &grad * grad.transpose();
        let Some(step) = damped_solve(&hess, &(-&grad)) else { break };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &lambda + &step * t;
            let (gc, pc, ac) = evaluate(&cand);
            if gc <= g_val + 1e-4 * t * slope {
                lambda = cand;
                g_val = gc;
                p = pc;
                a = ac;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // the gradient test is the only exit that counts as converged
            break;
        }
    }
    let log_likelihood = a.sum() - n as f64 * g_val;
    Ok(BetelResult { weights: p.iter().copied().collect(), lambda, log_likelihood, converged, iterations })
}

/// `Σ log p*_i` of the exponentially tilted weights at θ, `-inf` when zero is
/// not interior to the hull of the constraint values.
pub fn betel_logweight<C: ConstraintFunction + ?Sized>(data: &[Vec<f64>], theta: &[f64], h: &C) -> Result<f64> {
    Ok(betel_maximize_values(&h.values(data, theta))?.log_likelihood)
}

/// Wraps scalar observations as one-dimensional observation vectors.
pub fn scalar_observations(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().map(|&v| vec![v]).collect()
}
