//! Random-walk Metropolis–Hastings on the synthetic-likelihood posterior.
//!
//! Each iteration proposes `θ* ~ N(θ, Σ_q)`, simulates `n` fresh replicates
//! at `θ*` and accepts with the usual ratio in log space. The current state's
//! likelihood estimate is carried forward and never refreshed, so the chain
//! targets the BSL posterior (plug-in flavor) or, with the unbiased
//! estimator, the exact posterior under normal summaries.
//!
//! Stream layout: replicate `j` at iteration `i` uses
//! `stream.substream(0).substream(i).substream(j)`; proposals and the
//! acceptance uniform come, in that order, from `stream.substream(1)`, the
//! uniform being drawn after the iteration's simulations.

use crate::error::{Error, Result};
use crate::mvt::{check_symmetric, cholesky, log_det, mahalanobis_sq};
use crate::prior::PriorSpec;
use crate::rng::RngStream;
use crate::stats::autocorrelation_ess;
use crate::synthetic::{estimate_log_sl, fit_moments, EstimatorFlavor, SimulatorModel, SlEstimate};
use crate::types::{ParameterVector, SummaryVector};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Multiplier applied to ESS per simulation so the numbers are readable.
pub const NORMALIZED_ESS_SCALE: f64 = 1e6;

/// Default random-walk standard deviation per coordinate.
pub const DEFAULT_PROPOSAL_SD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub iterations: usize,
    pub initial: ParameterVector,
    pub proposal_covariance: DMatrix<f64>,
    /// Replicates per likelihood estimate.
    pub replicates: usize,
    pub flavor: EstimatorFlavor,
    pub burn_in: usize,
}

impl McmcConfig {
    pub fn new(initial: ParameterVector, replicates: usize, iterations: usize) -> Self {
        let p = initial.dim();
        Self {
            iterations,
            initial,
            proposal_covariance: DMatrix::identity(p, p) * DEFAULT_PROPOSAL_SD.powi(2),
            replicates,
            flavor: EstimatorFlavor::Plugin,
            burn_in: 0,
        }
    }

    pub fn with_proposal_covariance(mut self, cov: DMatrix<f64>) -> Self {
        self.proposal_covariance = cov;
        self
    }

    pub fn with_flavor(mut self, flavor: EstimatorFlavor) -> Self {
        self.flavor = flavor;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    fn validate(&self, prior: &PriorSpec) -> Result<Cholesky<f64, Dyn>> {
        if self.iterations == 0 {
            return Err(Error::Precondition("MCMC needs at least one iteration".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::Precondition("burn-in exceeds the number of iterations".into()));
        }
        if self.initial.dim() != prior.dim() {
            return Err(Error::DimensionMismatch { expected: prior.dim(), found: self.initial.dim() });
        }
        if self.proposal_covariance.nrows() != self.initial.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.initial.dim(),
                found: self.proposal_covariance.nrows(),
            });
        }
        check_symmetric(&self.proposal_covariance, 1e-10)?;
        if !prior.contains(self.initial.as_slice()) {
            return Err(Error::Precondition("initial state lies outside the prior support".into()));
        }
        cholesky(&self.proposal_covariance, "proposal covariance")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcTrace {
    /// `T + 1` states, starting with the initial point.
    pub states: Vec<ParameterVector>,
    /// Likelihood estimate carried by each state.
    pub log_sl: Vec<SlEstimate>,
    /// One flag per iteration `1..=T`.
    pub accepted: Vec<bool>,
    pub burn_in: usize,
}

impl McmcTrace {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    /// States after burn-in.
    pub fn kept(&self) -> &[ParameterVector] {
        &self.states[self.burn_in..]
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.kept().iter().map(|s| s[i]).collect()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| crate::stats::mean(&self.coordinate(i))).collect()
    }

    pub fn posterior_sd(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| crate::stats::variance(&self.coordinate(i)).sqrt()).collect()
    }
}

struct RandomWalk {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl RandomWalk {
    fn new(chol: Cholesky<f64, Dyn>) -> Self {
        let p = chol.l_dirty().nrows() as f64;
        let log_norm = -0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det(&chol);
        Self { chol, log_norm }
    }

    fn propose<R: Rng + ?Sized>(&self, from: &ParameterVector, rng: &mut R) -> ParameterVector {
        let z = DVector::from_fn(from.dim(), |_, _| StandardNormal.sample(rng));
        ParameterVector::from(&**from + self.chol.l_dirty().lower_triangle() * z)
    }

    /// `log q(to | from)`.
    fn log_density(&self, to: &ParameterVector, from: &ParameterVector) -> f64 {
        self.log_norm - 0.5 * mahalanobis_sq(&self.chol, &(&**to - &**from))
    }
}

fn estimate_at<M: SimulatorModel + ?Sized>(
    model: &M,
    s_obs: &SummaryVector,
    theta: &ParameterVector,
    config: &McmcConfig,
    stream: &RngStream,
) -> Result<SlEstimate> {
    let fit = fit_moments(model, theta, config.replicates, stream)?;
    estimate_log_sl(config.flavor, s_obs, &fit)
}

/// Runs MCMC BSL (or uBSL, by `config.flavor`).
pub fn run_mcmc_bsl<M: SimulatorModel + ?Sized>(
    model: &M,
    s_obs: &SummaryVector,
    prior: &PriorSpec,
    config: &McmcConfig,
    stream: &RngStream,
) -> Result<McmcTrace> {
    let chol = config.validate(prior)?;
    if s_obs.dim() != model.summary_dim() {
        return Err(Error::DimensionMismatch { expected: model.summary_dim(), found: s_obs.dim() });
    }
    if config.initial.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch { expected: model.param_dim(), found: config.initial.dim() });
    }
    let walk = RandomWalk::new(chol);
    let sims = stream.substream(0);
    let mut chain_rng = stream.substream(1).rng();

    let mut current = config.initial.clone();
    let mut current_ll = estimate_at(model, s_obs, &current, config, &sims.substream(0))?;
    let mut current_lp = prior.log_density(current.as_slice());

    let t = config.iterations;
    let mut states = Vec::with_capacity(t + 1);
    let mut log_sl = Vec::with_capacity(t + 1);
    let mut accepted = Vec::with_capacity(t);
    states.push(current.clone());
    log_sl.push(current_ll);

    for i in 1..=t {
        let proposal = walk.propose(&current, &mut chain_rng);
        let proposal_lp = prior.log_density(proposal.as_slice());
        let proposal_ll = if proposal_lp == f64::NEG_INFINITY {
            None
        } else {
            match estimate_at(model, s_obs, &proposal, config, &sims.substream(i as u64)) {
                Ok(v) => Some(v),
                Err(Error::NotPositiveDefinite(_)) => None,
                Err(e) => return Err(e),
            }
        };
        let log_u = chain_rng.random::<f64>().ln();

        let accept = match (proposal_ll, current_ll) {
            (None, _) | (Some(SlEstimate::ZeroMass), _) => false,
            (Some(SlEstimate::Finite(_)), SlEstimate::ZeroMass) => true,
            (Some(SlEstimate::Finite(ll)), SlEstimate::Finite(cur)) => {
                let log_r = (ll + proposal_lp) - (cur + current_lp) + walk.log_density(&current, &proposal)
                    - walk.log_density(&proposal, &current);
                log_u < log_r.min(0.0)
            }
        };
        if accept {
            current = proposal;
            current_ll = proposal_ll.expect("accepted proposals carry an estimate");
            current_lp = proposal_lp;
        }
        states.push(current.clone());
        log_sl.push(current_ll);
        accepted.push(accept);
    }
    Ok(McmcTrace { states, log_sl, accepted, burn_in: config.burn_in })
}

/// Per-parameter autocorrelation ESS divided by the number of model
/// simulations, times [`NORMALIZED_ESS_SCALE`].
pub fn normalized_ess(trace: &McmcTrace, total_simulations: usize) -> Result<Vec<f64>> {
    if trace.kept().len() < 100 {
        return Err(Error::Precondition("need at least 100 post-burn-in states".into()));
    }
    if total_simulations == 0 {
        return Err(Error::Precondition("total simulations must be positive".into()));
    }
    (0..trace.dim())
        .map(|i| {
            let ess = autocorrelation_ess(&trace.coordinate(i))?;
            Ok(ess / total_simulations as f64 * NORMALIZED_ESS_SCALE)
        })
        .collect()
}
