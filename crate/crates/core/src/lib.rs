//! Likelihood-free Bayesian inference with synthetic and empirical likelihoods.
//!
//! Two families of approximate likelihood live here:
//!
//! * the parametric **synthetic likelihood**, a multivariate normal fitted to
//!   simulated summary statistics, available as the plug-in density and as the
//!   exactly unbiased Ghurye–Olkin estimator, and sampled with random-walk
//!   Metropolis–Hastings ([`mcmc`]);
//! * the nonparametric **empirical likelihood**, obtained by maximizing
//!   `Π p_i` under moment constraints ([`el`]), which weights prior draws in
//!   importance samplers ([`bcel`]) and drives the copula dependence sampler
//!   ([`copula`]).
//!
//! Every random quantity is drawn from an [`RngStream`], a `(seed, stream id)`
//! pair. Replicates and parallel workers each own a stream, so results do not
//! depend on the number of threads.

pub mod bcel;
pub mod copula;
pub mod el;
pub mod error;
pub mod mcmc;
pub mod models;
pub mod mvt;
pub mod prior;
pub mod rng;
pub mod special;
pub mod stats;
pub mod synthetic;
pub mod types;
pub mod weights;

pub use error::{Error, Result};
pub use prior::{Marginal, PriorSpec};
pub use rng::{RngStream, StreamRng};
pub use types::{ParameterVector, SummaryVector};
pub use weights::{ess, multinomial_resample, weighted_moments, WeightedSample};
