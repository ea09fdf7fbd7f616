//! One function per subcommand. Each validates its whole configuration
//! before sampling, writes its bulk output under the output directory and
//! returns the pieces of the summary document.

use crate::config::{self, AmisCmdConfig, BcelCmdConfig, BcopCmdConfig, BslConfig, GkBfConfig, SimulatorSpec};
use crate::data::{load_copula_data, load_observations, read_numeric_csv};
use crate::error::{CliError, CliResult};
use crate::output::{
    fmt_f64, parameter_names, weighted_histogram, weighted_summary, write_histograms, write_weighted_sample, OutputDir,
};
use likefree::bcel::{run_bcel, run_bcel_amis, AmisConfig, BcelConfig};
use likefree::copula::{run_bcop, BcopConfig, MarginalSource};
use likefree::el::{el_test, ConstraintFunction, MeanConstraint, QuantileConstraint};
use likefree::mcmc::{normalized_ess, run_mcmc_bsl, McmcConfig};
use likefree::models::{gk_log_bayes_factor, gk_simulate, MvnToySimulator, QuantileConstraintSpec};
use likefree::stats::{histogram_mode, median};
use likefree::synthetic::{SimulatorModel, SlEstimate};
use likefree::{multinomial_resample, RngStream, SummaryVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::PathBuf;

pub struct Common {
    pub seed: u64,
    pub out: PathBuf,
    pub bins: usize,
}

/// Everything but the run time, which only goes to stdout.
pub struct Report {
    pub config: Value,
    pub results: Value,
    pub ess: Value,
}

fn echo<T: Serialize>(config: &T, seed: u64) -> Value {
    let mut v = serde_json::to_value(config).expect("configs serialize");
    v["seed"] = json!(seed);
    v
}

/// JSON has no infinities; non-finite values are written as strings.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt_f64(x))
    }
}

fn streams(seed: u64) -> (RngStream, RngStream) {
    let root = RngStream::from_seed(seed);
    (root.substream(0), root.substream(1))
}

fn check_bins(bins: usize) -> CliResult<()> {
    if bins == 0 {
        return Err(CliError::Config("--bins must be at least 1".into()));
    }
    Ok(())
}

pub fn bsl_run(cfg: BslConfig, common: &Common) -> CliResult<Report> {
    check_bins(common.bins)?;
    let SimulatorSpec::MvnToy { covariance } = &cfg.model;
    let model = MvnToySimulator::new(config::matrix(covariance, "model covariance")?)?;
    cfg.prior.validate()?;
    let p = model.param_dim();
    if cfg.observed.len() != model.summary_dim() {
        return Err(CliError::Config(format!(
            "observed summary has length {}, model produces {}",
            cfg.observed.len(),
            model.summary_dim()
        )));
    }
    let initial = cfg.initial.clone().unwrap_or_else(|| cfg.observed.clone());
    let mut mcmc = McmcConfig::new(initial.into(), cfg.replicates, cfg.iterations)
        .with_flavor(cfg.flavor)
        .with_burn_in(cfg.burn_in);
    if let Some(rows) = &cfg.proposal_covariance {
        mcmc = mcmc.with_proposal_covariance(config::matrix(rows, "proposal covariance")?);
    }
    let s_obs = SummaryVector::new(cfg.observed.clone());
    let out = OutputDir::create(&common.out)?;
    let (_, sampler) = streams(common.seed);
    let trace = run_mcmc_bsl(&model, &s_obs, &cfg.prior, &mcmc, &sampler)?;

    let names = parameter_names(p, "theta");
    let mut header = vec!["iteration".to_string()];
    header.extend(names.iter().cloned());
    header.push("log_sl".into());
    header.push("accepted".into());
    let mut w = out.csv("trace.csv", &header)?;
    for (i, (state, ll)) in trace.states.iter().zip(&trace.log_sl).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(state.iter().map(|v| fmt_f64(*v)));
        row.push(match ll {
            SlEstimate::Finite(v) => fmt_f64(*v),
            SlEstimate::ZeroMass => "zero_mass".into(),
        });
        row.push(if i > 0 && trace.accepted[i - 1] { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;

    let simulations = cfg.replicates * (cfg.iterations + 1);
    let ess = match normalized_ess(&trace, simulations) {
        Ok(v) => json!(names.iter().zip(v).map(|(n, e)| (n.clone(), json!(e))).collect::<serde_json::Map<_, _>>()),
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let means = trace.posterior_mean();
    let sds = trace.posterior_sd();
    let mut posterior = serde_json::Map::new();
    let mut hists = Vec::new();
    for (i, name) in names.iter().enumerate() {
        posterior.insert(name.clone(), json!({ "mean": means[i], "sd": sds[i] }));
        let xs = trace.coordinate(i);
        hists.push((name.clone(), weighted_histogram(&xs, &vec![1.0; xs.len()], common.bins)));
    }
    write_histograms(&out, "histogram.csv", &hists)?;
    Ok(Report {
        config: echo(&cfg, common.seed),
        results: json!({
            "posterior": posterior,
            "acceptance_rate": trace.acceptance_rate(),
            "iterations": cfg.iterations,
            "burn_in": cfg.burn_in,
            "simulations": simulations,
        }),
        ess: json!({ "normalized_per_million_simulations": ess }),
    })
}

pub fn el_test_cmd(
    data: &std::path::Path,
    constraint: &str,
    probability: Option<f64>,
    theta: &[f64],
) -> CliResult<Value> {
    let rows = read_numeric_csv(data)?;
    let d = rows[0].len();
    let h: Box<dyn ConstraintFunction> = match constraint {
        "mean" => Box::new(MeanConstraint { dim: d }),
        "median" | "quantile" => {
            let probability = if constraint == "median" {
                0.5
            } else {
                probability
                    .ok_or_else(|| CliError::Config("--probability is required for the quantile constraint".into()))?
            };
            if !(probability > 0.0 && probability < 1.0) {
                return Err(CliError::Config(format!("probability must lie in (0, 1), got {probability}")));
            }
            if d != 1 {
                return Err(CliError::Config("quantile constraints need one-column data".into()));
            }
            Box::new(QuantileConstraint { probability })
        }
        other => {
            return Err(CliError::Config(format!("unknown constraint `{other}` (expected mean, median or quantile)")))
        }
    };
    let theta_dim = if constraint == "mean" { d } else { 1 };
    if theta.len() != theta_dim {
        return Err(CliError::Config(format!("theta has {} values, the constraint needs {theta_dim}", theta.len())));
    }
    let t = el_test(&rows, theta, h.as_ref())?;
    Ok(json!({
        "neg2llr": json_f64(t.neg2llr),
        "p_value": t.p_value,
        "lambda": t.lambda.iter().copied().collect::<Vec<f64>>(),
        "iterations": t.iterations,
        "infeasible": t.infeasible,
    }))
}

fn bcel_base(
    data_spec: &config::DataSpec,
    prior: &likefree::PriorSpec,
    constraint: &config::ConstraintSpec,
    draws: usize,
    flavor: likefree::bcel::LikelihoodFlavor,
    data_stream: &RngStream,
) -> CliResult<(Vec<Vec<f64>>, BcelConfig)> {
    prior.validate()?;
    let data = load_observations(data_spec, data_stream)?;
    let h = constraint.build(data[0].len(), prior.dim())?;
    let config = BcelConfig::new(draws, prior.clone(), h).with_flavor(flavor);
    config.validate()?;
    Ok((data, config))
}

fn sample_outputs(out: &OutputDir, sample: &likefree::WeightedSample, bins: usize) -> CliResult<(Vec<String>, Value)> {
    let names = parameter_names(sample.dim(), "theta");
    write_weighted_sample(out, "sample.csv", sample, &names)?;
    let weights = sample.normalized_weights()?;
    let hists: Vec<_> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let xs: Vec<f64> = sample.points().iter().map(|p| p[i]).collect();
            (n.clone(), weighted_histogram(&xs, &weights, bins))
        })
        .collect();
    write_histograms(out, "histogram.csv", &hists)?;
    let summary = weighted_summary(sample, &names)?;
    Ok((names, summary))
}

pub fn bcel(cfg: BcelCmdConfig, common: &Common) -> CliResult<Report> {
    check_bins(common.bins)?;
    if cfg.resample_count == Some(0) {
        return Err(CliError::Config("resample_count must be at least 1".into()));
    }
    let (data_stream, sampler) = streams(common.seed);
    let (data, config) = bcel_base(&cfg.data, &cfg.prior, &cfg.constraint, cfg.draws, cfg.flavor, &data_stream)?;
    let out = OutputDir::create(&common.out)?;
    let sample = run_bcel(&data, &config, &sampler)?;
    let (names, posterior) = sample_outputs(&out, &sample, common.bins)?;
    let ess = sample.ess()?;
    if let Some(count) = cfg.resample_count {
        if ess < 2.0 {
            return Err(CliError::Numerical(format!("effective sample size {ess:.3} is too small to resample")));
        }
        let draws = multinomial_resample(&sample, count, &sampler.substream(0))?;
        let mut w = out.csv("resample.csv", &names)?;
        for p in &draws {
            w.write_record(p.iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
    }
    let zero = sample.log_weights().iter().filter(|w| **w == f64::NEG_INFINITY).count();
    Ok(Report {
        config: echo(&cfg, common.seed),
        results: json!({ "posterior": posterior, "draws": sample.len(), "zero_weight_draws": zero, "observations": data.len() }),
        ess: json!(ess),
    })
}

pub fn amis(cfg: AmisCmdConfig, common: &Common) -> CliResult<Report> {
    check_bins(common.bins)?;
    let (data_stream, sampler) = streams(common.seed);
    let (data, base) = bcel_base(&cfg.data, &cfg.prior, &cfg.constraint, cfg.draws, cfg.flavor, &data_stream)?;
    let mut config = AmisConfig::new(base, cfg.generations).with_denominator(cfg.denominator);
    config.jitter = cfg.jitter;
    config.validate()?;
    let out = OutputDir::create(&common.out)?;
    let result = run_bcel_amis(&data, &config, &sampler)?;
    let (_, posterior) = sample_outputs(&out, &result.sample, common.bins)?;
    let per_generation: Vec<f64> = (1..=result.generations_completed as u32)
        .map(|g| {
            let lw: Vec<f64> = result
                .sample
                .log_weights()
                .iter()
                .zip(result.sample.generations())
                .filter(|(_, gen)| **gen == g)
                .map(|(w, _)| *w)
                .collect();
            likefree::weights::ess_from_log_weights(&lw).unwrap_or(0.0)
        })
        .collect();
    Ok(Report {
        config: echo(&cfg, common.seed),
        results: json!({
            "posterior": posterior,
            "draws": result.sample.len(),
            "generations_completed": result.generations_completed,
            "stopped_early": result.stopped_early,
        }),
        ess: json!({ "final": result.sample.ess()?, "per_generation": per_generation }),
    })
}

pub fn gk_bf(cfg: GkBfConfig, common: &Common) -> CliResult<Report> {
    let spec = QuantileConstraintSpec { probabilities: cfg.probabilities.clone() };
    spec.validate()?;
    cfg.reference.validate()?;
    for alt in &cfg.alternatives {
        alt.validate()?;
    }
    if cfg.replicates == 0 || cfg.sample_sizes.is_empty() || cfg.alternatives.is_empty() {
        return Err(CliError::Config("need at least one replicate, sample size and alternative".into()));
    }
    if let Some(&n) = cfg.sample_sizes.iter().find(|&&n| n <= spec.probabilities.len()) {
        return Err(CliError::Config(format!("sample size {n} must exceed the number of constraints")));
    }
    let out = OutputDir::create(&common.out)?;
    let (data_stream, _) = streams(common.seed);

    // column order: for each alternative, each sample size
    let mut columns = Vec::new();
    for a in 0..cfg.alternatives.len() {
        for &n in &cfg.sample_sizes {
            columns.push((a, n));
        }
    }
    let rows: Vec<Vec<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data: Vec<Vec<f64>> = cfg
                .sample_sizes
                .iter()
                .enumerate()
                .map(|(k, &n)| {
                    gk_simulate(n, &cfg.reference, &mut data_stream.substream(k as u64).substream(r as u64).rng())
                })
                .collect();
            columns
                .iter()
                .map(|&(a, n)| {
                    let k = cfg.sample_sizes.iter().position(|&m| m == n).expect("size from the list");
                    gk_log_bayes_factor(&data[k], &cfg.reference, &cfg.alternatives[a], &spec)
                })
                .collect::<likefree::Result<Vec<f64>>>()
        })
        .collect::<likefree::Result<_>>()?;

    let names: Vec<String> = columns.iter().map(|(a, n)| format!("ref_vs_alt{}_n{}", a + 1, n)).collect();
    let mut header = vec!["replicate".to_string()];
    header.extend(names.iter().cloned());
    let mut w = out.csv("log_bf.csv", &header)?;
    for (r, row) in rows.iter().enumerate() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let medians: serde_json::Map<String, Value> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            (name.clone(), json_f64(median(&col)))
        })
        .collect();
    // replicates where exactly one model has zero empirical likelihood
    let one_sided: serde_json::Map<String, Value> = names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), json!(rows.iter().filter(|r| r[j].is_infinite()).count())))
        .collect();
    Ok(Report {
        config: echo(&cfg, common.seed),
        results: json!({
            "median_log_bf": medians,
            "infinite_log_bf": one_sided,
            "replicates": cfg.replicates,
            "columns": names,
        }),
        ess: Value::Null,
    })
}

pub fn bcop(cfg: BcopCmdConfig, common: &Common) -> CliResult<Report> {
    check_bins(common.bins)?;
    let mut config = BcopConfig::new(cfg.draws, cfg.prior.clone());
    config.constraint = cfg.constraint;
    config.flavor = cfg.flavor;
    config.validate()?;
    let (data_stream, sampler) = streams(common.seed);
    let data = load_copula_data(&cfg.data, &data_stream)?;
    let out = OutputDir::create(&common.out)?;
    let result = run_bcop(&MarginalSource::Nonparametric(data), &config, &sampler)?;
    let sample = &result.sample;
    let weights = sample.normalized_weights()?;
    let mut w = out.csv("sample.csv", &["rho".to_string(), "weight".to_string()])?;
    for (p, wt) in sample.points().iter().zip(&weights) {
        w.write_record([fmt_f64(p[0]), fmt_f64(*wt)])?;
    }
    w.flush()?;
    let rhos: Vec<f64> = sample.points().iter().map(|p| p[0]).collect();
    let bins = weighted_histogram(&rhos, &weights, common.bins);
    let mode = histogram_mode(&bins);
    write_histograms(&out, "histogram.csv", &[("rho".to_string(), bins)])?;
    let names = vec!["rho".to_string()];
    Ok(Report {
        config: echo(&cfg, common.seed),
        results: json!({
            "rho_hat": result.rho_hat,
            "posterior": weighted_summary(sample, &names)?,
            "posterior_mode": mode,
            "draws": sample.len(),
        }),
        ess: json!(sample.ess()?),
    })
}
