//! `likefree` command-line driver.

mod commands;
mod config;
mod data;
mod error;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::{Common, Report};
use error::{CliError, CliResult};
use serde_json::{json, Value};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "likefree",
    version,
    about = "Likelihood-free Bayesian inference with synthetic and empirical likelihoods"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "likefree-out")]
    out: PathBuf,
    /// Histogram bins for plot-ready output.
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Random-walk MCMC on the synthetic likelihood.
    BslRun(RunArgs),
    /// Empirical likelihood ratio test on a CSV sample.
    ElTest {
        #[arg(long)]
        data: PathBuf,
        /// mean, median or quantile
        #[arg(long, default_value = "mean")]
        constraint: String,
        #[arg(long)]
        probability: Option<f64>,
        /// Hypothesized value(s), comma-separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        theta: Vec<f64>,
        /// Also write the result to DIR/summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prior importance sampling with empirical-likelihood weights.
    Bcel(RunArgs),
    /// Adaptive multiple importance sampling with empirical-likelihood weights.
    Amis(RunArgs),
    /// Replicated empirical-likelihood Bayes factors for g-and-k models.
    GkBf(RunArgs),
    /// Empirical-likelihood posterior for multivariate Spearman's rho.
    Bcop(RunArgs),
    /// Print the default configuration of a command.
    PrintConfig {
        /// bsl-run, bcel, amis, gk-bf or bcop
        command: String,
    },
}

fn resolve(args: &RunArgs, config_seed: Option<u64>) -> Common {
    Common { seed: args.seed.or(config_seed).unwrap_or(1), out: args.out.clone(), bins: args.bins }
}

fn finish(command: &str, seed: u64, out: &std::path::Path, report: Report, started: Instant) -> CliResult<Value> {
    let mut doc = json!({
        "command": command,
        "seed": seed,
        "config": report.config,
        "results": report.results,
        "diagnostics": { "ess": report.ess },
    });
    output::OutputDir::create(out)?.json("summary.json", &doc)?;
    doc["diagnostics"]["runtime_ms"] = json!(started.elapsed().as_millis() as u64);
    Ok(doc)
}

fn default_config(command: &str) -> CliResult<Value> {
    let v = match command {
        "bsl-run" => serde_json::to_value(config::BslConfig::default()),
        "bcel" => serde_json::to_value(config::BcelCmdConfig::default()),
        "amis" => serde_json::to_value(config::AmisCmdConfig::default()),
        "gk-bf" => serde_json::to_value(config::GkBfConfig::default()),
        "bcop" => serde_json::to_value(config::BcopCmdConfig::default()),
        other => return Err(CliError::Config(format!("no configuration for `{other}`"))),
    };
    Ok(v.expect("configs serialize"))
}

fn run(cli: Cli) -> CliResult<Value> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let started = Instant::now();
    match cli.command {
        Command::BslRun(args) => {
            let cfg: config::BslConfig = config::load(args.config.as_deref())?;
            let common = resolve(&args, cfg.seed);
            let report = commands::bsl_run(cfg, &common)?;
            finish("bsl-run", common.seed, &common.out, report, started)
        }
        Command::Bcel(args) => {
            let cfg: config::BcelCmdConfig = config::load(args.config.as_deref())?;
            let common = resolve(&args, cfg.seed);
            let report = commands::bcel(cfg, &common)?;
            finish("bcel", common.seed, &common.out, report, started)
        }
        Command::Amis(args) => {
            let cfg: config::AmisCmdConfig = config::load(args.config.as_deref())?;
            let common = resolve(&args, cfg.seed);
            let report = commands::amis(cfg, &common)?;
            finish("amis", common.seed, &common.out, report, started)
        }
        Command::GkBf(args) => {
            let cfg: config::GkBfConfig = config::load(args.config.as_deref())?;
            let common = resolve(&args, cfg.seed);
            let report = commands::gk_bf(cfg, &common)?;
            finish("gk-bf", common.seed, &common.out, report, started)
        }
        Command::Bcop(args) => {
            let cfg: config::BcopCmdConfig = config::load(args.config.as_deref())?;
            let common = resolve(&args, cfg.seed);
            let report = commands::bcop(cfg, &common)?;
            finish("bcop", common.seed, &common.out, report, started)
        }
        Command::ElTest { data, constraint, probability, theta, out } => {
            let results = commands::el_test_cmd(&data, &constraint, probability, &theta)?;
            let doc = json!({ "command": "el-test", "results": results });
            if let Some(dir) = out {
                output::OutputDir::create(&dir)?.json("summary.json", &doc)?;
            }
            Ok(doc)
        }
        Command::PrintConfig { command } => default_config(&command),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(doc) => {
            let text = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
