//! CSV and JSON writers. Floats are written in their shortest round-trip
//! decimal form, so every file re-parses to the exact values computed.

use crate::error::{CliError, CliResult};
use likefree::stats::{histogram, weighted_quantile, HistogramBin};
use likefree::WeightedSample;
use serde_json::{json, Value};
use std::fs::File;
use std::path::{Path, PathBuf};

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, header: &[String]) -> CliResult<csv::Writer<File>> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
        w.write_record(header)?;
        Ok(w)
    }

    pub fn json(&self, name: &str, value: &Value) -> CliResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

pub fn parameter_names(dim: usize, prefix: &str) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|i| format!("{prefix}_{i}")).collect()
    }
}

/// Coordinates, normalized weight and generation, one row per draw.
pub fn write_weighted_sample(out: &OutputDir, name: &str, sample: &WeightedSample, names: &[String]) -> CliResult<()> {
    let mut header = names.to_vec();
    header.push("weight".into());
    header.push("generation".into());
    let mut w = out.csv(name, &header)?;
    let weights = sample.normalized_weights()?;
    for ((p, wt), g) in sample.points().iter().zip(&weights).zip(sample.generations()) {
        let mut row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(*wt));
        row.push(g.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram over the range of draws that carry weight.
pub fn weighted_histogram(values: &[f64], weights: &[f64], bins: usize) -> Vec<HistogramBin> {
    let (lo, hi) = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (v, _)| (a.min(*v), b.max(*v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    histogram(values, weights, bins, lo, hi)
}

pub fn write_histograms(out: &OutputDir, name: &str, histograms: &[(String, Vec<HistogramBin>)]) -> CliResult<()> {
    let header: Vec<String> =
        ["parameter", "lower", "upper", "mass", "density"].iter().map(|s| s.to_string()).collect();
    let mut w = out.csv(name, &header)?;
    for (param, bins) in histograms {
        for b in bins {
            w.write_record([param.clone(), fmt_f64(b.lower), fmt_f64(b.upper), fmt_f64(b.mass), fmt_f64(b.density)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-coordinate posterior summary of a weighted sample.
pub fn weighted_summary(sample: &WeightedSample, names: &[String]) -> CliResult<Value> {
    let weights = sample.normalized_weights()?;
    let mut entries = serde_json::Map::new();
    for (i, name) in names.iter().enumerate() {
        let (mean, sd) = sample.coordinate_summary(i)?;
        let values: Vec<f64> = sample.points().iter().map(|p| p[i]).collect();
        entries.insert(
            name.clone(),
            json!({
                "mean": mean,
                "sd": sd,
                "q025": weighted_quantile(&values, &weights, 0.025),
                "median": weighted_quantile(&values, &weights, 0.5),
                "q975": weighted_quantile(&values, &weights, 0.975),
            }),
        );
    }
    Ok(Value::Object(entries))
}
