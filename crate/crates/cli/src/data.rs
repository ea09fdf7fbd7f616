use crate::config::{CopulaDataSpec, DataSpec};
use crate::error::{CliError, CliResult};
use likefree::copula::{clayton_sample, ClaytonCopula};
use likefree::models::{gk_simulate, NormalMeanExample};
use likefree::special::normal_quantile;
use likefree::RngStream;
use nalgebra::DMatrix;
use std::path::Path;

/// Reads a numeric CSV into rows. A first line that does not parse as
/// numbers is taken as a header.
pub fn read_numeric_csv(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(index as u64 + 1, |p| p.line());
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::Data(format!("{}: line {line}: non-finite value", path.display())));
                }
                if let Some(first) = rows.first() {
                    if first.len() != values.len() {
                        return Err(CliError::Data(format!(
                            "{}: line {line}: expected {} fields, found {}",
                            path.display(),
                            first.len(),
                            values.len()
                        )));
                    }
                }
                rows.push(values);
            }
            Err(_) if index == 0 => continue,
            Err(e) => return Err(CliError::Data(format!("{}: line {line}: {e}", path.display()))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no numeric rows", path.display())));
    }
    Ok(rows)
}

pub fn load_observations(spec: &DataSpec, stream: &RngStream) -> CliResult<Vec<Vec<f64>>> {
    match spec {
        DataSpec::NormalMean { n, mean, sd } => {
            let ex = NormalMeanExample { n: *n, mean: *mean, sd: *sd, ..NormalMeanExample::default() };
            Ok(ex.data(stream)?.into_iter().map(|v| vec![v]).collect())
        }
        DataSpec::GAndK { n, params } => {
            params.validate()?;
            Ok(gk_simulate(*n, params, &mut stream.rng()).into_iter().map(|v| vec![v]).collect())
        }
        DataSpec::Csv { path } => read_numeric_csv(path),
    }
}

pub fn load_copula_data(spec: &CopulaDataSpec, stream: &RngStream) -> CliResult<DMatrix<f64>> {
    match spec {
        CopulaDataSpec::ClaytonGk { n, dim, psi, margins } => {
            margins.validate()?;
            let copula = ClaytonCopula::new(*dim, *psi)?;
            let u = clayton_sample(*n, &copula, &mut stream.rng());
            // keep uniforms strictly inside (0, 1) before the normal quantile
            let lo = f64::MIN_POSITIVE;
            let hi = 1.0 - f64::EPSILON / 2.0;
            Ok(u.map(|x| margins.transform(normal_quantile(x.clamp(lo, hi)).expect("clamped into (0, 1)"))))
        }
        CopulaDataSpec::Csv { path } => {
            let rows = read_numeric_csv(path)?;
            Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_optional() {
        let a = read_numeric_csv(write("x,y\n1,2\n3,4\n").path()).unwrap();
        let b = read_numeric_csv(write("1,2\n3,4\n").path()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = read_numeric_csv(write("x\n1\n2\nabc\n").path()).unwrap_err();
        assert!(matches!(err, CliError::Data(_)));
        assert!(err.to_string().contains("line 4"), "{err}");
        let err = read_numeric_csv(write("1,2\n3\n").path()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
