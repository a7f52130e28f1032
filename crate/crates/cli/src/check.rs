//! Schema validation for every file the tool reads or writes.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;
use wristkin::dataset;

pub const FIT_REPORT_KEYS: [&str; 5] = ["sse", "rmse", "r", "r_squared", "n"];
pub const PER_SUBJECT_HEADER: &str =
    "subject_id,n,mean_residual_mm,sd_residual_mm,pct_error,min,q1,median,q3,max";
pub const RESIDUALS_HEADER: &str = "index,residual,standardized_residual,lowess";
pub const GRID_HEADER: &str = "beta3_rad,beta4_rad,d2_mm";
pub const PREDICTIONS_HEADER: &str = "subject_id,index,t,beta3_rad,beta4_rad,d2_mm,d2_hat_mm";
pub const VALIDATION_KEYS: [&str; 9] = [
    "subjects",
    "pooled_n",
    "pooled_mean_residual_mm",
    "pooled_sd_residual_mm",
    "pct_error_mean",
    "pct_error_sd",
    "rmse",
    "r",
    "r_squared",
];
pub const STATS_KEYS: [&str; 6] = [
    "n",
    "x",
    "y",
    "slope_mm_per_rad",
    "intercept_mm",
    "spearman_rho",
];
pub const HISTORY_HEADER: &str = "generation,best_fitness";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    Session,
    Meta,
    Surface,
    FitReport,
    Split,
    PerSubject,
    Residuals,
    Grid,
    Predictions,
    History,
    Validation,
    Stats,
    Manifest,
}

impl Kind {
    /// Guesses the schema from the file name.
    pub fn detect(path: &Path) -> Option<Kind> {
        let name = path.file_name()?.to_str()?;
        let ext = path.extension()?.to_str()?;
        Some(match (name, ext) {
            ("fit_report.json", _) => Kind::FitReport,
            ("split.json", _) => Kind::Split,
            ("manifest.json", _) => Kind::Manifest,
            ("validation.json", _) => Kind::Validation,
            ("stats.json", _) => Kind::Stats,
            ("per_subject.csv", _) => Kind::PerSubject,
            ("residuals.csv", _) => Kind::Residuals,
            ("surface_grid.csv", _) => Kind::Grid,
            ("predictions.csv", _) => Kind::Predictions,
            ("ga_history.csv", _) => Kind::History,
            (n, "json") if n.contains("surface") => Kind::Surface,
            (_, "json") => Kind::Meta,
            (_, "csv") => Kind::Session,
            _ => return None,
        })
    }
}

pub fn check_file(path: &Path, kind: Kind) -> Result<()> {
    match kind {
        Kind::Session => {
            let file =
                std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let samples = dataset::read_samples(file, path)?;
            if samples.is_empty() {
                bail!("{}: no samples", path.display());
            }
            Ok(())
        }
        Kind::Meta => dataset::read_meta(path).map(|_| ()).map_err(Into::into),
        Kind::Surface => dataset::load_surface(path).map(|_| ()).map_err(Into::into),
        Kind::FitReport => {
            let v = read_object(path, &FIT_REPORT_KEYS)?;
            for key in ["sse", "rmse", "r", "r_squared"] {
                if !v[key].is_number() {
                    bail!("{}: `{key}` must be a number", path.display());
                }
            }
            if !v["n"].is_u64() {
                bail!("{}: `n` must be a non-negative integer", path.display());
            }
            Ok(())
        }
        Kind::Split => {
            let v = read_object(path, &["seed", "fit", "validate"])?;
            if !v["seed"].is_u64() {
                bail!("{}: `seed` must be an unsigned integer", path.display());
            }
            for key in ["fit", "validate"] {
                let ok = v[key]
                    .as_array()
                    .is_some_and(|a| a.iter().all(Value::is_string));
                if !ok {
                    bail!(
                        "{}: `{key}` must be an array of subject ids",
                        path.display()
                    );
                }
            }
            Ok(())
        }
        Kind::Validation => {
            let keys = VALIDATION_KEYS;
            let v = read_object(path, &keys)?;
            for key in keys {
                let optional = key.starts_with("pct_error");
                if !(v[key].is_number() || optional && v[key].is_null()) {
                    bail!("{}: `{key}` must be a number", path.display());
                }
            }
            Ok(())
        }
        Kind::Stats => {
            let v = read_object(path, &STATS_KEYS)?;
            for key in ["n", "slope_mm_per_rad", "intercept_mm", "spearman_rho"] {
                if !v[key].is_number() {
                    bail!("{}: `{key}` must be a number", path.display());
                }
            }
            Ok(())
        }
        Kind::Manifest => {
            let v = read_object(
                path,
                &[
                    "tool", "version", "command", "seed", "config", "inputs", "outputs",
                ],
            )?;
            for key in ["tool", "version", "command"] {
                if !v[key].is_string() {
                    bail!("{}: `{key}` must be a string", path.display());
                }
            }
            Ok(())
        }
        Kind::PerSubject => check_csv(path, PER_SUBJECT_HEADER, |row| {
            number(row, 1, false)?;
            for i in 2..10 {
                // pct_error may be empty when no sample has |d2| ≥ 1 mm
                number(row, i, i == 4)?;
            }
            Ok(())
        }),
        Kind::Residuals => check_csv(path, RESIDUALS_HEADER, |row| {
            number(row, 0, false)?;
            for i in 1..4 {
                number(row, i, i == 2)?;
            }
            Ok(())
        }),
        Kind::Grid => check_csv(path, GRID_HEADER, |row| {
            (0..3).try_for_each(|i| number(row, i, false))
        }),
        Kind::Predictions => check_csv(path, PREDICTIONS_HEADER, |row| {
            (1..7).try_for_each(|i| number(row, i, false))
        }),
        Kind::History => check_csv(path, HISTORY_HEADER, |row| {
            (0..2).try_for_each(|i| number(row, i, false))
        }),
    }
}

/// A JSON object with exactly `keys`.
fn read_object(path: &Path, keys: &[&str]) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| anyhow!("{}: expected a JSON object", path.display()))?;
    let mut found: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut want = keys.to_vec();
    found.sort_unstable();
    want.sort_unstable();
    if found != want {
        bail!("{}: keys {found:?}, expected {want:?}", path.display());
    }
    Ok(v)
}

fn check_csv(
    path: &Path,
    header: &str,
    row_check: impl Fn(&csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let found = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        bail!("{}: header `{found}`, expected `{header}`", path.display());
    }
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        row_check(&record).with_context(|| format!("{}: row {}", path.display(), i + 1))?;
    }
    Ok(())
}

fn number(row: &csv::StringRecord, i: usize, optional: bool) -> Result<()> {
    let field = row.get(i).ok_or_else(|| anyhow!("missing column {i}"))?;
    if optional && field.is_empty() {
        return Ok(());
    }
    let v: f64 = field
        .parse()
        .with_context(|| format!("column {i}: `{field}` is not a number"))?;
    if !v.is_finite() {
        bail!("column {i}: non-finite value");
    }
    Ok(())
}
