//! Run-directory file formats: ledger CSV, shift-history CSV, fit reports,
//! snapshot binaries and the run manifest.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use vsheet_core::ansatz::ShiftSample;
use vsheet_core::diagnostics::{DecayFit, FitModel};
use vsheet_core::grid::{FlowState, HybridGrid};
use vsheet_core::pipeline::FitOutcome;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Tidy CSV with a header row; floats in round-trip precision.
pub fn csv_lines(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Formats the shift history; `emit-plots` reuses this exact formatter so
/// the copies agree byte for byte.
pub fn shift_csv(history: &[ShiftSample]) -> String {
    csv_lines(
        &["t", "sigma", "sigma_dot", "d_denom", "n_numer"],
        history.iter().map(|s| vec![s.t, s.sigma, s.sigma_dot, s.d_denom, s.n_numer]),
    )
}

/// Parses a tidy CSV back into (header, columns).
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| anyhow!("empty csv"))?.split(',').map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            bail!("{}: row {} has {} fields, header has {}", path.display(), ln + 2, fields.len(), header.len());
        }
        for (c, f) in fields.iter().enumerate() {
            cols[c].push(f.parse::<f64>().with_context(|| format!("row {} col {c}", ln + 2))?);
        }
    }
    Ok((header, cols))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub series: String,
    pub outcome: FitOutcomeReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitOutcomeReport {
    Fitted {
        model: String,
        window: (f64, f64),
        slope: f64,
        intercept: f64,
        r2: f64,
        samples: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        target_slope: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pass: Option<bool>,
    },
    Skipped {
        skipped: String,
    },
}

pub fn fit_report(series: &str, outcome: &FitOutcome) -> FitReport {
    fit_report_with_target(series, outcome, None, None)
}

pub fn fit_report_with_target(
    series: &str,
    outcome: &FitOutcome,
    target_slope: Option<(f64, f64)>,
    r2_min: Option<f64>,
) -> FitReport {
    let outcome = match outcome {
        FitOutcome::Fitted(f) => {
            let mut pass = None;
            if let Some((want, tol)) = target_slope {
                pass = Some((f.slope - want).abs() <= tol);
            }
            if let Some(r2_min) = r2_min {
                let ok = f.r2 > r2_min;
                pass = Some(pass.unwrap_or(true) && ok);
            }
            FitOutcomeReport::Fitted {
                model: match f.model {
                    FitModel::Power => "power".into(),
                    FitModel::Exponential => "exponential".into(),
                },
                window: f.window,
                slope: f.slope,
                intercept: f.intercept,
                r2: f.r2,
                samples: f.samples,
                target_slope: target_slope.map(|(want, _)| want),
                pass,
            }
        }
        FitOutcome::Skipped { reason } => FitOutcomeReport::Skipped { skipped: reason.clone() },
    };
    FitReport { series: series.into(), outcome }
}

pub fn decay_fit_json(fit: &DecayFit) -> serde_json::Value {
    serde_json::json!({
        "model": match fit.model { FitModel::Power => "power", FitModel::Exponential => "exponential" },
        "window": [fit.window.0, fit.window.1],
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r2": fit.r2,
        "samples": fit.samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub pass: bool,
    pub verdicts: Vec<Verdict>,
    pub fits: Vec<FitReport>,
    pub steps: usize,
    pub wall_time_s: f64,
    /// Files written by the run, relative to the run directory.
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn aggregate_pass(&mut self) {
        self.pass = self.verdicts.iter().all(|v| v.pass);
    }
}

pub fn write_snapshot(dir: &Path, grid: &HybridGrid, state: &FlowState) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let name = format!("t{:012.4}.bin", state.t);
    let path = dir.join(name);
    fs::write(&path, state.to_bytes(grid)).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<(HybridGrid, FlowState)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    FlowState::from_bytes(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

pub fn read_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
