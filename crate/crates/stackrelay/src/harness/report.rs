//! Metrics rows, CSV serialization, and cross-seed summaries.
//!
//! Every float is written with Rust's shortest-roundtrip formatting, so a
//! re-run with identical inputs produces byte-identical files.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::run::{OracleReport, SolveRow};
use crate::rl::train::TrainingLog;

/// Column order of every metrics CSV file.
pub const METRICS_HEADER: [&str; 7] = [
    "scenario",
    "seed",
    "sweep_value",
    "episode",
    "mean_u_source",
    "mean_u_relay",
    "mean_capacity",
];

/// One reported measurement: a training episode, a test summary, or one
/// side of a pricing-regime comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Scenario identifier.
    pub scenario: String,
    /// Seed that produced the row.
    pub seed: u64,
    /// Value of the swept scalar; 0 when nothing is swept.
    pub sweep_value: f64,
    /// Training episode index, `"test"`, `"alliance"`, or `"competitive"`.
    pub episode: String,
    /// Mean source utility per slot.
    pub mean_u_source: f64,
    /// Mean relay revenue per slot.
    pub mean_u_relay: f64,
    /// Mean end-to-end capacity per slot.
    pub mean_capacity: f64,
}

impl MetricsRow {
    fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("sweep_value", self.sweep_value),
            ("mean_u_source", self.mean_u_source),
            ("mean_u_relay", self.mean_u_relay),
            ("mean_capacity", self.mean_capacity),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "metrics row {}/{}/{} has non-finite {name} = {v}",
                    self.scenario, self.seed, self.episode
                )));
            }
        }
        Ok(())
    }
}

/// Shortest string that parses back to exactly this value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes metrics rows as UTF-8 CSV with a header, in the fixed
/// [`METRICS_HEADER`] column order. Non-finite values are rejected.
pub fn write_metrics<P: AsRef<Path>>(path: P, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(METRICS_HEADER)?;
    for row in rows {
        row.check_finite()?;
        w.write_record([
            row.scenario.as_str(),
            &row.seed.to_string(),
            &fmt_f64(row.sweep_value),
            &row.episode,
            &fmt_f64(row.mean_u_source),
            &fmt_f64(row.mean_u_relay),
            &fmt_f64(row.mean_capacity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one training run's per-episode curve:
/// `episode,mean_u_source,mean_u_relay,mean_capacity,noise_scale`.
pub fn write_training_curve<P: AsRef<Path>>(path: P, log: &TrainingLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["episode", "mean_u_source", "mean_u_relay", "mean_capacity", "noise_scale"])?;
    for ep in &log.episodes {
        w.write_record([
            ep.episode.to_string(),
            fmt_f64(ep.mean_u_source),
            fmt_f64(ep.mean_u_relay),
            fmt_f64(ep.mean_capacity),
            fmt_f64(ep.noise_scale),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes closed-form solutions for seeded channel draws:
/// `seed,mode,relay,price,power,u_relay,u_source,capacity,cap_unbounded`.
pub fn write_solve<P: AsRef<Path>>(path: P, rows: &[SolveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "seed",
        "mode",
        "relay",
        "price",
        "power",
        "u_relay",
        "u_source",
        "capacity",
        "cap_unbounded",
    ])?;
    for row in rows {
        w.write_record([
            row.seed.to_string(),
            row.mode.to_string(),
            row.relay.to_string(),
            fmt_f64(row.price),
            fmt_f64(row.power),
            fmt_f64(row.u_relay),
            fmt_f64(row.u_source),
            fmt_f64(row.capacity),
            if row.cap_unbounded { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-draw solver-versus-grid audit:
/// `draw,alliance_exact,alliance_grid,alliance_gap,competitive_exact,competitive_grid,competitive_gap`.
pub fn write_oracle<P: AsRef<Path>>(path: P, report: &OracleReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "draw",
        "alliance_exact",
        "alliance_grid",
        "alliance_gap",
        "competitive_exact",
        "competitive_grid",
        "competitive_gap",
    ])?;
    for row in &report.rows {
        w.write_record([
            row.draw.to_string(),
            fmt_f64(row.alliance_exact),
            fmt_f64(row.alliance_grid),
            fmt_f64(row.alliance_gap),
            fmt_f64(row.competitive_exact),
            fmt_f64(row.competitive_grid),
            fmt_f64(row.competitive_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Lower median: for an odd count the middle element, for an even count the
/// smaller of the two middle elements. Never interpolates, so the reported
/// value is always one that actually occurred.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    sorted[(sorted.len() - 1) / 2]
}

/// Cross-seed summary of one scenario's test rows: lower median with the
/// full min-max band, computed over every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    /// Number of seeds summarized.
    pub seeds: usize,
    /// Lower median of mean source utility.
    pub median_u_source: f64,
    /// Smallest and largest per-seed mean source utility.
    pub band_u_source: (f64, f64),
    /// Lower median of mean relay revenue.
    pub median_u_relay: f64,
    /// Smallest and largest per-seed mean relay revenue.
    pub band_u_relay: (f64, f64),
    /// Lower median of mean capacity.
    pub median_capacity: f64,
    /// Smallest and largest per-seed mean capacity.
    pub band_capacity: (f64, f64),
}

/// Summarizes test rows across seeds. Returns `None` on an empty slice.
pub fn summarize_tests(rows: &[MetricsRow]) -> Option<SummaryStats> {
    if rows.is_empty() {
        return None;
    }
    let col = |f: fn(&MetricsRow) -> f64| -> (f64, (f64, f64)) {
        let values: Vec<f64> = rows.iter().map(f).collect();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lower_median(&values), (min, max))
    };
    let (median_u_source, band_u_source) = col(|r| r.mean_u_source);
    let (median_u_relay, band_u_relay) = col(|r| r.mean_u_relay);
    let (median_capacity, band_capacity) = col(|r| r.mean_capacity);
    Some(SummaryStats {
        seeds: rows.len(),
        median_u_source,
        band_u_source,
        median_u_relay,
        band_u_relay,
        median_capacity,
        band_capacity,
    })
}

impl fmt::Display for SummaryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "u_source  median {:.6}  band [{:.6}, {:.6}]",
            self.median_u_source, self.band_u_source.0, self.band_u_source.1
        )?;
        writeln!(
            f,
            "u_relay   median {:.6}  band [{:.6}, {:.6}]",
            self.median_u_relay, self.band_u_relay.0, self.band_u_relay.1
        )?;
        write!(
            f,
            "capacity  median {:.6}  band [{:.6}, {:.6}]  ({} seeds)",
            self.median_capacity, self.band_capacity.0, self.band_capacity.1, self.seeds
        )
    }
}
