//! Result-table serialization: RFC 4180 CSV writers with a fixed column
//! order per table kind, plus the JSON run manifest.
//!
//! Floats are rendered with six significant digits ([`format_sig6`]) so
//! reruns diff cleanly; the price-of-anarchy column alone uses two decimals,
//! matching how the ratio is conventionally quoted. Distribution rows share
//! one [`SummaryStats`] shape (count, max, mean, median, population standard
//! deviation, 75th and 95th percentile with linear interpolation).
//!
//! Writers take any `io::Write` sink and fail with
//! [`ReportError::SinkWriteFailure`]; they never create files themselves —
//! callers decide where tables land and record them in the [`RunManifest`].

use std::collections::BTreeMap;
use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::paths::OdFairnessReport;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed writing report output: {0}")]
    SinkWriteFailure(String),
}

impl From<csv::Error> for ReportError {
    fn from(e: csv::Error) -> Self {
        ReportError::SinkWriteFailure(e.to_string())
    }
}

impl From<io::Error> for ReportError {
    fn from(e: io::Error) -> Self {
        ReportError::SinkWriteFailure(e.to_string())
    }
}

impl From<serde_json::Error> for ReportError {
    fn from(e: serde_json::Error) -> Self {
        ReportError::SinkWriteFailure(e.to_string())
    }
}

/// Renders a float with six significant digits, fixed-point where the
/// exponent allows and scientific notation otherwise, trailing zeros
/// stripped.
pub fn format_sig6(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let scientific = format!("{value:.5e}");
    let (mantissa, exp) = scientific
        .split_once('e')
        .expect("{:e} always contains an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..6).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        let fixed = format!("{value:.decimals$}");
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    }
}

/// Percentile with linear interpolation between closest ranks
/// (`rank = p/100 · (n−1)`); input must be sorted ascending.
pub fn percentile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Distribution summary used by every statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub p75: f64,
    pub p95: f64,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Option<SummaryStats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let variance = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(SummaryStats {
            count: sorted.len(),
            max: *sorted.last().expect("nonempty"),
            mean,
            median: percentile_of_sorted(&sorted, 50.0),
            std_dev: variance.sqrt(),
            p75: percentile_of_sorted(&sorted, 75.0),
            p95: percentile_of_sorted(&sorted, 95.0),
        })
    }
}

fn csv_writer<W: io::Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(sink)
}

// ---------------------------------------------------------------------------
// Table rows

/// One network's assignment totals.
#[derive(Debug, Clone, PartialEq)]
pub struct PoaRow {
    pub city: String,
    pub total_ue_minutes: f64,
    pub total_so_minutes: f64,
    pub poa: f64,
}

/// Columns: `city,total_ue_minutes,total_so_minutes,poa`.
pub fn write_poa_summary<W: io::Write>(sink: W, rows: &[PoaRow]) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record(["city", "total_ue_minutes", "total_so_minutes", "poa"])?;
    for r in rows {
        w.write_record([
            r.city.as_str(),
            &format_sig6(r.total_ue_minutes),
            &format_sig6(r.total_so_minutes),
            &format!("{:.2}", r.poa),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `origin,destination,q,t_hat_so,t_ue,violated`.
pub fn write_od_fairness<W: io::Write>(
    sink: W,
    report: &OdFairnessReport,
) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record(["origin", "destination", "q", "t_hat_so", "t_ue", "violated"])?;
    for r in &report.rows {
        w.write_record([
            r.origin.to_string(),
            r.destination.to_string(),
            r.q.to_string(),
            format_sig6(r.t_hat_so),
            format_sig6(r.t_ue),
            r.violated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Shape of one discretized OD pair: how many drivers, paths, and distinct
/// path times it has, and its optimal versus equilibrium travel time.
#[derive(Debug, Clone, PartialEq)]
pub struct OdSummaryRow {
    pub origin: u32,
    pub destination: u32,
    pub q: u64,
    pub path_count: usize,
    pub distinct_times: usize,
    pub t_hat: f64,
    /// Empty cell when no equilibrium time is on record.
    pub t_ue: Option<f64>,
}

/// Columns: `origin,destination,q,path_count,distinct_times,t_hat,t_ue`.
pub fn write_od_summary<W: io::Write>(sink: W, rows: &[OdSummaryRow]) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record([
        "origin",
        "destination",
        "q",
        "path_count",
        "distinct_times",
        "t_hat",
        "t_ue",
    ])?;
    for r in rows {
        w.write_record([
            r.origin.to_string(),
            r.destination.to_string(),
            r.q.to_string(),
            r.path_count.to_string(),
            r.distinct_times.to_string(),
            format_sig6(r.t_hat),
            r.t_ue.map(format_sig6).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One cycle construction for one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleLengthRow {
    pub origin: u32,
    pub destination: u32,
    pub method: String,
    pub length: u64,
    /// Drivers covered: the whole OD for full/gcd cycles, the group size for
    /// partition sub-cycles.
    pub drivers: u64,
}

/// Columns: `origin,destination,method,length,drivers`.
pub fn write_cycle_lengths<W: io::Write>(
    sink: W,
    rows: &[CycleLengthRow],
) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record(["origin", "destination", "method", "length", "drivers"])?;
    for r in rows {
        w.write_record([
            r.origin.to_string(),
            r.destination.to_string(),
            r.method.clone(),
            r.length.to_string(),
            r.drivers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Validation outcome for one materialized cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleValidationRow {
    pub origin: u32,
    pub destination: u32,
    pub method: String,
    pub days: u64,
    pub max_abs_residual: f64,
    pub is_wardropian: bool,
}

/// Columns: `origin,destination,method,days,max_abs_residual,is_wardropian`.
pub fn write_cycle_validation<W: io::Write>(
    sink: W,
    rows: &[CycleValidationRow],
) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record([
        "origin",
        "destination",
        "method",
        "days",
        "max_abs_residual",
        "is_wardropian",
    ])?;
    for r in rows {
        w.write_record([
            r.origin.to_string(),
            r.destination.to_string(),
            r.method.clone(),
            r.days.to_string(),
            format_sig6(r.max_abs_residual),
            r.is_wardropian.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Distribution of cycle lengths for one construction method.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStatsRow {
    pub method: String,
    pub stats: SummaryStats,
}

fn write_stats_fields(record: &mut Vec<String>, s: &SummaryStats) {
    record.push(s.count.to_string());
    record.push(format_sig6(s.max));
    record.push(format_sig6(s.mean));
    record.push(format_sig6(s.median));
    record.push(format_sig6(s.std_dev));
    record.push(format_sig6(s.p75));
    record.push(format_sig6(s.p95));
}

/// Columns: `method,count,max,mean,median,std_dev,p75,p95`.
pub fn write_cycle_stats<W: io::Write>(sink: W, rows: &[CycleStatsRow]) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record([
        "method", "count", "max", "mean", "median", "std_dev", "p75", "p95",
    ])?;
    for r in rows {
        let mut record = vec![r.method.clone()];
        write_stats_fields(&mut record, &r.stats);
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Cross-OD distribution of the normalized inequity on one day.
#[derive(Debug, Clone, PartialEq)]
pub struct InequityStatsRow {
    pub day: usize,
    pub stats: SummaryStats,
}

/// Columns: `day,count,max,mean,median,std_dev,p75,p95`.
pub fn write_inequity_stats<W: io::Write>(
    sink: W,
    rows: &[InequityStatsRow],
) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record([
        "day", "count", "max", "mean", "median", "std_dev", "p75", "p95",
    ])?;
    for r in rows {
        let mut record = vec![r.day.to_string()];
        write_stats_fields(&mut record, &r.stats);
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Decay of the summed inequity relative to day one.
#[derive(Debug, Clone, PartialEq)]
pub struct InequityRatioRow {
    pub city: String,
    pub sum_i_1: f64,
    pub ratio_5: Option<f64>,
    pub ratio_10: Option<f64>,
    pub ratio_20: Option<f64>,
    pub ratio_50: Option<f64>,
}

/// Columns: `city,sum_i_1,ratio_5,ratio_10,ratio_20,ratio_50`; ratios beyond
/// the simulated horizon stay empty.
pub fn write_inequity_ratios<W: io::Write>(
    sink: W,
    rows: &[InequityRatioRow],
) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record([
        "city", "sum_i_1", "ratio_5", "ratio_10", "ratio_20", "ratio_50",
    ])?;
    let opt = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.city.clone(),
            format_sig6(r.sum_i_1),
            opt(r.ratio_5),
            opt(r.ratio_10),
            opt(r.ratio_20),
            opt(r.ratio_50),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One simulated day of one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDailyRow {
    pub origin: u32,
    pub destination: u32,
    pub day: usize,
    pub inequity: f64,
    pub inequity_bar: f64,
    pub min_mean: f64,
    pub max_mean: f64,
}

/// Columns: `origin,destination,day,i,i_bar,min_mean,max_mean`.
pub fn write_simulation_daily<W: io::Write>(
    sink: W,
    rows: &[SimulationDailyRow],
) -> Result<(), ReportError> {
    let mut w = csv_writer(sink);
    w.write_record([
        "origin",
        "destination",
        "day",
        "i",
        "i_bar",
        "min_mean",
        "max_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.origin.to_string(),
            r.destination.to_string(),
            r.day.to_string(),
            format_sig6(r.inequity),
            format_sig6(r.inequity_bar),
            format_sig6(r.min_mean),
            format_sig6(r.max_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reproducibility sidecar: inputs, solver settings and the tables written.
/// Carries no timestamps so reruns are byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub settings: BTreeMap<String, serde_json::Value>,
    pub tables: Vec<String>,
}

pub fn write_manifest<W: io::Write>(
    mut sink: W,
    manifest: &RunManifest,
) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut sink, manifest)?;
    sink.write_all(b"\n")?;
    Ok(())
}
