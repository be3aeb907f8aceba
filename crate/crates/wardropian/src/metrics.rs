//! Fairness metrics over multi-day schedules.
//!
//! Everything here is driven by the per-driver *deviation* from the OD's mean
//! travel time: on day `j`, driver `i` deviates by `t_{k(i)} − t̂`. From the
//! stream of daily deviation vectors we maintain
//!
//! * the running cumulative deviations `𝒟_J` (their per-day columns form the
//!   history matrix),
//! * the *discontent progression* `ℋ_J`, the prefix sums of the running
//!   cumulatives — a driver four minutes over average who waits three days
//!   for redress accrues discontent each of those days, which `𝒟` alone
//!   cannot see,
//! * the inequity `I_J = ‖𝒟_J‖² / Q` and its normalized form `Ī = I / t̂`.
//!
//! The module also verifies the collective-gain property of a cyclical
//! schedule against a user-equilibrium reference ([`verify_cue`]) and
//! Pareto-compares schedules by per-driver cycle means ([`pareto_compare`]),
//! both in exact arithmetic so strict inequalities and zero residuals are
//! decided without rounding doubt.

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::cycles::CycleSchedule;
use crate::exact;
use crate::paths::{DailyAssignment, PathError, PathSet};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("assignment inconsistent with path set: {detail}")]
    InconsistentAssignment { detail: String },
    #[error("deviation vector has {got} drivers, ledger has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("ledger holds no days")]
    EmptyLedger,
    #[error("path set carries no user-equilibrium time")]
    MissingUeTime,
    #[error("schedules cover different driver sets ({a} vs {b} drivers)")]
    DriverSetMismatch { a: usize, b: usize },
}

impl From<PathError> for MetricsError {
    fn from(e: PathError) -> Self {
        MetricsError::InconsistentAssignment {
            detail: e.to_string(),
        }
    }
}

/// Per-driver travel-time deviations for one day, `[D_j]_i = t_{k(i)} − t̂`.
/// Sums to zero for any assignment consistent with its path set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationVector {
    pub day: usize,
    pub values: Vec<f64>,
}

/// Computes the deviation vector of one daily assignment.
pub fn deviations(a: &DailyAssignment, ps: &PathSet) -> Result<DeviationVector, MetricsError> {
    a.validate_for(ps)?;
    let values = a
        .path_of_driver
        .iter()
        .map(|&k| ps.paths[k as usize].time - ps.t_hat)
        .collect();
    Ok(DeviationVector { day: a.day, values })
}

/// Accumulated deviation state over `day_count` days.
///
/// `cumulative` is the running `𝒟_J`; `discontent_last` is the latest column
/// of the discontent progression `ℋ_J` (the prefix sums of the running
/// cumulatives). Both are maintained incrementally; the full matrices are
/// recomputed from the stored daily vectors on demand, giving the tests two
/// independent computation paths to compare.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationLedger {
    pub day_count: usize,
    pub cumulative: Vec<f64>,
    pub discontent_last: Vec<f64>,
    pub daily: Vec<DeviationVector>,
}

impl DeviationLedger {
    pub fn new(driver_count: usize) -> Self {
        DeviationLedger {
            day_count: 0,
            cumulative: vec![0.0; driver_count],
            discontent_last: vec![0.0; driver_count],
            daily: Vec::new(),
        }
    }

    pub fn driver_count(&self) -> usize {
        self.cumulative.len()
    }

    /// Appends one day: cumulative gains `d`, the discontent column gains the
    /// new cumulative.
    pub fn accumulate(&mut self, d: DeviationVector) -> Result<(), MetricsError> {
        if d.values.len() != self.cumulative.len() {
            return Err(MetricsError::LengthMismatch {
                expected: self.cumulative.len(),
                got: d.values.len(),
            });
        }
        for (c, &v) in self.cumulative.iter_mut().zip(&d.values) {
            *c += v;
        }
        for (h, &c) in self.discontent_last.iter_mut().zip(&self.cumulative) {
            *h += c;
        }
        self.day_count += 1;
        self.daily.push(d);
        Ok(())
    }

    /// History matrix: row per driver, column `j` holding the cumulative
    /// deviation after day `j+1`. Recomputed from the stored daily vectors;
    /// its last column equals `cumulative` bit for bit.
    pub fn history_matrix(&self) -> Vec<Vec<f64>> {
        let q = self.driver_count();
        let mut rows = vec![Vec::with_capacity(self.day_count); q];
        let mut running = vec![0.0; q];
        for d in &self.daily {
            for i in 0..q {
                running[i] += d.values[i];
                rows[i].push(running[i]);
            }
        }
        rows
    }

    /// Discontent progression `ℋ_J`: row per driver, column `j` holding the
    /// sum of the cumulative deviations over days `1..=j+1`. Its last column
    /// equals `discontent_last` bit for bit.
    pub fn discontent_matrix(&self) -> Vec<Vec<f64>> {
        let q = self.driver_count();
        let mut rows = vec![Vec::with_capacity(self.day_count); q];
        let mut running = vec![0.0; q];
        let mut progression = vec![0.0; q];
        for d in &self.daily {
            for i in 0..q {
                running[i] += d.values[i];
                progression[i] += running[i];
                rows[i].push(progression[i]);
            }
        }
        rows
    }
}

/// Inequity `I_J = (Σ_i 𝒟_i²)/Q` and normalized inequity `Ī_J = I_J / t̂`.
pub fn inequity(ledger: &DeviationLedger, ps: &PathSet) -> Result<(f64, f64), MetricsError> {
    if ledger.day_count == 0 {
        return Err(MetricsError::EmptyLedger);
    }
    if ledger.driver_count() as u64 != ps.q {
        return Err(MetricsError::LengthMismatch {
            expected: ps.q as usize,
            got: ledger.driver_count(),
        });
    }
    let i = inequity_of(&ledger.cumulative);
    Ok((i, i / ps.t_hat))
}

/// Inequity of a raw cumulative-deviation vector.
pub fn inequity_of(cumulative: &[f64]) -> f64 {
    let sum_sq: f64 = cumulative.iter().map(|c| c * c).sum();
    sum_sq / cumulative.len() as f64
}

/// Per-day inequity series recorded by the simulators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InequitySeries {
    /// `I_J` per day, minutes² per driver.
    pub i: Vec<f64>,
    /// `Ī_J = I_J / t̂` per day.
    pub i_bar: Vec<f64>,
}

impl InequitySeries {
    pub fn push(&mut self, i: f64, t_hat: f64) {
        self.i.push(i);
        self.i_bar.push(i / t_hat);
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }
}

/// Per-driver discontent diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscontentReport {
    /// `M^i`: longest run of consecutive days with strictly positive daily
    /// deviation.
    pub max_above_avg_period: Vec<usize>,
    /// `𝒟⁺_i`: prefix sums of the positive parts of the daily deviations,
    /// summed over all days.
    pub one_sided_discontent: Vec<f64>,
    /// Largest entry of the driver's discontent-progression row (signed).
    pub max_cumulative_discontent: Vec<f64>,
}

/// Computes the three per-driver discontent measures from a ledger.
pub fn discontent_measures(ledger: &DeviationLedger) -> Result<DiscontentReport, MetricsError> {
    if ledger.day_count == 0 {
        return Err(MetricsError::EmptyLedger);
    }
    let q = ledger.driver_count();
    let mut cur_run = vec![0usize; q];
    let mut max_run = vec![0usize; q];
    let mut pos_prefix = vec![0.0; q];
    let mut one_sided = vec![0.0; q];
    let mut running = vec![0.0; q];
    let mut progression = vec![0.0; q];
    let mut max_progression = vec![f64::NEG_INFINITY; q];
    for d in &ledger.daily {
        for i in 0..q {
            let v = d.values[i];
            if v > 0.0 {
                cur_run[i] += 1;
                max_run[i] = max_run[i].max(cur_run[i]);
                pos_prefix[i] += v;
            } else {
                cur_run[i] = 0;
            }
            one_sided[i] += pos_prefix[i];
            running[i] += v;
            progression[i] += running[i];
            max_progression[i] = max_progression[i].max(progression[i]);
        }
    }
    Ok(DiscontentReport {
        max_above_avg_period: max_run,
        one_sided_discontent: one_sided,
        max_cumulative_discontent: max_progression,
    })
}

/// Verdict of the collective-gain check against user equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct CueVerdict {
    /// Per-driver cycle totals all equal `ζ·t̂` (zero residual).
    pub is_wardropian: bool,
    /// Every driver's cycle total is strictly below `t_ue·ζ`.
    pub all_beat_ue: bool,
    /// `min_i (t_ue·ζ − Σ_j [A_j T]_i)/ζ`, i.e. the worst driver's per-day
    /// gain over UE; negative or zero when some driver fails the strict test.
    pub worst_driver_margin: f64,
}

/// Checks whether a cyclical schedule is Wardropian and strictly beats the
/// user-equilibrium travel time for every driver.
///
/// Residuals and the strict comparison are evaluated in exact rational
/// arithmetic; for real-valued times the Wardropian test falls back to the
/// `1e-9·ζ·t̂` tolerance. An empty schedule fails both checks.
pub fn verify_cue(schedule: &CycleSchedule, ps: &PathSet) -> Result<CueVerdict, MetricsError> {
    let t_ue = ps.t_ue.ok_or(MetricsError::MissingUeTime)?;
    let zeta = schedule.len();
    if zeta == 0 {
        return Ok(CueVerdict {
            is_wardropian: false,
            all_beat_ue: false,
            worst_driver_margin: 0.0,
        });
    }
    let counts = schedule.usage_counts(ps)?;
    let times: Vec<f64> = ps.paths.iter().map(|p| p.time).collect();
    let t_hat = ps.t_hat_exact();
    let zeta_big = exact::rational(zeta as f64);
    let target = &t_hat * &zeta_big;
    let ue_total = exact::rational(t_ue) * &zeta_big;
    let integer_times = exact::integer_values(&times).is_some();
    let tolerance = if integer_times {
        num_rational::BigRational::zero()
    } else {
        exact::rational(1e-9 * zeta as f64 * ps.t_hat)
    };

    let mut is_wardropian = true;
    let mut all_beat_ue = true;
    let mut worst_margin = f64::INFINITY;
    for driver_counts in &counts {
        let total = exact::weighted_time_sum(driver_counts, &times);
        let residual = &total - &target;
        if residual.clone().abs() > tolerance {
            is_wardropian = false;
        }
        if total >= ue_total {
            all_beat_ue = false;
        }
        let margin = (t_ue * zeta as f64 - rational_to_f64(&total)) / zeta as f64;
        worst_margin = worst_margin.min(margin);
    }
    Ok(CueVerdict {
        is_wardropian,
        all_beat_ue,
        worst_driver_margin: worst_margin,
    })
}

fn rational_to_f64(r: &num_rational::BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().expect("rational from finite floats")
}

/// Outcome of a Pareto comparison of per-driver cycle means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoOrdering {
    ALessOrEqual,
    BLessOrEqual,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParetoResult {
    pub ordering: ParetoOrdering,
    /// True when the dominating side is strictly better for at least one
    /// driver (meaningful for `ALessOrEqual`/`BLessOrEqual` only).
    pub strict: bool,
}

/// Pareto-compares two cyclical schedules by each driver's cycle-mean travel
/// time, exactly: means are cross-multiplied rationals, so schedules of
/// different lengths compare without rounding.
pub fn pareto_compare(
    a: &CycleSchedule,
    b: &CycleSchedule,
    ps: &PathSet,
) -> Result<ParetoResult, MetricsError> {
    let qa = a.driver_count();
    let qb = b.driver_count();
    if qa != qb {
        return Err(MetricsError::DriverSetMismatch { a: qa, b: qb });
    }
    let counts_a = a.usage_counts(ps)?;
    let counts_b = b.usage_counts(ps)?;
    let times: Vec<f64> = ps.paths.iter().map(|p| p.time).collect();
    let zeta_a = exact::rational(a.len() as f64);
    let zeta_b = exact::rational(b.len() as f64);

    let mut a_le = true;
    let mut b_le = true;
    let mut some_strict_a = false;
    let mut some_strict_b = false;
    for (ca, cb) in counts_a.iter().zip(&counts_b) {
        // mean_a = total_a/ζ_a vs mean_b = total_b/ζ_b, cross-multiplied.
        let lhs = exact::weighted_time_sum(ca, &times) * &zeta_b;
        let rhs = exact::weighted_time_sum(cb, &times) * &zeta_a;
        match lhs.cmp(&rhs) {
            std::cmp::Ordering::Less => {
                b_le = false;
                some_strict_a = true;
            }
            std::cmp::Ordering::Greater => {
                a_le = false;
                some_strict_b = true;
            }
            std::cmp::Ordering::Equal => {}
        }
    }
    Ok(classify(a_le, b_le, some_strict_a, some_strict_b))
}

/// Pareto comparison of two explicit per-driver mean vectors (used when one
/// side is a synthetic baseline, e.g. every driver pinned at the UE time).
pub fn pareto_compare_means(a: &[f64], b: &[f64]) -> Result<ParetoResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DriverSetMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let mut a_le = true;
    let mut b_le = true;
    let mut some_strict_a = false;
    let mut some_strict_b = false;
    for (&ma, &mb) in a.iter().zip(b) {
        if ma < mb {
            b_le = false;
            some_strict_a = true;
        } else if ma > mb {
            a_le = false;
            some_strict_b = true;
        }
    }
    Ok(classify(a_le, b_le, some_strict_a, some_strict_b))
}

fn classify(a_le: bool, b_le: bool, strict_a: bool, strict_b: bool) -> ParetoResult {
    let ordering = match (a_le, b_le) {
        (true, true) => ParetoOrdering::Equal,
        (true, false) => ParetoOrdering::ALessOrEqual,
        (false, true) => ParetoOrdering::BLessOrEqual,
        (false, false) => ParetoOrdering::Incomparable,
    };
    let strict = match ordering {
        ParetoOrdering::ALessOrEqual => strict_a,
        ParetoOrdering::BLessOrEqual => strict_b,
        _ => false,
    };
    ParetoResult { ordering, strict }
}
