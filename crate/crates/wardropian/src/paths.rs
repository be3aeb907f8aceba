//! Per-OD path sets with integer driver counts, and daily assignments.
//!
//! A [`PathSet`] is the unit every fairness construction operates on: the
//! paths serving one origin-destination pair, each with a frozen travel time
//! and an integer number of drivers `Q_k`, `Σ Q_k = Q`. Paths are stored
//! sorted by ascending time; that order doubles as the canonical slot layout
//! (`Q_1` slots of the fastest path, then `Q_2` of the next, …) used by the
//! cycle constructions and the greedy rule.
//!
//! A [`DailyAssignment`] maps each of the `Q` drivers to one path for one
//! day; validity means exactly `Q_k` drivers sit on path `k`.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path {index} has negative flow {value}")]
    NegativeFlow { index: usize, value: f64 },
    #[error("path {index} has non-finite or negative time {value}")]
    BadTime { index: usize, value: f64 },
    #[error("path set has no paths with positive flow")]
    Empty,
    #[error("integer driver target must be at least 1")]
    ZeroTarget,
    #[error("assignment inconsistent with path set: {detail}")]
    InconsistentAssignment { detail: String },
    #[error("OD sets do not match: {detail}")]
    MismatchedOdSets { detail: String },
    #[error("stored path set violates its invariants: {detail}")]
    CorruptPathSet { detail: String },
}

/// One path: its link indices (empty for synthetic fixtures), integer driver
/// count, and frozen travel time in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub links: Vec<u32>,
    pub flow: u64,
    pub time: f64,
}

/// The discretized paths serving one OD pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub origin: u32,
    pub destination: u32,
    /// Total integer drivers, `Σ_k flow_k`.
    pub q: u64,
    /// Paths sorted by ascending time; zero-flow paths are never stored.
    pub paths: Vec<Path>,
    /// Mean travel time `Σ_k flow_k·time_k / q` in minutes.
    pub t_hat: f64,
    /// User-equilibrium travel time for this OD, when known.
    pub t_ue: Option<f64>,
}

impl PathSet {
    /// Builds a path set from explicit paths, dropping zero-flow entries,
    /// sorting by ascending time and computing the mean.
    pub fn new(
        origin: u32,
        destination: u32,
        paths: Vec<Path>,
        t_ue: Option<f64>,
    ) -> Result<Self, PathError> {
        for (index, p) in paths.iter().enumerate() {
            if !p.time.is_finite() || p.time < 0.0 {
                return Err(PathError::BadTime {
                    index,
                    value: p.time,
                });
            }
        }
        let mut paths: Vec<Path> = paths.into_iter().filter(|p| p.flow > 0).collect();
        if paths.is_empty() {
            return Err(PathError::Empty);
        }
        // Stable: ties keep their original relative order.
        paths.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("times are finite"));
        let q: u64 = paths.iter().map(|p| p.flow).sum();
        let t_hat = Self::mean_time(&paths, q);
        Ok(PathSet {
            origin,
            destination,
            q,
            paths,
            t_hat,
            t_ue,
        })
    }

    /// Convenience constructor for synthetic fixtures without link ids.
    pub fn from_times_and_flows(times: &[f64], flows: &[u64]) -> Result<Self, PathError> {
        assert_eq!(times.len(), flows.len());
        let paths = times
            .iter()
            .zip(flows)
            .map(|(&time, &flow)| Path {
                links: Vec::new(),
                flow,
                time,
            })
            .collect();
        Self::new(1, 2, paths, None)
    }

    fn mean_time(paths: &[Path], q: u64) -> f64 {
        let weighted: f64 = paths.iter().map(|p| p.flow as f64 * p.time).sum();
        weighted / q as f64
    }

    /// Exact rational mean travel time.
    pub fn t_hat_exact(&self) -> BigRational {
        let flows: Vec<u64> = self.paths.iter().map(|p| p.flow).collect();
        let times: Vec<f64> = self.paths.iter().map(|p| p.time).collect();
        exact::weighted_mean(&flows, &times)
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    /// Number of distinct travel times among the paths.
    pub fn distinct_time_count(&self) -> usize {
        let mut count = 0;
        for (i, p) in self.paths.iter().enumerate() {
            if i == 0 || p.time != self.paths[i - 1].time {
                count += 1;
            }
        }
        count
    }

    /// Canonical slot layout: `q` entries, slot `s` holding the path index it
    /// belongs to (`flow_1` slots of path 1, then `flow_2` of path 2, …).
    pub fn slot_paths(&self) -> Vec<u32> {
        let mut slots = Vec::with_capacity(self.q as usize);
        for (k, p) in self.paths.iter().enumerate() {
            slots.extend(std::iter::repeat_n(k as u32, p.flow as usize));
        }
        slots
    }

    /// Shortest and longest path times `(t_min, t_max)`.
    pub fn time_range(&self) -> (f64, f64) {
        (
            self.paths.first().expect("non-empty").time,
            self.paths.last().expect("non-empty").time,
        )
    }

    /// Re-checks the invariants of a path set that was deserialized rather
    /// than constructed.
    pub fn validate(&self) -> Result<(), PathError> {
        if self.paths.is_empty() {
            return Err(PathError::Empty);
        }
        for (index, p) in self.paths.iter().enumerate() {
            if p.flow == 0 {
                return Err(PathError::CorruptPathSet {
                    detail: format!("stored path {index} has zero flow"),
                });
            }
            if !p.time.is_finite() || p.time < 0.0 {
                return Err(PathError::BadTime {
                    index,
                    value: p.time,
                });
            }
            if index > 0 && p.time < self.paths[index - 1].time {
                return Err(PathError::CorruptPathSet {
                    detail: "paths not sorted by ascending time".into(),
                });
            }
        }
        let q: u64 = self.paths.iter().map(|p| p.flow).sum();
        if q != self.q {
            return Err(PathError::CorruptPathSet {
                detail: format!("q = {} but flows sum to {q}", self.q),
            });
        }
        let t_hat = Self::mean_time(&self.paths, q);
        if t_hat != self.t_hat {
            return Err(PathError::CorruptPathSet {
                detail: format!("t_hat = {} but paths give {t_hat}", self.t_hat),
            });
        }
        Ok(())
    }
}

/// Raw (continuous) per-path flow produced by the solver before
/// discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPathFlow {
    pub links: Vec<u32>,
    pub flow: f64,
    pub time: f64,
}

/// Rounds continuous path flows to integer driver counts by largest-remainder
/// apportionment.
///
/// Each path keeps `floor(flow)` drivers; the remaining
/// `q_target − Σ floor(flow)` units go one by one to the largest fractional
/// remainders, ties broken toward the shorter travel time and then the lower
/// path index. Paths landing at zero are dropped; the result carries exactly
/// `q_target` drivers.
pub fn discretize(
    origin: u32,
    destination: u32,
    raw: &[RawPathFlow],
    q_target: u64,
    t_ue: Option<f64>,
) -> Result<PathSet, PathError> {
    if q_target == 0 {
        return Err(PathError::ZeroTarget);
    }
    for (index, p) in raw.iter().enumerate() {
        if p.flow < 0.0 || !p.flow.is_finite() {
            return Err(PathError::NegativeFlow {
                index,
                value: p.flow,
            });
        }
        if !p.time.is_finite() || p.time < 0.0 {
            return Err(PathError::BadTime {
                index,
                value: p.time,
            });
        }
    }
    if raw.is_empty() {
        return Err(PathError::Empty);
    }

    let mut counts: Vec<u64> = raw.iter().map(|p| p.flow.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a].flow - raw[a].flow.floor();
        let rb = raw[b].flow - raw[b].flow.floor();
        rb.partial_cmp(&ra)
            .expect("finite")
            .then(raw[a].time.partial_cmp(&raw[b].time).expect("finite"))
            .then(a.cmp(&b))
    });
    if q_target > assigned {
        let mut units = q_target - assigned;
        let mut cursor = 0usize;
        while units > 0 {
            counts[order[cursor % order.len()]] += 1;
            cursor += 1;
            units -= 1;
        }
    } else if assigned > q_target {
        // Floors already overshoot the target (demand rounded down); take the
        // surplus back from the smallest remainders last in the order.
        let mut units = assigned - q_target;
        let mut cursor = order.len();
        while units > 0 {
            cursor = if cursor == 0 {
                order.len() - 1
            } else {
                cursor - 1
            };
            let idx = order[cursor];
            if counts[idx] > 0 {
                counts[idx] -= 1;
                units -= 1;
            }
        }
    }

    let paths = raw
        .iter()
        .zip(&counts)
        .map(|(p, &flow)| Path {
            links: p.links.clone(),
            flow,
            time: p.time,
        })
        .collect();
    PathSet::new(origin, destination, paths, t_ue)
}

/// One day's driver→path mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyAssignment {
    pub day: usize,
    /// `path_of_driver[i]` is the path index driver `i` travels.
    pub path_of_driver: Vec<u32>,
}

impl DailyAssignment {
    pub fn new(day: usize, path_of_driver: Vec<u32>) -> Self {
        DailyAssignment {
            day,
            path_of_driver,
        }
    }

    pub fn driver_count(&self) -> usize {
        self.path_of_driver.len()
    }

    /// Checks the two validity conditions against a path set: every driver on
    /// exactly one existing path, and path `k` carrying exactly `flow_k`
    /// drivers.
    pub fn validate_for(&self, ps: &PathSet) -> Result<(), PathError> {
        if self.path_of_driver.len() as u64 != ps.q {
            return Err(PathError::InconsistentAssignment {
                detail: format!(
                    "{} drivers assigned but path set has q = {}",
                    self.path_of_driver.len(),
                    ps.q
                ),
            });
        }
        let mut counts = vec![0u64; ps.paths.len()];
        for (driver, &k) in self.path_of_driver.iter().enumerate() {
            let k = k as usize;
            if k >= ps.paths.len() {
                return Err(PathError::InconsistentAssignment {
                    detail: format!("driver {driver} assigned to unknown path {k}"),
                });
            }
            counts[k] += 1;
        }
        for (k, (&count, p)) in counts.iter().zip(&ps.paths).enumerate() {
            if count != p.flow {
                return Err(PathError::InconsistentAssignment {
                    detail: format!(
                        "path {k} carries {count} drivers, path set requires {}",
                        p.flow
                    ),
                });
            }
        }
        Ok(())
    }

    /// Travel time experienced by each driver.
    pub fn times(&self, ps: &PathSet) -> Vec<f64> {
        self.path_of_driver
            .iter()
            .map(|&k| ps.paths[k as usize].time)
            .collect()
    }
}

/// One row of the OD-fairness diagnostic: does the system optimum leave this
/// OD worse off on average than user equilibrium?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdFairnessRow {
    pub origin: u32,
    pub destination: u32,
    pub q: u64,
    pub t_hat_so: f64,
    pub t_ue: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdFairnessReport {
    pub rows: Vec<OdFairnessRow>,
    /// Fraction of ODs with `t_hat_so > t_ue` (strictly worse off).
    pub violating_fraction: f64,
}

/// Flags every OD whose mean system-optimal time exceeds its user-equilibrium
/// time. `ue_times` must cover exactly the ODs of `pathsets`.
pub fn od_fairness_report(
    pathsets: &[PathSet],
    ue_times: &BTreeMap<(u32, u32), f64>,
) -> Result<OdFairnessReport, PathError> {
    if pathsets.len() != ue_times.len() {
        return Err(PathError::MismatchedOdSets {
            detail: format!(
                "{} path sets vs {} UE times",
                pathsets.len(),
                ue_times.len()
            ),
        });
    }
    let mut rows = Vec::with_capacity(pathsets.len());
    let mut violations = 0usize;
    for ps in pathsets {
        let od = (ps.origin, ps.destination);
        let &t_ue = ue_times
            .get(&od)
            .ok_or_else(|| PathError::MismatchedOdSets {
                detail: format!("no UE time for OD {od:?}"),
            })?;
        let violated = ps.t_hat > t_ue;
        if violated {
            violations += 1;
        }
        rows.push(OdFairnessRow {
            origin: ps.origin,
            destination: ps.destination,
            q: ps.q,
            t_hat_so: ps.t_hat,
            t_ue,
            violated,
        });
    }
    let violating_fraction = if rows.is_empty() {
        0.0
    } else {
        violations as f64 / rows.len() as f64
    };
    Ok(OdFairnessReport {
        rows,
        violating_fraction,
    })
}
