//! Independent brute-force references at toy scale.
//!
//! Every NP-hard or heuristically solved problem in the library has an
//! exhaustive counterpart here, implemented separately from the production
//! code so the two can disagree: next-day inequity minimization
//! ([`brute_next_day`] vs the greedy rule), the mean partition
//! ([`exact_mean_partition`] vs the partition construction), the restricted
//! single-permutation cycle optimization ([`exact_restricted_cycle`]) and the
//! general compatible-permutation schedule ([`exact_compatible_schedule`]).
//!
//! Instances are capped hard — exhaustive search past a dozen unit routes is
//! pointless — and all deviation arithmetic is exact: scaled 128-bit integers
//! when every time is an integer, arbitrary-precision rationals otherwise.

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use thiserror::Error;

use crate::cycles::PartitionPlan;
use crate::exact;
use crate::metrics::inequity_of;
use crate::paths::PathSet;

/// Hard caps per operation, chosen so the whole suite stays fast.
pub const BRUTE_NEXT_DAY_LIMIT: u64 = 10;
pub const MEAN_PARTITION_LIMIT: u64 = 20;
pub const RESTRICTED_CYCLE_LIMIT: u64 = 10;
pub const COMPATIBLE_SCHEDULE_LIMIT: u64 = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance has {n} unit routes, this oracle accepts at most {limit}")]
    TooLarge { n: u64, limit: u64 },
    #[error("times and flows differ in length: {times} vs {flows}")]
    MismatchedLengths { times: usize, flows: usize },
    #[error("time {value} is not finite")]
    BadTime { value: f64 },
    #[error("instance has no drivers")]
    EmptyInstance,
    #[error("ledger covers {got} drivers, instance has {expected}")]
    LedgerMismatch { expected: u64, got: usize },
}

/// A path-set snapshot small enough for exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallInstance {
    pub times: Vec<f64>,
    pub flows: Vec<u64>,
    pub t_hat: f64,
}

impl SmallInstance {
    pub fn new(times: Vec<f64>, flows: Vec<u64>) -> Result<Self, OracleError> {
        if times.len() != flows.len() {
            return Err(OracleError::MismatchedLengths {
                times: times.len(),
                flows: flows.len(),
            });
        }
        if let Some(&bad) = times.iter().find(|t| !t.is_finite()) {
            return Err(OracleError::BadTime { value: bad });
        }
        let n: u64 = flows.iter().sum();
        if n == 0 {
            return Err(OracleError::EmptyInstance);
        }
        if n > MEAN_PARTITION_LIMIT {
            return Err(OracleError::TooLarge {
                n,
                limit: MEAN_PARTITION_LIMIT,
            });
        }
        let total: f64 = times.iter().zip(&flows).map(|(t, &f)| t * f as f64).sum();
        Ok(SmallInstance {
            t_hat: total / n as f64,
            times,
            flows,
        })
    }

    /// Snapshot of a solved path set; copies its mean bit-for-bit so oracle
    /// and production arithmetic agree exactly.
    pub fn from_path_set(ps: &PathSet) -> Result<Self, OracleError> {
        let mut inst = SmallInstance::new(
            ps.paths.iter().map(|p| p.time).collect(),
            ps.paths.iter().map(|p| p.flow).collect(),
        )?;
        inst.t_hat = ps.t_hat;
        Ok(inst)
    }

    pub fn unit_count(&self) -> u64 {
        self.flows.iter().sum()
    }

    /// Times expanded to one entry per unit route, path-major.
    pub fn unit_times(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.flows)
            .flat_map(|(&t, &f)| std::iter::repeat_n(t, f as usize))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Exact deviation arithmetic

/// Per-unit deviations, exactly. The integer variant stores `n·t − Σ t`
/// (deviations scaled by the unit count); descale with [`descale`].
enum ScaledDevs {
    Int(Vec<i128>),
    Big(Vec<BigRational>),
}

fn unit_deviations(inst: &SmallInstance) -> ScaledDevs {
    let unit = inst.unit_times();
    let n = unit.len() as i128;
    if let Some(ints) = exact::integer_values(&unit) {
        let total: i128 = ints.iter().map(|&t| t as i128).sum();
        ScaledDevs::Int(ints.iter().map(|&t| n * t as i128 - total).collect())
    } else {
        let t_hat = exact::weighted_mean(&inst.flows, &inst.times);
        ScaledDevs::Big(unit.iter().map(|&t| exact::rational(t) - &t_hat).collect())
    }
}

fn descale_int(value: i128, n: usize) -> f64 {
    value as f64 / n as f64
}

fn descale_big(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Next-day inequity

/// Result of the exhaustive next-day search.
#[derive(Debug, Clone, PartialEq)]
pub struct NextDayOutcome {
    pub min_inequity: f64,
    /// Path index (in instance order) per driver for one optimal assignment.
    pub witness: Vec<u32>,
}

/// Enumerates every distinct assignment of drivers to the path multiset and
/// returns the exact minimum of the next day's inequity. Shares
/// [`inequity_of`] with the production rule so values compare bit-for-bit.
pub fn brute_next_day(
    cumulative: &[f64],
    inst: &SmallInstance,
) -> Result<NextDayOutcome, OracleError> {
    let n = inst.unit_count();
    if n > BRUTE_NEXT_DAY_LIMIT {
        return Err(OracleError::TooLarge {
            n,
            limit: BRUTE_NEXT_DAY_LIMIT,
        });
    }
    if cumulative.len() as u64 != n {
        return Err(OracleError::LedgerMismatch {
            expected: n,
            got: cumulative.len(),
        });
    }

    struct Search<'a> {
        cumulative: &'a [f64],
        times: &'a [f64],
        t_hat: f64,
        remaining: Vec<u64>,
        assignment: Vec<u32>,
        new_cum: Vec<f64>,
        best: f64,
        witness: Vec<u32>,
    }
    impl Search<'_> {
        fn rec(&mut self, driver: usize) {
            if driver == self.cumulative.len() {
                let i = inequity_of(&self.new_cum);
                if i < self.best {
                    self.best = i;
                    self.witness = self.assignment.clone();
                }
                return;
            }
            for k in 0..self.remaining.len() {
                if self.remaining[k] == 0 {
                    continue;
                }
                // Identical-time paths are interchangeable for the objective,
                // but distinct witnesses: keep the enumeration exhaustive
                // over path indices (counts are tiny).
                self.remaining[k] -= 1;
                self.assignment.push(k as u32);
                self.new_cum[driver] = self.cumulative[driver] + (self.times[k] - self.t_hat);
                self.rec(driver + 1);
                self.assignment.pop();
                self.remaining[k] += 1;
            }
        }
    }

    let mut search = Search {
        cumulative,
        times: &inst.times,
        t_hat: inst.t_hat,
        remaining: inst.flows.clone(),
        assignment: Vec::with_capacity(n as usize),
        new_cum: vec![0.0; n as usize],
        best: f64::INFINITY,
        witness: Vec::new(),
    };
    search.rec(0);
    Ok(NextDayOutcome {
        min_inequity: search.best,
        witness: search.witness,
    })
}

// ---------------------------------------------------------------------------
// Mean partition

/// Exhaustive search for a partition of the unit routes into the maximum
/// number of groups whose means all equal `t̂`; `None` when only the trivial
/// single group exists. Works over per-path count vectors (equal units are
/// interchangeable) with canonical-first-block backtracking — deliberately a
/// different algorithm from the production partition construction.
pub fn exact_mean_partition(inst: &SmallInstance) -> Result<Option<PartitionPlan>, OracleError> {
    let n = inst.unit_count();
    if n > MEAN_PARTITION_LIMIT {
        return Err(OracleError::TooLarge {
            n,
            limit: MEAN_PARTITION_LIMIT,
        });
    }

    // Per-path deviations, exact.
    enum PathDevs {
        Int(Vec<i128>),
        Big(Vec<BigRational>),
    }
    let devs = {
        if let Some(ints) = exact::integer_values(&inst.times) {
            let total: i128 = ints
                .iter()
                .zip(&inst.flows)
                .map(|(&t, &f)| t as i128 * f as i128)
                .sum();
            PathDevs::Int(
                ints.iter()
                    .map(|&t| n as i128 * t as i128 - total)
                    .collect(),
            )
        } else {
            let t_hat = exact::weighted_mean(&inst.flows, &inst.times);
            PathDevs::Big(
                inst.times
                    .iter()
                    .map(|&t| exact::rational(t) - &t_hat)
                    .collect(),
            )
        }
    };

    fn search<T: Clone + Ord + Signed>(flows: &[u64], devs: &[T]) -> Vec<Vec<u32>> {
        // All-equal times: every unit is its own group.
        if devs.iter().all(|d| d.is_zero()) {
            let mut blocks = Vec::new();
            for (k, &f) in flows.iter().enumerate() {
                let mut block = vec![0u32; flows.len()];
                block[k] = 1;
                blocks.extend(std::iter::repeat_n(block, f as usize));
            }
            return blocks;
        }

        /// Enumerates zero-sum count vectors `c ≤ remaining` with `c[p] ≥ 1`
        /// for the anchor path `p`, invoking `found` for each.
        fn blocks_with_anchor<T: Clone + Ord + Signed>(
            remaining: &[u64],
            devs: &[T],
            p: usize,
            found: &mut dyn FnMut(&[u32]),
        ) {
            fn rec<T: Clone + Ord + Signed>(
                k: usize,
                remaining: &[u64],
                devs: &[T],
                p: usize,
                cur: &mut Vec<u32>,
                sum: T,
                found: &mut dyn FnMut(&[u32]),
            ) {
                if k == remaining.len() {
                    if sum.is_zero() {
                        found(cur);
                    }
                    return;
                }
                let lo: u64 = if k == p { 1 } else { 0 };
                let mut s = sum;
                for _ in 0..lo {
                    s = s + devs[k].clone();
                }
                let mut c = lo;
                loop {
                    cur[k] = c as u32;
                    rec(k + 1, remaining, devs, p, cur, s.clone(), found);
                    if c == remaining[k] {
                        break;
                    }
                    c += 1;
                    s = s + devs[k].clone();
                }
                cur[k] = 0;
            }
            let mut cur = vec![0u32; remaining.len()];
            rec(0, remaining, devs, p, &mut cur, T::zero(), found);
        }

        struct State<T> {
            remaining: Vec<u64>,
            blocks: Vec<Vec<u32>>,
            best: Vec<Vec<u32>>,
            devs: Vec<T>,
        }
        fn rec<T: Clone + Ord + Signed>(state: &mut State<T>) {
            let anchor = state.remaining.iter().position(|&r| r > 0);
            let Some(p) = anchor else {
                if state.blocks.len() > state.best.len() {
                    state.best = state.blocks.clone();
                }
                return;
            };
            let mut candidates = Vec::new();
            let devs = state.devs.clone();
            blocks_with_anchor(&state.remaining, &devs, p, &mut |c| {
                candidates.push(c.to_vec())
            });
            for block in candidates {
                for (r, &c) in state.remaining.iter_mut().zip(&block) {
                    *r -= c as u64;
                }
                state.blocks.push(block.clone());
                rec(state);
                state.blocks.pop();
                for (r, &c) in state.remaining.iter_mut().zip(&block) {
                    *r += c as u64;
                }
            }
        }

        let mut state = State {
            remaining: flows.to_vec(),
            blocks: Vec::new(),
            best: Vec::new(),
            devs: devs.to_vec(),
        };
        rec(&mut state);
        state.best
    }

    let blocks = match &devs {
        PathDevs::Int(d) => search(&inst.flows, d),
        PathDevs::Big(d) => search(&inst.flows, d),
    };
    if blocks.len() <= 1 {
        return Ok(None);
    }

    // Expand count-vector blocks to unit (slot) indices, path-major layout.
    let mut cursor: Vec<u32> = Vec::with_capacity(inst.flows.len());
    let mut offset = 0u32;
    for &f in &inst.flows {
        cursor.push(offset);
        offset += f as u32;
    }
    let groups = blocks
        .into_iter()
        .map(|block| {
            let mut slots = Vec::new();
            for (k, &c) in block.iter().enumerate() {
                for _ in 0..c {
                    slots.push(cursor[k]);
                    cursor[k] += 1;
                }
            }
            slots
        })
        .collect();
    Ok(Some(PartitionPlan { groups }))
}

// ---------------------------------------------------------------------------
// Restricted cycle optimization

/// Optimal value and witness for a single-permutation cycle problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOptimum {
    /// Minimum over permutations of the maximum cyclic-window |deviation
    /// sum|.
    pub value: f64,
    /// Unit-route indices in an optimal cyclic order.
    pub witness: Vec<u32>,
}

/// Maximum |window sum| over every cyclic window (any start, length 1..n) of
/// the deviations read in `order`.
fn cyclic_window_max<T: Clone + Ord + Signed>(devs: &[T], order: &[u32]) -> T {
    let n = order.len();
    let mut best = T::zero();
    for s in 0..n {
        let mut running = T::zero();
        for l in 0..n {
            running = running + devs[order[(s + l) % n] as usize].clone();
            let a = running.abs();
            if a > best {
                best = a;
            }
        }
    }
    best
}

fn restricted_search<T: Clone + Ord + Signed>(devs: &[T]) -> (T, Vec<u32>) {
    let n = devs.len();
    if n == 1 {
        return (T::zero(), vec![0]);
    }
    // One rotation per cyclic class puts unit 0 first; enumerate distinct
    // arrangements of the rest (equal values collapsed) and keep the best.
    let mut rest: Vec<u32> = (1..n as u32).collect();
    rest.sort_by(|&a, &b| devs[a as usize].cmp(&devs[b as usize]).then(a.cmp(&b)));

    struct Search<'a, T> {
        devs: &'a [T],
        rest: Vec<u32>,
        used: Vec<bool>,
        order: Vec<u32>,
        best: Option<(T, Vec<u32>)>,
    }
    impl<T: Clone + Ord + Signed> Search<'_, T> {
        fn rec(&mut self) {
            if self.order.len() == self.devs.len() {
                let value = cyclic_window_max(self.devs, &self.order);
                if self.best.as_ref().is_none_or(|(b, _)| value < *b) {
                    self.best = Some((value, self.order.clone()));
                }
                return;
            }
            for i in 0..self.rest.len() {
                if self.used[i] {
                    continue;
                }
                // Skip duplicates: equal-value slots produce identical
                // deviation sequences.
                if i > 0
                    && !self.used[i - 1]
                    && self.devs[self.rest[i] as usize] == self.devs[self.rest[i - 1] as usize]
                {
                    continue;
                }
                self.used[i] = true;
                self.order.push(self.rest[i]);
                self.rec();
                self.order.pop();
                self.used[i] = false;
            }
        }
    }
    let len = rest.len();
    let mut search = Search {
        devs,
        rest,
        used: vec![false; len],
        order: vec![0u32],
        best: None,
    };
    search.rec();
    search.best.expect("at least one arrangement exists")
}

/// Solves the restricted cycle inequity problem exactly: over all cyclic
/// orders of the unit routes, minimize the maximum |deviation sum| across all
/// cyclic windows.
pub fn exact_restricted_cycle(inst: &SmallInstance) -> Result<CycleOptimum, OracleError> {
    let n = inst.unit_count();
    if n > RESTRICTED_CYCLE_LIMIT {
        return Err(OracleError::TooLarge {
            n,
            limit: RESTRICTED_CYCLE_LIMIT,
        });
    }
    Ok(match unit_deviations(inst) {
        ScaledDevs::Int(devs) => {
            let (value, witness) = restricted_search(&devs);
            CycleOptimum {
                value: descale_int(value, n as usize),
                witness,
            }
        }
        ScaledDevs::Big(devs) => {
            let (value, witness) = restricted_search(&devs);
            CycleOptimum {
                value: descale_big(&value),
                witness,
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Compatible schedules

/// Optimal value and witness for the general compatible-schedule problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOptimum {
    /// Minimum over compatible schedules of the maximum |prefix deviation
    /// sum| across drivers.
    pub value: f64,
    /// `n × n` matrix: row = day, column = driver, entry = unit route.
    pub witness: Vec<Vec<u32>>,
}

fn compatible_search<T: Clone + Ord + Signed>(
    devs: &[T],
    init_value: T,
    init_witness: Vec<Vec<u32>>,
) -> (T, Vec<Vec<u32>>) {
    let n = devs.len();
    struct Search<'a, T> {
        devs: &'a [T],
        n: usize,
        square: Vec<Vec<u32>>,
        col_used: Vec<u32>,
        col_prefix: Vec<T>,
        best: T,
        witness: Vec<Vec<u32>>,
    }
    impl<T: Clone + Ord + Signed> Search<'_, T> {
        fn rec(&mut self, row: usize, col: usize, row_mask: u32, current_max: T) {
            if row == self.n {
                // Strictly better by construction of the pruning.
                self.best = current_max;
                self.witness = self.square.clone();
                return;
            }
            if col == self.n {
                self.rec(row + 1, 0, 0, current_max);
                return;
            }
            for s in 0..self.n as u32 {
                let bit = 1u32 << s;
                if row_mask & bit != 0 || self.col_used[col] & bit != 0 {
                    continue;
                }
                let prefix = self.col_prefix[col].clone() + self.devs[s as usize].clone();
                let magnitude = prefix.abs();
                if magnitude >= self.best {
                    continue;
                }
                let next_max = if magnitude > current_max {
                    magnitude
                } else {
                    current_max.clone()
                };
                let saved = std::mem::replace(&mut self.col_prefix[col], prefix);
                self.col_used[col] |= bit;
                self.square[row][col] = s;
                self.rec(row, col + 1, row_mask | bit, next_max);
                self.square[row][col] = u32::MAX;
                self.col_used[col] &= !bit;
                self.col_prefix[col] = saved;
            }
        }
    }

    // Day one is driver = unit route (columns are interchangeable, so this
    // loses no generality); the search fills days 2..n.
    let mut search = Search {
        devs,
        n,
        square: vec![vec![u32::MAX; n]; n],
        col_used: vec![0u32; n],
        col_prefix: vec![T::zero(); n],
        best: init_value,
        witness: init_witness,
    };
    let mut day_one_max = T::zero();
    for (i, dev) in devs.iter().enumerate() {
        search.square[0][i] = i as u32;
        search.col_used[i] = 1u32 << i;
        search.col_prefix[i] = dev.clone();
        let a = dev.abs();
        if a > day_one_max {
            day_one_max = a;
        }
    }
    if day_one_max < search.best {
        search.rec(1, 0, 0, day_one_max);
    }
    (search.best, search.witness)
}

/// Solves the general cycle inequity problem exactly: over all schedules
/// where each day and each driver history is a permutation of the unit
/// routes, minimize the maximum |prefix deviation sum| across drivers.
/// Initialized (and upper-bounded) by the restricted optimum — a cyclic
/// rotation is one such schedule.
pub fn exact_compatible_schedule(inst: &SmallInstance) -> Result<ScheduleOptimum, OracleError> {
    let n = inst.unit_count();
    if n > COMPATIBLE_SCHEDULE_LIMIT {
        return Err(OracleError::TooLarge {
            n,
            limit: COMPATIBLE_SCHEDULE_LIMIT,
        });
    }
    let rotation_square = |order: &[u32]| -> Vec<Vec<u32>> {
        let n = order.len();
        (0..n)
            .map(|j| (0..n).map(|i| order[(i + j) % n]).collect())
            .collect()
    };
    Ok(match unit_deviations(inst) {
        ScaledDevs::Int(devs) => {
            let (r_value, r_witness) = restricted_search(&devs);
            let (value, witness) = compatible_search(&devs, r_value, rotation_square(&r_witness));
            ScheduleOptimum {
                value: descale_int(value, n as usize),
                witness,
            }
        }
        ScaledDevs::Big(devs) => {
            let (r_value, r_witness) = restricted_search(&devs);
            let (value, witness) = compatible_search(&devs, r_value, rotation_square(&r_witness));
            ScheduleOptimum {
                value: descale_big(&value),
                witness,
            }
        }
    })
}
