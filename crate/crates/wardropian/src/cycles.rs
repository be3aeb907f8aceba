//! Construction and validation of Wardropian cycles.
//!
//! A *Wardropian cycle* is a finite sequence of valid daily assignments whose
//! per-driver deviations sum to exactly zero: over the cycle everyone's mean
//! travel time equals the OD mean `t̂`. The constructions here trade cycle
//! length against within-cycle fairness:
//!
//! * [`full_cycle`] — rotate drivers through the canonical slot layout one
//!   slot per day; length `Q`.
//! * [`gcd_cycle`] — rotate by `M = gcd(Q_1..Q_K)` slots per day; length
//!   `Q/M`.
//! * [`partition_cycles`] — split the slot multiset into groups whose mean is
//!   exactly `t̂` (an NP-hard partition, solved exactly at small `Q` or by a
//!   bounded-depth greedy heuristic) and run an independent gcd cycle per
//!   group.
//! * [`balanced_ordering`] — order the slots so every driver's running mean
//!   stays within `(t_max − t_min)/l` of `t̂` after every prefix of length
//!   `l`.
//!
//! Cycles compose across iterations by driver permutation
//! ([`permuted_composition`]); [`intercycle_heuristic`] picks the permutation
//! that hands historically discontented drivers the gentlest start positions.
//!
//! All Wardropian checks run in exact rational arithmetic (deviations of a
//! finite `f64` time are dyadic rationals), so "residual zero" means zero,
//! not small.

use std::collections::HashMap;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact;
use crate::metrics::{deviations, DeviationLedger, MetricsError};
use crate::paths::{DailyAssignment, PathError, PathSet};

#[derive(Debug, Error)]
pub enum CycleError {
    #[error("seed assignment invalid: {detail}")]
    InvalidSeed { detail: String },
    #[error("instance has Q = {q}, exact partition limited to Q ≤ {limit}")]
    LimitExceeded { q: u64, limit: u64 },
    #[error("driver mapping is not a permutation: {detail}")]
    NotAPermutation { detail: String },
    #[error("ledger does not match the schedule: {detail}")]
    LedgerLengthMismatch { detail: String },
}

/// How a schedule was produced. Constructions other than `GreedyRule` and
/// `Custom` guarantee the Wardropian property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    FullShift,
    GcdShift,
    Partition,
    BalancedOrdering,
    GreedyRule,
    Custom,
}

/// One independently advancing sub-cycle of a partitioned schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCycle {
    /// Driver indices covered by this group.
    pub drivers: Vec<u32>,
    /// Local cycle length: group size / gcd of group path counts.
    pub length: usize,
}

/// An ordered run of daily assignments over one path set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSchedule {
    pub days: Vec<DailyAssignment>,
    pub provenance: Provenance,
    /// Present for `Partition` provenance: the per-group lengths.
    pub sub_cycles: Vec<SubCycle>,
}

impl CycleSchedule {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn driver_count(&self) -> usize {
        self.days.first().map_or(0, |d| d.driver_count())
    }

    /// Per-driver path usage counts over the whole schedule; every day is
    /// validated against the path set.
    pub fn usage_counts(&self, ps: &PathSet) -> Result<Vec<Vec<u64>>, PathError> {
        let q = self.driver_count();
        let mut counts = vec![vec![0u64; ps.paths.len()]; q];
        for day in &self.days {
            day.validate_for(ps)?;
            for (i, &k) in day.path_of_driver.iter().enumerate() {
                counts[i][k as usize] += 1;
            }
        }
        Ok(counts)
    }

    /// Each driver's mean travel time over the schedule.
    pub fn driver_mean_times(&self, ps: &PathSet) -> Result<Vec<f64>, PathError> {
        let zeta = self.len() as f64;
        let counts = self.usage_counts(ps)?;
        Ok(counts
            .iter()
            .map(|c| {
                let total: f64 = c
                    .iter()
                    .zip(&ps.paths)
                    .map(|(&n, p)| n as f64 * p.time)
                    .sum();
                total / zeta
            })
            .collect())
    }

    /// Runs the schedule once through a deviation ledger.
    pub fn run_ledger(&self, ps: &PathSet) -> Result<DeviationLedger, MetricsError> {
        let mut ledger = DeviationLedger::new(self.driver_count());
        for day in &self.days {
            ledger.accumulate(deviations(day, ps)?)?;
        }
        Ok(ledger)
    }
}

// ---------------------------------------------------------------------------
// Rotation cycles

/// Default seed: driver `i` starts in slot `i` of the canonical layout.
pub fn default_seed(ps: &PathSet) -> DailyAssignment {
    DailyAssignment::new(0, ps.slot_paths())
}

/// Recovers each driver's starting slot from a seed day: drivers assigned to
/// path `k` fill path `k`'s slot block in ascending driver order.
fn slots_from_seed(ps: &PathSet, seed: &DailyAssignment) -> Vec<usize> {
    let mut block_start: Vec<usize> = Vec::with_capacity(ps.paths.len());
    let mut offset = 0usize;
    for p in &ps.paths {
        block_start.push(offset);
        offset += p.flow as usize;
    }
    let mut cursor = block_start;
    let mut slot_of_driver = vec![0usize; seed.driver_count()];
    for (driver, &k) in seed.path_of_driver.iter().enumerate() {
        slot_of_driver[driver] = cursor[k as usize];
        cursor[k as usize] += 1;
    }
    slot_of_driver
}

fn rotation_cycle(
    ps: &PathSet,
    seed: &DailyAssignment,
    step: usize,
    length: usize,
    provenance: Provenance,
) -> Result<CycleSchedule, CycleError> {
    seed.validate_for(ps).map_err(|e| CycleError::InvalidSeed {
        detail: e.to_string(),
    })?;
    let q = ps.q as usize;
    let slot_paths = ps.slot_paths();
    let slot0 = slots_from_seed(ps, seed);
    let days = (0..length)
        .map(|j| {
            let path_of_driver = slot0
                .iter()
                .map(|&s| slot_paths[(s + j * step) % q])
                .collect();
            DailyAssignment::new(j, path_of_driver)
        })
        .collect();
    Ok(CycleSchedule {
        days,
        provenance,
        sub_cycles: Vec::new(),
    })
}

/// Length-`Q` cycle: every driver advances one slot per day, visiting every
/// slot exactly once, hence using path `k` exactly `Q_k` times.
pub fn full_cycle(ps: &PathSet, seed: &DailyAssignment) -> Result<CycleSchedule, CycleError> {
    rotation_cycle(ps, seed, 1, ps.q as usize, Provenance::FullShift)
}

/// Greatest common divisor of the path counts.
pub fn flow_gcd(ps: &PathSet) -> u64 {
    ps.paths.iter().fold(0u64, |g, p| g.gcd(&p.flow))
}

/// Length of the GCD-reduced cycle, `Q / gcd(Q_1..Q_K)`.
pub fn gcd_cycle_length(ps: &PathSet) -> usize {
    (ps.q / flow_gcd(ps)) as usize
}

/// Length-`Q/M` cycle advancing `M = gcd(Q_1..Q_K)` slots per day; each
/// driver uses path `k` exactly `Q_k/M` times.
pub fn gcd_cycle(ps: &PathSet, seed: &DailyAssignment) -> Result<CycleSchedule, CycleError> {
    let m = flow_gcd(ps) as usize;
    rotation_cycle(ps, seed, m, ps.q as usize / m, Provenance::GcdShift)
}

// ---------------------------------------------------------------------------
// Mean partition

/// Search mode for the mean-`t̂` partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Exhaustive count-vector dynamic program; maximizes the number of
    /// groups, then minimizes the largest group. Refuses `Q > limit`.
    ExactSmall { limit: u64 },
    /// Repeatedly extract the smallest subset of at most `depth` slots whose
    /// mean is exactly `t̂`; whatever remains forms one residual group.
    Heuristic { depth: usize },
}

impl PartitionMode {
    pub fn exact_small() -> Self {
        PartitionMode::ExactSmall { limit: 20 }
    }

    pub fn heuristic() -> Self {
        PartitionMode::Heuristic { depth: 4 }
    }
}

/// A partition of the `Q` slot indices into groups of mean exactly `t̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    /// Slot indices per group, each sorted ascending; groups jointly cover
    /// `0..Q` exactly once.
    pub groups: Vec<Vec<u32>>,
}

impl PartitionPlan {
    /// Exact mean travel time of one group.
    pub fn group_mean_exact(&self, group: usize, ps: &PathSet) -> BigRational {
        let slot_paths = ps.slot_paths();
        let times: Vec<f64> = ps.paths.iter().map(|p| p.time).collect();
        let mut counts = vec![0u64; ps.paths.len()];
        for &slot in &self.groups[group] {
            counts[slot_paths[slot as usize] as usize] += 1;
        }
        exact::weighted_mean(&counts, &times)
    }
}

/// Exact per-path deviations `t_k − t̂` as rationals.
fn path_deviations_exact(ps: &PathSet) -> Vec<BigRational> {
    let t_hat = ps.t_hat_exact();
    ps.paths
        .iter()
        .map(|p| exact::rational(p.time) - &t_hat)
        .collect()
}

fn combo_is_zero_sum(combo: &[u32], w: &[BigRational]) -> bool {
    let mut sum = BigRational::zero();
    for (c, wk) in combo.iter().zip(w) {
        if *c > 0 {
            sum += BigRational::from_integer((*c).into()) * wk;
        }
    }
    sum.is_zero()
}

/// All count-vectors `c ≤ caps` with `1 ≤ Σc ≤ max_size` and zero deviation
/// sum, ordered by (size, lexicographic).
fn zero_sum_combos(caps: &[u64], w: &[BigRational], max_size: usize) -> Vec<Vec<u32>> {
    let mut combos = Vec::new();
    let mut cur = vec![0u32; caps.len()];
    fn rec(
        k: usize,
        left: usize,
        caps: &[u64],
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
        w: &[BigRational],
    ) {
        if k == caps.len() {
            if cur.iter().any(|&c| c > 0) && combo_is_zero_sum(cur, w) {
                out.push(cur.clone());
            }
            return;
        }
        let cap = (caps[k] as usize).min(left);
        for c in 0..=cap {
            cur[k] = c as u32;
            rec(k + 1, left - c, caps, cur, out, w);
        }
        cur[k] = 0;
    }
    rec(0, max_size, caps, &mut cur, &mut combos, w);
    combos.sort_by_key(|c| (c.iter().sum::<u32>(), c.clone()));
    combos
}

/// Exhaustive partition of the full count vector into zero-sum shapes,
/// maximizing group count and then minimizing the largest group.
fn exact_partition_counts(flows: &[u64], w: &[BigRational]) -> Vec<Vec<u32>> {
    // All-equal times: every slot is its own group; skip the search, whose
    // state space would be the full lattice.
    if w.iter().all(|wk| wk.is_zero()) {
        return flows
            .iter()
            .enumerate()
            .flat_map(|(k, &f)| {
                let mut c = vec![0u32; flows.len()];
                c[k] = 1;
                std::iter::repeat_n(c, f as usize)
            })
            .collect();
    }
    let q: u64 = flows.iter().sum();
    let shapes = zero_sum_combos(flows, w, q as usize);

    type Score = (usize, usize); // (groups, max group size); more, then smaller
    fn better(a: Score, b: Score) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    }
    fn solve(
        v: &[u32],
        shapes: &[Vec<u32>],
        memo: &mut HashMap<Vec<u32>, Option<Score>>,
    ) -> Option<Score> {
        if v.iter().all(|&c| c == 0) {
            return Some((0, 0));
        }
        if let Some(&s) = memo.get(v) {
            return s;
        }
        let mut best: Option<Score> = None;
        for s in shapes {
            if s.iter().zip(v).all(|(a, b)| a <= b) {
                let rest: Vec<u32> = v.iter().zip(s).map(|(a, b)| a - b).collect();
                if let Some((g, ms)) = solve(&rest, shapes, memo) {
                    let size = s.iter().sum::<u32>() as usize;
                    let cand = (g + 1, ms.max(size));
                    if best.is_none() || better(cand, best.unwrap()) {
                        best = Some(cand);
                    }
                }
            }
        }
        memo.insert(v.to_vec(), best);
        best
    }

    let total: Vec<u32> = flows.iter().map(|&f| f as u32).collect();
    let mut memo = HashMap::new();
    let best = solve(&total, &shapes, &mut memo).expect("full vector is itself zero-sum");

    // Reconstruct by retracing the same comparisons.
    let mut groups = Vec::new();
    let mut v = total;
    let mut want = best;
    while v.iter().any(|&c| c > 0) {
        let mut chosen = None;
        for s in &shapes {
            if s.iter().zip(&v).all(|(a, b)| a <= b) {
                let rest: Vec<u32> = v.iter().zip(s).map(|(a, b)| a - b).collect();
                if let Some((g, ms)) = solve(&rest, &shapes, &mut memo) {
                    let size = s.iter().sum::<u32>() as usize;
                    if (g + 1, ms.max(size)) == want {
                        chosen = Some((s.clone(), (g, ms)));
                        break;
                    }
                }
            }
        }
        let (s, rest_score) = chosen.expect("optimum is reconstructible");
        v = v.iter().zip(&s).map(|(a, b)| a - b).collect();
        groups.push(s);
        want = rest_score;
    }
    groups
}

/// Greedy extraction of smallest zero-sum subsets of size ≤ `depth`; the
/// remainder, if any, becomes one residual group.
fn heuristic_partition_counts(flows: &[u64], w: &[BigRational], depth: usize) -> Vec<Vec<u32>> {
    let caps: Vec<u64> = flows.iter().map(|&f| f.min(depth as u64)).collect();
    let combos = zero_sum_combos(&caps, w, depth);
    let mut remaining: Vec<u64> = flows.to_vec();
    let mut groups = Vec::new();
    'outer: loop {
        for combo in &combos {
            if combo.iter().zip(&remaining).all(|(&c, &r)| c as u64 <= r) {
                for (r, &c) in remaining.iter_mut().zip(combo) {
                    *r -= c as u64;
                }
                groups.push(combo.clone());
                continue 'outer;
            }
        }
        break;
    }
    if remaining.iter().any(|&r| r > 0) {
        groups.push(remaining.iter().map(|&r| r as u32).collect());
    }
    groups
}

/// Turns count-vector groups into slot-index groups using the canonical
/// block layout, allocating slots in a fixed group order.
fn groups_to_slots(ps: &PathSet, mut count_groups: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    count_groups.sort_by_key(|g| (g.iter().sum::<u32>(), g.clone()));
    let mut cursor: Vec<u32> = Vec::with_capacity(ps.paths.len());
    let mut offset = 0u32;
    for p in &ps.paths {
        cursor.push(offset);
        offset += p.flow as u32;
    }
    count_groups
        .into_iter()
        .map(|counts| {
            let mut slots = Vec::new();
            for (k, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    slots.push(cursor[k]);
                    cursor[k] += 1;
                }
            }
            slots
        })
        .collect()
}

fn group_counts(ps: &PathSet, slots: &[u32]) -> Vec<u64> {
    let slot_paths = ps.slot_paths();
    let mut counts = vec![0u64; ps.paths.len()];
    for &s in slots {
        counts[slot_paths[s as usize] as usize] += 1;
    }
    counts
}

/// Computes the partition and the per-group cycle lengths without
/// materializing any schedule — cheap at any scale.
pub fn partition_plan(
    ps: &PathSet,
    mode: PartitionMode,
) -> Result<(PartitionPlan, Vec<SubCycle>), CycleError> {
    let flows: Vec<u64> = ps.paths.iter().map(|p| p.flow).collect();
    let w = path_deviations_exact(ps);
    let count_groups = match mode {
        PartitionMode::ExactSmall { limit } => {
            if ps.q > limit {
                return Err(CycleError::LimitExceeded { q: ps.q, limit });
            }
            exact_partition_counts(&flows, &w)
        }
        PartitionMode::Heuristic { depth } => heuristic_partition_counts(&flows, &w, depth),
    };
    let groups = groups_to_slots(ps, count_groups);
    let plan = PartitionPlan { groups };
    let sub_cycles = plan
        .groups
        .iter()
        .map(|slots| {
            let counts = group_counts(ps, slots);
            let m = counts.iter().fold(0u64, |g, &c| g.gcd(&c));
            SubCycle {
                drivers: slots.clone(),
                length: slots.len() / m as usize,
            }
        })
        .collect();
    Ok((plan, sub_cycles))
}

/// Partitions the slots into mean-`t̂` groups and materializes the combined
/// schedule: each group runs its own gcd cycle, advancing independently, over
/// the least common multiple of the group lengths.
///
/// Driver `i` is slot `i` of the canonical layout. For length statistics at
/// scale use [`partition_plan`], which skips materialization.
pub fn partition_cycles(
    ps: &PathSet,
    mode: PartitionMode,
) -> Result<(PartitionPlan, CycleSchedule), CycleError> {
    let (plan, sub_cycles) = partition_plan(ps, mode)?;
    let slot_paths = ps.slot_paths();
    let zeta = sub_cycles
        .iter()
        .fold(1usize, |acc, sc| acc.lcm(&sc.length.max(1)));

    // Per group: sorted local slots, local step M, local size.
    struct GroupRot {
        slots: Vec<u32>,
        step: usize,
    }
    let rots: Vec<GroupRot> = plan
        .groups
        .iter()
        .map(|slots| {
            let counts = group_counts(ps, slots);
            let m = counts.iter().fold(0u64, |g, &c| g.gcd(&c)) as usize;
            GroupRot {
                slots: slots.clone(),
                step: m,
            }
        })
        .collect();

    let q = ps.q as usize;
    let mut days = Vec::with_capacity(zeta);
    for j in 0..zeta {
        let mut path_of_driver = vec![0u32; q];
        for rot in &rots {
            let n = rot.slots.len();
            for (p, &driver_slot) in rot.slots.iter().enumerate() {
                let local = (p + j * rot.step) % n;
                path_of_driver[driver_slot as usize] = slot_paths[rot.slots[local] as usize];
            }
        }
        days.push(DailyAssignment::new(j, path_of_driver));
    }
    Ok((
        plan,
        CycleSchedule {
            days,
            provenance: Provenance::Partition,
            sub_cycles,
        },
    ))
}

// ---------------------------------------------------------------------------
// Balanced ordering

/// Builds the deviation-balanced cyclic ordering and the length-`Q` schedule
/// where driver `i` starts at offset `i`.
///
/// Slots are split into nonnegative (`𝒯⁺`, drawn in descending deviation
/// order) and negative (`𝒯⁻`, ascending) deviations; the next slot comes from
/// `𝒯⁺` whenever the running sum is ≤ 0, from `𝒯⁻` otherwise. This keeps
/// every cyclic prefix sum within `t_max − t_min`, which is exactly the
/// per-driver running-mean bound `|mean_{i,l} − t̂| ≤ (t_max − t_min)/l`.
pub fn balanced_ordering(ps: &PathSet) -> CycleSchedule {
    let w = path_deviations_exact(ps);
    let slot_paths = ps.slot_paths();
    let q = ps.q as usize;

    let mut plus: Vec<u32> = Vec::new();
    let mut minus: Vec<u32> = Vec::new();
    for (slot, &k) in slot_paths.iter().enumerate() {
        if w[k as usize] >= BigRational::zero() {
            plus.push(slot as u32);
        } else {
            minus.push(slot as u32);
        }
    }
    // 𝒯⁺ descending, 𝒯⁻ ascending; slot id breaks exact ties.
    plus.sort_by(|&a, &b| {
        w[slot_paths[b as usize] as usize]
            .cmp(&w[slot_paths[a as usize] as usize])
            .then(a.cmp(&b))
    });
    minus.sort_by(|&a, &b| {
        w[slot_paths[a as usize] as usize]
            .cmp(&w[slot_paths[b as usize] as usize])
            .then(a.cmp(&b))
    });

    let mut order: Vec<u32> = Vec::with_capacity(q);
    let (mut ip, mut im) = (0usize, 0usize);
    let mut running = BigRational::zero();
    for _ in 0..q {
        let from_plus = if running <= BigRational::zero() {
            ip < plus.len()
        } else {
            // Want 𝒯⁻ but fall back once it is exhausted.
            im >= minus.len()
        };
        let slot = if from_plus {
            ip += 1;
            plus[ip - 1]
        } else {
            im += 1;
            minus[im - 1]
        };
        running += &w[slot_paths[slot as usize] as usize];
        order.push(slot);
    }

    let days = (0..q)
        .map(|j| {
            let path_of_driver = (0..q)
                .map(|i| slot_paths[order[(i + j) % q] as usize])
                .collect();
            DailyAssignment::new(j, path_of_driver)
        })
        .collect();
    CycleSchedule {
        days,
        provenance: Provenance::BalancedOrdering,
        sub_cycles: Vec::new(),
    }
}

/// Checks the prefix-mean bound `|mean_{i,l} − t̂| ≤ (t_max − t_min)/l` for
/// every driver and prefix, exactly. Uses scaled 128-bit integers when all
/// path times are integers, exact rationals otherwise.
pub fn prefix_bound_holds(schedule: &CycleSchedule, ps: &PathSet) -> Result<bool, PathError> {
    for day in &schedule.days {
        day.validate_for(ps)?;
    }
    let q = schedule.driver_count();
    let (t_min, t_max) = ps.time_range();
    let times: Vec<f64> = ps.paths.iter().map(|p| p.time).collect();

    if let Some(int_times) = exact::integer_values(&times) {
        // Scale deviations by Q: dev_k·Q = Q·t_k − T with T = Σ Q_m t_m.
        let total: i128 = ps
            .paths
            .iter()
            .zip(&int_times)
            .map(|(p, &t)| p.flow as i128 * t as i128)
            .sum();
        let scaled: Vec<i128> = int_times
            .iter()
            .map(|&t| ps.q as i128 * t as i128 - total)
            .collect();
        let bound = (t_max - t_min) as i128 * ps.q as i128;
        for i in 0..q {
            let mut running = 0i128;
            for day in &schedule.days {
                running += scaled[day.path_of_driver[i] as usize];
                if running.abs() > bound {
                    return Ok(false);
                }
            }
        }
        return Ok(true);
    }

    let w = path_deviations_exact(ps);
    let bound = exact::rational(t_max) - exact::rational(t_min);
    for i in 0..q {
        let mut running = BigRational::zero();
        for day in &schedule.days {
            running += &w[day.path_of_driver[i] as usize];
            if running.abs() > bound {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Validation

/// Result of checking a schedule for the Wardropian property.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleValidation {
    /// The schedule has no days; never Wardropian.
    pub empty: bool,
    /// Structural failures (a driver on a missing path, wrong per-path
    /// counts), one message per bad day.
    pub day_errors: Vec<String>,
    /// Per-driver `Σ_j D_j` as floats (exact residuals rounded once).
    pub per_driver_residual: Vec<f64>,
    pub max_abs_residual: f64,
    /// All per-driver residuals are exactly zero in rational arithmetic.
    pub residual_exact_zero: bool,
    /// Wardropian verdict: exact zero for integer times, else within
    /// `1e-9·ζ·t̂`.
    pub is_wardropian: bool,
}

/// Validates every day against the path set and measures the cycle residual
/// in exact arithmetic. Failures are reported, never raised.
pub fn validate_cycle(schedule: &CycleSchedule, ps: &PathSet) -> CycleValidation {
    if schedule.is_empty() {
        return CycleValidation {
            empty: true,
            day_errors: Vec::new(),
            per_driver_residual: Vec::new(),
            max_abs_residual: 0.0,
            residual_exact_zero: false,
            is_wardropian: false,
        };
    }
    let mut day_errors = Vec::new();
    for day in &schedule.days {
        if let Err(e) = day.validate_for(ps) {
            day_errors.push(format!("day {}: {e}", day.day));
        }
    }
    if !day_errors.is_empty() {
        return CycleValidation {
            empty: false,
            day_errors,
            per_driver_residual: Vec::new(),
            max_abs_residual: f64::INFINITY,
            residual_exact_zero: false,
            is_wardropian: false,
        };
    }

    let times: Vec<f64> = ps.paths.iter().map(|p| p.time).collect();
    let zeta = schedule.len();
    let t_hat = ps.t_hat_exact();
    let target = &t_hat * BigRational::from_integer(zeta.into());
    let counts = schedule
        .usage_counts(ps)
        .expect("days validated individually");
    let mut per_driver_residual = Vec::with_capacity(counts.len());
    let mut exact_zero = true;
    let mut max_abs = 0.0f64;
    for c in &counts {
        let residual = exact::weighted_time_sum(c, &times) - &target;
        if !residual.is_zero() {
            exact_zero = false;
        }
        let r = residual.to_f64().unwrap_or(f64::NAN);
        max_abs = max_abs.max(r.abs());
        per_driver_residual.push(r);
    }
    let is_wardropian = if exact::integer_values(&times).is_some() {
        exact_zero
    } else {
        exact_zero || max_abs <= 1e-9 * zeta as f64 * ps.t_hat
    };
    CycleValidation {
        empty: false,
        day_errors,
        per_driver_residual,
        max_abs_residual: max_abs,
        residual_exact_zero: exact_zero,
        is_wardropian,
    }
}

// ---------------------------------------------------------------------------
// Composition across iterations

fn check_permutation(sigma: &[u32], q: usize) -> Result<(), CycleError> {
    if sigma.len() != q {
        return Err(CycleError::NotAPermutation {
            detail: format!("length {} for {q} drivers", sigma.len()),
        });
    }
    let mut seen = vec![false; q];
    for &s in sigma {
        let s = s as usize;
        if s >= q || seen[s] {
            return Err(CycleError::NotAPermutation {
                detail: format!("index {s} out of range or repeated"),
            });
        }
        seen[s] = true;
    }
    Ok(())
}

/// Concatenates one iteration of the base cycle per permutation: in iteration
/// `m`, driver `i` plays base driver `σ_m(i)`'s part. Each iteration stays
/// Wardropian whenever the base is.
pub fn permuted_composition(
    base: &CycleSchedule,
    sigmas: &[Vec<u32>],
) -> Result<CycleSchedule, CycleError> {
    let q = base.driver_count();
    for sigma in sigmas {
        check_permutation(sigma, q)?;
    }
    let mut days = Vec::with_capacity(base.len() * sigmas.len());
    for sigma in sigmas {
        for day in &base.days {
            let path_of_driver = sigma
                .iter()
                .map(|&s| day.path_of_driver[s as usize])
                .collect();
            days.push(DailyAssignment::new(days.len(), path_of_driver));
        }
    }
    Ok(CycleSchedule {
        days,
        provenance: Provenance::Custom,
        sub_cycles: Vec::new(),
    })
}

/// Picks the next iteration's driver permutation: drivers are ranked by their
/// best historical standing (max over days of the negated discontent
/// progression, descending), base-cycle start positions by the same measure
/// of the trajectory a driver starting there experiences (ascending), and the
/// two rankings are matched in order. The most discontented driver therefore
/// receives the start position with the mildest discontent profile.
///
/// Returns `sigma` with `sigma[i]` the base position driver `i` plays next
/// iteration (plug directly into [`permuted_composition`]).
pub fn intercycle_heuristic(
    base: &CycleSchedule,
    ps: &PathSet,
    ledger: &DeviationLedger,
) -> Result<Vec<u32>, CycleError> {
    let q = base.driver_count();
    if ledger.driver_count() != q {
        return Err(CycleError::LedgerLengthMismatch {
            detail: format!(
                "ledger covers {} drivers, schedule has {q}",
                ledger.driver_count()
            ),
        });
    }
    if ledger.day_count == 0 {
        return Err(CycleError::LedgerLengthMismatch {
            detail: "ledger holds no completed days".into(),
        });
    }

    let max_neg_progression = |matrix: &[Vec<f64>]| -> Vec<f64> {
        matrix
            .iter()
            .map(|row| row.iter().map(|&h| -h).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    };

    let driver_keys = max_neg_progression(&ledger.discontent_matrix());
    let base_ledger = base.run_ledger(ps).map_err(|e| CycleError::InvalidSeed {
        detail: e.to_string(),
    })?;
    let position_profiles = max_neg_progression(&base_ledger.discontent_matrix());

    let mut drivers: Vec<usize> = (0..q).collect();
    drivers.sort_by(|&a, &b| driver_keys[b].total_cmp(&driver_keys[a]).then(a.cmp(&b)));
    let mut positions: Vec<usize> = (0..q).collect();
    positions.sort_by(|&a, &b| {
        position_profiles[a]
            .total_cmp(&position_profiles[b])
            .then(a.cmp(&b))
    });

    let mut sigma = vec![0u32; q];
    for (driver, position) in drivers.into_iter().zip(positions) {
        sigma[driver] = position as u32;
    }
    Ok(sigma)
}
