//! Frank–Wolfe traffic assignment with path-flow bookkeeping.
//!
//! Solves user-equilibrium (UE) and system-optimum (SO) assignments on a BPR
//! network. Both are convex programs handled by the same machinery: UE
//! minimizes the Beckmann sum `Σ_a ∫₀^{q_a} t_a`, and SO minimizes total
//! travel time, which is the Beckmann sum of the *marginal* cost
//! `d(q·t(q))/dq` — so the SO run is a UE run on marginal times.
//!
//! Each iteration solves one shortest-path (all-or-nothing) subproblem per
//! origin, measures the relative gap `1 − SPTT/TSTT`, takes a bisection line
//! search step, and folds the step into a per-OD path ledger. The ledger
//! tracks every path the subproblems ever produced, scaled multiplicatively
//! by `(1 − α)` per step, so the final link flows decompose exactly into path
//! flows — the raw material for integer discretization.
//!
//! Determinism: shortest-path ties break toward the smallest predecessor link
//! index, heap pops order by (distance, node id), and all aggregation runs in
//! fixed key order, so identical inputs give bit-identical outputs.

use std::collections::{BTreeMap, BinaryHeap};

use indexmap::IndexMap;
use thiserror::Error;

use crate::net::{Link, LinkState, Network};
use crate::paths::{discretize, PathError, PathSet, RawPathFlow};
use crate::tntp::DemandTable;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no path exists for {} OD pair(s), first {:?}", pairs.len(), pairs.first())]
    DisconnectedOd { pairs: Vec<(u32, u32)> },
    #[error("system-optimal total time is zero; price of anarchy undefined")]
    ZeroSystemTime,
}

/// Tunable solver parameters with the standard defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once `1 − SPTT/TSTT` falls to this value.
    pub relative_gap_target: f64,
    /// Hard iteration cap; hitting it is reported, not an error.
    pub max_iterations: u32,
    /// Bisection interval width tolerance for the line search.
    pub line_search_tolerance: f64,
    /// Continuous path flows below this are pruned before discretization.
    pub path_flow_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            relative_gap_target: 1e-4,
            max_iterations: 2000,
            line_search_tolerance: 1e-10,
            path_flow_floor: 1e-3,
        }
    }
}

/// Which convex program to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    UserEquilibrium,
    SystemOptimum,
}

impl Objective {
    /// Link cost the shortest-path subproblem prices: true BPR time for UE,
    /// marginal time for SO.
    #[inline]
    pub fn link_cost(&self, link: &Link, q: f64) -> f64 {
        match self {
            Objective::UserEquilibrium => link.time(q),
            Objective::SystemOptimum => link.marginal_time(q),
        }
    }

    /// The minimized objective: Beckmann sum for UE, total travel time for
    /// SO (the Beckmann sum of marginal costs collapses to `Σ q·t(q)`).
    pub fn value(&self, net: &Network, flows: &[f64]) -> f64 {
        match self {
            Objective::UserEquilibrium => net
                .links()
                .iter()
                .zip(flows)
                .map(|(l, &q)| l.time_integral(q))
                .sum(),
            Objective::SystemOptimum => net
                .links()
                .iter()
                .zip(flows)
                .map(|(l, &q)| q * l.time(q))
                .sum(),
        }
    }
}

/// A converged (or best-effort) assignment with its path decomposition.
#[derive(Debug, Clone)]
pub struct Assignment {
    pub objective: Objective,
    /// Final link flows and the *true* BPR times they induce (true times even
    /// for SO, whose subproblems price marginal times).
    pub link_state: LinkState,
    /// Frank–Wolfe iterations performed (shortest-path passes after the
    /// all-or-nothing start).
    pub iterations: u32,
    /// Relative gap at the final iterate.
    pub achieved_gap: f64,
    /// Whether the gap target was met within the iteration cap.
    pub converged: bool,
    /// Objective value at the start iterate and after every step;
    /// nonincreasing up to floating-point noise.
    pub objective_history: Vec<f64>,
    /// Continuous path flows per OD, sorted by (time, link sequence). Flows
    /// sum to the OD demand; times are frozen from the final true link times.
    pub od_paths: BTreeMap<(u32, u32), Vec<RawPathFlow>>,
    /// Demand actually assigned per OD (positive, off-diagonal entries).
    pub od_demand: BTreeMap<(u32, u32), f64>,
}

impl Assignment {
    /// Total system travel time `Σ_a q_a·t_a` in minutes.
    pub fn total_time(&self) -> f64 {
        self.link_state
            .flows
            .iter()
            .zip(&self.link_state.times)
            .map(|(q, t)| q * t)
            .sum()
    }

    /// Flow-weighted mean path time per OD. At user equilibrium this is the
    /// common travel time of the OD's used paths (up to the gap tolerance).
    pub fn od_mean_times(&self) -> BTreeMap<(u32, u32), f64> {
        self.od_paths
            .iter()
            .map(|(&od, paths)| {
                let flow: f64 = paths.iter().map(|p| p.flow).sum();
                let weighted: f64 = paths.iter().map(|p| p.flow * p.time).sum();
                (od, weighted / flow)
            })
            .collect()
    }
}

/// Price of anarchy: UE total time over SO total time.
pub fn price_of_anarchy(total_ue: f64, total_so: f64) -> Result<f64, SolverError> {
    if total_so <= 0.0 || total_so.is_nan() {
        return Err(SolverError::ZeroSystemTime);
    }
    Ok(total_ue / total_so)
}

// ---------------------------------------------------------------------------
// Shortest paths

/// Shortest-path tree from one origin over the given link costs.
///
/// Nodes below `first_through_node` (other than the origin itself) terminate
/// search: they can end a path but never sit in the middle of one. Distance
/// ties keep the smallest predecessor link index; heap pops order by
/// (distance, node id). `pred_link[v] == u32::MAX` marks unreachable nodes.
fn shortest_tree(net: &Network, origin: u32, costs: &[f64]) -> (Vec<f64>, Vec<u32>) {
    #[derive(Copy, Clone, PartialEq)]
    struct Item {
        dist: f64,
        node: u32,
    }
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // Reversed: BinaryHeap is a max-heap, we pop smallest distance,
            // then smallest node id.
            other
                .dist
                .total_cmp(&self.dist)
                .then_with(|| other.node.cmp(&self.node))
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let n = net.node_count as usize;
    let mut dist = vec![f64::INFINITY; n + 1];
    let mut pred_link = vec![u32::MAX; n + 1];
    let mut settled = vec![false; n + 1];
    let mut heap = BinaryHeap::new();
    dist[origin as usize] = 0.0;
    heap.push(Item {
        dist: 0.0,
        node: origin,
    });

    while let Some(Item { node: u, .. }) = heap.pop() {
        let ui = u as usize;
        if settled[ui] {
            continue;
        }
        settled[ui] = true;
        if u != origin && !net.is_through_node(u) {
            continue;
        }
        for &li in net.outgoing(u) {
            let link = net.link(li as usize);
            let v = link.head as usize;
            let nd = dist[ui] + costs[li as usize];
            if nd < dist[v] {
                dist[v] = nd;
                pred_link[v] = li;
                heap.push(Item {
                    dist: nd,
                    node: link.head,
                });
            } else if nd == dist[v] && li < pred_link[v] {
                pred_link[v] = li;
            }
        }
    }
    (dist, pred_link)
}

/// Walks the predecessor chain from `dest` back to `origin`, returning link
/// indices in origin→dest order.
fn extract_path(net: &Network, pred_link: &[u32], origin: u32, dest: u32) -> Vec<u32> {
    let mut links = Vec::new();
    let mut node = dest;
    while node != origin {
        let li = pred_link[node as usize];
        debug_assert_ne!(li, u32::MAX);
        links.push(li);
        node = net.link(li as usize).tail;
    }
    links.reverse();
    links
}

// ---------------------------------------------------------------------------
// Path ledger

/// Multiplicatively-scaled path flows for one OD.
struct OdPaths {
    /// Unnormalized weights; true flow = weight · ledger scale.
    weights: IndexMap<Vec<u32>, f64>,
}

/// Path decomposition of the evolving link flows.
///
/// A Frank–Wolfe step `x ← (1−α)x + αy` scales every existing path flow by
/// `(1−α)` and injects `α·d` onto each OD's new shortest path. Keeping one
/// global scale `S` (multiplied by `1−α` per step) and unnormalized weights
/// `u` (true flow `u·S`) makes the update O(#ODs) instead of O(#paths).
struct PathLedger {
    scale: f64,
    ods: BTreeMap<(u32, u32), OdPaths>,
}

impl PathLedger {
    fn new() -> Self {
        PathLedger {
            scale: 1.0,
            ods: BTreeMap::new(),
        }
    }

    /// Resets to an all-or-nothing state: each OD's full demand on one path.
    fn reset(&mut self, aon_paths: &[((u32, u32), Vec<u32>, f64)]) {
        self.scale = 1.0;
        self.ods.clear();
        for (od, links, demand) in aon_paths {
            let mut weights = IndexMap::new();
            weights.insert(links.clone(), *demand);
            self.ods.insert(*od, OdPaths { weights });
        }
    }

    /// Applies step `α` toward the all-or-nothing paths.
    fn step(&mut self, alpha: f64, aon_paths: &[((u32, u32), Vec<u32>, f64)]) {
        if alpha == 1.0 {
            self.reset(aon_paths);
            return;
        }
        self.scale *= 1.0 - alpha;
        for (od, links, demand) in aon_paths {
            let od_paths = self.ods.get_mut(od).expect("OD present since start");
            let inject = alpha * demand / self.scale;
            *od_paths.weights.entry(links.clone()).or_insert(0.0) += inject;
        }
        if self.scale < 1e-250 {
            for od_paths in self.ods.values_mut() {
                for w in od_paths.weights.values_mut() {
                    *w *= self.scale;
                }
            }
            self.scale = 1.0;
        }
    }

    /// Materializes true path flows, prunes those below `floor` (returning
    /// their mass to the survivors proportionally) and freezes path times
    /// from the final link times.
    fn finalize(self, link_times: &[f64], floor: f64) -> BTreeMap<(u32, u32), Vec<RawPathFlow>> {
        let scale = self.scale;
        self.ods
            .into_iter()
            .map(|(od, od_paths)| {
                let mut flows: Vec<(Vec<u32>, f64)> = od_paths
                    .weights
                    .into_iter()
                    .map(|(links, w)| (links, w * scale))
                    .collect();
                let total: f64 = flows.iter().map(|(_, f)| f).sum();
                let kept_total: f64 = flows
                    .iter()
                    .filter(|(_, f)| *f >= floor)
                    .map(|(_, f)| f)
                    .sum();
                if kept_total > 0.0 {
                    flows.retain(|(_, f)| *f >= floor);
                    let rescale = total / kept_total;
                    for (_, f) in &mut flows {
                        *f *= rescale;
                    }
                } else {
                    // Every path is below the floor (tiny demand): keep the
                    // single largest and give it everything.
                    let best = flows
                        .iter()
                        .enumerate()
                        .max_by(|(ia, (_, fa)), (ib, (_, fb))| fa.total_cmp(fb).then(ib.cmp(ia)))
                        .map(|(i, _)| i)
                        .expect("OD has at least one path");
                    let links = flows.swap_remove(best).0;
                    flows = vec![(links, total)];
                }
                let mut paths: Vec<RawPathFlow> = flows
                    .into_iter()
                    .map(|(links, flow)| {
                        let time = links.iter().map(|&li| link_times[li as usize]).sum();
                        RawPathFlow { links, flow, time }
                    })
                    .collect();
                paths.sort_by(|a, b| {
                    a.time
                        .total_cmp(&b.time)
                        .then_with(|| a.links.cmp(&b.links))
                });
                (od, paths)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Frank–Wolfe

/// One all-or-nothing pass: loads each OD's demand onto its shortest path
/// under `costs`. Returns the loaded link flows, the paths, and SPTT
/// (`Σ d·shortest distance`); unreachable ODs land in `missing`.
/// Per-OD employed path: OD pair, link sequence, and its current cost.
type AonPath = ((u32, u32), Vec<u32>, f64);

fn all_or_nothing(
    net: &Network,
    by_origin: &BTreeMap<u32, Vec<(u32, f64)>>,
    costs: &[f64],
    missing: &mut Vec<(u32, u32)>,
) -> (Vec<f64>, Vec<AonPath>, f64) {
    let mut y = vec![0.0; net.link_count()];
    let mut paths = Vec::new();
    let mut sptt = 0.0;
    for (&origin, dests) in by_origin {
        let (dist, pred_link) = shortest_tree(net, origin, costs);
        for &(dest, demand) in dests {
            if !dist[dest as usize].is_finite() {
                missing.push((origin, dest));
                continue;
            }
            sptt += demand * dist[dest as usize];
            let links = extract_path(net, &pred_link, origin, dest);
            for &li in &links {
                y[li as usize] += demand;
            }
            paths.push(((origin, dest), links, demand));
        }
    }
    (y, paths, sptt)
}

/// Exact-line-search step size: the zero of
/// `g(α) = Σ_a (y_a − x_a) · c_a(x + α(y − x))` on [0, 1], found by
/// bisection. `g(0) < 0` whenever the gap is positive; `g(1) ≤ 0` means the
/// full step is optimal.
fn line_search(net: &Network, objective: Objective, x: &[f64], y: &[f64], tolerance: f64) -> f64 {
    let g = |alpha: f64| -> f64 {
        net.links()
            .iter()
            .enumerate()
            .map(|(a, link)| {
                let d = y[a] - x[a];
                d * objective.link_cost(link, x[a] + alpha * d)
            })
            .sum()
    };
    if g(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves the assignment problem to the configured relative gap.
///
/// Failing to reach the gap within `max_iterations` is not an error: the best
/// iterate is returned with `converged = false` and the achieved gap.
/// Intrazonal and zero demands are ignored; an empty demand table yields the
/// free-flow state.
pub fn solve_assignment(
    net: &Network,
    demand: &DemandTable,
    objective: Objective,
    config: &SolverConfig,
) -> Result<Assignment, SolverError> {
    let mut by_origin: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    let mut out_of_range: Vec<(u32, u32)> = Vec::new();
    let mut od_demand = BTreeMap::new();
    for ((o, d), v) in demand.assignment_entries() {
        if o < 1 || o > net.node_count || d < 1 || d > net.node_count {
            out_of_range.push((o, d));
            continue;
        }
        by_origin.entry(o).or_default().push((d, v));
        od_demand.insert((o, d), v);
    }
    if !out_of_range.is_empty() {
        return Err(SolverError::DisconnectedOd {
            pairs: out_of_range,
        });
    }

    let m = net.link_count();
    if by_origin.is_empty() {
        let link_state = LinkState::from_flows(net, vec![0.0; m]);
        let objective_history = vec![objective.value(net, &link_state.flows)];
        return Ok(Assignment {
            objective,
            link_state,
            iterations: 0,
            achieved_gap: 0.0,
            converged: true,
            objective_history,
            od_paths: BTreeMap::new(),
            od_demand,
        });
    }

    // All-or-nothing start on empty-network costs.
    let costs0: Vec<f64> = net
        .links()
        .iter()
        .map(|l| objective.link_cost(l, 0.0))
        .collect();
    let mut missing = Vec::new();
    let (x0, paths0, _) = all_or_nothing(net, &by_origin, &costs0, &mut missing);
    if !missing.is_empty() {
        return Err(SolverError::DisconnectedOd { pairs: missing });
    }
    let mut x = x0;
    let mut ledger = PathLedger::new();
    ledger.reset(&paths0);
    let mut objective_history = vec![objective.value(net, &x)];

    let mut iterations = 0u32;
    let mut achieved_gap = f64::INFINITY;
    let mut converged = false;
    while iterations < config.max_iterations {
        let costs: Vec<f64> = net
            .links()
            .iter()
            .zip(&x)
            .map(|(l, &q)| objective.link_cost(l, q))
            .collect();
        let (y, paths, sptt) = all_or_nothing(net, &by_origin, &costs, &mut missing);
        iterations += 1;
        let tstt: f64 = x.iter().zip(&costs).map(|(q, c)| q * c).sum();
        achieved_gap = (1.0 - sptt / tstt).max(0.0);
        if achieved_gap <= config.relative_gap_target {
            converged = true;
            break;
        }
        let alpha = line_search(net, objective, &x, &y, config.line_search_tolerance);
        ledger.step(alpha, &paths);
        for a in 0..m {
            x[a] += alpha * (y[a] - x[a]);
        }
        objective_history.push(objective.value(net, &x));
    }

    let link_state = LinkState::from_flows(net, x);
    let od_paths = ledger.finalize(&link_state.times, config.path_flow_floor);
    Ok(Assignment {
        objective,
        link_state,
        iterations,
        achieved_gap,
        converged,
        objective_history,
        od_paths,
        od_demand,
    })
}

/// Rounds every OD of an assignment to integer drivers: the target is the OD
/// demand rounded half-up, ODs rounding to zero drivers are skipped, and
/// `ue_times` (keyed by OD) supplies the UE reference time when available.
pub fn discretize_assignment(
    assignment: &Assignment,
    ue_times: Option<&BTreeMap<(u32, u32), f64>>,
) -> Result<Vec<PathSet>, PathError> {
    let mut out = Vec::new();
    for (&(o, d), paths) in &assignment.od_paths {
        let demand = assignment.od_demand[&(o, d)];
        let q_target = (demand + 0.5).floor() as u64;
        if q_target == 0 {
            continue;
        }
        let t_ue = ue_times.and_then(|m| m.get(&(o, d)).copied());
        out.push(discretize(o, d, paths, q_target, t_ue)?);
    }
    Ok(out)
}
