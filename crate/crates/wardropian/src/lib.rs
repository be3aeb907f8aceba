//! Traffic assignment and fair multi-day route rotation.
//!
//! This crate solves static traffic assignment (user equilibrium and system
//! optimum) on TNTP-format networks with BPR link costs, decomposes the result
//! into per-OD path flows with integer driver counts, and then constructs and
//! evaluates multi-day schedules that rotate drivers across paths so that every
//! driver's long-run average travel time equals the OD mean — Wardropian
//! cycles — together with Markovian day-by-day assignment rules, fairness
//! metrics, and exhaustive reference oracles for the NP-hard subproblems.
//!
//! Module map:
//! - [`tntp`] — parsing and serialization of TNTP network/trips files.
//! - [`net`] — link-level network model and BPR cost functions.
//! - [`solver`] — Frank-Wolfe assignment with path-flow accumulation.
//! - [`paths`] — per-OD path sets, integer discretization, daily assignments.
//! - [`metrics`] — deviations, inequity, discontent, CUE verdicts, Pareto order.
//! - [`cycles`] — cycle constructions (full, GCD, partition, balanced) and validation.
//! - [`rules`] — greedy/fixed/random daily rules and the multi-day simulator.
//! - [`oracle`] — brute-force small-scale references for the heuristic solvers.
//! - [`report`] — CSV tables and JSON manifests.
//!
//! The fairness layer deliberately runs its guarantees on exact arithmetic
//! (see [`exact`]): a Wardropian cycle is defined by an exact zero residual,
//! and the prefix-mean bounds of the balanced ordering are rational
//! inequalities, so the tests assert them exactly rather than within an
//! arbitrary epsilon.

pub mod cycles;
pub mod exact;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod paths;
pub mod report;
pub mod rules;
pub mod solver;
pub mod tntp;
