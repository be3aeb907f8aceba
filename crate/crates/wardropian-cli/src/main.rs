//! Command-line pipeline around the `wardropian` library.
//!
//! Five subcommands cover the workflow end to end:
//!
//! * `assign`   — solve user-equilibrium and system-optimal assignments,
//!   discretize the optimum into per-OD path sets, and write the archive plus
//!   the price-of-anarchy and OD-fairness tables;
//! * `cycle`    — cycle-length statistics and validation over an archive;
//! * `simulate` — day-by-day rule simulation with inequity-decay tables;
//! * `oracle`   — exact brute-force answers for small ad-hoc instances;
//! * `report`   — regenerate the summary tables from an existing archive.
//!
//! All outputs are deterministic: rerunning a command with the same inputs
//! reproduces byte-identical files. Warnings go to stderr and leave the exit
//! status at zero; any error-level diagnostic exits nonzero.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use wardropian::cycles::{
    balanced_ordering, default_seed, full_cycle, gcd_cycle, gcd_cycle_length, partition_cycles,
    partition_plan, prefix_bound_holds, validate_cycle, CycleSchedule, PartitionMode, Provenance,
};
use wardropian::oracle::{
    brute_next_day, exact_compatible_schedule, exact_mean_partition, exact_restricted_cycle,
    SmallInstance,
};
use wardropian::paths::{OdFairnessReport, OdFairnessRow, PathSet};
use wardropian::report::{
    write_cycle_lengths, write_cycle_stats, write_cycle_validation, write_inequity_ratios,
    write_inequity_stats, write_manifest, write_od_fairness, write_od_summary, write_poa_summary,
    write_simulation_daily, CycleLengthRow, CycleStatsRow, CycleValidationRow, InequityRatioRow,
    InequityStatsRow, OdSummaryRow, PoaRow, ReportError, RunManifest, SimulationDailyRow,
    SummaryStats,
};
use wardropian::rules::{simulate, Rule};
use wardropian::solver::{
    discretize_assignment, price_of_anarchy, solve_assignment, Objective, SolverConfig,
};
use wardropian::tntp::{parse_network, parse_trips};

const ARCHIVE_NAME: &str = "path_sets.json";
const DATA_DIR_ENV: &str = "WARDROPIAN_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "wardropian",
    version,
    about = "Traffic assignment, Wardropian cycles, and fairness simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve UE and SO, write the path-set archive and summary tables.
    Assign(AssignArgs),
    /// Cycle-length statistics and validation over an archive.
    Cycle(CycleArgs),
    /// Run a daily assignment rule and write inequity-decay tables.
    Simulate(SimulateArgs),
    /// Exact brute-force oracles for small ad-hoc instances.
    Oracle(OracleArgs),
    /// Regenerate the summary tables from an existing archive.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value configuration file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// TNTP network file; relative paths also resolve under $WARDROPIAN_DATA_DIR.
    #[arg(long)]
    net: Option<PathBuf>,
    /// TNTP trips file; same resolution rules as --net.
    #[arg(long)]
    trips: Option<PathBuf>,
    /// City label used in the report tables (default: network file stem).
    #[arg(long)]
    city: Option<String>,
    /// Relative-gap convergence target for both objectives.
    #[arg(long)]
    gap: Option<f64>,
    /// Iteration cap per solve.
    #[arg(long)]
    max_iterations: Option<u32>,
}

#[derive(Args)]
struct CycleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Path-set archive produced by `assign` (default `<out>/path_sets.json`).
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Comma-separated construction methods: full,gcd,partition,balanced.
    #[arg(long)]
    methods: Option<String>,
    /// OD filter: minimum integer driver count.
    #[arg(long)]
    min_q: Option<u64>,
    /// OD filter: minimum number of distinct-time paths.
    #[arg(long)]
    min_paths: Option<usize>,
    /// Materialize and validate cycles only for ODs up to this driver count.
    #[arg(long)]
    validate_limit: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Path-set archive produced by `assign` (default `<out>/path_sets.json`).
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Number of simulated days (≥ 1).
    #[arg(long)]
    horizon: Option<usize>,
    /// Daily assignment rule to run.
    #[arg(long, value_enum)]
    rule: Option<RuleChoice>,
    /// Seed for the random baseline rule.
    #[arg(long)]
    seed: Option<u64>,
    /// OD filter: minimum integer driver count.
    #[arg(long)]
    min_q: Option<u64>,
    /// OD filter: minimum number of distinct-time paths.
    #[arg(long)]
    min_paths: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    /// Comma-separated path travel times, e.g. 8,8,5,1,1,1.
    #[arg(long)]
    times: String,
    /// Comma-separated integer path flows, same length as --times.
    #[arg(long)]
    flows: String,
    /// Comma-separated per-driver cumulative deviations (next-day oracle only).
    #[arg(long)]
    cumulative: Option<String>,
    /// Which oracle to run.
    #[arg(long, value_enum, default_value_t = OracleOp::All)]
    op: OracleOp,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Path-set archive produced by `assign` (default `<out>/path_sets.json`).
    #[arg(long)]
    archive: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RuleChoice {
    /// Most-delayed drivers take the fastest paths.
    Greedy,
    /// Uniformly random daily permutations (seeded).
    Random,
    /// Replay the reduced rotation cycle.
    GcdCycle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OracleOp {
    NextDay,
    Partition,
    Restricted,
    Compatible,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Full,
    Gcd,
    Partition,
    Balanced,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Gcd => "gcd",
            Method::Partition => "partition",
            Method::Balanced => "balanced",
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Method::Full),
            "gcd" => Ok(Method::Gcd),
            "partition" => Ok(Method::Partition),
            "balanced" => Ok(Method::Balanced),
            other => {
                bail!("unknown cycle method `{other}` (expected full, gcd, partition or balanced)")
            }
        }
    }
}

/// Everything `assign` persists; consumed by `cycle`, `simulate` and `report`.
#[derive(Serialize, Deserialize)]
struct Archive {
    city: String,
    gap_target: f64,
    ue_total_minutes: f64,
    so_total_minutes: f64,
    /// Absent when there was no demand to assign.
    poa: Option<f64>,
    violating_fraction: f64,
    fairness: Vec<OdFairnessRow>,
    path_sets: Vec<PathSet>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Assign(args) => cmd_assign(args),
        Command::Cycle(args) => cmd_cycle(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Report(args) => cmd_report(args),
    }
}

// ---------------------------------------------------------------------------
// Configuration plumbing

const KNOWN_KEYS: &[&str] = &[
    "net",
    "trips",
    "city",
    "gap",
    "max_iterations",
    "out",
    "archive",
    "methods",
    "min_q",
    "min_paths",
    "horizon",
    "rule",
    "seed",
    "validate_limit",
];

/// Parsed `key = value` configuration file; `#` starts a comment.
struct Conf {
    map: BTreeMap<String, String>,
}

impl Conf {
    fn load(path: Option<&PathBuf>) -> Result<Conf> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading configuration file {}", p.display()))?;
            for (idx, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    anyhow!("{}: line {}: expected `key = value`", p.display(), idx + 1)
                })?;
                let key = key.trim();
                if !KNOWN_KEYS.contains(&key) {
                    bail!("{}: unknown configuration key `{key}`", p.display());
                }
                map.insert(key.to_string(), value.trim().trim_matches('"').to_string());
            }
        }
        Ok(Conf { map })
    }

    /// Flag beats file beats default.
    fn pick<T: Clone>(
        &self,
        key: &str,
        flag: &Option<T>,
        default: T,
        parse: impl Fn(&str) -> Result<T>,
    ) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match self.map.get(key) {
            Some(s) => parse(s).with_context(|| format!("configuration key `{key}`")),
            None => Ok(default),
        }
    }

    fn pick_path(&self, key: &str, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone()
            .or_else(|| self.map.get(key).map(PathBuf::from))
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| anyhow!("`{s}` is not a number"))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| anyhow!("`{s}` is not an integer"))
}

fn parse_u32(s: &str) -> Result<u32> {
    s.parse().map_err(|_| anyhow!("`{s}` is not an integer"))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse().map_err(|_| anyhow!("`{s}` is not an integer"))
}

/// Resolves an input path, falling back to $WARDROPIAN_DATA_DIR for relative
/// paths that do not exist as given.
fn resolve_input(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            let candidate = PathBuf::from(dir).join(path);
            if candidate.is_file() {
                return Ok(candidate);
            }
            bail!(
                "input file {} not found (also tried {} via ${})",
                path.display(),
                candidate.display(),
                DATA_DIR_ENV
            );
        }
    }
    bail!("input file {} not found", path.display());
}

fn out_dir(conf: &Conf, common: &CommonArgs) -> Result<PathBuf> {
    let dir = conf
        .pick_path("out", &common.out)
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn archive_path(conf: &Conf, flag: &Option<PathBuf>, out: &Path) -> PathBuf {
    conf.pick_path("archive", flag)
        .unwrap_or_else(|| out.join(ARCHIVE_NAME))
}

fn write_table(
    dir: &Path,
    name: &str,
    tables: &mut Vec<String>,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<(), ReportError>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut sink = BufWriter::new(file);
    write(&mut sink).with_context(|| format!("writing {}", path.display()))?;
    tables.push(name.to_string());
    Ok(())
}

/// Writes `run_manifest.json`; the manifest lists the data tables, not itself.
fn write_manifest_file(
    dir: &Path,
    command: &str,
    inputs: BTreeMap<String, String>,
    settings: BTreeMap<String, serde_json::Value>,
    tables: &[String],
) -> Result<()> {
    let path = dir.join("run_manifest.json");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut sink = BufWriter::new(file);
    write_manifest(
        &mut sink,
        &RunManifest {
            command: command.to_string(),
            inputs,
            settings,
            tables: tables.to_vec(),
        },
    )
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_archive(path: &Path) -> Result<Archive> {
    let file = File::open(path).with_context(|| format!("opening archive {}", path.display()))?;
    let archive: Archive = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing archive {}", path.display()))?;
    for ps in &archive.path_sets {
        ps.validate().with_context(|| {
            format!(
                "archive {}: OD ({}, {}) fails validation",
                path.display(),
                ps.origin,
                ps.destination
            )
        })?;
    }
    Ok(archive)
}

/// Applies the OD filter and logs it, as the filter is a modelling choice.
fn eligible_sets(archive: &Archive, min_q: u64, min_paths: usize) -> Vec<&PathSet> {
    let picked: Vec<&PathSet> = archive
        .path_sets
        .iter()
        .filter(|ps| ps.q >= min_q && ps.distinct_time_count() >= min_paths)
        .collect();
    eprintln!(
        "info: OD filter (min drivers {min_q}, min distinct-time paths {min_paths}): \
         {} of {} OD pairs eligible",
        picked.len(),
        archive.path_sets.len()
    );
    picked
}

fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

// ---------------------------------------------------------------------------
// assign

fn default_city(net: &Path) -> String {
    let stem = net
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("network");
    stem.trim_end_matches("_net").to_string()
}

fn cmd_assign(args: AssignArgs) -> Result<()> {
    let conf = Conf::load(args.common.config.as_ref())?;
    let out = out_dir(&conf, &args.common)?;
    let net_arg = conf
        .pick_path("net", &args.net)
        .ok_or_else(|| anyhow!("--net is required (flag or configuration file)"))?;
    let trips_arg = conf
        .pick_path("trips", &args.trips)
        .ok_or_else(|| anyhow!("--trips is required (flag or configuration file)"))?;
    let gap = conf.pick("gap", &args.gap, 1e-4, parse_f64)?;
    let max_iterations = conf.pick("max_iterations", &args.max_iterations, 6000, parse_u32)?;
    let city = conf.pick("city", &args.city, default_city(&net_arg), |s| {
        Ok(s.to_string())
    })?;

    let net_path = resolve_input(&net_arg)?;
    let trips_path = resolve_input(&trips_arg)?;
    let net_text =
        fs::read_to_string(&net_path).with_context(|| format!("reading {}", net_path.display()))?;
    let trips_text = fs::read_to_string(&trips_path)
        .with_context(|| format!("reading {}", trips_path.display()))?;
    let parsed =
        parse_network(&net_text).with_context(|| format!("parsing {}", net_path.display()))?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", net_path.display());
    }
    let trips =
        parse_trips(&trips_text).with_context(|| format!("parsing {}", trips_path.display()))?;
    for w in &trips.warnings {
        eprintln!("warning: {}: {w}", trips_path.display());
    }
    let network = wardropian::net::Network::from_raw(&parsed.raw)
        .with_context(|| format!("building network from {}", net_path.display()))?;

    let mut tables = Vec::new();
    let mut manifest_inputs = BTreeMap::new();
    manifest_inputs.insert("network".to_string(), net_path.display().to_string());
    manifest_inputs.insert("trips".to_string(), trips_path.display().to_string());
    let mut settings = BTreeMap::new();
    settings.insert("gap".to_string(), json_num(gap));
    settings.insert(
        "max_iterations".to_string(),
        serde_json::Value::from(max_iterations),
    );
    settings.insert("city".to_string(), serde_json::Value::from(city.clone()));

    let archive = if trips.table.assignment_entries().next().is_none() {
        eprintln!(
            "warning: {} contains no positive off-diagonal demand; writing an empty archive",
            trips_path.display()
        );
        Archive {
            city: city.clone(),
            gap_target: gap,
            ue_total_minutes: 0.0,
            so_total_minutes: 0.0,
            poa: None,
            violating_fraction: 0.0,
            fairness: Vec::new(),
            path_sets: Vec::new(),
        }
    } else {
        let config = SolverConfig {
            relative_gap_target: gap,
            max_iterations,
            ..SolverConfig::default()
        };
        let ue = solve_assignment(&network, &trips.table, Objective::UserEquilibrium, &config)
            .context("user-equilibrium solve")?;
        let so = solve_assignment(&network, &trips.table, Objective::SystemOptimum, &config)
            .context("system-optimum solve")?;
        for (label, solution) in [("UE", &ue), ("SO", &so)] {
            eprintln!(
                "info: {label} total {:.1} vehicle-minutes after {} iterations (gap {:.3e})",
                solution.total_time(),
                solution.iterations,
                solution.achieved_gap
            );
            if !solution.converged {
                eprintln!(
                    "warning: {label} stopped at gap {:.3e} before reaching target {gap:.1e}",
                    solution.achieved_gap
                );
            }
        }
        let poa = price_of_anarchy(ue.total_time(), so.total_time()).context("price of anarchy")?;
        let ue_means = ue.od_mean_times();
        let path_sets =
            discretize_assignment(&so, Some(&ue_means)).context("discretizing the optimum")?;
        let fairness =
            wardropian::paths::od_fairness_report(&path_sets, &ue_means).context("OD fairness")?;
        eprintln!(
            "info: {} OD pairs discretized; {:.1}% worse off than at equilibrium",
            path_sets.len(),
            fairness.violating_fraction * 100.0
        );
        Archive {
            city: city.clone(),
            gap_target: gap,
            ue_total_minutes: ue.total_time(),
            so_total_minutes: so.total_time(),
            poa: Some(poa),
            violating_fraction: fairness.violating_fraction,
            fairness: fairness.rows,
            path_sets,
        }
    };

    let archive_file = out.join(ARCHIVE_NAME);
    let file = File::create(&archive_file)
        .with_context(|| format!("creating {}", archive_file.display()))?;
    let mut sink = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut sink, &archive)
        .with_context(|| format!("writing {}", archive_file.display()))?;
    use std::io::Write as _;
    sink.write_all(b"\n")?;
    drop(sink);
    tables.push(ARCHIVE_NAME.to_string());

    write_summary_tables(&out, &archive, &mut tables)?;
    write_manifest_file(&out, "assign", manifest_inputs, settings, &tables)?;
    Ok(())
}

/// PoA summary, OD summary, and OD fairness — shared by `assign` and `report`.
fn write_summary_tables(out: &Path, archive: &Archive, tables: &mut Vec<String>) -> Result<()> {
    let poa_rows: Vec<PoaRow> = match archive.poa {
        Some(poa) => vec![PoaRow {
            city: archive.city.clone(),
            total_ue_minutes: archive.ue_total_minutes,
            total_so_minutes: archive.so_total_minutes,
            poa,
        }],
        None => Vec::new(),
    };
    write_table(out, "poa_summary.csv", tables, |sink| {
        write_poa_summary(sink, &poa_rows)
    })?;

    let fairness = OdFairnessReport {
        rows: archive.fairness.clone(),
        violating_fraction: archive.violating_fraction,
    };
    write_table(out, "od_fairness.csv", tables, |sink| {
        write_od_fairness(sink, &fairness)
    })?;

    let summary_rows: Vec<OdSummaryRow> = archive
        .path_sets
        .iter()
        .map(|ps| OdSummaryRow {
            origin: ps.origin,
            destination: ps.destination,
            q: ps.q,
            path_count: ps.paths.len(),
            distinct_times: ps.distinct_time_count(),
            t_hat: ps.t_hat,
            t_ue: ps.t_ue,
        })
        .collect();
    write_table(out, "od_summary.csv", tables, |sink| {
        write_od_summary(sink, &summary_rows)
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// cycle

struct OdCycleOutcome {
    lengths: Vec<CycleLengthRow>,
    validations: Vec<CycleValidationRow>,
}

fn cmd_cycle(args: CycleArgs) -> Result<()> {
    let conf = Conf::load(args.common.config.as_ref())?;
    let out = out_dir(&conf, &args.common)?;
    let archive_file = archive_path(&conf, &args.archive, &out);
    let min_q = conf.pick("min_q", &args.min_q, 2, parse_u64)?;
    let min_paths = conf.pick("min_paths", &args.min_paths, 2, parse_usize)?;
    let validate_limit = conf.pick("validate_limit", &args.validate_limit, 256, parse_u64)?;
    let methods_text = conf.pick(
        "methods",
        &args.methods,
        "full,gcd,partition".to_string(),
        |s| Ok(s.to_string()),
    )?;
    let methods: Vec<Method> = methods_text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Method::from_str)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        bail!("--methods selected no cycle construction");
    }

    let archive = load_archive(&archive_file)?;
    let sets = eligible_sets(&archive, min_q, min_paths);

    let outcomes: Vec<Result<OdCycleOutcome>> = sets
        .par_iter()
        .map(|ps| od_cycle_outcome(ps, &methods, validate_limit))
        .collect();

    let mut lengths: Vec<CycleLengthRow> = Vec::new();
    let mut validations: Vec<CycleValidationRow> = Vec::new();
    for outcome in outcomes {
        let outcome = outcome?;
        lengths.extend(outcome.lengths);
        validations.extend(outcome.validations);
    }

    let mut stats_rows = Vec::new();
    for method in &methods {
        let values: Vec<f64> = lengths
            .iter()
            .filter(|r| r.method == method.name())
            .map(|r| r.length as f64)
            .collect();
        if let Some(stats) = SummaryStats::from_values(&values) {
            stats_rows.push(CycleStatsRow {
                method: method.name().to_string(),
                stats,
            });
        }
    }
    let unsound = validations.iter().filter(|v| !v.is_wardropian).count();
    if unsound > 0 {
        eprintln!("warning: {unsound} materialized cycles failed the Wardropian check");
    }
    eprintln!(
        "info: {} length rows, {} cycles validated (materialization capped at {} drivers)",
        lengths.len(),
        validations.len(),
        validate_limit
    );

    let mut tables = Vec::new();
    write_table(&out, "cycle_lengths.csv", &mut tables, |sink| {
        write_cycle_lengths(sink, &lengths)
    })?;
    write_table(&out, "cycle_stats.csv", &mut tables, |sink| {
        write_cycle_stats(sink, &stats_rows)
    })?;
    write_table(&out, "cycle_validation.csv", &mut tables, |sink| {
        write_cycle_validation(sink, &validations)
    })?;

    let mut inputs = BTreeMap::new();
    inputs.insert("archive".to_string(), archive_file.display().to_string());
    let mut settings = BTreeMap::new();
    settings.insert("methods".to_string(), serde_json::Value::from(methods_text));
    settings.insert("min_q".to_string(), serde_json::Value::from(min_q));
    settings.insert("min_paths".to_string(), serde_json::Value::from(min_paths));
    settings.insert(
        "validate_limit".to_string(),
        serde_json::Value::from(validate_limit),
    );
    write_manifest_file(&out, "cycle", inputs, settings, &tables)?;
    Ok(())
}

fn od_cycle_outcome(
    ps: &PathSet,
    methods: &[Method],
    validate_limit: u64,
) -> Result<OdCycleOutcome> {
    let mut lengths = Vec::new();
    let mut validations = Vec::new();
    let materialize = ps.q <= validate_limit;
    let mut validate = |schedule: &CycleSchedule, method: &str| {
        let report = validate_cycle(schedule, ps);
        validations.push(CycleValidationRow {
            origin: ps.origin,
            destination: ps.destination,
            method: method.to_string(),
            days: schedule.len() as u64,
            max_abs_residual: report.max_abs_residual,
            is_wardropian: report.is_wardropian,
        });
    };

    // A single path admits no rotation: every day of any construction is
    // identical, so the honest cycle length is one day for every method.
    let single_path = ps.paths.len() == 1;
    let one_day = |provenance: Provenance| CycleSchedule {
        days: vec![default_seed(ps)],
        provenance,
        sub_cycles: Vec::new(),
    };

    for method in methods {
        match method {
            Method::Full => {
                if single_path {
                    lengths.push(length_row(ps, "full", 1, ps.q));
                    if materialize {
                        validate(&one_day(Provenance::FullShift), "full");
                    }
                    continue;
                }
                lengths.push(length_row(ps, "full", ps.q, ps.q));
                if materialize {
                    let schedule = full_cycle(ps, &default_seed(ps))?;
                    validate(&schedule, "full");
                }
            }
            Method::Gcd => {
                lengths.push(length_row(ps, "gcd", gcd_cycle_length(ps) as u64, ps.q));
                if materialize {
                    let schedule = gcd_cycle(ps, &default_seed(ps))?;
                    validate(&schedule, "gcd");
                }
            }
            Method::Partition => {
                let mode = if ps.q <= 20 {
                    PartitionMode::exact_small()
                } else {
                    PartitionMode::heuristic()
                };
                let (_, sub_cycles) = partition_plan(ps, mode)?;
                for sc in &sub_cycles {
                    lengths.push(length_row(
                        ps,
                        "partition",
                        sc.length as u64,
                        sc.drivers.len() as u64,
                    ));
                }
                if materialize {
                    let (_, schedule) = partition_cycles(ps, mode)?;
                    validate(&schedule, "partition");
                }
            }
            Method::Balanced => {
                if single_path {
                    lengths.push(length_row(ps, "balanced", 1, ps.q));
                    if materialize {
                        validate(&one_day(Provenance::BalancedOrdering), "balanced");
                    }
                    continue;
                }
                lengths.push(length_row(ps, "balanced", ps.q, ps.q));
                if materialize {
                    let schedule = balanced_ordering(ps);
                    validate(&schedule, "balanced");
                    if !prefix_bound_holds(&schedule, ps)? {
                        bail!(
                            "balanced ordering violated its prefix bound on OD ({}, {})",
                            ps.origin,
                            ps.destination
                        );
                    }
                }
            }
        }
    }
    Ok(OdCycleOutcome {
        lengths,
        validations,
    })
}

fn length_row(ps: &PathSet, method: &str, length: u64, drivers: u64) -> CycleLengthRow {
    CycleLengthRow {
        origin: ps.origin,
        destination: ps.destination,
        method: method.to_string(),
        length,
        drivers,
    }
}

// ---------------------------------------------------------------------------
// simulate

const REPORT_DAYS: [usize; 5] = [1, 5, 10, 20, 50];

struct OdSimulationOutcome {
    daily: Vec<SimulationDailyRow>,
    /// Running-mean inequity `I` and `Ī` per day (the decaying series).
    mean_i: Vec<f64>,
    mean_i_bar: Vec<f64>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let conf = Conf::load(args.common.config.as_ref())?;
    let out = out_dir(&conf, &args.common)?;
    let archive_file = archive_path(&conf, &args.archive, &out);
    let min_q = conf.pick("min_q", &args.min_q, 2, parse_u64)?;
    let min_paths = conf.pick("min_paths", &args.min_paths, 2, parse_usize)?;
    let horizon = conf.pick("horizon", &args.horizon, 50, parse_usize)?;
    if horizon == 0 {
        bail!("--horizon must be at least 1");
    }
    let seed = conf.pick("seed", &args.seed, 0, parse_u64)?;
    let rule_choice = conf.pick("rule", &args.rule, RuleChoice::Greedy, |s| {
        RuleChoice::from_str(s, true).map_err(|e| anyhow!("{e}"))
    })?;

    let archive = load_archive(&archive_file)?;
    let sets = eligible_sets(&archive, min_q, min_paths);

    let outcomes: Vec<Result<OdSimulationOutcome>> = sets
        .par_iter()
        .map(|ps| od_simulation_outcome(ps, rule_choice, seed, horizon))
        .collect();

    let mut daily = Vec::new();
    let mut sum_mean_i = vec![0.0f64; horizon];
    let mut i_bar_by_day: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    for outcome in outcomes {
        let outcome = outcome?;
        daily.extend(outcome.daily);
        for (day, value) in outcome.mean_i.iter().enumerate() {
            sum_mean_i[day] += value;
        }
        for (day, value) in outcome.mean_i_bar.iter().enumerate() {
            i_bar_by_day[day].push(*value);
        }
    }

    let mut stats_rows = Vec::new();
    for &day in REPORT_DAYS.iter().filter(|&&d| d <= horizon) {
        if let Some(stats) = SummaryStats::from_values(&i_bar_by_day[day - 1]) {
            stats_rows.push(InequityStatsRow { day, stats });
        }
    }
    let ratio = |day: usize| -> Option<f64> {
        (day <= horizon && sum_mean_i[0] > 0.0).then(|| sum_mean_i[day - 1] / sum_mean_i[0])
    };
    let ratio_rows = vec![InequityRatioRow {
        city: archive.city.clone(),
        sum_i_1: sum_mean_i.first().copied().unwrap_or(0.0),
        ratio_5: ratio(5),
        ratio_10: ratio(10),
        ratio_20: ratio(20),
        ratio_50: ratio(50),
    }];
    if let (Some(r5), Some(r50)) = (ratio(5), ratio(50)) {
        eprintln!(
            "info: running-mean inequity at day 5 is {:.1}% of day 1, at day 50 {:.2}%",
            r5 * 100.0,
            r50 * 100.0
        );
    }

    let mut tables = Vec::new();
    write_table(&out, "inequity_stats.csv", &mut tables, |sink| {
        write_inequity_stats(sink, &stats_rows)
    })?;
    write_table(&out, "inequity_ratios.csv", &mut tables, |sink| {
        write_inequity_ratios(sink, &ratio_rows)
    })?;
    write_table(&out, "simulation_daily.csv", &mut tables, |sink| {
        write_simulation_daily(sink, &daily)
    })?;

    let mut inputs = BTreeMap::new();
    inputs.insert("archive".to_string(), archive_file.display().to_string());
    let mut settings = BTreeMap::new();
    settings.insert(
        "rule".to_string(),
        serde_json::Value::from(format!("{rule_choice:?}").to_lowercase()),
    );
    settings.insert("horizon".to_string(), serde_json::Value::from(horizon));
    settings.insert("seed".to_string(), serde_json::Value::from(seed));
    settings.insert("min_q".to_string(), serde_json::Value::from(min_q));
    settings.insert("min_paths".to_string(), serde_json::Value::from(min_paths));
    write_manifest_file(&out, "simulate", inputs, settings, &tables)?;
    Ok(())
}

fn od_simulation_outcome(
    ps: &PathSet,
    rule_choice: RuleChoice,
    seed: u64,
    horizon: usize,
) -> Result<OdSimulationOutcome> {
    let rule = match rule_choice {
        RuleChoice::Greedy => Rule::Greedy,
        RuleChoice::Random => Rule::Random { seed },
        RuleChoice::GcdCycle => Rule::FixedCycle(gcd_cycle(ps, &default_seed(ps))?),
    };
    let trace = simulate(ps, &rule, horizon)
        .with_context(|| format!("simulating OD ({}, {})", ps.origin, ps.destination))?;
    let daily = (0..horizon)
        .map(|day| SimulationDailyRow {
            origin: ps.origin,
            destination: ps.destination,
            day: day + 1,
            inequity: trace.inequity.i[day],
            inequity_bar: trace.inequity.i_bar[day],
            min_mean: trace.min_mean[day],
            max_mean: trace.max_mean[day],
        })
        .collect();
    Ok(OdSimulationOutcome {
        daily,
        mean_i: trace.mean_inequity.i,
        mean_i_bar: trace.mean_inequity.i_bar,
    })
}

// ---------------------------------------------------------------------------
// oracle

fn parse_list<T: FromStr>(label: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| anyhow!("--{label}: `{}` is not a valid entry", s.trim()))
        })
        .collect()
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let times: Vec<f64> = parse_list("times", &args.times)?;
    let flows: Vec<u64> = parse_list("flows", &args.flows)?;
    let inst = SmallInstance::new(times, flows).context("building the instance")?;
    println!(
        "instance: {} paths, {} drivers, mean time {}",
        inst.times.len(),
        inst.unit_count(),
        inst.t_hat
    );

    if matches!(args.op, OracleOp::NextDay | OracleOp::All) {
        let cumulative = match &args.cumulative {
            Some(text) => parse_list("cumulative", text)?,
            None => vec![0.0; inst.unit_count() as usize],
        };
        let outcome = brute_next_day(&cumulative, &inst).context("next-day oracle")?;
        println!(
            "next-day: minimal inequity {} with driver→path assignment {:?}",
            outcome.min_inequity, outcome.witness
        );
    }
    if matches!(args.op, OracleOp::Partition | OracleOp::All) {
        match exact_mean_partition(&inst).context("partition oracle")? {
            Some(plan) => println!(
                "partition: {} mean-preserving groups: {:?}",
                plan.groups.len(),
                plan.groups
            ),
            None => println!("partition: no nontrivial mean-preserving split exists"),
        }
    }
    if matches!(args.op, OracleOp::Restricted | OracleOp::All) {
        let opt = exact_restricted_cycle(&inst).context("restricted-cycle oracle")?;
        println!(
            "restricted-cycle: optimal max |window sum| {} with order {:?}",
            opt.value, opt.witness
        );
    }
    if matches!(args.op, OracleOp::Compatible | OracleOp::All) {
        let opt = exact_compatible_schedule(&inst).context("compatible-schedule oracle")?;
        println!(
            "compatible-schedule: optimal max |prefix sum| {} over {} days",
            opt.value,
            opt.witness.len()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(args: ReportArgs) -> Result<()> {
    let conf = Conf::load(args.common.config.as_ref())?;
    let out = out_dir(&conf, &args.common)?;
    let archive_file = archive_path(&conf, &args.archive, &out);
    let archive = load_archive(&archive_file)?;

    let mut tables = Vec::new();
    write_summary_tables(&out, &archive, &mut tables)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("archive".to_string(), archive_file.display().to_string());
    write_manifest_file(&out, "report", inputs, BTreeMap::new(), &tables)?;
    eprintln!(
        "info: regenerated {} tables from {}",
        tables.len(),
        archive_file.display()
    );
    Ok(())
}
