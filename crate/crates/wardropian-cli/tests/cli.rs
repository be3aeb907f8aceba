//! End-to-end tests of the `wardropian` binary: each subcommand runs against
//! the bundled fixtures in a temporary directory and the emitted tables are
//! checked byte-for-byte where the values are known exactly.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .expect("crate lives under crates/")
        .join("wardropian")
        .join("tests")
        .join("data")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wardropian"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary launches")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn toy_assign(out_dir: &Path) {
    let data = data_dir();
    let out = run(
        &[
            "assign",
            "--net",
            data.join("toy_net.tntp").to_str().unwrap(),
            "--trips",
            data.join("toy_trips.tntp").to_str().unwrap(),
            "--city",
            "toy",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_success(&out, "toy assign");
}

#[test]
fn toy_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    toy_assign(dir);

    // Two parallel routes with t = 1 + q and t = 2 + q and 18 drivers: the
    // equilibrium costs 189 vehicle-minutes, the optimum 188.875, and the
    // integerized optimum splits 9/9 at a mean of 10.5 — exact values, so the
    // tables are pinned byte-for-byte, CRLF line endings included.
    assert_eq!(
        read(dir, "poa_summary.csv"),
        "city,total_ue_minutes,total_so_minutes,poa\r\ntoy,189,188.875,1.00\r\n"
    );
    assert_eq!(
        read(dir, "od_fairness.csv"),
        "origin,destination,q,t_hat_so,t_ue,violated\r\n1,2,18,10.5,10.5,false\r\n"
    );
    assert_eq!(
        read(dir, "od_summary.csv"),
        "origin,destination,q,path_count,distinct_times,t_hat,t_ue\r\n\
         1,2,18,2,2,10.5,10.5\r\n"
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir, "run_manifest.json")).expect("manifest is JSON");
    assert_eq!(manifest["command"], "assign");
    assert_eq!(manifest["settings"]["city"], "toy");
    assert!(manifest["tables"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t == "poa_summary.csv"));

    let out = run(
        &[
            "cycle",
            "--out",
            dir.to_str().unwrap(),
            "--methods",
            "full,gcd,partition,balanced",
        ],
        &[],
    );
    assert_success(&out, "toy cycle");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("1 of 1 OD pairs eligible"),
        "OD filter must be logged, got: {stderr}"
    );
    let lengths = read(dir, "cycle_lengths.csv");
    assert!(
        lengths.contains("1,2,full,18,18\r\n"),
        "full cycle spans all 18 drivers"
    );
    assert!(
        lengths.contains("1,2,gcd,2,18\r\n"),
        "flow gcd 9 reduces 18 days to 2"
    );
    assert!(lengths.contains("1,2,balanced,18,18\r\n"));
    // With flows 9/9 every mean-preserving pair forms its own 2-day rotation.
    assert_eq!(lengths.matches("1,2,partition,2,2\r\n").count(), 9);
    let validation = read(dir, "cycle_validation.csv");
    for method in ["full", "gcd", "partition", "balanced"] {
        assert!(
            validation.contains(&format!("1,2,{method},")),
            "{method} row present"
        );
    }
    assert!(
        !validation.contains("false"),
        "every materialized cycle is Wardropian: {validation}"
    );

    let out = run(
        &[
            "simulate",
            "--out",
            dir.to_str().unwrap(),
            "--horizon",
            "50",
        ],
        &[],
    );
    assert_success(&out, "toy simulate");
    let daily = read(dir, "simulation_daily.csv");
    assert_eq!(daily.lines().count(), 51, "header + one row per day");
    // Greedy alternates the two halves, so day 2 is perfectly balanced.
    assert!(
        daily.contains("1,2,2,0,0,10.5,10.5\r\n"),
        "day 2 evens out: {daily}"
    );
    let ratios = read(dir, "inequity_ratios.csv");
    assert!(ratios.starts_with("city,sum_i_1,ratio_5,ratio_10,ratio_20,ratio_50\r\n"));
    assert!(
        ratios.contains("toy,0.0625,0.04,0,0,0"),
        "running-mean inequity decays to zero: {ratios}"
    );

    let out = run(&["report", "--out", dir.to_str().unwrap()], &[]);
    assert_success(&out, "toy report");
    assert!(read(dir, "poa_summary.csv").contains("toy,189,188.875,1.00"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let tables = [
        "path_sets.json",
        "poa_summary.csv",
        "od_fairness.csv",
        "od_summary.csv",
        "cycle_lengths.csv",
        "cycle_stats.csv",
        "cycle_validation.csv",
        "inequity_stats.csv",
        "inequity_ratios.csv",
        "simulation_daily.csv",
        "run_manifest.json",
    ];
    let run_all = || {
        toy_assign(dir);
        assert_success(
            &run(&["cycle", "--out", dir.to_str().unwrap()], &[]),
            "cycle",
        );
        assert_success(
            &run(&["simulate", "--out", dir.to_str().unwrap()], &[]),
            "simulate",
        );
    };
    run_all();
    let first: Vec<String> = tables.iter().map(|t| read(dir, t)).collect();
    run_all();
    for (name, before) in tables.iter().zip(&first) {
        assert_eq!(&read(dir, name), before, "{name} changed between reruns");
    }
}

#[test]
fn config_file_env_dir_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = dir.join("run.conf");
    std::fs::write(
        &config,
        "net = toy_net.tntp      # resolved under $WARDROPIAN_DATA_DIR\n\
         trips = toy_trips.tntp\n\
         city = \"configured\"\n\
         gap = 1e-3\n",
    )
    .unwrap();

    // The explicit flag must beat the configuration file.
    let out = run(
        &[
            "assign",
            "--config",
            config.to_str().unwrap(),
            "--gap",
            "1e-6",
            "--out",
            dir.to_str().unwrap(),
        ],
        &[("WARDROPIAN_DATA_DIR", data_dir().to_str().unwrap())],
    );
    assert_success(&out, "configured assign");
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir, "run_manifest.json")).unwrap();
    assert_eq!(manifest["settings"]["city"], "configured");
    assert_eq!(manifest["settings"]["gap"], 1e-6);

    let archive = read(dir, "path_sets.json");
    let parsed: serde_json::Value = serde_json::from_str(&archive).unwrap();
    assert_eq!(parsed["city"], "configured");
    assert_eq!(parsed["path_sets"].as_array().unwrap().len(), 1);
}

#[test]
fn empty_demand_warns_but_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let trips = dir.join("empty_trips.tntp");
    std::fs::write(
        &trips,
        "<NUMBER OF ZONES> 2\n<TOTAL OD FLOW> 0\n<END OF METADATA>\n\nOrigin 1\n",
    )
    .unwrap();
    let out = run(
        &[
            "assign",
            "--net",
            data_dir().join("toy_net.tntp").to_str().unwrap(),
            "--trips",
            trips.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_success(&out, "empty assign");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("warning:"),
        "must warn about empty demand: {stderr}"
    );
    assert_eq!(
        read(dir, "poa_summary.csv"),
        "city,total_ue_minutes,total_so_minutes,poa\r\n",
        "no PoA row when nothing was assigned"
    );

    // Downstream commands still work and produce header-only tables.
    let out = run(&["simulate", "--out", dir.to_str().unwrap()], &[]);
    assert_success(&out, "empty simulate");
    assert_eq!(
        read(dir, "simulation_daily.csv"),
        "origin,destination,day,i,i_bar,min_mean,max_mean\r\n"
    );
}

#[test]
fn failures_exit_nonzero_with_error_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out_dir = dir.to_str().unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (
            vec![
                "assign",
                "--net",
                "/definitely/missing.tntp",
                "--trips",
                "/x.tntp",
                "--out",
                out_dir,
            ],
            "missing network file",
        ),
        (
            vec![
                "cycle",
                "--archive",
                "/definitely/missing.json",
                "--out",
                out_dir,
            ],
            "missing archive",
        ),
        (
            vec!["oracle", "--times", "1,2", "--flows", "1"],
            "mismatched oracle lists",
        ),
        (
            vec!["oracle", "--times", "1,banana", "--flows", "1,1"],
            "unparsable oracle entry",
        ),
    ];
    for (args, what) in cases {
        let out = run(&args, &[]);
        assert!(!out.status.success(), "{what} must exit nonzero");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(
            stderr.contains("error:"),
            "{what} must print an error: {stderr}"
        );
    }

    let config = dir.join("bad.conf");
    std::fs::write(&config, "frobnicate = 7\n").unwrap();
    let out = run(&["assign", "--config", config.to_str().unwrap()], &[]);
    assert!(
        !out.status.success(),
        "unknown config key must exit nonzero"
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key"));
}

fn write_archive(dir: &Path, path_sets: serde_json::Value) -> PathBuf {
    let archive = serde_json::json!({
        "city": "handmade",
        "gap_target": 1e-4,
        "ue_total_minutes": 0.0,
        "so_total_minutes": 0.0,
        "poa": null,
        "violating_fraction": 0.0,
        "fairness": [],
        "path_sets": path_sets,
    });
    let file = dir.join("path_sets.json");
    std::fs::write(&file, serde_json::to_string_pretty(&archive).unwrap()).unwrap();
    file
}

#[test]
fn hand_written_three_route_archive_gives_classic_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // 18 drivers over paths of 9, 14 and 15 minutes (flows 8/6/4, mean 12).
    let archive = write_archive(
        dir,
        serde_json::json!([{
            "origin": 1, "destination": 2, "q": 18,
            "paths": [
                {"links": [], "flow": 8, "time": 9.0},
                {"links": [], "flow": 6, "time": 14.0},
                {"links": [], "flow": 4, "time": 15.0},
            ],
            "t_hat": 12.0, "t_ue": null,
        }]),
    );
    let out = run(
        &[
            "cycle",
            "--archive",
            archive.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_success(&out, "three-route cycle");
    let lengths = read(dir, "cycle_lengths.csv");
    assert!(
        lengths.contains("1,2,full,18,18\r\n"),
        "full rotation takes 18 days"
    );
    assert!(
        lengths.contains("1,2,gcd,9,18\r\n"),
        "flow gcd 2 reduces the rotation to 9 days: {lengths}"
    );
    // The maximal mean-preserving split: four 2-driver groups + two 5-driver
    // groups, each rotating within itself.
    assert_eq!(
        lengths.matches("1,2,partition,2,2\r\n").count(),
        4,
        "{lengths}"
    );
    assert_eq!(
        lengths.matches("1,2,partition,5,5\r\n").count(),
        2,
        "{lengths}"
    );
    assert!(!read(dir, "cycle_validation.csv").contains("false"));
}

#[test]
fn single_path_ods_collapse_to_one_day_cycles() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let archive = write_archive(
        dir,
        serde_json::json!([{
            "origin": 3, "destination": 4, "q": 7,
            "paths": [{"links": [], "flow": 7, "time": 3.0}],
            "t_hat": 3.0, "t_ue": null,
        }]),
    );
    // The default eligibility filter drops single-path ODs; admit them here.
    let out = run(
        &[
            "cycle",
            "--archive",
            archive.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--min-paths",
            "1",
            "--methods",
            "full,gcd,partition,balanced",
        ],
        &[],
    );
    assert_success(&out, "single-path cycle");
    let lengths = read(dir, "cycle_lengths.csv");
    for row in lengths.lines().skip(1) {
        let length = row.split(',').nth(3).expect("length column");
        assert_eq!(length, "1", "no rotation exists with one path: {row}");
    }
    assert!(lengths.contains("3,4,full,1,7\r\n"), "{lengths}");
    assert!(lengths.contains("3,4,gcd,1,7\r\n"), "{lengths}");
    assert_eq!(
        lengths.matches("3,4,partition,1,1\r\n").count(),
        7,
        "{lengths}"
    );
    let validation = read(dir, "cycle_validation.csv");
    assert!(!validation.contains("false"), "{validation}");
}

#[test]
fn oracle_reports_exact_optima() {
    // Six unit-flow routes with times (8, 8, 5, 1, 1, 1): the best
    // single-rotation cycle reaches a maximum |window sum| of 5, while an
    // unrestricted compatible schedule achieves 4 — the classic separation.
    let out = run(
        &[
            "oracle",
            "--times",
            "8,8,5,1,1,1",
            "--flows",
            "1,1,1,1,1,1",
            "--op",
            "all",
        ],
        &[],
    );
    assert_success(&out, "oracle");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("6 paths, 6 drivers, mean time 4"),
        "{stdout}"
    );
    assert!(
        stdout.contains("restricted-cycle: optimal max |window sum| 5"),
        "{stdout}"
    );
    assert!(
        stdout.contains("compatible-schedule: optimal max |prefix sum| 4"),
        "{stdout}"
    );
    assert!(
        stdout.contains("partition: no nontrivial mean-preserving split"),
        "{stdout}"
    );

    // A two-route instance with flows 9 and 9 splits into nine pairs.
    let out = run(
        &[
            "oracle",
            "--times",
            "10,11",
            "--flows",
            "1,1",
            "--op",
            "partition",
        ],
        &[],
    );
    assert_success(&out, "partition oracle");
    assert!(
        String::from_utf8_lossy(&out.stdout).contains("partition:"),
        "partition line printed"
    );
}
