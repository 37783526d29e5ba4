//! End-to-end CLI behavior: exit codes, file outputs, subcommand plumbing.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_profitmax"))
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

#[test]
fn run_writes_csv_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    let out = dir.path().join("out.csv");
    write(&graph, "0 1\n1 2\n2 0\n3 0\n");
    write(&catalog, "1.0 1.0\n2.0 2.0\n");
    let status = bin()
        .args([
            "run",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget-list",
            "1,2",
            "--algorithms",
            "random,greedy_mc",
            "--baseline-estimator",
            "coverage:2000",
            "--eval-trials",
            "500",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("record,dataset,algorithm,budget,seed"));
    assert!(csv.lines().any(|l| l.starts_with("profit,g,random,1,3")));
    assert!(csv.lines().any(|l| l.starts_with("allocation,g,greedy_mc,2,3,2")));
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    write(&graph, "0 1\n");
    write(&catalog, "1.0 1.0\n");
    let status = bin()
        .args([
            "run",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget-list",
            "1",
            "--algorithms",
            "rmg,definitely_not_an_algorithm",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    write(&graph, "0 1\nthis is not an edge\n");
    write(&catalog, "1.0 1.0\n");
    let out = bin()
        .args([
            "run",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget-list",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("g.txt:2"), "stderr: {stderr}");
}

#[test]
fn infeasible_budget_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    write(&graph, "0 1\n1 2\n");
    write(&catalog, "1.0 5.0\n");
    let status = bin()
        .args([
            "run",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget-list",
            "1,2",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn oracle_reports_the_hand_checked_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    // two-edge chain with explicit probabilities 0.5
    write(&graph, "0 1 0.5\n1 2 0.5\n");
    write(&catalog, "1.0 1.0\n2.0 2.0\n");
    let out = bin()
        .args([
            "oracle",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("optimum: 5.25"), "stdout: {stdout}");
    assert!(stdout.contains("product 1: [0]"), "stdout: {stdout}");
    assert!(stdout.contains("product 2: [0]"), "stdout: {stdout}");
}

#[test]
fn gen_then_run_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    write(&catalog, "1.0 1.0\n");
    assert!(bin()
        .args([
            "gen",
            "--nodes",
            "80",
            "--avg-degree",
            "3",
            "--seed",
            "9",
            "--out",
            graph.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let status = bin()
        .args([
            "run",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget-list",
            "2",
            "--algorithms",
            "random",
            "--eval-trials",
            "200",
        ])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn rr_cache_dump_and_info_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    let cache = dir.path().join("rc.bin");
    write(&graph, "0 1\n1 2\n2 0\n");
    write(&catalog, "1.0 1.0\n0.5 0.5\n");
    assert!(bin()
        .args([
            "rr-cache",
            "dump",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--theta",
            "500",
            "--seed",
            "4",
            "--out",
            cache.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let out = bin()
        .args(["rr-cache", "info", "--file", cache.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("n: 3"));
    assert!(stdout.contains("q: 2"));
    assert!(stdout.contains("theta: 500"));

    // corrupting the magic must fail the loader
    let mut bytes = fs::read(&cache).unwrap();
    bytes[0] ^= 0x55;
    fs::write(&cache, bytes).unwrap();
    let status = bin()
        .args(["rr-cache", "info", "--file", cache.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn opt_bound_emits_one_row_per_budget() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let catalog = dir.path().join("cat.txt");
    let out = dir.path().join("bounds.csv");
    write(&graph, "0 1\n1 2\n2 3\n3 0\n");
    write(&catalog, "1.0 1.0\n");
    let status = bin()
        .args([
            "opt-bound",
            "--dataset",
            graph.to_str().unwrap(),
            "--catalog",
            catalog.to_str().unwrap(),
            "--budget-list",
            "1,2",
            "--eps-prime",
            "0.4",
            "--eps-bar",
            "0.4",
            "--theta-eval",
            "2000",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("dataset,budget,seed,u_star,u_refined,u_final,theta_required"));
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let u_star: f64 = fields[3].parse().unwrap();
        let u_final: f64 = fields[5].parse().unwrap();
        assert!(u_final >= u_star);
    }
}
