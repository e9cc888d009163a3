//! Behavior of the `storval` binary: output contents, exit codes and
//! file-format diagnostics.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let mut path = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    path.push("fixtures");
    path.push(name);
    path.to_string_lossy().into_owned()
}

fn storval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn csv_value(csv: &str, quantity: &str, index: &str) -> f64 {
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] == quantity && fields[1] == index {
            return fields[2].parse().unwrap();
        }
    }
    panic!("no row for {quantity},{index} in:\n{csv}");
}

#[test]
fn ed_reports_reference_prices() {
    let output = storval(&["ed", "--net", &fixture("two_node.net"), "--xi", "3,-2"]);
    assert!(output.status.success());
    let csv = stdout(&output);
    assert!((csv_value(&csv, "price", "1") - 10.0).abs() <= 1e-9);
    assert!((csv_value(&csv, "price", "2") - 2.0).abs() <= 1e-9);
    assert!((csv_value(&csv, "cost", "1") - 18.0).abs() <= 1e-9);
    assert!((csv_value(&csv, "flow", "1") + 1.0).abs() <= 1e-9);
}

#[test]
fn ed_rejects_wrong_demand_arity() {
    let output = storval(&["ed", "--net", &fixture("two_node.net"), "--xi", "3"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_passes_on_reference_fixture() {
    let output = storval(&[
        "verify",
        "--net",
        &fixture("copperplate.net"),
        "--tree",
        &fixture("iid2_cp_n3.tree"),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = stdout(&output);
    assert!(csv.lines().count() > 5);
    assert!(!csv.contains(",false"));
}

#[test]
fn lmv_on_constant_tree_is_zero() {
    let output = storval(&[
        "lmv",
        "--net",
        &fixture("copperplate.net"),
        "--tree",
        &fixture("const_cp_n3.tree"),
    ]);
    assert!(output.status.success());
    let csv = stdout(&output);
    let row = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn lmv_reference_values_on_strict_slack_fixture() {
    let output = storval(&[
        "lmv",
        "--net",
        &fixture("two_node_het.net"),
        "--tree",
        &fixture("strict_slack.tree"),
        "--gamma",
        "0.8",
    ]);
    assert!(output.status.success());
    let csv = stdout(&output);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let lmv: f64 = row[1].parse().unwrap();
    let upper: f64 = row[2].parse().unwrap();
    assert!((lmv - 2.4).abs() <= 1e-9);
    assert!((upper - 2.76).abs() <= 1e-9);
    assert_eq!(row[5], "false");
}

#[test]
fn malformed_network_exits_2_with_line_number() {
    let dir = std::env::temp_dir().join("storval_cli_test_badnet");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.net");
    std::fs::write(&path, "storval-net/1\nnodes 1\nnode 1 10 2 0\nwires 1 2\n").unwrap();
    let output = storval(&["ed", "--net", path.to_str().unwrap(), "--xi", "1"]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 4"), "{stderr}");
}

#[test]
fn boundary_demand_tree_exits_1() {
    let dir = std::env::temp_dir().join("storval_cli_test_boundary");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("boundary.tree");
    std::fs::write(
        &path,
        "storval-tree/1\nhorizon 2\nnode 0 0 - 1 0.5 -0.5\nnode 1 1 0 1 1 1\n",
    )
    .unwrap();
    let output = storval(&[
        "lmv",
        "--net",
        &fixture("two_node.net"),
        "--tree",
        path.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("boundary"), "{stderr}");
}

#[test]
fn gen_tree_round_trips_bit_exactly() {
    let output = storval(&[
        "gen-tree",
        "markov",
        "--states",
        "3,-2;-2,0.4",
        "--transition",
        "0.7,0.3;0.4,0.6",
        "--initial",
        "0.6,0.4",
        "--horizon",
        "4",
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    let parsed = storval::scenario::parse_tree(&text, storval::config::DEFAULT_NODE_BUDGET)
        .expect("generated tree parses");
    let rewritten = storval::scenario::write_tree(&parsed);
    assert_eq!(text, rewritten);
}

#[test]
fn limits_match_library_values() {
    let output = storval(&[
        "limits",
        "--net",
        &fixture("two_node.net"),
        "--tree",
        &fixture("iid2_sym_n3.tree"),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = stdout(&output);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("node,lmv_f_zero,lmv_f_inf"));
}

#[test]
fn dp_samples_are_monotone() {
    let output = storval(&[
        "dp",
        "--net",
        &fixture("two_node.net"),
        "--tree",
        &fixture("iid2_tn_n3.tree"),
        "--cap",
        "0.8,0",
        "--steps",
        "5",
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = stdout(&output);
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|line| line.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 5);
    for pair in values.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-10, "{values:?}");
    }
}

#[test]
fn grid_emits_price_samples() {
    let output = storval(&["grid", "--net", &fixture("two_node.net"), "--grid=-2:2:9"]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = stdout(&output);
    assert_eq!(csv.lines().count(), 82);
    // Deep in the shortage quadrant both buses price at generation cost.
    let shortage = csv
        .lines()
        .find(|line| line.starts_with("2.0000000000000000e0,2.0000000000000000e0"))
        .unwrap();
    let fields: Vec<&str> = shortage.split(',').collect();
    assert!((fields[2].parse::<f64>().unwrap() - 10.0).abs() <= 1e-9);
    assert!((fields[3].parse::<f64>().unwrap() - 10.0).abs() <= 1e-9);
}

#[test]
fn verify_passes_on_cyclic_fixture() {
    let output = storval(&[
        "verify",
        "--net",
        &fixture("triangle_loop.net"),
        "--tree",
        &fixture("iid3_tri_n3.tree"),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = stdout(&output);
    assert!(csv.contains("not applicable: network contains a cycle"));
}

#[test]
fn nonpositive_tolerance_exits_2() {
    let output = storval(&[
        "ed",
        "--net",
        &fixture("two_node.net"),
        "--xi",
        "3,-2",
        "--tol-balance",
        "0",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn gamma_out_of_range_exits_2() {
    let output = storval(&[
        "lmv",
        "--net",
        &fixture("copperplate.net"),
        "--tree",
        &fixture("iid2_cp_n3.tree"),
        "--gamma",
        "1.5",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn limits_on_wrong_network_exits_2() {
    let output = storval(&[
        "limits",
        "--net",
        &fixture("triangle.net"),
        "--tree",
        &fixture("iid2_tn_n3.tree"),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn every_shipped_fixture_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut nets = 0;
    let mut trees = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("net") => {
                storval::network::parse_network(&text)
                    .unwrap_or_else(|err| panic!("{}: {err}", path.display()));
                nets += 1;
            }
            Some("tree") => {
                storval::scenario::parse_tree(&text, storval::config::DEFAULT_NODE_BUDGET)
                    .unwrap_or_else(|err| panic!("{}: {err}", path.display()));
                trees += 1;
            }
            other => panic!("unexpected fixture type {other:?} at {}", path.display()),
        }
    }
    assert!(nets >= 8, "only {nets} network fixtures");
    assert!(trees >= 7, "only {trees} tree fixtures");
}

#[test]
fn workers_flag_gives_identical_output() {
    let run = |workers: &str| {
        storval(&[
            "lmv",
            "--net",
            &fixture("two_node_het.net"),
            "--tree",
            &fixture("strict_slack.tree"),
            "--workers",
            workers,
        ])
    };
    let one = run("1");
    let four = run("4");
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}
