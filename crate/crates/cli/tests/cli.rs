//! End-to-end tests of the `nestchoice` binary: each subcommand is exercised
//! through files and process exit codes, and outputs are cross-checked
//! against the library evaluated in-process.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nestchoice::cnl::gnl_prob;
use nestchoice::io;
use nestchoice::models::{full_choice_table, NestedLogitModel};
use nestchoice::partition::NestStructure;
use nestchoice::universe::{Menu, Universe};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nestchoice"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn nestchoice")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).expect("read output file")
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn simulate_writes_model_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let model = tmp(&dir, "model.json");
    let table = tmp(&dir, "table.json");
    let noisy = tmp(&dir, "noisy.json");
    let out = run(&[
        "simulate",
        "--seed",
        "11",
        "--delta",
        "0.02",
        "--out-model",
        model.to_str().unwrap(),
        "--out-table",
        table.to_str().unwrap(),
        "--out-perturbed",
        noisy.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).is_empty(), "file outputs silence stdout");

    let model = io::nsc_from_json(&read(&model)).unwrap();
    let exact = io::table_from_json(&read(&table)).unwrap();
    let noisy = io::table_from_json(&read(&noisy)).unwrap();
    assert_eq!(model.structure().k(), 2);
    assert_eq!(exact.universe().len(), 6);
    assert!(exact.is_complete());

    // The exact table is the model's table; the noisy one differs but stays
    // a probability table.
    let rebuilt = full_choice_table(&model).unwrap();
    for (menu, row) in rebuilt.rows() {
        assert_eq!(exact.row(menu).unwrap(), row);
    }
    for (_, row) in noisy.rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn simulate_without_outputs_prints_the_table() {
    let out = run(&["simulate", "--seed", "11"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.ends_with('\n'), "output is newline-terminated");
    let table = io::table_from_json(&text).unwrap();
    assert_eq!(table.len(), 63);
}

#[test]
fn identify_ranks_the_true_partition_first() {
    let dir = tempfile::tempdir().unwrap();
    let table = tmp(&dir, "table.json");
    let out = run(&["simulate", "--seed", "5", "--out-table", table.to_str().unwrap()]);
    assert!(out.status.success());

    let out = run(&["identify", "--table", table.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let ranked = report.as_array().unwrap();
    assert!(ranked.len() > 1);
    assert_eq!(
        ranked[0]["partition"],
        serde_json::json!([["x1", "x2", "x3"], ["x4", "x5", "x6"]])
    );
    assert!(ranked[0]["total"].as_f64().unwrap() < 1e-18);
    assert!(ranked[1]["total"].as_f64().unwrap() > 1e-12);

    // The screened search agrees on an exact table.
    let reduced = run(&["identify", "--table", table.to_str().unwrap(), "--reduced"]);
    assert!(reduced.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&reduced)).unwrap();
    assert_eq!(
        report.as_array().unwrap()[0]["partition"],
        serde_json::json!([["x1", "x2", "x3"], ["x4", "x5", "x6"]])
    );
}

#[test]
fn sample_produces_consistent_counts() {
    let dir = tempfile::tempdir().unwrap();
    let table_path = tmp(&dir, "table.json");
    run(&["simulate", "--seed", "9", "--out-table", table_path.to_str().unwrap()]);

    let out = run(&[
        "sample",
        "--table",
        table_path.to_str().unwrap(),
        "--draws",
        "250",
        "--seed",
        "4",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let dataset = io::dataset_from_csv(&stdout(&out)).unwrap();
    let table = io::table_from_json(&read(&table_path)).unwrap();
    let mut menus = 0usize;
    for (menu, counts) in dataset.rows() {
        assert!(table.row(menu).is_some(), "sampled menu exists in the table");
        assert_eq!(counts.iter().sum::<u64>(), 250, "draws per menu");
        menus += 1;
    }
    assert_eq!(menus, table.len());

    // A model file works as the input too, via its full table.
    let model_path = tmp(&dir, "model.json");
    run(&["simulate", "--seed", "9", "--out-model", model_path.to_str().unwrap()]);
    let from_model = run(&[
        "sample",
        "--model",
        model_path.to_str().unwrap(),
        "--draws",
        "250",
        "--seed",
        "4",
    ]);
    assert!(from_model.status.success());
    assert_eq!(stdout(&from_model), stdout(&out), "same table, seed: same draws");
}

#[test]
fn check_passes_and_fails_with_matching_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let table = tmp(&dir, "table.json");
    run(&["simulate", "--seed", "3", "--out-table", table.to_str().unwrap()]);

    // Every nested model satisfies similarity-independence.
    let ok = run(&["check", "--table", table.to_str().unwrap(), "--axioms", "isa"]);
    assert!(ok.status.success(), "stderr: {}", stderr(&ok));
    let report: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(report[0]["axiom"], "isa");
    assert_eq!(report[0]["passed"], true);

    // A two-block model with nonconstant nest values breaks menu
    // independence; the report still lands on stdout, the error on stderr.
    let bad = run(&["check", "--table", table.to_str().unwrap(), "--axioms", "iia,isa"]);
    assert_eq!(bad.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(report[0]["axiom"], "iia");
    assert_eq!(report[0]["passed"], false);
    assert_eq!(report[1]["passed"], true);
    let err: serde_json::Value = serde_json::from_str(&stderr(&bad)).unwrap();
    assert_eq!(err["error"], "axiom-violations");
    assert!(err["message"].as_str().unwrap().contains("iia"));

    let all = run(&["check", "--table", table.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&all)).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 13, "--axioms defaults to all");
}

#[test]
fn recover_round_trips_the_generating_model() {
    let dir = tempfile::tempdir().unwrap();
    let table_path = tmp(&dir, "table.json");
    run(&["simulate", "--seed", "21", "--out-table", table_path.to_str().unwrap()]);

    let out = run(&["recover", "--table", table_path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let recovered = io::nsc_from_json(&stdout(&out)).unwrap();
    let table = io::table_from_json(&read(&table_path)).unwrap();
    let rebuilt = full_choice_table(&recovered).unwrap();
    for (menu, row) in table.rows() {
        let other = rebuilt.row(menu).unwrap();
        for (p, q) in row.iter().zip(other) {
            assert!((p - q).abs() < 1e-10, "recovered model reproduces the table");
        }
    }

    // Three layers: a plain table recovers with mergeable outer structure.
    let three = run(&[
        "recover",
        "--table",
        table_path.to_str().unwrap(),
        "--layers",
        "3",
    ]);
    assert!(three.status.success(), "stderr: {}", stderr(&three));
    let model = io::three_step_from_json(&stdout(&three)).unwrap();
    let rebuilt = full_choice_table(&model).unwrap();
    for (menu, row) in table.rows() {
        let other = rebuilt.row(menu).unwrap();
        for (p, q) in row.iter().zip(other) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

#[test]
fn fit_eta_detects_a_nested_logit() {
    let dir = tempfile::tempdir().unwrap();
    let universe = Universe::indexed(5).unwrap();
    let structure = NestStructure::new(
        vec![Menu::from_members([0, 1, 2]), Menu::from_members([3, 4])],
        5,
    )
    .unwrap();
    let eta = vec![0.7, 1.3];
    let model =
        NestedLogitModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5, 0.8], eta.clone())
            .unwrap();
    let table_path = tmp(&dir, "table.json");
    std::fs::write(&table_path, io::table_to_json(&full_choice_table(&model).unwrap()).unwrap())
        .unwrap();

    let out = run(&["fit-eta", "--table", table_path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let fit: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(fit["nested_logit"], true);
    assert_eq!(fit["violation"], serde_json::Value::Null);
    for (got, want) in fit["eta"].as_array().unwrap().iter().zip(&eta) {
        assert!((got.as_f64().unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn fit_cnl_reproduces_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let table_path = tmp(&dir, "table.json");
    run(&[
        "simulate",
        "--seed",
        "2",
        "--blocks",
        "1,2|3",
        "--out-table",
        table_path.to_str().unwrap(),
    ]);

    let diag_path = tmp(&dir, "diag.json");
    let out = run(&[
        "fit-cnl",
        "--table",
        table_path.to_str().unwrap(),
        "--diagnostics",
        diag_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let model = io::cnl_from_json(&stdout(&out)).unwrap();
    let table = io::table_from_json(&read(&table_path)).unwrap();
    for (menu, row) in table.rows() {
        for (pos, a) in menu.members().enumerate() {
            let p = gnl_prob(&model, a, menu).unwrap();
            assert!((p - row[pos]).abs() < 1e-8, "cnl reproduces the table");
        }
    }
    let diag: serde_json::Value = serde_json::from_str(&read(&diag_path)).unwrap();
    assert!(diag["iterations"].as_u64().unwrap() > 0);
    assert!(diag["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn replicate_figure_emits_one_row_per_delta() {
    let out = run(&[
        "replicate-figure",
        "--deltas",
        "0,0.01",
        "--trials",
        "5",
        "--seed",
        "1",
        "--reduced",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "delta,trials,correct,rate,ci_low,ci_high");
    assert_eq!(lines.len(), 3);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "5");
    assert_eq!(first[2], "5", "noiseless identification is exact");
    assert_eq!(first[3], "1");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let args = [
        "replicate-figure",
        "--deltas",
        "0,0.05",
        "--trials",
        "6",
        "--seed",
        "13",
        "--reduced",
    ];
    let one = bin().arg("--threads").arg("1").args(args).output().unwrap();
    let four = bin().arg("--threads").arg("4").args(args).output().unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout, "byte-identical across thread counts");
}

#[test]
fn distance_table_covers_all_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let table = tmp(&dir, "table.json");
    run(&["simulate", "--seed", "17", "--out-table", table.to_str().unwrap()]);
    let out = run(&["distance", "--table", table.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a,b,d,count");
    assert_eq!(lines.len(), 1 + 15, "one row per unordered pair of 6");

    // Same-block pairs sit at zero; cross-block pairs do not.
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        let d: f64 = cells[2].parse().unwrap();
        let block = |name: &str| matches!(name, "x1" | "x2" | "x3");
        if block(cells[0]) == block(cells[1]) {
            assert!(d < 1e-12, "{line}");
        } else {
            assert!(d > 1e-3, "{line}");
        }
    }
}

#[test]
fn dataset_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let table = tmp(&dir, "table.json");
    let data = tmp(&dir, "data.csv");
    run(&["simulate", "--seed", "29", "--out-table", table.to_str().unwrap()]);
    let out = run(&[
        "sample",
        "--table",
        table.to_str().unwrap(),
        "--draws",
        "4000",
        "--seed",
        "8",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // Smoothed counts identify the generating partition at this sample size.
    let out = run(&[
        "identify",
        "--data",
        data.to_str().unwrap(),
        "--smoothing",
        "--reduced",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        report.as_array().unwrap()[0]["partition"],
        serde_json::json!([["x1", "x2", "x3"], ["x4", "x5", "x6"]])
    );

    let out = run(&["distance", "--data", data.to_str().unwrap(), "--smoothing"]);
    assert!(out.status.success());
}

#[test]
fn usage_errors_exit_two() {
    // Missing required --seed.
    let out = run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"));

    // Unknown axiom name.
    let dir = tempfile::tempdir().unwrap();
    let table = tmp(&dir, "table.json");
    run(&["simulate", "--seed", "1", "--out-table", table.to_str().unwrap()]);
    let out = run(&["check", "--table", table.to_str().unwrap(), "--axioms", "luce"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown axiom"));

    // Malformed --blocks.
    let out = run(&["simulate", "--seed", "1", "--blocks", "1,2|zero"]);
    assert_eq!(out.status.code(), Some(2));

    // --smoothing without --data.
    let out = run(&["identify", "--table", table.to_str().unwrap(), "--smoothing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one_with_json_stderr() {
    // Input file does not exist.
    let out = run(&["identify", "--table", "/nonexistent/table.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(&stderr(&out)).unwrap();
    assert_eq!(err["error"], "file-io");
    assert!(err["message"].as_str().unwrap().contains("table.json"));

    // Valid JSON, invalid table.
    let dir = tempfile::tempdir().unwrap();
    let bad = tmp(&dir, "bad.json");
    std::fs::write(&bad, "{\"universe\": [], \"menus\": []}").unwrap();
    let out = run(&["recover", "--table", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(&stderr(&out)).unwrap();
    assert!(err["error"].is_string());
}
