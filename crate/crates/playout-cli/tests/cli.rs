//! End-to-end tests of the `playout` binary: subcommand output, formats,
//! determinism and exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn playout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_playout"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn tmp(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("playout-cli-test-{}-{name}", std::process::id()));
    path
}

/// Field lookup in `field<TAB>value` output.
fn field(report: &str, name: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name}\t")))
        .unwrap_or_else(|| panic!("field {name} missing in:\n{report}"))
        .to_string()
}

#[test]
fn gen_is_deterministic_and_writes_files() {
    let a = tmp("gen-a.ptrace.csv");
    let b = tmp("gen-b.ptrace.csv");
    let args = [
        "gen", "--seed", "7", "--n", "1000", "--tail", "pareto:20,2", "--loss", "0.02,0.5",
    ];
    let run_a = playout(&[&args[..], &["-o", a.to_str().unwrap()]].concat());
    assert!(run_a.status.success(), "{}", stderr(&run_a));
    let run_b = playout(&[&args[..], &["-o", b.to_str().unwrap()]].concat());
    assert!(run_b.status.success());
    let text_a = std::fs::read_to_string(&a).unwrap();
    let text_b = std::fs::read_to_string(&b).unwrap();
    assert_eq!(text_a, text_b);
    assert!(text_a.starts_with("# generator:"));
    assert!(text_a.contains("seq,send_ms,recv_ms"));
    std::fs::remove_file(a).ok();
    std::fs::remove_file(b).ok();
}

#[test]
fn gen_rejects_bad_parameters_with_exit_1() {
    let out = playout(&["gen", "--tail", "pareto:20,-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("positive scale and shape"));

    let out = playout(&["gen", "--loss", "2,0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_recognizes_pareto_delays() {
    let path = tmp("fit.ptrace.csv");
    let gen = playout(&[
        "gen", "--seed", "11", "--n", "3000", "--tail", "pareto:20,1.5", "--base", "40",
        "-o", path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = playout(&["fit", path.to_str().unwrap(), "--window", "1000"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    assert_eq!(field(&report, "ks_best"), "pareto");
    assert_eq!(field(&report, "rho_n"), "0.000000");
    assert_eq!(field(&report, "burst_ratio"), "1.000000");
    std::fs::remove_file(path).ok();
}

#[test]
fn fit_reports_loss_models() {
    let path = tmp("fit-loss.ptrace.csv");
    let gen = playout(&[
        "gen", "--seed", "13", "--n", "20000", "--loss", "0.05,0.4",
        "-o", path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = playout(&["fit", path.to_str().unwrap(), "--window", "20000"]);
    assert!(out.status.success());
    let report = stdout(&out);
    let p: f64 = field(&report, "gilbert_p").parse().unwrap();
    let q: f64 = field(&report, "gilbert_q").parse().unwrap();
    assert!((p - 0.05).abs() / 0.05 < 0.2, "p {p}");
    assert!((q - 0.4).abs() / 0.4 < 0.2, "q {q}");
    std::fs::remove_file(path).ok();
}

#[test]
fn fit_propagates_parse_errors_as_exit_2() {
    let path = tmp("fit-empty.csv");
    std::fs::write(&path, "").unwrap();
    let out = playout(&["fit", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("parse error"));
    std::fs::remove_file(path).ok();
}

#[test]
fn optimize_golden_case_agrees_with_grid_check() {
    let out = playout(&[
        "optimize", "--scale", "60", "--shape", "1.5", "--rho-n", "0.01", "--burst-r", "1.5",
        "--ie", "10", "--bpl", "19",
    ]);
    assert!(out.status.success());
    let report = stdout(&out);
    assert_eq!(field(&report, "closed_form_pd_ms"), "265.752928");
    let closed: f64 = field(&report, "closed_form_pd_ms").parse().unwrap();
    let check: f64 = field(&report, "grid_check_pd_ms").parse().unwrap();
    // One multiplicative step of the default 200-point grid near 265 ms.
    assert!((closed - check).abs() <= 5.0);
    let mos: f64 = field(&report, "e_mos").parse().unwrap();
    assert!((mos - 2.388583).abs() < 1e-5);
}

#[test]
fn optimize_clamps_tiny_delay_traces() {
    let path = tmp("opt-tiny.ptrace.csv");
    let gen = playout(&[
        "gen", "--seed", "3", "--n", "2000", "--base", "20", "--tail", "exponential:1",
        "-o", path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = playout(&["optimize", "--trace", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "closed_form_pd_ms"), "150.000000");
    std::fs::remove_file(path).ok();
}

#[test]
fn optimize_grid_points_change_only_the_check_value() {
    let base = playout(&[
        "optimize", "--scale", "60", "--shape", "1.5", "--rho-n", "0.01", "--burst-r", "1.5",
        "--ie", "10", "--bpl", "19",
    ]);
    let fine = playout(&[
        "optimize", "--scale", "60", "--shape", "1.5", "--rho-n", "0.01", "--burst-r", "1.5",
        "--ie", "10", "--bpl", "19", "--grid-points", "4000",
    ]);
    let base_rep = stdout(&base);
    let fine_rep = stdout(&fine);
    assert_eq!(
        field(&base_rep, "closed_form_pd_ms"),
        field(&fine_rep, "closed_form_pd_ms")
    );
    let coarse_check: f64 = field(&base_rep, "grid_check_pd_ms").parse().unwrap();
    let fine_check: f64 = field(&fine_rep, "grid_check_pd_ms").parse().unwrap();
    let closed: f64 = field(&base_rep, "closed_form_pd_ms").parse().unwrap();
    assert!((fine_check - closed).abs() < (coarse_check - closed).abs());
}

#[test]
fn optimize_requires_a_parameter_source() {
    let out = playout(&["optimize"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--scale"));
}

#[test]
fn compare_emits_one_row_per_algorithm() {
    let path = tmp("compare.ptrace.csv");
    let gen = playout(&[
        "gen", "--seed", "42", "--n", "4000", "--tail", "pareto:10,1.5", "--base", "20",
        "--loss", "0.02,0.5", "-o", path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = playout(&[
        "compare", path.to_str().unwrap(),
        "--algorithms", "proposed,p-optimum,exp-avg,f-exp-avg,min-del,spike-det",
        "--ie", "11", "--bpl", "40",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 7, "header + six rows:\n{report}");
    assert!(lines[0].starts_with("algorithm\te_mos"));
    let emos = |line: &str| -> f64 {
        line.split('\t').nth(1).unwrap().parse().unwrap()
    };
    let proposed = emos(lines.iter().find(|l| l.starts_with("proposed")).unwrap());
    let grid = emos(lines.iter().find(|l| l.starts_with("p-optimum")).unwrap());
    assert!((proposed - grid).abs() <= 0.02);
    std::fs::remove_file(path).ok();
}

#[test]
fn compare_lists_valid_names_on_unknown_algorithm() {
    let path = tmp("compare-bad.ptrace.csv");
    std::fs::write(&path, "seq,send_ms,recv_ms\n1,0,40\n2,30,75\n").unwrap();
    let out = playout(&["compare", path.to_str().unwrap(), "--algorithms", "warp-drive"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for name in ["proposed", "p-optimum", "exp-avg", "f-exp-avg", "min-del", "spike-det"] {
        assert!(err.contains(name), "{err}");
    }
    std::fs::remove_file(path).ok();
}

#[test]
fn compare_detail_appends_talkspurt_rows() {
    let path = tmp("compare-detail.ptrace.csv");
    let gen = playout(&[
        "gen", "--seed", "5", "--n", "1500", "-o", path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = playout(&[
        "compare", path.to_str().unwrap(), "--algorithms", "proposed", "--detail",
    ]);
    assert!(out.status.success());
    let report = stdout(&out);
    let blocks: Vec<&str> = report.split("\n\n").collect();
    assert_eq!(blocks.len(), 2, "summary and detail blocks:\n{report}");
    assert!(blocks[1].starts_with("algorithm\ttalkspurt"));
    assert!(blocks[1].lines().count() > 10);
    std::fs::remove_file(path).ok();
}

#[test]
fn compare_strict_escalates_degenerate_windows() {
    let path = tmp("compare-constant.ptrace.csv");
    // Constant delays: the tail fit degenerates on every talkspurt after
    // the first, so the run succeeds with warnings.
    let mut text = String::from("seq,send_ms,recv_ms\n");
    for i in 0..400u32 {
        let send = i * 30;
        text.push_str(&format!("{},{},{}\n", i + 1, send, send + 40));
    }
    std::fs::write(&path, text).unwrap();
    let relaxed = playout(&["compare", path.to_str().unwrap(), "--algorithms", "proposed"]);
    assert_eq!(relaxed.status.code(), Some(0));
    assert!(stderr(&relaxed).contains("warning:"));

    let strict = playout(&[
        "compare", path.to_str().unwrap(), "--algorithms", "proposed", "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(3));
    std::fs::remove_file(path).ok();
}

#[test]
fn curves_row_count_and_zero_points() {
    let out = playout(&["curves", "--lo", "150", "--hi", "500", "--step", "1"]);
    assert!(out.status.success());
    let report = stdout(&out);
    assert_eq!(report.lines().count(), 352, "header + 351 sweep rows");
    let first = report.lines().nth(1).unwrap();
    let cols: Vec<&str> = first.split('\t').collect();
    assert_eq!(cols[0], "150.000000");
    assert_eq!(cols[1], "0.000000"); // simplified curve starts at zero
    assert_eq!(cols[2], "0.163531"); // G.107 value at 150 ms
}

#[test]
fn curves_objective_minimum_matches_optimize() {
    let out = playout(&[
        "curves", "--lo", "150", "--hi", "1000", "--step", "0.5",
        "--scale", "60", "--shape", "1.5", "--rho-n", "0.01", "--burst-r", "1.5",
        "--ie", "10", "--bpl", "19",
    ]);
    assert!(out.status.success());
    let report = stdout(&out);
    let mut best = (0.0f64, f64::INFINITY);
    for line in report.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let pd: f64 = cols[0].parse().unwrap();
        let objective: f64 = cols[5].parse().unwrap();
        if objective < best.1 {
            best = (pd, objective);
        }
    }
    assert!(
        (best.0 - 265.752928).abs() <= 0.5,
        "sweep minimizer {} disagrees with the closed form",
        best.0
    );
}

#[test]
fn bench_validates_repetitions_and_reports_speedup() {
    let out = playout(&["bench", "--repetitions", "10"]);
    assert_eq!(out.status.code(), Some(1));

    let out = playout(&["bench", "--repetitions", "20000"]);
    assert!(out.status.success());
    let report = stdout(&out);
    let proposed = report
        .lines()
        .find(|l| l.starts_with("proposed"))
        .expect("proposed row");
    let speedup: f64 = proposed.split('\t').nth(3).unwrap().parse().unwrap();
    assert!(speedup > 10.0, "speedup {speedup}");
}

#[test]
fn json_lines_format_is_parseable() {
    let out = playout(&[
        "optimize", "--scale", "60", "--shape", "1.5", "--format", "json-lines",
    ]);
    assert!(out.status.success());
    for line in stdout(&out).lines() {
        let value: serde_json::Value = serde_json::from_str(line).expect("valid json line");
        assert!(value.get("field").is_some() && value.get("value").is_some());
    }
}

#[test]
fn csv_format_swaps_separator() {
    let out = playout(&["curves", "--lo", "150", "--hi", "152", "--step", "1", "--format", "csv"]);
    assert!(out.status.success());
    let report = stdout(&out);
    assert!(report.starts_with("pd_ms,idd_simplified,idd_g107"));
}

#[test]
fn show_config_prints_defaults_to_stderr() {
    let path = tmp("showcfg.ptrace.csv");
    let gen = playout(&["gen", "--seed", "9", "--n", "1200", "-o", path.to_str().unwrap()]);
    assert!(gen.status.success());
    let out = playout(&[
        "compare", path.to_str().unwrap(), "--algorithms", "proposed", "--show-config",
    ]);
    assert!(out.status.success());
    let err = stderr(&out);
    assert!(err.contains("config window = 500"), "{err}");
    assert!(err.contains("config frame_interval_ms = 30"), "{err}");
    assert!(err.contains("config grid_points = 200"), "{err}");
    assert!(err.contains("config r0 = 93.2"), "{err}");
    // Machine output unaffected.
    assert!(stdout(&out).starts_with("algorithm\t"));
    std::fs::remove_file(path).ok();
}
