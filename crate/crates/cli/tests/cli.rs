//! End-to-end checks of the `twopatch` binary: file contracts, exit codes,
//! determinism. Runs are kept at small budgets so the suite stays fast.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twopatch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(file)
}

fn read_ndof_column(csv: &str) -> Vec<usize> {
    csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect()
}

#[test]
fn run_writes_round_trippable_csv_and_svg() {
    let out = scratch("roundtrip");
    let res = run(&["run", "--example", "1", "--budget", "350", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let csv = std::fs::read_to_string(out.join("ex1_p3_C1.csv")).unwrap();
    assert!(!csv.contains('\r'), "CSV must use LF line endings");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("ndof,error,estimator"));
    let mut prev = 0usize;
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3, "bad row: {line}");
        let n: usize = fields[0].parse().unwrap();
        assert!(n > prev, "ndof must be strictly increasing");
        prev = n;
        // 17 significant digits survive a parse/format cycle byte-exactly.
        for f in &fields[1..] {
            let v: f64 = f.parse().unwrap();
            assert_eq!(&format!("{v:.16e}"), f, "field not in 17-digit form");
        }
        rows += 1;
    }
    assert!(rows >= 2, "expected at least two solves");

    let svg = std::fs::read_to_string(out.join("ex1_p3_C1.svg")).unwrap();
    assert!(svg.starts_with("<?xml"));
    assert!(svg.contains("<polyline"));
    assert!(svg.contains("</svg>"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = scratch("det_a");
    let b = scratch("det_b");
    for out in [&a, &b] {
        let res =
            run(&["run", "--example", "1", "--budget", "350", "--out", out.to_str().unwrap()]);
        assert!(res.status.success());
    }
    let csv_a = std::fs::read(a.join("ex1_p3_C1.csv")).unwrap();
    let csv_b = std::fs::read(b.join("ex1_p3_C1.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "CSV output must be deterministic");
    let svg_a = std::fs::read(a.join("ex1_p3_C1.svg")).unwrap();
    let svg_b = std::fs::read(b.join("ex1_p3_C1.svg")).unwrap();
    assert_eq!(svg_a, svg_b, "SVG output must be deterministic");
}

#[test]
fn c0_and_c1_ndof_counts_track_within_ten_percent() {
    let out = scratch("c0c1");
    for sm in ["c1", "c0"] {
        let res = run(&[
            "run",
            "--example",
            "2",
            "--smoothness",
            sm,
            "--budget",
            "1200",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    let c1 = read_ndof_column(&std::fs::read_to_string(out.join("ex2_p3_C1.csv")).unwrap());
    let c0 = read_ndof_column(&std::fs::read_to_string(out.join("ex2_p3_C0.csv")).unwrap());
    assert_eq!(c1.len(), c0.len(), "same refinement count expected");
    for (i, (&a, &b)) in c1.iter().zip(&c0).enumerate() {
        let gap = (a as f64 - b as f64).abs() / (a.max(b) as f64);
        assert!(gap <= 0.10, "iteration {i}: NDOF {a} vs {b} differ by {:.1}%", 100.0 * gap);
    }
}

#[test]
fn uniform_mode_appends_glob_suffix_and_has_no_estimator() {
    let out = scratch("glob");
    let res = run(&[
        "run",
        "--example",
        "1",
        "--mode",
        "uniform",
        "--budget",
        "400",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(out.join("ex1_p3_C1_glob.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let eta: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(eta, 0.0, "uniform runs carry no estimator");
    }
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let out = scratch("invalid");
    let cases: &[&[&str]] = &[
        &["run", "--example", "9"],
        &["run", "--example", "1", "--degree", "5"],
        &["run", "--example", "4", "--mode", "adaptive"],
        &["run", "--example", "4", "--smoothness", "c0"],
        &["run", "--example", "1", "--theta", "0.0"],
        &["run", "--example", "1", "--theta", "1.5"],
    ];
    for args in cases {
        let mut full = args.to_vec();
        full.extend_from_slice(&["--out", out.to_str().unwrap()]);
        let res = run(&full);
        assert_eq!(res.status.code(), Some(2), "args {args:?}");
        assert!(!res.stderr.is_empty(), "expected a diagnostic for {args:?}");
    }
}

#[test]
fn verify_geometry_accepts_and_rejects() {
    let good = run(&["verify-geometry", data("curved.json").to_str().unwrap()]);
    assert_eq!(good.status.code(), Some(0));
    let text = String::from_utf8(good.stdout).unwrap();
    assert!(text.contains("analysis-suitable G1: yes"), "got: {text}");

    let bad = run(&["verify-geometry", data("curved_initial.json").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    let text = String::from_utf8(bad.stdout).unwrap();
    assert!(text.contains("analysis-suitable G1: no"), "got: {text}");

    let missing = run(&["verify-geometry", "/nonexistent/geometry.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn dump_space_reports_dimensions() {
    let res = run(&["dump-space", "--degree", "3", "--elements", "4"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    // p=3, r=1, 4 elements: n=10, n0=7, n1=6, total 7+6+2*10*8.
    assert!(text.contains("dim S_p^r      = 10"), "got: {text}");
    assert!(text.contains("= 7 "), "got: {text}");
    assert!(text.contains("= 6 "), "got: {text}");
    assert!(text.contains("total dim                      = 173"), "got: {text}");
}
