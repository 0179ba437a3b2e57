use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tridc::matgen::{gen_sht, read_dense, read_tridiag};
use tridc::SolveReport;

fn tridc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tridc"))
        .args(args)
        .output()
        .expect("spawn tridc")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_clement_has_zero_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.txt");
    let out = tridc(&[
        "gen",
        "--kind",
        "clement",
        "--n",
        "6",
        "--out",
        path_str(&file),
    ]);
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("n=6 sha256="), "{line}");
    let t = read_tridiag(&file).unwrap();
    assert!(t.diag().iter().all(|&v| v == 0.0));
    assert_eq!(t.offdiag().len(), 5);
    assert!((t.offdiag()[0] - 5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn gen_sht_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.txt");
    let out = tridc(&[
        "gen",
        "--kind",
        "sht",
        "--n",
        "40",
        "--m",
        "60",
        "--out",
        path_str(&file),
    ]);
    assert!(out.status.success());
    let t = read_tridiag(&file).unwrap();
    let want = gen_sht(40, 60).unwrap();
    assert_eq!(t.diag(), want.diag());
    assert_eq!(t.offdiag(), want.offdiag());
}

#[test]
fn gen_dense_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("k.txt");
    let out = tridc(&[
        "gen",
        "--kind",
        "kinetic",
        "--n",
        "10",
        "--out",
        path_str(&file),
    ]);
    assert!(out.status.success());
    let m = read_dense(&file).unwrap();
    assert_eq!((m.rows(), m.cols()), (10, 10));
}

#[test]
fn gen_same_input_same_digest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let digest = |p: &Path| {
        let out = tridc(&[
            "gen",
            "--kind",
            "hermite",
            "--n",
            "50",
            "--out",
            path_str(p),
        ]);
        let line = String::from_utf8(out.stdout).unwrap();
        line.split_whitespace().nth(1).unwrap().to_string()
    };
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn unknown_kind_is_usage_error() {
    let out = tridc(&[
        "gen",
        "--kind",
        "wilkinson",
        "--n",
        "5",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wilkinson"));
}

#[test]
fn solve_toeplitz_dense_path() {
    let out = tridc(&[
        "solve",
        "--kind",
        "toeplitz211",
        "--n",
        "500",
        "--path",
        "force-dense",
        "--seed",
        "1",
    ]);
    let v = json(&out);
    assert_eq!(v["format_version"], "1.0");
    assert!(v["verification"]["orthogonality"].as_f64().unwrap() <= 5e-13);
    assert!(v["verification"]["residual"].as_f64().unwrap() <= 1e-12);
    assert!(v["merges"]
        .as_array()
        .unwrap()
        .iter()
        .all(|m| m["path"] != "hss"));
}

#[test]
fn solve_from_file_and_eigenvalue_dump() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.txt");
    let vals = dir.path().join("vals.txt");
    let report = dir.path().join("r.json");
    assert!(tridc(&[
        "gen",
        "--kind",
        "clement",
        "--n",
        "41",
        "--out",
        path_str(&file)
    ])
    .status
    .success());
    let out = tridc(&[
        "solve",
        "--in",
        path_str(&file),
        "--seed",
        "3",
        "--report",
        path_str(&report),
        "--eigenvalues",
        path_str(&vals),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let values: Vec<f64> = std::fs::read_to_string(&vals)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 41);
    for (k, v) in values.iter().enumerate() {
        assert!((v - (2.0 * k as f64 - 40.0)).abs() < 1e-9);
    }
    let r = SolveReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.seed, 3);
    assert!(r.to_json().unwrap().contains("\"source\": \"file\""));
}

#[test]
fn solve_is_deterministic_with_seed() {
    let args = [
        "solve",
        "--kind",
        "hermite",
        "--n",
        "600",
        "--path",
        "force-hss",
        "--switch-threshold",
        "256",
        "--seed",
        "11",
    ];
    let strip = |o: Output| {
        String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time_seconds"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(tridc(&args)), strip(tridc(&args)));
}

#[test]
fn solve_missing_file_fails() {
    let out = tridc(&["solve", "--in", "/nonexistent/matrix.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
}

#[test]
fn solve_verification_failure_exit_code() {
    let out = tridc(&[
        "solve",
        "--kind",
        "clement",
        "--n",
        "100",
        "--seed",
        "1",
        "--max-residual",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_round_trip() {
    let out = tridc(&[
        "solve", "--kind", "sht", "--n", "300", "--m", "250", "--seed", "5",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let r = SolveReport::from_json(&text).unwrap();
    let again = SolveReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(r.to_json().unwrap(), again.to_json().unwrap());
    assert_eq!(r.merges.len(), again.merges.len());
}

#[test]
fn bench_ratio_falls_with_n() {
    let out = tridc(&[
        "bench",
        "--kind",
        "clement",
        "--n",
        "512,1024,2048",
        "--format",
        "json",
        "--seed",
        "2",
    ]);
    let rows = json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let ratios: Vec<f64> = rows
        .chunks(2)
        .map(|pair| {
            assert_eq!(pair[0]["path"], "dense");
            assert_eq!(pair[1]["path"], "hss");
            pair[1]["flops_update_top_merge"].as_f64().unwrap()
                / pair[0]["flops_update_top_merge"].as_f64().unwrap()
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn bench_csv_both_paths_verify() {
    let out = tridc(&[
        "bench",
        "--kind",
        "toeplitz211",
        "--n",
        "512",
        "--seed",
        "4",
        "--switch-threshold",
        "256",
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_reader(&out.stdout[..]);
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "n");
    let orth = headers.iter().position(|h| h == "orthogonality").unwrap();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r[orth].parse::<f64>().unwrap() <= 5e-13);
    }
}

#[test]
fn bench_empty_sizes_is_error() {
    let out = tridc(&["bench", "--kind", "clement"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn hss_test_diag_dominant() {
    let out = tridc(&[
        "hss-test",
        "--kind",
        "toeplitz-dense",
        "--n",
        "2000",
        "--seed",
        "1",
    ]);
    let v = json(&out);
    assert!(v["diagnostics"]["hss_rank"].as_u64().unwrap() <= 5);
    assert!(v["reconstruction_error"].as_f64().unwrap() <= 1e-13);
    assert!(v["matvec_flops"].as_u64().unwrap() < v["dense_matvec_flops"].as_u64().unwrap());
}

#[test]
fn hss_test_looser_tolerance_lowers_rank() {
    let rank = |tol: &str| {
        let v = json(&tridc(&[
            "hss-test", "--kind", "kinetic", "--n", "1000", "--tol", tol, "--seed", "1",
        ]));
        let err = v["reconstruction_error"].as_f64().unwrap();
        (v["diagnostics"]["hss_rank"].as_u64().unwrap(), err)
    };
    let (tight, tight_err) = rank("1e-14");
    let (loose, loose_err) = rank("1e-6");
    assert!(tight_err <= 1e-13);
    assert!(loose_err <= 1e-5);
    assert!(loose < tight, "{loose} vs {tight}");
}

#[test]
fn hss_test_rejects_tridiagonal_kind() {
    let out = tridc(&["hss-test", "--kind", "clement", "--n", "100"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn schema_keys_match_report() {
    let schema: Value = serde_json::from_str(
        &std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../docs/report-schema.json"
        ))
        .unwrap(),
    )
    .unwrap();
    let report = json(&tridc(&[
        "solve",
        "--kind",
        "clement",
        "--n",
        "600",
        "--path",
        "force-hss",
        "--switch-threshold",
        "256",
        "--seed",
        "2",
    ]));
    let keys = |v: &Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    let required = |v: &Value| {
        let mut k: Vec<String> = v["required"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s.as_str().unwrap().to_string())
            .collect();
        k.sort();
        k
    };
    assert_eq!(keys(&report), required(&schema));
    assert_eq!(
        keys(&report["options"]),
        required(&schema["properties"]["options"])
    );
    assert_eq!(
        keys(&report["totals"]),
        required(&schema["properties"]["totals"])
    );
    let merge = report["merges"].as_array().unwrap().last().unwrap();
    assert_eq!(keys(merge), required(&schema["$defs"]["merge"]));
    assert_eq!(keys(&merge["hss"]), required(&schema["$defs"]["hss"]));
}
