use std::fs;
use std::process::{Command, Output};

use rann::Dataset;
use rann_cli::dataset_file::DatasetFile;
use rann_cli::records::{BenchSummary, TruthRecord};
use tempfile::TempDir;

fn rann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rann")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rann(args);
    assert!(
        out.status.success(),
        "rann {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn gen(dir: &TempDir, extra: &[&str]) {
    let out = p(dir, "");
    let mut args = vec!["gen", "--out", out.as_str()];
    args.extend_from_slice(extra);
    ok(&args);
}

fn summary(text: &str) -> BenchSummary {
    serde_json::from_str(text.trim()).unwrap()
}

/// gen, build, query and bench on one instance; returns the summary.
fn pipeline(dir: &TempDir, build: &[&str]) -> BenchSummary {
    let (data, idx, queries, res, truth) =
        (p(dir, "data.rann"), p(dir, "index.bin"), p(dir, "queries.rann"), p(dir, "res.jsonl"), p(dir, "truth.jsonl"));
    let mut args = vec!["build", "--data", data.as_str(), "--out", idx.as_str()];
    args.extend_from_slice(build);
    ok(&args);
    ok(&["query", "--index", &idx, "--queries", &queries, "--out", &res]);
    summary(&ok(&["bench", "--results", &res, "--truth", &truth, "--index", &idx, "--queries", &queries]))
}

#[test]
fn gen_writes_three_files_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let flags = ["--n", "500", "--d", "64", "--k", "4", "--r", "1.0", "--noise", "10", "--seed", "7"];
    gen(&a, &flags);
    gen(&b, &flags);
    let mut names: Vec<String> =
        fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["data.rann", "queries.rann", "truth.jsonl"]);
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let data = DatasetFile::read(&a.path().join("data.rann")).unwrap();
    assert_eq!((data.len(), data.dim()), (500, 64));
    assert_eq!(fs::read(a.path().join("data.rann")).unwrap().len(), 28 + 500 * 64 * 8);
}

#[test]
fn k_at_least_d_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = rann(&["gen", "--n", "20", "--d", "4", "--k", "4", "--out", &p(&dir, "")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--k"));
}

#[test]
fn help_version_and_bad_flags() {
    assert_eq!(rann(&["--help"]).status.code(), Some(0));
    assert_eq!(rann(&["--version"]).status.code(), Some(0));
    assert_eq!(rann(&["gen", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(rann(&[]).status.code(), Some(1));
}

#[test]
fn robust_round_trip_meets_recovery_targets() {
    let dir = TempDir::new().unwrap();
    gen(&dir, &["--n", "500", "--d", "64", "--k", "4", "--r", "1.0", "--seed", "3"]);
    let s = pipeline(&dir, &["--mode", "robust", "--k", "4", "--seed", "1"]);
    assert_eq!(s.queries, 50);
    assert!(s.recall >= 0.9, "{s:?}");
    assert_eq!(s.light_fraction, Some(1.0), "{s:?}");
}

#[test]
fn budgeted_round_trip_meets_recovery_targets() {
    let dir = TempDir::new().unwrap();
    gen(&dir, &["--mode", "budgeted", "--n", "500", "--d", "64", "--r", "1.0", "--seed", "4"]);
    assert!(dir.path().join("costs.csv").exists());
    let costs = p(&dir, "costs.csv");
    let s = pipeline(&dir, &["--mode", "budgeted", "--costs", &costs, "--seed", "2"]);
    assert!(s.recall >= 0.9, "{s:?}");
    assert_eq!(s.light_fraction, Some(1.0), "{s:?}");
}

#[test]
fn dslsh_round_trip_finds_planted_neighbors() {
    let dir = TempDir::new().unwrap();
    gen(&dir, &["--mode", "dslsh", "--n", "1000", "--d", "256", "--r", "16", "--queries", "30", "--seed", "5"]);
    let s = pipeline(&dir, &["--mode", "dslsh", "--r", "16", "--seed", "6"]);
    assert_eq!(s.answered, 30);
    assert!(s.recall >= 0.9, "{s:?}");
    assert_eq!(s.light_fraction, None);
}

#[test]
fn dslsh_rejects_real_valued_files() {
    let dir = TempDir::new().unwrap();
    gen(&dir, &["--mode", "dslsh", "--n", "50", "--d", "64", "--r", "4", "--queries", "5"]);
    let idx = p(&dir, "index.bin");
    ok(&["build", "--mode", "dslsh", "--r", "4", "--data", &p(&dir, "data.rann"), "--out", &idx]);

    let real = dir.path().join("real.rann");
    let rows = vec![vec![0.0; 64]; 3];
    DatasetFile::Real(Dataset::from_rows(&rows).unwrap()).write(&real).unwrap();
    let real = real.to_str().unwrap();

    let out = rann(&["query", "--mode", "dslsh", "--index", &idx, "--queries", real]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("element type bit"), "{}", stderr(&out));

    let out = rann(&["build", "--mode", "dslsh", "--r", "4", "--data", real, "--out", &p(&dir, "x.bin")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("element type bit"));
}

#[test]
fn index_format_errors_are_explicit() {
    let dir = TempDir::new().unwrap();
    gen(&dir, &["--n", "60", "--d", "16", "--k", "2", "--queries", "5"]);
    let idx = p(&dir, "index.bin");
    let queries = p(&dir, "queries.rann");
    ok(&["build", "--mode", "robust", "--k", "2", "--data", &p(&dir, "data.rann"), "--out", &idx]);

    let out = rann(&["query", "--mode", "budgeted", "--index", &idx, "--queries", &queries]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("holds a robust index"));

    let mut bytes = fs::read(&idx).unwrap();
    bytes[4] = 99;
    fs::write(&idx, &bytes).unwrap();
    let out = rann(&["query", "--index", &idx, "--queries", &queries]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unsupported format version 99"), "{}", stderr(&out));

    let out = rann(&["query", "--index", &queries, "--queries", &queries]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("magic"));
}

#[test]
fn dimension_mismatch_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    gen(&dir, &["--n", "60", "--d", "16", "--k", "2", "--queries", "5"]);
    let idx = p(&dir, "index.bin");
    ok(&["build", "--mode", "robust", "--k", "2", "--data", &p(&dir, "data.rann"), "--out", &idx]);
    let other = dir.path().join("other.rann");
    DatasetFile::Real(Dataset::from_rows(&[vec![0.0; 8]]).unwrap()).write(&other).unwrap();
    let out = rann(&["query", "--index", &idx, "--queries", other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dimension mismatch"));
}

#[test]
fn oracle_matches_hand_computed_robust_neighbor() {
    // L1 with one coordinate ignored: (9,1,0) -> 1, (2,2,0) -> 2, (1,1,1) -> 2.
    // Plain L1 would pick the last point.
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.rann");
    let queries = dir.path().join("q.rann");
    DatasetFile::Real(Dataset::from_rows(&[[9.0, 1.0, 0.0], [2.0, 2.0, 0.0], [1.0, 1.0, 1.0]]).unwrap())
        .write(&data)
        .unwrap();
    DatasetFile::Real(Dataset::from_rows(&[[0.0, 0.0, 0.0]]).unwrap()).write(&queries).unwrap();
    let (data, queries) = (data.to_str().unwrap(), queries.to_str().unwrap());

    let run = |k: &str| -> TruthRecord {
        serde_json::from_str(ok(&["oracle", "--mode", "robust", "--k", k, "--data", data, "--queries", queries]).trim())
            .unwrap()
    };
    assert_eq!(run("1"), TruthRecord { query: 0, neighbor: 0, clean_distance: 1.0, corrupted: vec![] });
    assert_eq!(run("0"), TruthRecord { query: 0, neighbor: 2, clean_distance: 3.0, corrupted: vec![] });
}

#[test]
fn budgeted_oracle_depends_on_costs() {
    // q = 0, points (4,4,0) and (0,1,3)
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.rann");
    let queries = dir.path().join("q.rann");
    let costs = dir.path().join("c.csv");
    DatasetFile::Real(Dataset::from_rows(&[[4.0, 4.0, 0.0], [0.0, 1.0, 3.0]]).unwrap()).write(&data).unwrap();
    DatasetFile::Real(Dataset::from_rows(&[[0.0, 0.0, 0.0]]).unwrap()).write(&queries).unwrap();
    let run = |c: &str| -> TruthRecord {
        fs::write(&costs, c).unwrap();
        let out = ok(&[
            "oracle",
            "--mode",
            "budgeted",
            "--data",
            data.to_str().unwrap(),
            "--queries",
            queries.to_str().unwrap(),
            "--costs",
            costs.to_str().unwrap(),
        ]);
        serde_json::from_str(out.trim()).unwrap()
    };
    // only one of the first two coordinates fits: 4 vs 1
    let t = run("0.6, 0.6, 1.0\n");
    assert_eq!((t.neighbor, t.clean_distance), (1, 1.0));
    // both fit: 0 vs 1
    let t = run("0.5\n0.5\n1.0\n");
    assert_eq!((t.neighbor, t.clean_distance), (0, 0.0));
}

#[test]
fn lemmas_are_deterministic_and_report_every_field() {
    let a = ok(&["lemmas", "--scale", "0.05", "--seed", "9"]);
    let b = ok(&["lemmas", "--scale", "0.05", "--seed", "9"]);
    assert_eq!(a, b);
    let lines: Vec<serde_json::Value> = a.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 10);
    for rec in &lines {
        for key in ["name", "predicted", "measured", "stderr", "rule", "pass"] {
            assert!(rec.get(key).is_some(), "{rec} lacks {key}");
        }
    }
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_rann"))
        .args(["lemmas", "--scale", "0.01"])
        .env("RANN_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_rann"))
        .args(["lemmas", "--scale", "0.01"])
        .env("RANN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("RANN_THREADS"));
}
