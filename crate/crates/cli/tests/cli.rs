use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sablock(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sablock"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn needle_trace(dir: &Path) {
    ok(&sablock(
        dir,
        &["gen", "--tokens", "2000", "--needle-at", "900", "--needle-len", "8", "--seed", "7", "-o", "t.json"],
    ));
}

#[test]
fn gen_is_deterministic_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let summary = ok(&sablock(
        d,
        &["gen", "--tokens", "2000", "--needle-at", "900", "--needle-len", "8", "--seed", "7", "-o", "a.json"],
    ));
    assert!(summary.contains("H=4 window=8 T=2000"), "{summary}");
    ok(&sablock(
        d,
        &["gen", "--tokens", "2000", "--needle-at", "900", "--needle-len", "8", "--seed", "7", "-o", "b.json"],
    ));
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    let t = json(&d.join("a.json"));
    assert_eq!(t["version"], 1);
    assert_eq!(t["tokens"].as_array().unwrap().len(), 2008);
    assert_eq!(t["attention"][0].as_array().unwrap().len(), 8);
    assert_eq!(t["attention"][0][0].as_array().unwrap().len(), 2000);
    assert_eq!(t["manifest"]["spec"]["seed"], 7);
}

#[test]
fn gen_rejects_bad_needle() {
    let dir = tempfile::tempdir().unwrap();
    let out = sablock(dir.path(), &["gen", "--needle-at", "-1", "-o", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sablock(dir.path(), &["gen", "--tokens", "100", "--needle-at", "95", "-o", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needle"));
}

#[test]
fn compress_writes_exact_budget_plan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    needle_trace(d);
    let report = ok(&sablock(d, &["compress", "--trace", "t.json", "--budget", "96", "-o", "p.json"]));
    assert!(report.contains("retained 96 of 2000"), "{report}");
    let plan = json(&d.join("p.json"));
    let retained: Vec<u64> = plan["retained"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(retained.len(), 96);
    assert!(retained.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(plan["window_tokens"].as_array().unwrap().len(), 8);
    assert_eq!(plan["manifest"]["subcommand"], "compress");

    let again = ok(&sablock(d, &["compress", "--trace", "t.json", "--budget", "96", "-o", "p2.json"]));
    assert_eq!(report.replace("p.json", ""), again.replace("p2.json", ""));
    assert_eq!(
        std::fs::read_to_string(d.join("p.json")).unwrap().replace("p.json", "p2.json"),
        std::fs::read_to_string(d.join("p2.json")).unwrap()
    );
}

#[test]
fn compress_tau_one_has_full_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    needle_trace(dir.path());
    let report = ok(&sablock(dir.path(), &["compress", "--trace", "t.json", "--tau", "1.0", "-o", "p.json"]));
    assert!(report.contains("global fidelity 1.000000"), "{report}");
}

#[test]
fn compress_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    needle_trace(dir.path());
    assert_eq!(sablock(dir.path(), &["compress", "--trace", "t.json", "--budget", "0"]).status.code(), Some(2));
    assert_eq!(sablock(dir.path(), &["compress", "--trace", "t.json", "--tau", "1.5"]).status.code(), Some(2));
    assert_eq!(sablock(dir.path(), &["compress", "--trace", "t.json", "--ladder", "2,3"]).status.code(), Some(2));
    assert_eq!(sablock(dir.path(), &["compress", "--trace", "missing.json"]).status.code(), Some(1));
}

#[test]
fn compare_rows_and_reductions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    needle_trace(d);
    ok(&sablock(
        d,
        &["compare", "--trace", "t.json", "--policies", "snapkv,chunkkv:7,sablock", "--budget", "96", "-o", "cmp.json"],
    ));
    let rows = json(&d.join("cmp.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 3);
    let fid = |i: usize| rows[i]["fidelity"].as_f64().unwrap();
    assert!(fid(2) >= fid(1));
    assert!(rows.iter().all(|r| r["retained_count"] == 96));

    let csv = ok(&sablock(d, &["compare", "--trace", "t.json", "--policies", "chunkkv:1,snapkv", "--format", "csv"]));
    let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 3);
    let digest = |l: &str| l.rsplit(',').next().unwrap().to_string();
    assert_eq!(digest(lines[1]), digest(lines[2]));

    assert_eq!(sablock(d, &["compare", "--trace", "t.json", "--policies", "pyramidkv"]).status.code(), Some(2));
    let empty = sablock(d, &["compare", "--trace", "t.json", "--policies", ""]);
    assert_eq!(empty.status.code(), Some(2));
    let unknown = sablock(d, &["compare", "--trace", "t.json", "--policies", "snapkv,foo"]);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("sentencekv"));
}

#[test]
fn sweep_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&sablock(d, &["gen", "--tokens", "600", "--count", "8", "--seed", "3", "-o", "corpus"]));
    let summary = ok(&sablock(
        d,
        &["sweep", "--corpus", "corpus", "--budgets", "16,64,256", "-o", "s.csv", "--hist-out", "h.json"],
    ));
    assert!(summary.contains("spearman"), "{summary}");
    let hist = json(&d.join("h.json"));
    assert_eq!(hist["histograms"].as_array().unwrap().len(), 3);
    assert!(hist["budget_blocksize_spearman"].as_f64().unwrap() > 0.0);

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(d.join("s.csv"))
        .unwrap();
    assert_eq!(rdr.records().count(), 9);

    ok(&sablock(d, &["sweep", "--corpus", "corpus", "--budgets", "32", "--sequential", "-o", "one.csv", "--hist-out", "one.json"]));
    assert_eq!(json(&d.join("one.json"))["histograms"].as_array().unwrap().len(), 1);

    std::fs::create_dir(d.join("empty")).unwrap();
    assert_eq!(sablock(d, &["sweep", "--corpus", "empty"]).status.code(), Some(1));
    std::fs::write(d.join("corpus/broken.json"), "{").unwrap();
    let bad = sablock(d, &["sweep", "--corpus", "corpus"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("broken.json"));
}

#[test]
fn metrics_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    needle_trace(d);
    ok(&sablock(d, &["compress", "--trace", "t.json", "-o", "p.json"]));
    let out = ok(&sablock(
        d,
        &["metrics", "--trace", "t.json", "--plan", "p.json", "--kv-shape", "16,32,16384,32,128,2", "--format", "json"],
    ));
    let report: Value = serde_json::from_str(&out).unwrap();
    let m = &report["metrics"];
    assert_eq!(m["kv_bytes"], 137438953472.0);
    assert_eq!(m["cross_sentence_rate@1"], 0.0);
    assert_eq!(m["retained"], 96.0);
    assert_eq!(m["needle_recall"], 1.0);
    assert!(report["histogram"]["counts"].is_object());

    assert_eq!(sablock(d, &["metrics"]).status.code(), Some(2));
    assert_eq!(sablock(d, &["metrics", "--kv-shape", "1,2,3"]).status.code(), Some(2));
}
