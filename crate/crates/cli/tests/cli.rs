use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

fn hsdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsdf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hsdf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn labels_in(csv: &str) -> BTreeSet<String> {
    csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect()
}

#[test]
fn generate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["generate", "--scenario", "duffing2", "--seed", "1", "--out", s(&a)]);
    ok(&["generate", "--scenario", "duffing2", "--seed", "1", "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x,epoch,label");
    assert_eq!(text.lines().count(), 400_001);
    assert_eq!(labels_in(&text).len(), 2);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["scenario"], "duffing2");
    assert_eq!(sidecar["snr"], "inf");
    assert_eq!(sidecar["dt"], 0.01);
}

#[test]
fn three_regime_stream_has_three_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    ok(&["generate", "--scenario", "duffing_vdp3", "--snr", "9", "--out", s(&out)]);
    assert_eq!(labels_in(&std::fs::read_to_string(&out).unwrap()).len(), 3);
}

#[test]
fn unwritable_output_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = hsdf(&["generate", "--epochs", "3", "--out", s(&blocker.join("s.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn invalid_flags_are_rejected() {
    for args in [
        &["run", "--crp", "bogus"][..],
        &["run", "--snr", "0"],
        &["run", "--kappa", "1.5"],
        &["run", "--scenario", "external-csv"],
        &["run", "--set", "nonsense"],
    ] {
        let out = hsdf(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn run_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("out/run.json");
    let stdout = ok(&["run", "--epochs", "50", "--revise", "--crp", "classical", "--out", s(&report)]);
    assert!(stdout.contains("classical+revision"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["epochs"], 50);
    assert!(json["revised_error_pct"].is_number());
    let trace = std::fs::read_to_string(dir.path().join("out/run.trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 49);
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in ["log_scores", "gamma", "b", "posterior", "chosen"] {
        assert!(!first[key].is_null(), "trace lacks {key}");
    }
}

#[test]
fn runs_replay_generated_streams_and_report_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    ok(&["generate", "--epochs", "30", "--snr", "9", "--out", s(&csv)]);
    let stdout = ok(&["run", "--in", s(&csv), "--out", s(&dir.path().join("r.json"))]);
    assert!(stdout.contains("snr=9"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,x,epoch,label\n0,1.0,0,0\n0.01,oops,0,0\n").unwrap();
    let out = hsdf(&["run", "--in", s(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "# experiment\nepochs = 25\ncrp = classical\nsnr = 1\n").unwrap();
    let report = dir.path().join("r.json");
    ok(&["run", "--config", s(&cfg), "--crp", "adaptive", "--out", s(&report)]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["epochs"], 25);
    assert_eq!(json["crp"], "adaptive");
    assert_eq!(json["snr"], "1");
}

#[test]
fn report_aggregates_runs_into_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for crp in ["classical", "adaptive"] {
        for snr in ["inf", "9", "1"] {
            let p = dir.path().join(format!("{crp}_{snr}.json"));
            ok(&["run", "--epochs", "30", "--crp", crp, "--snr", snr, "--out", s(&p)]);
            paths.push(p);
        }
    }
    let table = dir.path().join("t.csv");
    let mut args = vec!["report", "--out", s(&table), "--in"];
    args.extend(paths.iter().map(|p| s(p)));
    ok(&args);
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("scenario,algorithm,snr,runs,error_pct_mean"));
    let series = std::fs::read_to_string(dir.path().join("t.series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 6 * 29);

    let single = dir.path().join("one.csv");
    ok(&["report", "--in", s(&paths[0]), "--out", s(&single)]);
    assert_eq!(std::fs::read_to_string(&single).unwrap().lines().count(), 2);

    let other = dir.path().join("other.json");
    ok(&["run", "--epochs", "31", "--out", s(&other)]);
    let out = hsdf(&["report", "--in", s(&paths[0]), s(&other), "--out", s(&single)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible"));
}

#[test]
fn grid_runs_three_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(&["grid", "--epochs", "30", "--snrs", "inf", "--seeds", "1-2", "--out", s(&out)]);
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let algorithms: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(algorithms, ["classical", "classical+revision", "adaptive"]);
    let reports = std::fs::read_dir(&out).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json")
    });
    assert_eq!(reports.count(), 6);
}
