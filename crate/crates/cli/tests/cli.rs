use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nowcast(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(nowcast(&["run"], p).status.code(), Some(2));

    fs::write(p.join("bad_model.toml"), "data = \"x.csv\"\nmodels = [\"SVR\"]\n[ingest]\ntarget = \"y\"\n").unwrap();
    assert_eq!(nowcast(&["-c", "bad_model.toml", "run"], p).status.code(), Some(2));

    fs::write(p.join("no_data.toml"), "data = \"missing.csv\"\n[ingest]\ntarget = \"y\"\n").unwrap();
    let out = nowcast(&["-c", "no_data.toml", "run"], p);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    fs::write(p.join("bad.csv"), "quarter,y\n2000 Q1,1\n2000 Q3,2\n").unwrap();
    fs::write(p.join("gap.toml"), "data = \"bad.csv\"\n[ingest]\ntarget = \"y\"\n").unwrap();
    assert_eq!(nowcast(&["-c", "gap.toml", "ingest"], p).status.code(), Some(3));

    assert_eq!(nowcast(&["report", "-o", "nowhere"], p).status.code(), Some(3));
}

#[test]
fn selftest_artifacts_feed_the_other_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = nowcast(&["selftest", "--trials", "4", "-o", "st"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let st = p.join("st");
    for f in ["synthetic.csv", "selftest.toml", "ledger.json", "metrics.csv", "weights.csv", "tests.csv", "intervals.csv"] {
        assert!(st.join(f).exists(), "missing {f}");
    }

    let out = nowcast(&["-c", "st/selftest.toml", "ingest"], p);
    assert!(out.status.success());
    assert!(st.join("prepared.csv").exists());

    let before = fs::read_to_string(st.join("metrics.csv")).unwrap();
    fs::remove_file(st.join("metrics.csv")).unwrap();
    assert!(nowcast(&["-o", "st", "report", "--kind", "metrics"], p).status.success());
    assert_eq!(fs::read_to_string(st.join("metrics.csv")).unwrap(), before);

    let out = nowcast(&["-c", "st/selftest.toml", "--models", "RW,Ridge,EN", "combine"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ledger: serde_json::Value = serde_json::from_str(&fs::read_to_string(st.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["roster"], serde_json::json!(["RW", "Ridge", "EN"]));
}
