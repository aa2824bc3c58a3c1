use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn rtwl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtwl"))
        .args(args)
        .env_remove("RTWL_BUDGET_CELLS")
        .output()
        .expect("binary runs")
}

fn grid44() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/grid44.grid")
        .display()
        .to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn star_on_grid_respects_max_size() {
    let g = grid44();
    let out = rtwl(&["star", "--grid", &g, "--max-size", "2", "--expect", "none"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["outcome"], "none");

    let out = rtwl(&["star", "--grid", &g, "--max-size", "3", "--expect", "found"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["verified"], true);
    assert_eq!(v["config"]["command"]["star"]["max_size"], 3);
}

#[test]
fn expect_mismatch_exits_one() {
    let out = rtwl(&[
        "verify", "--dims", "2,2", "--colors", "3", "--expect", "refuted",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["outcome"], "not-refuted");
}

#[test]
fn verify_small_case() {
    let out = rtwl(&[
        "verify", "--dims", "2,2", "--colors", "4", "--expect", "refuted",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["verdict"], "refuted");
    assert!(v["timing"]["wall_ms"].is_number());
}

#[test]
fn reports_are_reproducible_without_timing() {
    let args = ["--no-timing", "verify", "--dims", "2,3", "--colors", "5"];
    let a = rtwl(&args);
    let b = rtwl(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(json(&a).get("timing").is_none());
}

#[test]
fn cascade_trace_decodes_constant_stream() {
    let out = rtwl(&["reduce", "cascade", "--ks", "2,2", "--in", "|2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["outcome"], "valid");
    assert_eq!(v["result"]["decoded"], 2);
}

#[test]
fn reduce_lpo_codings() {
    for name in ["lpo-balanced", "lpo-wub"] {
        for flip in [None, Some("0"), Some("6")] {
            let mut args = vec!["reduce", name];
            if let Some(f) = flip {
                args.extend(["--flip", f]);
            }
            let out = rtwl(&args);
            assert!(out.status.success(), "{name} {flip:?}");
            let v = json(&out);
            let want = u64::from(flip.is_some());
            assert_eq!(v["result"]["decoded"], want, "{name} {flip:?}");
        }
    }
}

#[test]
fn reduce_reads_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("merge.json");
    std::fs::write(
        &path,
        r#"{"c": {"k": 3, "rows": [], "default_limit": 2},
            "i_c": 0,
            "d": {"k": 2, "rows": [[[0, 1], [4, 0]]], "default_limit": 0},
            "i_d": 1}"#,
    )
    .unwrap();
    let out = rtwl(&["reduce", "wub-merge", "--in", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out)["outcome"], "valid");
}

#[test]
fn cfi_words() {
    let out = rtwl(&["--no-timing", "bar", "2,1"]);
    assert_eq!(json(&out)["outcome"], "2,1,1,2");
    let out = rtwl(&["psi", "2,1,1,2,3"]);
    assert_eq!(json(&out)["outcome"], "2");
    let out = rtwl(&["reduce", "cfi-meet-tail", "--p", "", "--k", "1"]);
    assert_eq!(json(&out)["outcome"], "valid");
}

#[test]
fn enumerate_counts() {
    let out = rtwl(&["enumerate", "--dims", "2,3", "--colors", "5", "--count"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["outcome"], "4");
    let out = rtwl(&["enumerate", "--dims", "2,2", "--colors", "4", "--total"]);
    assert_eq!(json(&out)["result"]["count"], 1);
}

#[test]
fn scan_finds_threshold() {
    let out = rtwl(&["scan", "--dims", "2,2", "--colors", "2..4", "--expect", "4"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn csv_and_markdown_render_the_same_data() {
    let out = rtwl(&["--format", "csv", "--no-timing", "bar", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.contains("outcome,\"1,1\""));
    let out = rtwl(&["--format", "md", "--no-timing", "bar", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("| outcome | 1,1 |"));
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = rtwl(&["--output", path.to_str().unwrap(), "bar", "1"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["outcome"], "1,1");
}

#[test]
fn bad_inputs_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.grid");
    std::fs::write(&path, "0 1\n2\n").unwrap();
    let out = rtwl(&["star", "--grid", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(&path, "0 1\n2 3\n").unwrap();
    let out = rtwl(&["star", "--grid", path.to_str().unwrap(), "--colors", "3"]);
    assert_eq!(out.status.code(), Some(3));

    let out = rtwl(&["reduce", "cascade", "--ks", "2,2", "--in", "0|x"]);
    assert_eq!(out.status.code(), Some(3));

    let out = rtwl(&["star", "--grid", "/nonexistent/grid"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(
        rtwl(&["verify", "--dims", "2,x", "--colors", "4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        rtwl(&["reduce", "cascade", "--in", "|0"]).status.code(),
        Some(2)
    );
    assert_eq!(rtwl(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn budget_env_caps_enumeration() {
    let out = Command::new(env!("CARGO_BIN_EXE_rtwl"))
        .args(["verify", "--dims", "3,3", "--colors", "6"])
        .env("RTWL_BUDGET_CELLS", "100")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["outcome"], "unknown");
    assert!(v["result"]["note"].as_str().unwrap().contains("budget"));
    assert_eq!(v["config"]["raw_cap"], "100");
}
