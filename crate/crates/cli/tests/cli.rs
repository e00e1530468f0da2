use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn cavsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavsim"))
        .args(args)
        .env("CAVSIM_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cavsim(&args)
}

const TABLES: [&str; 4] = ["travel_times.csv", "totals_vs_n.csv", "computations.csv", "report.txt"];

#[test]
fn grid_run_matches_golden_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(&data("grid5.json"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in TABLES {
        let got = fs::read_to_string(dir.path().join(name)).unwrap();
        let want = fs::read_to_string(data("golden").join(name)).unwrap();
        assert_eq!(got, want, "{name} differs from the golden copy");
    }
    assert!(dir.path().join("run.log").exists());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_into(&data("small.json"), &a, &["--seed", "3"]).status.success());
    let resolved = a.join("config.resolved.json");
    assert!(fs::read_to_string(&resolved).unwrap().contains("\"seed\": 3"));
    assert!(run_into(&resolved, &b, &[]).status.success());
    for name in TABLES {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert!(run_into(&data("small.json"), dir.path(), &["--seed", "7"]).status.success());
    }
    for name in TABLES {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    assert!(run_into(&data("small.json"), c.path(), &[]).status.success());
    assert_ne!(
        fs::read(a.path().join("travel_times.csv")).unwrap(),
        fs::read(c.path().join("travel_times.csv")).unwrap(),
        "--seed had no effect"
    );
}

#[test]
fn missing_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(&dir.path().join("absent.json"), &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(&data("unknown_key.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("speed"), "{err}");
}

#[test]
fn oracle_on_a_large_scenario_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(&data("large_oracle.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("19683"));
}

#[test]
fn comparing_a_run_with_itself_shows_no_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(run_into(&data("small.json"), &a, &[]).status.success());
    let out = cavsim(&["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("improvement of a over b: 0.00%"), "{text}");
    assert!(text.contains("531441"), "{text}");
    assert_eq!(fs::read_to_string(a.join("comparison.txt")).unwrap(), text);
}

#[test]
fn proposed_improves_on_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("cmp"));
    assert!(run_into(&data("grid5.json"), &a, &[]).status.success());
    assert!(run_into(&data("grid5.json"), &b, &["--mode", "baseline"]).status.success());
    let out = cavsim(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let pct: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("improvement of a over b: "))
        .and_then(|v| v.trim_end_matches('%').parse().ok())
        .unwrap();
    assert!(pct > 0.0, "{text}");
    let csv = fs::read_to_string(c.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("n,cumulative_total_a,cumulative_total_b"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn malformed_tables_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(run_into(&data("small.json"), &a, &[]).status.success());
    let bad = dir.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    for name in TABLES {
        fs::copy(a.join(name), bad.join(name)).unwrap();
    }
    fs::write(bad.join("travel_times.csv"), "cav_id,t_start,t_finish,travel_time\n0,x,1,1\n").unwrap();
    let out = cavsim(&["compare", a.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("travel_times.csv:2:"));
    let missing = cavsim(&["compare", a.to_str().unwrap(), dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn different_scenarios_do_not_compare() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_into(&data("small.json"), &a, &[]).status.success());
    assert!(run_into(&data("small.json"), &b, &["--seed", "9"]).status.success());
    let out = cavsim(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}
