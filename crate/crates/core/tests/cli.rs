use std::path::Path;
use std::process::{Command, Output};

fn reprograph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reprograph"))
        .args(args)
        .env_remove("REPROGRAPH_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn grow_to(dir: &Path, name: &str, seed: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["grow", "--alpha", "0.3", "--beta", "0.5", "--gamma", "0.4", "--steps", "9", "--reps", "2"];
    args.extend_from_slice(&["--seed", seed, "--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    let o = reprograph(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn grow_output_is_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let a = grow_to(dir.path(), "a.csv", "77", &["--workers", "1"]);
    let b = grow_to(dir.path(), "b.csv", "77", &["--workers", "1"]);
    let c = grow_to(dir.path(), "c.csv", "77", &["--workers", "4"]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let d = grow_to(dir.path(), "d.csv", "78", &[]);
    assert_ne!(a, d);
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.csv.run.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["seed"], "77");
    assert_eq!(record["workers"], 4);
    assert!(record["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn grow_rows_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let o = reprograph(&[
        "grow", "--alpha", "0", "--beta", "1", "--gamma", "0.2", "--steps", "7", "--g0", "k1",
        "--snapshot", "7", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(data_rows(&text).len(), 1 + 8);
    let dot = std::fs::read_to_string(dir.path().join("g.n7.dot")).unwrap();
    assert!(dot.starts_with("graph"));
    assert_eq!(dot.lines().filter(|l| l.trim_end().ends_with(';') && !l.contains("--")).count(), 128);

    let zero = reprograph(&["grow", "--steps", "0"]);
    assert_eq!(data_rows(&stdout(&zero)).len(), 2);
}

#[test]
fn grow_g0_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g0.txt");
    std::fs::write(&file, "0 1\n1 2\n").unwrap();
    let o = reprograph(&["grow", "--steps", "1", "--g0", file.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\n0,0,3,2,"));
    let missing = reprograph(&["grow", "--g0", dir.path().join("none.txt").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn resource_caps_exit_with_two() {
    let o = reprograph(&["grow", "--steps", "12", "--max-edges", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("edge"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(reprograph(&["grow", "--alpha", "1.5"]).status.code(), Some(1));
    assert_eq!(reprograph(&["grow", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(reprograph(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(reprograph(&["--help"]).status.code(), Some(0));
    assert_eq!(reprograph(&["--version"]).status.code(), Some(0));
}

#[test]
fn bpre_rejects_links_and_reports_monotone_curve() {
    let o = reprograph(&["bpre", "--beta", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta = 0"));
    let ok = reprograph(&["bpre", "--beta", "0", "--alpha", "0", "--gamma", "0.2", "--steps", "8", "--reps", "10"]);
    assert!(ok.status.success());
    let text = stdout(&ok);
    assert!(text.contains("# monotone=true"));
    let rows = data_rows(&text);
    assert_eq!(rows[0], "step,isolated_fraction_mean,isolated_fraction_min,isolated_fraction_max");
    let means: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn chain_tail_and_refusal() {
    let tail = reprograph(&["chain", "--tail-only", "--alpha", "0", "--gamma", "0.36602540378443865"]);
    assert!(tail.status.success());
    let text = stdout(&tail);
    assert_eq!(text.lines().count(), 1);
    assert!((text.trim().parse::<f64>().unwrap() - 2.0).abs() < 1e-6);
    let sup = reprograph(&["chain", "--stationary", "--alpha", "0.9", "--gamma", "0.8"]);
    assert_eq!(sup.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&sup.stderr).contains("transient"));
}

#[test]
fn phase_grid_rows() {
    let o = reprograph(&["phase", "--grid-alpha", "0,1", "--grid-gamma", "0.2,0.5,1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 7);
    let find = |a: &str, g: &str| rows.iter().find(|r| r.starts_with(&format!("{a},{g},"))).unwrap().split(',').collect::<Vec<_>>();
    let sub = find("0", "0.2");
    assert_eq!((sub[3], sub[4]), ("subcritical", "sparse"));
    let p: f64 = sub[6].parse().unwrap();
    assert!(p > 3.7 && p < 3.9);
    let top = find("1", "1");
    assert_eq!((top[3], top[4], top[6]), ("supercritical", "dense", "0"));
    assert_eq!(find("0", "0.5")[4], "critical");
}

#[test]
fn spectral_rows_per_generation() {
    let o = reprograph(&["spectral", "--beta", "1", "--g0", "k2", "--steps", "4", "--reps", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows[0], "rep,n,lambda_1,lambda_max,spectral_radius,cheeger_sweep,cheeger_exact");
    assert_eq!(rows.len(), 1 + 2 * 5);
    assert!(rows[1].starts_with("0,0,2.000000000000,2.000000000000,1.000000000000"));
}

#[test]
fn config_file_and_seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# settings\nsteps=3\nseed=11\n").unwrap();
    let run = |args: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_reprograph"));
        c.args(args).env_remove("REPROGRAPH_SEED");
        if let Some(s) = env {
            c.env("REPROGRAPH_SEED", s);
        }
        stdout(&c.output().unwrap())
    };
    let from_file = run(&["grow", "--config", cfg.to_str().unwrap()], Some("5"));
    assert!(from_file.contains("# seed=11") && from_file.contains("# steps=3"));
    let flag = run(&["grow", "--config", cfg.to_str().unwrap(), "--seed", "12"], Some("5"));
    assert!(flag.contains("# seed=12"));
    let env = run(&["grow", "--steps", "2"], Some("5"));
    assert!(env.contains("# seed=5"));
    std::fs::write(&cfg, "bogus=1\n").unwrap();
    let bad = reprograph(&["grow", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn check_list_and_filter() {
    let list = reprograph(&["check", "--list"]);
    assert!(list.status.success());
    assert_eq!(stdout(&list).lines().count(), 11);
    let one = reprograph(&["check", "--only", "coupling"]);
    assert!(one.status.success());
    let text = stdout(&one);
    assert!(text.lines().next().unwrap().starts_with("PASS [ 8] coupling"));
    assert_eq!(reprograph(&["check", "--only", "nonsense"]).status.code(), Some(1));
}

#[test]
fn jsonl_records_parse() {
    let o = reprograph(&["grow", "--steps", "2", "--format", "jsonl"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["record"], "config");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["stats"]["n"], 2);
}
