use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_energy-neutral")).args(args).output().expect("binary runs")
}

fn show(command: &str, preset: &str, json: bool) -> String {
    let mut args = vec!["show", command, preset];
    if json {
        args.push("--json");
    }
    let out = bin(&args);
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn region_preset_writes_every_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = bin(&["region", "--preset", "matched", "--resolution", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for class in ["do", "greedy", "greedy_fixed", "hybrid1", "hybrid2", "analog", "analog_greedy"] {
        let csv = read(&out.join(format!("{class}.csv")));
        assert_eq!(csv.lines().count(), 1 + 16, "{class}");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["grids"].as_array().unwrap().len(), 7);
    assert_eq!(summary["header"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    let text = show("simulate", "matched-point", false).replace("horizon = 1000000", "horizon = 20000").replace("records = false", "records = true");
    fs::write(&cfg, text).unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = bin(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (read(&out.join("summary.json")), read(&out.join("trace.csv")))
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
    assert_eq!(a.1.lines().count(), 20_001);
}

#[test]
fn toml_and_json_configs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("x.toml");
    let j = dir.path().join("x.json");
    fs::write(&t, show("tradeoff", "tradeoff-harsh", false)).unwrap();
    fs::write(&j, show("tradeoff", "tradeoff-harsh", true)).unwrap();
    let mut outputs = Vec::new();
    for (cfg, name) in [(&t, "t"), (&j, "j")] {
        let out = dir.path().join(name);
        let o = bin(&["tradeoff", "--config", cfg.to_str().unwrap(), "--resolution", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((read(&out.join("tradeoff.csv")), read(&out.join("summary.json"))));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = &outputs[0].0;
    assert!(csv.starts_with("method,gamma,avg_queue,avg_distortion"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("joint,")).count(), 3);
    assert_eq!(csv.lines().filter(|l| l.starts_with("separable,")).count(), 3);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, format!("speed = 3\n{}", show("region", "matched", false))).unwrap();
    let o = bin(&["region", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));

    assert_eq!(bin(&["region", "--preset", "nope"]).status.code(), Some(1));
    assert_eq!(bin(&["tradeoff", "--config", cfg.with_extension("missing").to_str().unwrap()]).status.code(), Some(1));
    // A region file handed to another command.
    fs::write(&cfg, show("region", "matched", false)).unwrap();
    assert_eq!(bin(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn validate_exit_codes() {
    let o = bin(&["validate", "--kind", "simulate", "--preset", "matched-point"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));

    // No DO policy meets a target this strict, so the check fails.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    fs::write(&cfg, show("simulate", "matched-point", false).replace("d_bar = 0.8", "d_bar = 0.01")).unwrap();
    let o = bin(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn schedule_writes_a_directory_per_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = bin(&["schedule", "--preset", "two-sensor", "--resolution", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    let cases = summary["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 3);
    for (k, case) in cases.iter().enumerate() {
        for label in ["opportunistic", "fixed", "single_sensor"] {
            assert_eq!(read(&out.join(format!("case-{k}/{label}.csv"))).lines().count(), 10);
        }
        assert_eq!(case["fixed_inside_opportunistic"], true);
        assert_eq!(case["opportunistic_inside_single_sensor"], true);
    }
}
