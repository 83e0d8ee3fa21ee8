use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BASELINE: &str = r#"
[model]
drift = { kind = "constant", value = 1.0 }
volatility = { kind = "constant", value = 1.4142135623730951 }

[holding]
kind = "absolute"

[ordering]
kind = "fixed"
setup = 1.0

[simulation]
dt = 1e-3
horizon = 1e3
replications = 4
"#;

struct Run {
    dir: TempDir,
    config: PathBuf,
}

impl Run {
    fn new(text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        fs::write(&config, text).unwrap();
        Self { dir, config }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, out: &str, overrides: &[&str]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ergodic"));
        c.arg(cmd)
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out(out));
        for o in overrides {
            c.arg("--override").arg(o);
        }
        c.output().unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v.pointer(key)
        .and_then(Value::as_f64)
        .unwrap_or_else(|| panic!("{key} missing in {v}"))
}

#[test]
fn solve_baseline_beats_the_feasible_pair() {
    let r = Run::new(BASELINE);
    let o = r.exec("solve", "a", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let opt = json(&r.out("a/optimum.json"));
    assert!(num(&opt, "/alpha_star") <= 2.4142136);
    assert!((num(&opt, "/alpha_star") - 1.335169064902105).abs() < 1e-6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("alpha* = 1.3351"));
    let csv = fs::read_to_string(r.out("a/evaluations.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("round,s,S,alpha"));
    assert!(csv.lines().count() > 100);
}

#[test]
fn reruns_are_byte_identical() {
    let r = Run::new(BASELINE);
    let ov = [
        "simulation.horizon=200",
        "policy.kind=ss",
        "policy.s=0",
        "policy.S=2",
    ];
    let files = [
        "optimum.json",
        "evaluations.csv",
        "simulation.json",
        "trace.csv",
        "orders.csv",
        "config.toml",
    ];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&r.exec("solve", "a", &[])), 0);
        assert_eq!(code(&r.exec("simulate", "a", &ov)), 0);
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| fs::read(r.out("a").join(f)).unwrap())
            .collect();
        snapshots.push(bytes);
        fs::remove_dir_all(r.out("a")).unwrap();
    }
    for (i, f) in files.iter().enumerate() {
        assert!(
            snapshots[0][i] == snapshots[1][i],
            "{f} differs between reruns"
        );
    }
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let r = Run::new(BASELINE);
    assert_eq!(
        code(&r.exec(
            "solve",
            "a",
            &["policy.kind=ss", "policy.s=2", "policy.S=1"]
        )),
        2
    );
    assert_eq!(
        code(&r.exec("solve", "a", &["compare.base.s=1", "compare.base.S=1"])),
        2
    );
    assert_eq!(code(&r.exec("solve", "a", &["holding.kind=cubic"])), 2);
    assert_eq!(code(&r.exec("solve", "a", &["ordering.setup=-1"])), 2);
    assert_eq!(code(&r.exec("solve", "a", &["simulation.dt=0"])), 2);
    assert_eq!(code(&r.exec("solve", "a", &["nonsense"])), 2);
    let missing = Command::new(env!("CARGO_BIN_EXE_ergodic"))
        .arg("solve")
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);
    let bad_flag = Command::new(env!("CARGO_BIN_EXE_ergodic"))
        .args(["solve", "--bogus"])
        .output()
        .unwrap();
    assert_eq!(code(&bad_flag), 2);
    // compare without a base policy
    assert_eq!(code(&r.exec("compare", "a", &[])), 2);
}

#[test]
fn verify_passes_and_fails_as_documented() {
    let r = Run::new(BASELINE);
    let ok = r.exec("verify", "a", &[]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let cert = json(&r.out("a/certificate.json"));
    assert_eq!(cert["pass"], Value::Bool(true));
    assert!(num(&cert, "/hjb_max_abs_residual_above") <= num(&cert, "/cert_tol"));
    let head = fs::read_to_string(r.out("a/residuals.csv")).unwrap();
    assert_eq!(head.lines().next(), Some("z,v,v_prime,residual"));

    let scaled = r.exec("verify", "b", &["run.alpha_scale=1.1"]);
    assert_eq!(code(&scaled), 4);
    let cert = json(&r.out("b/certificate.json"));
    assert_eq!(cert["pass"], Value::Bool(false));
    assert!(num(&cert, "/hjb_max_abs_residual_above") > num(&cert, "/cert_tol"));

    let exact = r.exec("verify", "c", &["verify.cert_tol=0.0"]);
    assert_eq!(code(&exact), 4);
}

#[test]
fn simulate_pair_matches_cycle_formula() {
    let r = Run::new(BASELINE);
    let o = r.exec(
        "simulate",
        "a",
        &[
            "policy.kind=ss",
            "policy.s=0",
            "policy.S=2",
            "simulation.horizon=2000",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sim = json(&r.out("a/simulation.json"));
    let cost = num(&sim, "/trace/average_cost");
    let se = num(&sim, "/trace/std_error");
    assert!((num(&sim, "/theory/alpha") - 2.5).abs() < 1e-9);
    assert!((cost - 2.5).abs() <= 3.0 * se, "{cost} ± {se}");
    let trace = fs::read_to_string(r.out("a/trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("time,state,cumulative_order,cumulative_cost")
    );
}

#[test]
fn simulate_reflected_has_unit_mean() {
    let r = Run::new(BASELINE);
    let ov = [
        "policy.kind=reflected",
        "policy.barrier=0",
        "policy.span=8",
        "policy.bins=40",
        "policy.scheme=bridge_minimum",
        "simulation.horizon=2000",
    ];
    let o = r.exec("simulate", "a", &ov);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sim = json(&r.out("a/simulation.json"));
    let (m, se) = (num(&sim, "/mean/mean"), num(&sim, "/mean/std_error"));
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
    let hist = fs::read_to_string(r.out("a/histogram.csv")).unwrap();
    assert_eq!(
        hist.lines().next(),
        Some("bin_left,bin_right,mass,stationary_mass")
    );
    assert_eq!(hist.lines().count(), 41);
}

#[test]
fn single_replication_still_has_an_interval() {
    let r = Run::new(BASELINE);
    let ov = [
        "policy.kind=ss",
        "policy.s=0",
        "policy.S=2",
        "simulation.replications=1",
        "simulation.batch_count=20",
    ];
    assert_eq!(code(&r.exec("simulate", "a", &ov)), 0);
    let sim = json(&r.out("a/simulation.json"));
    let ci = num(&sim, "/trace/ci_halfwidth");
    assert!(ci.is_finite() && ci > 0.0);
    assert!(num(&sim, "/trace/std_error") > 0.0);
}

#[test]
fn compare_with_nonbinding_level_has_no_gap() {
    let r = Run::new(BASELINE);
    let ov = [
        "compare.base.s=0",
        "compare.base.S=2",
        "compare.j=[0.5, 50.0]",
        "simulation.horizon=500",
    ];
    let o = r.exec("compare", "a", &ov);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(r.out("a/compare.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(
        header,
        [
            "j",
            "base_cost",
            "truncated_cost",
            "gap",
            "gap_se",
            "gap_ci",
            "bound",
            "within_bound",
            "max_post_order",
            "coalescences"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let f = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
    assert!(f(&rows[0], 3) > 3.0 * f(&rows[0], 4));
    assert_eq!(&rows[0][7], "true");
    assert!(f(&rows[1], 3).abs() <= f(&rows[1], 5).max(1e-12));
    assert!(f(&rows[1], 8) <= 2.0 + 1e-12);
}

#[test]
fn report_writes_a_summary() {
    let r = Run::new(BASELINE);
    let ov = [
        "simulation.horizon=200",
        "compare.base.s=-2",
        "compare.base.S=0.5",
        "compare.j=[1.0]",
    ];
    let o = r.exec("report", "a", &ov);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = fs::read_to_string(r.out("a/summary.md")).unwrap();
    for needle in [
        "## Optimal policy",
        "## Certificate: PASS",
        "### Relative value V(z)",
        "### HJB residual",
        "## Truncation",
    ] {
        assert!(md.contains(needle), "summary lacks {needle}");
    }
    for f in [
        "optimum.json",
        "certificate.json",
        "simulation.json",
        "trace.csv",
        "compare.csv",
        "value.csv",
    ] {
        assert!(r.out("a").join(f).exists(), "{f} missing");
    }
}

#[test]
fn written_config_round_trips() {
    let r = Run::new(BASELINE);
    assert_eq!(
        code(&r.exec(
            "solve",
            "a",
            &["simulation.seed=11", "optimizer.pitch_tol=1e-5"]
        )),
        0
    );
    let written = fs::read_to_string(r.out("a/config.toml")).unwrap();
    assert!(written.contains("seed = 11"));
    let again = Run::new(&written);
    assert_eq!(code(&again.exec("solve", "b", &[])), 0);
    let rewritten = fs::read_to_string(again.out("b/config.toml")).unwrap();
    assert_eq!(
        written.replace(&*r.out("a").to_string_lossy(), ""),
        rewritten.replace(&*again.out("b").to_string_lossy(), "")
    );
}

#[test]
fn seed_flag_changes_draws() {
    let r = Run::new(BASELINE);
    let ov = [
        "policy.kind=ss",
        "policy.s=0",
        "policy.S=2",
        "simulation.horizon=100",
    ];
    let run = |seed: &str, dir: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_ergodic"))
            .args(["simulate", "--seed", seed, "--config"])
            .arg(&r.config)
            .arg("--out")
            .arg(r.out(dir))
            .args(ov.iter().flat_map(|o| ["--override", o]))
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        num(
            &json(&r.out(dir).join("simulation.json")),
            "/trace/average_cost",
        )
    };
    assert_ne!(run("1", "a"), run("2", "b"));
    assert_eq!(run("1", "c"), run("1", "a"));
}
