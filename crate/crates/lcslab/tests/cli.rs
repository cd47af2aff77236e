use std::path::Path;
use std::process::{Command, Output};

fn lcslab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lcslab"));
    c.args(args).env_remove("LCSLAB_SEED").env_remove("LCSLAB_THREADS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn cheb_writes_stamped_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cheb.csv");
    let o = lcslab(&["cheb", "--kappas", "4,16", "--deltas", "0.1", "--seed", "3", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    let lines: Vec<_> = text.lines().collect();
    assert!(lines[0].starts_with("# build: "));
    assert!(lines[1].starts_with("# config_hash: "));
    assert_eq!(lines[2], "# seed: 3");
    assert!(lines[3].starts_with("# config: {\"experiment\":\"cheb\""));
    assert_eq!(lines[4], "kappa,delta,degree,max_error");
    assert_eq!(lines.len(), 7);
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let p = dir.path().join(name);
        let args = ["gauss-sample", "--dim", "32", "--samples", "6", "--out", p.to_str().unwrap()];
        let o = lcslab(&args, &[("LCSLAB_SEED", "11"), ("LCSLAB_THREADS", threads)]);
        assert!(o.status.success());
        read(&p)
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    assert_eq!(a, b);
    assert!(a.contains("# seed: 11"));
}

#[test]
fn seed_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.json");
    let args = ["kakeya", "leakage", "--N", "8", "--trials", "50", "--seed", "5", "--out", p.to_str().unwrap()];
    assert!(lcslab(&args, &[("LCSLAB_SEED", "99")]).status.success());
    let v: serde_json::Value = serde_json::from_str(&read(&p)).unwrap();
    assert_eq!(v["meta"]["seed"], 5);
    assert_eq!(v["result"]["N"], 8);
    assert_eq!(v["result"]["strategy"], "random");
    assert_eq!(v["result"]["histogram"].as_array().unwrap().len(), 9);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(lcslab(&["no-such-command"], &[]).status.code(), Some(2));
    assert_eq!(lcslab(&["suite", "nope"], &[]).status.code(), Some(2));
    assert_eq!(lcslab(&["gauss-sample", "--spectrum", "flat"], &[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": "cheb", "params": {"kapas": [4.0]}}"#).unwrap();
    let o = lcslab(&["run", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"experiment": "teleport"}"#).unwrap();
    assert_eq!(lcslab(&["run", "--config", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(lcslab(&["cheb"], &[("LCSLAB_THREADS", "zero")]).status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_one_with_json() {
    let o = lcslab(&["reduce-sim", "run", "--dim", "9", "--K", "3"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let line = String::from_utf8(o.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["error"], "numerical");
    assert_eq!(v["exit_code"], 1);
}

#[test]
fn render_and_pair_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("fig.svg");
    let o = lcslab(&["kakeya", "render", "--bits", "1010", "--N", "4", "--px", "30", "--out", svg.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let s = read(&svg);
    assert!(s.starts_with("<?xml"));
    assert!(s.lines().nth(1).unwrap().starts_with("<!-- build: "));

    let pair = dir.path().join("pair.json");
    let o = lcslab(&["hardpair", "build", "--K", "2", "--kappa", "9", "--dim", "256", "--out", pair.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(&pair)).unwrap();
    for key in ["nodes", "x", "x_prime", "n", "n_prime", "seed"] {
        assert!(v["result"].get(key).is_some(), "missing {key}");
    }
    let o = lcslab(&["hardpair", "distinguish", "--pair", pair.to_str().unwrap(), "--trials", "40"], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["report"]["trials"], 40);
}

#[test]
fn reduce_sim_report_schema() {
    let args = ["reduce-sim", "run", "--alg", "power", "--dim", "16", "--K", "2", "--trials", "5", "--per-side", "30"];
    let o = lcslab(&args, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &v["result"];
    for key in ["P2_max", "P3_max", "P4_max"] {
        assert!(r["identity_residuals"][key].as_f64().unwrap() <= 1e-10);
    }
    for key in ["statistic", "p_value", "permutations"] {
        assert!(r["two_sample"].get(key).is_some());
    }
}

#[test]
fn small_suite_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lp.json");
    std::fs::write(&cfg, r#"{"experiment": "suite-lp", "seed": 1, "params": {"Ks": [1, 2], "kappas": [9.0]}}"#).unwrap();
    let out = dir.path().join("lp-report.json");
    let o = lcslab(&["suite", "lp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert_eq!(stderr.lines().filter(|l| l.starts_with("[PASS] 6")).count(), 3);
    let v: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(v["result"]["criteria"].as_array().unwrap().len(), 3);
}
