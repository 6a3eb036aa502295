use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relwn::{generate_tvar, PhiFunction, SimDesign, TestReport};
use serde_json::Value;

fn relwn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_relwn"));
    c.env_remove("RELWN_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    relwn().args(args).output().expect("spawn relwn")
}

fn schema() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report-schema.json");
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Checks `value` against the subset of JSON Schema used by the report
/// schema: type, required, additionalProperties, enum, numeric bounds.
fn validate(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    let ty = schema["type"].as_str().unwrap_or("");
    let ok = match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "integer" => value.is_u64() || value.is_i64(),
        "number" => value.is_number(),
        _ => true,
    };
    if !ok {
        return Err(format!("{path}: expected {ty}, got {value}"));
    }
    if let Some(allowed) = schema["enum"].as_array() {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in enum"));
        }
    }
    if let Some(x) = value.as_f64() {
        let bound = |k: &str| schema[k].as_f64();
        if bound("minimum").is_some_and(|m| x < m)
            || bound("exclusiveMinimum").is_some_and(|m| x <= m)
            || bound("exclusiveMaximum").is_some_and(|m| x >= m)
        {
            return Err(format!("{path}: {x} out of bounds"));
        }
    }
    if let (Some(obj), Some(props)) = (value.as_object(), schema["properties"].as_object()) {
        for req in schema["required"].as_array().into_iter().flatten() {
            let k = req.as_str().unwrap();
            if !obj.contains_key(k) {
                return Err(format!("{path}: missing `{k}`"));
            }
        }
        for (k, v) in obj {
            match props.get(k) {
                Some(s) => validate(v, s, &format!("{path}.{k}"))?,
                None if schema["additionalProperties"] == Value::Bool(false) => {
                    return Err(format!("{path}: unexpected `{k}`"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(s)) = (value.as_array(), schema.get("items")) {
        for (i, v) in items.iter().enumerate() {
            validate(v, s, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn write_series(dir: &Path, name: &str, values: &[f64]) -> PathBuf {
    let p = dir.join(name);
    let body: String = values.iter().map(|v| format!("{v}\n")).collect();
    fs::write(&p, body).unwrap();
    p
}

fn ar1_values(n: usize, seed: u64) -> Vec<f64> {
    let d = SimDesign::new(PhiFunction::Const02, n);
    generate_tvar(&d, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().values().to_vec()
}

#[test]
fn test_json_matches_schema_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_series(dir.path(), "x.csv", &ar1_values(400, 1));
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[
            "test",
            data.to_str().unwrap(),
            "--seed",
            "5",
            "--boot",
            "300",
            "--delta",
            "0.1",
            "--json",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.starts_with("adaptive delta"), "{text}");
    }
    let ja = fs::read(&a).unwrap();
    assert_eq!(ja, fs::read(&b).unwrap());

    let value: Value = serde_json::from_slice(&ja).unwrap();
    validate(&value, &schema(), "$").unwrap();
    let report: TestReport = serde_json::from_value(value.clone()).unwrap();
    assert_eq!(serde_json::to_value(&report).unwrap(), value);
    assert_eq!(report.delta, 0.1);
    assert_eq!(report.tuning.boot, 300);
}

#[test]
fn schema_lists_exactly_the_report_fields() {
    let s = schema();
    let keys = |v: &Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    let dir = tempfile::tempdir().unwrap();
    let data = write_series(dir.path(), "x.csv", &ar1_values(300, 2));
    let o = run(&["test", data.to_str().unwrap(), "--boot", "100", "--json", "-"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(keys(&v), keys(&s["properties"]));
    assert_eq!(keys(&v["tuning"]), keys(&s["properties"]["tuning"]["properties"]));
    let mut req: Vec<String> = s["required"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
    req.sort();
    assert_eq!(req, keys(&v));
}

#[test]
fn schema_validator_rejects_bad_reports() {
    let s = schema();
    let mut v: Value = serde_json::json!({
        "n": 10, "d_hat_inf": 0.1, "delta": 0.0, "t_stat": 1.0, "q_star": 1.0, "alpha": 0.05,
        "reject": true, "adaptive_delta": 0.0, "extremal_set_size": 1, "grid_size": 5,
        "tuning": {"bandwidth": 0.3, "lags": 3, "block_length": 2, "rho": 0.0, "boot": 100,
                   "mode": "correlation", "seed": 0, "centered": false},
        "warnings": []
    });
    validate(&v, &s, "$").unwrap();
    v["tuning"]["mode"] = Value::from("spectral");
    assert!(validate(&v, &s, "$").is_err());
    v["tuning"]["mode"] = Value::from("covariance");
    v["extra"] = Value::from(1);
    assert!(validate(&v, &s, "$").is_err());
}

#[test]
fn correlation_report_is_scale_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let x = ar1_values(400, 3);
    let scaled: Vec<f64> = x.iter().map(|v| -2.5 * v).collect();
    let files = [
        write_series(dir.path(), "x.csv", &x),
        write_series(dir.path(), "cx.csv", &scaled),
    ];
    let reports: Vec<TestReport> = files
        .iter()
        .map(|f| {
            let o = run(&["test", f.to_str().unwrap(), "--mode", "corr", "--boot", "200", "--seed", "3", "--json", "-"]);
            assert!(o.status.success());
            serde_json::from_slice(&o.stdout).unwrap()
        })
        .collect();
    let (a, b) = (&reports[0], &reports[1]);
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1.0);
    assert!(close(a.d_hat_inf, b.d_hat_inf));
    assert!(close(a.q_star, b.q_star));
    assert!(close(a.t_stat, b.t_stat));
    assert!(close(a.adaptive_delta, b.adaptive_delta));
    assert!(close(a.tuning.bandwidth, b.tuning.bandwidth));
    assert!(close(a.tuning.rho, b.tuning.rho));
    assert_eq!(a.tuning.block_length, b.tuning.block_length);
    assert_eq!(a.extremal_set_size, b.extremal_set_size);
    assert_eq!(a.reject, b.reject);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_series(dir.path(), "x.csv", &ar1_values(300, 4));
    let d = data.to_str().unwrap();

    assert_eq!(run(&["test", d, "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["test", d, "--bandwidth", "0.7"]).status.code(), Some(2));
    assert_eq!(run(&["test", d, "--boot", "50"]).status.code(), Some(2));
    assert_eq!(run(&["test", d, "--mode", "spectral"]).status.code(), Some(2));
    assert_eq!(run(&["test", d, "--no-such-flag"]).status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    assert_eq!(run(&["test", missing.to_str().unwrap()]).status.code(), Some(3));
    let short = write_series(dir.path(), "short.csv", &[1.0; 30]);
    assert_eq!(run(&["ljungbox", short.to_str().unwrap()]).status.code(), Some(3));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1\n2\nx\n").unwrap();
    assert_eq!(run(&["acf", bad.to_str().unwrap(), "--classical"]).status.code(), Some(3));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_series(dir.path(), "x.csv", &ar1_values(300, 5));
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "lags = 2\nboot = 150\nbandwidth = 0.3\nblock-length = 4\nseed = 8\n").unwrap();
    let o = run(&["test", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--boot", "120", "--json", "-"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: TestReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((r.tuning.lags, r.tuning.boot, r.tuning.block_length, r.tuning.seed), (2, 120, 4, 8));
    assert_eq!(r.tuning.bandwidth, 0.3);

    fs::write(&cfg, "lagz = 2\n").unwrap();
    let o = run(&["test", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn acf_and_ljungbox_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_series(dir.path(), "x.csv", &ar1_values(500, 6));
    let d = data.to_str().unwrap();

    let o = run(&["acf", d, "--classical", "--lags", "5"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lag,acf,lower,upper");
    assert_eq!(lines.len(), 6);
    let r1: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((r1 - 0.2).abs() < 0.15);

    let o = run(&["acf", d, "--lags", "2", "--bandwidth", "0.3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("lag,j,t,value\n"));
    let rows = text.lines().count() - 1;
    // Grid j/n in [0.3, 0.7] for both lags.
    assert_eq!(rows, 2 * (350 - 150 + 1));

    let o = run(&["ljungbox", d, "--lags", "10"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("df = 10"), "{text}");
}

#[test]
fn simulate_writes_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let o = run(&[
        "simulate", "--design", "sin02", "--n", "200", "--reps", "100", "--lags", "1,2", "--delta-grid", "0,0.5",
        "--boot", "100", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "delta,d_n,reject_rate,se,design");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",sin02")));
    assert_eq!(run(&["simulate", "--reps", "10"]).status.code(), Some(2));
}

#[test]
fn thread_env_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_series(dir.path(), "x.csv", &ar1_values(300, 7));
    let out = |threads: &str| {
        let o = relwn()
            .env("RELWN_THREADS", threads)
            .args(["test", data.to_str().unwrap(), "--boot", "200", "--seed", "2", "--json", "-"])
            .output()
            .unwrap();
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(out("1"), out("3"));
    let o = relwn().env("RELWN_THREADS", "many").args(["ljungbox", data.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_sample_ingests() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sp500_close_1980_1999.csv");
    let spec = relwn::cli::IngestSpec {
        transform: relwn::cli::Transform::LogReturn,
        ..relwn::cli::IngestSpec::new(p)
    };
    let s = relwn::cli::ingest(&spec).unwrap();
    // 5056 trading-day closes from 1980-01-02 to 1999-12-31.
    assert_eq!(s.len(), 5055);
    let stamps = s.timestamps().unwrap();
    assert_eq!(stamps[0], "1980-01-03");
    assert_eq!(stamps[stamps.len() - 1], "1999-12-31");
    let (_, p) = relwn::cli::ljung_box(&s, 500).unwrap();
    assert!(p < 0.05, "{p}");
}
