use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn uclt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uclt"))
        .args(args)
        .env_remove("UCLT_THREADS")
        .output()
        .expect("binary runs")
}

fn run_config(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    uclt(&args)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn holder_model_is_satisfied() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("check-theorem", &configs().join("theorem_holder.json"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(r["report"]["conclusion"], "hypotheses-satisfied-at-resolution");
    assert_eq!(r["report"]["checks"][0]["integral"]["verdict"], "finite");
    let hash = r["provenance"]["config_hash"].as_str().unwrap().to_string();
    for f in ["variance.csv", "distances_power.csv", "trace_power.csv", "trace_exponential.csv", "moments/block_0000.csv"] {
        let text = std::fs::read_to_string(tmp.path().join(f)).unwrap();
        assert!(text.starts_with(&format!("# config_hash={hash} seed=20240611\n")), "{f}");
        assert!(!text.contains('\r'));
    }
}

#[test]
fn exploding_variance_fails_the_variance_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("check-theorem", &configs().join("theorem_exploding.json"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(tmp.path())["report"]["conclusion"], "hypothesis-failed(variance-bound)");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn schema_errors_exit_one_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("theorem_holder.json"))
        .unwrap()
        .replace("\"q\": 2.0", "\"q\": -2.0");
    let cfg = write_config(tmp.path(), &text);
    let out = run_config("check-theorem", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("positive") && err.contains("line 15"), "{err}");
    assert!(!tmp.path().join("run/run.json").exists());

    let cfg = write_config(tmp.path(), r#"{"models": [], "typo": 1}"#);
    let out = run_config("inequalities", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = write_config(
        tmp.path(),
        r#"{"models": [{"name": "w", "points": [[0.0]], "kind": {"type": "iid_weibull_field", "q": -1.0, "k": 1.0}, "horizon": 4}]}"#,
    );
    let out = run_config("inequalities", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(uclt(&[]).status.code(), Some(1));
    assert_eq!(uclt(&["inequalities"]).status.code(), Some(1));
    assert_eq!(uclt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(uclt(&["--help"]).status.code(), Some(0));
}

#[test]
fn corrupted_model_fails_the_martingale_test() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("inequalities", &configs().join("corrupted.json"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(tmp.path());
    assert_eq!(r["report"]["models"][0]["md"]["pass"], false);

    let text = std::fs::read_to_string(configs().join("corrupted.json"))
        .unwrap()
        .replace("\"conditional_bias\": 0.1", "\"conditional_bias\": 0.0");
    let cfg = write_config(tmp.path(), &text);
    let out = run_config("inequalities", &cfg, &tmp.path().join("clean"), &[]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn smoke_run_is_fast() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run_config("inequalities", &configs().join("smoke.json"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn overrides_reach_the_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.json");
    run_config("inequalities", &cfg, &tmp.path().join("a"), &[]);
    run_config("inequalities", &cfg, &tmp.path().join("b"), &["--seed", "5", "--reps", "500"]);
    let (a, b) = (report(&tmp.path().join("a")), report(&tmp.path().join("b")));
    assert_eq!(b["provenance"]["seed"], 5);
    assert_ne!(a["provenance"]["config_hash"], b["provenance"]["config_hash"]);
    assert_eq!(b["report"]["models"][0]["osekowski"]["info"]["replications"], 500);
}

#[test]
fn covering_run_and_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("covering", &configs().join("covering.json"), &tmp.path().join("grid"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(tmp.path().join("grid/covering.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows[0], "0.12,34,3.5263605246161616");

    std::fs::write(tmp.path().join("d.csv"), "0,1,2\n1,0,1\n2,1,0\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"space": {"source": "matrix_csv", "path": "d.csv"}, "mode": "exact", "eps": [0.5, 1.0, 2.0]}"#,
    );
    let out = run_config("covering", &cfg, &tmp.path().join("m"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("m/covering.csv")).unwrap();
    let counts: Vec<&str> = text.lines().skip(2).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(counts, ["3", "1", "1"]);
}

#[test]
fn export_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = uclt(&["export", "--run", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing run"));

    let run = tmp.path().join("theorem");
    run_config("check-theorem", &configs().join("theorem_holder.json"), &run, &[]);
    let out = uclt(&["export", "--run", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let export = run.join("export");
    let headers = [
        ("entropy.csv", "condition,eps,entropy,integrand"),
        ("distances.csv", "level,x1,x2,distance"),
        ("variance.csv", "point,sup_average,divergence_suspected"),
    ];
    let first: Vec<Vec<u8>> = headers
        .iter()
        .map(|(f, h)| {
            let text = std::fs::read_to_string(export.join(f)).unwrap();
            assert_eq!(text.lines().nth(1), Some(*h));
            text.into_bytes()
        })
        .collect();
    uclt(&["export", "--run", run.to_str().unwrap()]);
    for ((f, _), bytes) in headers.iter().zip(first) {
        assert_eq!(std::fs::read(export.join(f)).unwrap(), bytes);
    }
}
