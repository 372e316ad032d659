use std::path::Path;
use std::process::{Command, Output};

use aniso_sns::dynamics::integrate_deterministic;
use aniso_sns::experiments::ExperimentConfig;
use aniso_sns::ratefn::{control_cost, ControlPath, Objective, RateProblem, RateTarget};
use aniso_sns::spectral::{write_fields_binary, Grid, SpectralField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aniso-sns"));
    c.env_remove("ANISO_SNS_OUT");
    c
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.json");
    std::fs::write(
        &p,
        r#"{
  "grid": {"n_h": 8, "n_v": 8},
  "integrator": {"dt": 0.01, "t_final": 0.1},
  "ladder": {"eps": [0.1, 0.01, 0.001]},
  "mc": {"samples": 6}
}"#,
    )
    .unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

#[test]
fn invariants_on_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(bin().args(["invariants", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("[pass] projection-idempotence"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "invariants");
    assert!(out_dir.join("summary.csv").exists() && out_dir.join("runtime.json").exists());
}

#[test]
fn increasing_ladder_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"ladder": {"eps": [0.001, 0.01, 0.1]}}"#).unwrap();
    let out = bin().args(["clt-rate", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly decreasing"));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn bad_inputs_fail_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"grid": {"n_h": 8, "nv": 8}}"#).unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed config"));

    let out = bin().args(["simulate", "--config", "/nonexistent/c.json"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));

    let small = small_config(tmp.path());
    let out = bin()
        .args(["rate-min", "--target", "/nonexistent/t.bin", "--config"])
        .arg(&small)
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin().args(["clt-rate", "--samples", "1", "--config"]).arg(&small).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("samples"));
}

#[test]
fn seed_and_threads_control_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let report = |name: &str, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let out = run(bin().arg("mdp-tail").arg("--config").arg(&cfg).arg("--out").arg(&dir).args(extra));
        assert!(out.status.success());
        std::fs::read(dir.join("report.json")).unwrap()
    };
    let a = report("a", &["--threads", "1"]);
    let b = report("b", &["--threads", "3"]);
    let c = report("c", &["--threads", "2", "--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(tmp.path().join("a/tail.csv").exists());
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let dir = tmp.path().join("from-env");
    let out = run(bin().arg("clt-rate").arg("--config").arg(&cfg).env("ANISO_SNS_OUT", &dir));
    assert!(out.status.success());
    assert!(dir.join("report.json").exists());
}

#[test]
fn simulate_writes_norms() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let dir = tmp.path().join("sim");
    let out = run(bin().args(["simulate", "--eps", "0.05", "--config"]).arg(&cfg).arg("--out").arg(&dir));
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("norms.csv")).unwrap();
    assert!(csv.starts_with("time,h,h10,h01,h11,h02,h12"));
    assert_eq!(csv.lines().count(), 1 + 11);
    assert!(dir.join("energy.json").exists());
}

#[test]
fn rate_min_emits_result_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_config(tmp.path());
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let dense = cfg.integrator.clone().with_record_every(1);
    let det = integrate_deterministic(&cfg.initial.build(cfg.grid).unwrap(), &dense).unwrap();
    let noise = cfg.noise_model().unwrap();
    let zero = RateTarget::Terminal(SpectralField::zeros(Grid::new(8, 8).unwrap()));
    let problem = RateProblem::new(&det, &noise, &dense, &zero, Objective::TerminalH).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = ControlPath::random(&mut rng, dense.dt, dense.steps(), noise.dims());
    let x = problem.forward(&phi).unwrap();

    let target = tmp.path().join("t.bin");
    write_fields_binary(std::fs::File::create(&target).unwrap(), &x).unwrap();
    let dir = tmp.path().join("rate");
    let out = run(bin()
        .args(["rate-min", "--config"])
        .arg(&cfg_path)
        .arg("--target")
        .arg(&target)
        .arg("--out")
        .arg(&dir));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], true);
    assert!(v["target_residual"].as_f64().unwrap() <= 1e-6);
    assert!(v["value"].as_f64().unwrap() <= control_cost(&phi) + 1e-3);
    assert_eq!(std::fs::read(dir.join("rate.json")).unwrap(), out.stdout);
}
