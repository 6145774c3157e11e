use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qsd-lab"));
    c.env_remove("QSD_LAB_SEED");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

const SURVIVAL: &str = r#"
[potential]
kind = "quadratic"

[process]
family = "kinetic_langevin"
gamma = 1.0

[domain]
shape = "box"
lo = [-1.0]
hi = [1.0]
witness = [2.0]

[estimator]
dt = 1e-2
n_traj = 0

[estimator.initial]
x = { law = "point", value = [0.0] }
v = { law = "point", value = [0.0] }
"#;

#[test]
fn missing_config_flag_is_a_usage_error() {
    let o = bin().arg("survival").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = bin().args(["teleport", "--config", "x.toml"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn survival_with_zero_trajectories_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.toml");
    fs::write(&cfg, SURVIVAL).unwrap();
    let o = bin()
        .args(["survival", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn rejected_config_names_the_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("nh.toml");
    let text = SURVIVAL.replace("kinetic_langevin", "nose_hoover").replace("gamma = 1.0", "gamma = 0.0");
    fs::write(&cfg, text).unwrap();
    let o = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("where γ > 0"));
}

#[test]
fn verify_c3_on_shipped_gl_regular_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c3");
    let o = bin()
        .args(["verify-c3", "--config"])
        .arg(scenario("gl_regular_k4.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(out.join("c3_report.json")).unwrap()).unwrap();
    let sups: Vec<f64> = rep["report"]["shells"].as_array().unwrap().iter().map(|s| s["sup_ratio"].as_f64().unwrap()).collect();
    assert!(sups.windows(2).all(|w| w[1] < w[0]), "{sups:?}");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn seed_precedence_on_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, dir: &str| -> serde_json::Value {
        let out = tmp.path().join(dir);
        let mut c = bin();
        c.args(["validate-potential", "--config"]).arg(scenario("gl_regular_k4.toml")).arg("--out").arg(&out).args(extra);
        if let Some(e) = env {
            c.env("QSD_LAB_SEED", e);
        }
        assert_eq!(code(&c.output().unwrap()), 0);
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
    };
    assert_eq!(run(&[], None, "a")["master_seed"], 11);
    assert_eq!(run(&[], Some("42"), "b")["master_seed"], 42);
    assert_eq!(run(&["--seed", "7"], Some("42"), "c")["master_seed"], 7);
    assert_eq!(run(&["--seed", "7"], Some("42"), "c")["seed_source"], "cli");
}

#[test]
fn bad_seed_environment_is_a_usage_error() {
    let o = bin()
        .args(["validate-potential", "--config"])
        .arg(scenario("gl_regular_k4.toml"))
        .env("QSD_LAB_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
