use std::path::Path;
use std::process::{Command, Output};

fn kinmodes(args: &[&str], out: &Path, env_threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kinmodes"));
    c.args(args).arg("--out").arg(out).env_remove("KINMODES_THREADS");
    if let Some(t) = env_threads {
        c.env("KINMODES_THREADS", t);
    }
    c.output().unwrap()
}

fn summary(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("summary.txt")).unwrap()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .to_string()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn verify_passes_on_the_harmonic_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmodes(&["verify", "--preset", "harmonic-d1"], dir.path(), None);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{table}\n{}", String::from_utf8_lossy(&o.stderr));
    assert!(table.contains("PASS") && !table.contains("FAIL"));
    assert!(dir.path().join("checks.txt").exists());
    assert!(!dir.path().join("failures.json").exists());
}

#[test]
fn thread_variable_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmodes(&["constants", "--preset", "smoke-d1", "--threads", "3"], dir.path(), Some("2"));
    assert!(o.status.success());
    assert_eq!(value(&summary(dir.path()), "threads"), "2");
    let o = kinmodes(&["constants", "--preset", "smoke-d1", "--threads", "3"], dir.path(), None);
    assert!(o.status.success());
    assert_eq!(value(&summary(dir.path()), "threads"), "3");
}

#[test]
fn low_velocity_order_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[discretization]\nN_v = 2\n");
    let o = kinmodes(&["evolve", "--preset", "smoke-d1", "--config", &cfg], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["failures"][0]["module"], "cli");
    assert!(err["failures"][0]["detail"].as_str().unwrap().contains("n_v"));
}

#[test]
fn pulsating_datum_rejected_on_a_partially_harmonic_well() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[potential]
family = "polynomial"
terms = [{exponents = [2, 0], coef = 0.5}, {exponents = [0, 2], coef = 0.5}, {exponents = [0, 4], coef = 0.25}]
[discretization]
d = 2
n_x = 16
n_v = 4
[integrator]
dt = 1e-2
t_end = 0.1
[initial]
datum = "mode:pulsating+"
"#,
    );
    let o = kinmodes(&["evolve", "--preset", "smoke-d1", "--config", &cfg], dir.path(), None);
    assert_eq!(o.status.code(), Some(1));
    let f: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("failures.json")).unwrap()).unwrap();
    let first = &f["failures"][0];
    assert_eq!(first["module"], "modes");
    assert!(first["detail"].as_str().unwrap().starts_with("ClassificationError"), "{first}");
}

#[test]
fn constants_of_the_harmonic_well() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmodes(&["constants", "--preset", "harmonic-d1"], dir.path(), None);
    assert!(o.status.success());
    let rep = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let c_p: f64 = value(&rep, "c_p").parse().unwrap();
    assert!((c_p - 1.0).abs() < 1e-3, "{c_p}");
    assert_eq!(value(&rep, "c_k"), "undefined");
}

#[test]
fn modes_of_the_quartic_well() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmodes(&["modes", "--preset", "quartic-d1"], dir.path(), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let m = std::fs::read_to_string(dir.path().join("modes.txt")).unwrap();
    assert_eq!(value(&m, "generators"), "maxwellian energy");
    assert!(String::from_utf8_lossy(&o.stdout).contains("only Maxwellian and energy modes"));
}

#[test]
fn smoke_evolution_writes_a_decaying_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinmodes(&["evolve", "--preset", "smoke-d1", "--seed", "4"], dir.path(), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "dist_mode").unwrap();
    let dist: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(dist.len(), 51);
    assert!(dist.last().unwrap() < &(0.5 * dist[0]));
    let s = summary(dir.path());
    assert!(value(&s, "kappa").parse::<f64>().unwrap() > 0.0);
    assert_eq!(value(&s, "seed"), "4");
    assert!(dir.path().join("config.toml").exists());

    let again = tempfile::tempdir().unwrap();
    let o = kinmodes(&["evolve", "--preset", "smoke-d1", "--seed", "4", "--threads", "1"], again.path(), None);
    assert!(o.status.success());
    assert_eq!(csv, std::fs::read_to_string(again.path().join("trajectory.csv")).unwrap());
}

#[test]
fn sweep_runs_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[integrator]\nt_end = 1.0\n[sweep]\n\"collision.rate\" = [0.5, 2.0]\n");
    let o = kinmodes(&["evolve", "--preset", "smoke-d1", "--config", &cfg], dir.path(), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let s = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(s.lines().count(), 3);
    assert!(s.contains("collision.rate=0.5") && s.contains("collision.rate=2"));
    for k in 0..2 {
        assert!(dir.path().join(format!("run_{k:03}/trajectory.csv")).exists());
    }
}
