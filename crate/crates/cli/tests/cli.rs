use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn superdrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superdrift"))
        .args(args)
        .env_remove("SUPERDRIFT_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    superdrift(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn checksums(dir: &Path) -> Vec<(String, String)> {
    let m = json(&dir.join("manifest.json"));
    m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["deterministic"].as_bool().unwrap())
        .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SYNTH: &str = r#"
seed = 11

[grid]
d = 2
N = 128
n_t = 1

[drift]
kind = "gaussian_field"
gamma = 1.5
amplitude = 1.0
"#;

const SUPERCRITICAL: &str = r#"
seed = 3

[grid]
d = 2
N = 64
L = 1.0
T = 0.01
n_t = 20

[drift]
kind = "gaussian_field"
gamma = 1.5
amplitude = 0.5

[regime]
kind = "supercritical"
alpha = -0.5
p = 2.0
q = inf

[run]
levels = [8, 16, 32]

[initial]
concentration = 1.0
"#;

const KRYLOV_ZERO: &str = r#"
seed = 5

[grid]
d = 2
N = 32
T = 0.2
n_t = 20

[drift]
kind = "zero"

[run]
paths = 2000
steps = 20

[initial]
concentration = 1.0

[checks.krylov]
alpha = 0.0
p = 2.0
q = inf
paths = 20000
steps = 20
"#;

const VORTEX: &str = r#"
seed = 9

[grid]
d = 2
N = 16
T = 0.1
n_t = 10

[drift]
kind = "zero"

[run]
paths = 100
steps = 10

[checks.vortex]
positions = [[-1.0, 0.0], [1.0, 0.0]]
intensities = [1.0, 1.0]
dt = 0.0001
steps = 2000
noise_scale = 0.0
runs = 1
"#;

#[test]
fn synth_writes_three_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "synth.toml", SYNTH);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("synth", &cfg, &a, &[]).status.success());
    assert!(run("synth", &cfg, &b, &[]).status.success());
    let sums = checksums(&a);
    assert_eq!(sums.len(), 3, "{sums:?}");
    assert_eq!(sums, checksums(&b));
    let fit = json(&a.join("regularity.json"));
    assert!(fit["measured_exponent"].as_f64().unwrap().is_finite());
}

#[test]
fn seed_override_changes_the_drift() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "synth.toml", SYNTH);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("synth", &cfg, &a, &[]).status.success());
    assert!(run("synth", &cfg, &b, &["--seed", "12"]).status.success());
    assert_ne!(checksums(&a), checksums(&b));
    let ma = json(&a.join("manifest.json"));
    let mb = json(&b.join("manifest.json"));
    assert_ne!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn thread_count_does_not_change_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "synth.toml", SYNTH);
    let (a, b) = (dir.path().join("t1"), dir.path().join("t8"));
    assert!(run("synth", &cfg, &a, &["--threads", "1"]).status.success());
    assert!(run("synth", &cfg, &b, &["--threads", "8"]).status.success());
    assert_eq!(checksums(&a), checksums(&b));

    let cfg = write_config(dir.path(), "krylov.toml", &KRYLOV_ZERO.replace("paths = 20000", "paths = 2000"));
    let (a, b) = (dir.path().join("s1"), dir.path().join("s8"));
    let o1 = run("sde", &cfg, &a, &["--threads", "1"]);
    let o8 = superdrift_with_env(&cfg, &b, "8");
    assert_eq!(o1.status.code(), o8.status.code(), "{}", stderr(&o8));
    assert_eq!(checksums(&a), checksums(&b));
}

fn superdrift_with_env(cfg: &Path, out: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superdrift"))
        .args(["sde", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("SUPERDRIFT_THREADS", threads)
        .output()
        .unwrap()
}

#[test]
fn supercritical_pde_reports_each_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pde.toml", SUPERCRITICAL);
    let out = dir.path().join("pde");
    let o = run("pde", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let energies = json(&out.join("energy.json"));
    let levels = energies.as_array().unwrap();
    assert_eq!(levels.len(), 3);
    for e in levels {
        assert!(e["fokker_planck"]["ratio"].as_f64().unwrap().is_finite());
        assert!(e["kolmogorov"]["ratio"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn missing_drift_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = SUPERCRITICAL.replace(
        "kind = \"gaussian_field\"\ngamma = 1.5\namplitude = 0.5",
        "kind = \"explicit_file\"\npath = \"nowhere/drift.fld\"",
    );
    let cfg = write_config(dir.path(), "pde.toml", &text);
    let o = run("pde", &cfg, &dir.path().join("pde"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/drift.fld"), "{}", stderr(&o));
}

#[test]
fn explicit_file_round_trips_through_synth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "synth.toml", SYNTH);
    let out = dir.path().join("synth");
    assert!(run("synth", &cfg, &out, &[]).status.success());
    let text = SYNTH.replace(
        "kind = \"gaussian_field\"\ngamma = 1.5\namplitude = 1.0",
        "kind = \"explicit_file\"\npath = \"synth/drift.fld\"",
    );
    let cfg2 = write_config(dir.path(), "again.toml", &text);
    let again = dir.path().join("again");
    let o = run("synth", &cfg2, &again, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(out.join("drift.fld")).unwrap(),
        fs::read(again.join("drift.fld")).unwrap()
    );
}

#[test]
fn krylov_check_passes_without_drift() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "krylov.toml", KRYLOV_ZERO);
    let out = dir.path().join("sde");
    let o = run("sde", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let checks = json(&out.join("checks.json"));
    for c in checks.as_array().unwrap() {
        assert!(c["pass"].as_bool().unwrap(), "{c}");
        for key in ["name", "measured", "threshold"] {
            assert!(c.get(key).is_some());
        }
    }
}

#[test]
fn deterministic_vortex_pair_keeps_its_radius() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vortex.toml", VORTEX);
    let out = dir.path().join("vortex");
    let o = run("sde", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let checks = json(&out.join("checks.json"));
    let names: Vec<&str> = checks.as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"vortex radius conservation"), "{names:?}");
}

#[test]
fn failing_check_exits_one_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let text = VORTEX.replace("runs = 1", "runs = 1\nradius_tolerance = 1e-30");
    let cfg = write_config(dir.path(), "vortex.toml", &text);
    let out = dir.path().join("vortex");
    let o = run("sde", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let failure = json(&out.join("failure.json"));
    assert_eq!(failure["exit_code"], 1);
    assert_eq!(failure["failed_checks"][0], "vortex radius conservation");
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SYNTH.replace("n_t = 1", "n_t = 1\nwidth = 4"));
    let o = run("synth", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));
}

#[test]
fn report_on_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = superdrift(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no manifests"), "{}", stderr(&o));
}

#[test]
fn report_merges_runs_and_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let synth = write_config(dir.path(), "synth.toml", SYNTH);
    let vortex = write_config(dir.path(), "vortex.toml", VORTEX);
    let krylov = write_config(dir.path(), "krylov.toml", KRYLOV_ZERO);
    assert!(run("synth", &synth, &runs.join("field"), &[]).status.success());
    assert!(run("sde", &vortex, &runs.join("pair"), &[]).status.success());
    assert!(run("sde", &krylov, &runs.join("heat"), &[]).status.success());

    let o = superdrift(&["report", runs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = runs.join("report");
    let summary = fs::read_to_string(report.join("summary.md")).unwrap();
    assert!(summary.contains("| pair | sde |"), "{summary}");
    assert!(summary.contains("| heat | sde |"), "{summary}");

    let blocks = fs::read_to_string(report.join("plots/field_blocks.dat")).unwrap();
    let mut lines = blocks.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    for line in lines {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 2, "{line}");
    }

    // A second report skips the first one's manifest.
    let again = superdrift(&["report", runs.to_str().unwrap(), "--out", dir.path().join("r2").to_str().unwrap()]);
    assert!(again.status.success(), "{}", stderr(&again));
}

#[test]
fn corrupted_run_is_a_checksum_error() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let synth = write_config(dir.path(), "synth.toml", SYNTH);
    assert!(run("synth", &synth, &runs.join("field"), &[]).status.success());
    fs::write(runs.join("field/regularity.json"), "{}\n").unwrap();
    let o = superdrift(&["report", runs.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn subcritical_pde_reports_lambda_and_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let text = SUPERCRITICAL
        .replace(
            "kind = \"supercritical\"\nalpha = -0.5\np = 2.0\nq = inf",
            "kind = \"subcritical\"\nalpha_b = -0.1\np_b = inf\nq_b = inf",
        )
        .replace("levels = [8, 16, 32]", "level = 8");
    let cfg = write_config(dir.path(), "sub.toml", &text);
    let out = dir.path().join("sub");
    let o = run("pde", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lam = json(&out.join("lambda.json"));
    assert!(lam["lambda"].as_f64().unwrap() >= 1.0);
    assert!(lam["gradient"].as_f64().unwrap() <= 0.5);
    assert!(!lam["attempts"].as_array().unwrap().is_empty());
}
