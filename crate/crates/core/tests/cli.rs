use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use separatrix_lab::cli::*;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seplab"));
    c.env_remove(OUT_ENV);
    c
}

fn config_error(text: &str) -> String {
    match ScenarioConfig::from_toml(text) {
        Err(ScenarioError::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn invalid(cfg: &ScenarioConfig) -> String {
    match cfg.validate() {
        Err(e @ ScenarioError::Config(_)) => {
            assert_eq!(e.exit_code(), 2);
            e.to_string()
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

fn theorem_b() -> ScenarioConfig {
    ScenarioConfig { scenario: Scenario::TheoremB, name: "b".into(), ..ScenarioConfig::default() }
}

/// One theorem-b run shared by the artifact tests.
fn theorem_b_run() -> &'static (tempfile::TempDir, ScenarioOutcome) {
    static R: OnceLock<(tempfile::TempDir, ScenarioOutcome)> = OnceLock::new();
    R.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&theorem_b(), dir.path()).unwrap();
        (dir, out)
    })
}

#[test]
fn default_config_validates_and_round_trips() {
    let cfg = ScenarioConfig::default();
    cfg.validate().unwrap();
    assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(ScenarioConfig::from_toml("").unwrap(), cfg);
}

#[test]
fn partial_config_keeps_defaults() {
    let cfg = ScenarioConfig::from_toml("scenario = \"theorem-a\"\n[fd]\nx_star = 0.08\n").unwrap();
    assert_eq!(cfg.scenario, Scenario::TheoremA);
    assert_eq!(cfg.fd.x_star, 0.08);
    assert_eq!(cfg.fd.y_star, ScenarioConfig::default().fd.y_star);
}

#[test]
fn unknown_field_is_named() {
    let msg = config_error("[fd]\nx_start = 0.1\n");
    assert!(msg.contains("x_start"), "{msg}");
    let msg = config_error("bogus = 1\n");
    assert!(msg.contains("bogus"), "{msg}");
}

#[test]
fn bad_type_reports_line() {
    let msg = config_error("name = \"x\"\nepsilons = \"small\"\n");
    assert!(msg.contains("line 2") && msg.contains("epsilons"), "{msg}");
    let msg = config_error("scenario = \"theorem-c\"\n");
    assert!(msg.contains("theorem-c"), "{msg}");
}

#[test]
fn load_prefixes_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[curves]\ngrid = -1\n").unwrap();
    let err = ScenarioConfig::load(&p).unwrap_err();
    assert!(err.to_string().contains("bad.toml"), "{err}");
    assert_eq!(err.exit_code(), 2);
    // a missing file is a usage error too
    let err = ScenarioConfig::load(&dir.path().join("missing.toml")).unwrap_err();
    assert!(err.to_string().contains("missing.toml") && err.exit_code() == 2, "{err}");
}

#[test]
fn validation_rejects_out_of_range_values() {
    let d = ScenarioConfig::default;
    assert!(invalid(&ScenarioConfig { epsilons: vec![], ..d() }).contains("epsilons"));
    assert!(invalid(&ScenarioConfig { epsilons: vec![0.5], ..d() }).contains("epsilons"));
    assert!(invalid(&ScenarioConfig { epsilons: vec![f64::NAN], ..d() }).contains("epsilons"));
    // exp(-(n + 1)) must fall below c* x* y*
    assert!(invalid(&ScenarioConfig { levels: vec![3], ..d() }).contains("levels"));
    assert!(invalid(&ScenarioConfig { levels: vec![61], ..d() }).contains("levels"));
    assert!(invalid(&ScenarioConfig { omegas: vec![1.0], ..d() }).contains("omegas"));
    assert!(invalid(&ScenarioConfig { omegas: vec![0.0], ..d() }).contains("omegas"));
    let mut c = d();
    c.fd.x_star = 0.2;
    assert!(invalid(&c).contains("x_star"));
    let mut c = d();
    c.fd.c_star = 1.0;
    assert!(invalid(&c).contains("c_star"));
    let mut c = d();
    c.counterexample.rho = 0.5;
    assert!(invalid(&c).contains("rho"));
    let mut c = d();
    c.model.q_higher = vec![0.05];
    assert!(invalid(&c).contains("linear q"));
    c.scenario = Scenario::TheoremA;
    c.validate().unwrap();
    let mut c = d();
    c.curves.grid = 2 * c.curves.modes;
    assert!(invalid(&c).contains("grid"));
}

#[test]
fn y_star_above_lobe_height_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tall.toml");
    std::fs::write(&p, "[fd]\ny_star = 0.5\n").unwrap();
    let out = bin().args(["--check-only", "--config"]).arg(&p).arg("report").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fd.y_star"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn check_only_accepts_defaults_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["--check-only", "--out"]).arg(dir.path()).arg("report").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "config ok");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unparsable_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("typo.toml");
    std::fs::write(&p, "[counterexample]\nsteps = \"ten\"\n").unwrap();
    let out = bin().arg("--config").arg(&p).arg("model").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steps"));
}

#[test]
fn plots_on_empty_dir_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let err = emit_plots(dir.path()).unwrap_err();
    assert!(matches!(err, ScenarioError::MissingArtifact(_)));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    let out = bin().arg("--out").arg(dir.path()).arg("plots").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn model_command_writes_artifacts_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("--out").arg(dir.path()).arg("model").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.json", "separatrix.csv", "fundamental_domain.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], SCHEMA_VERSION);
    let plots = emit_plots(dir.path()).unwrap();
    assert_eq!(plots.len(), 1);
    assert!(std::fs::read_to_string(&plots[0]).unwrap().contains("separatrix.csv"));
}

#[test]
fn env_override_and_flag_precedence() {
    let cfg = ScenarioConfig { output_dir: "from-config".into(), ..ScenarioConfig::default() };
    assert_eq!(resolve_output_dir(&cfg, Some(Path::new("flag"))), Path::new("flag"));

    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = bin().env(OUT_ENV, env_dir.path()).arg("model").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env_dir.path().join("model.json").is_file());
    let out = bin().env(OUT_ENV, env_dir.path()).arg("--out").arg(flag_dir.path()).args(["orbit", "--x", "0.05", "--y", "0.001", "--steps", "20"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.path().join("orbit.csv").is_file());
    assert!(!env_dir.path().join("orbit.csv").exists());
}

#[test]
fn return_map_command_accepts_negative_logy() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--out")
        .arg(dir.path())
        .args(["return-map", "--x", "0.3", "--logy", "-10", "--steps", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("return_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn theorem_b_emits_its_artifacts() {
    let (dir, out) = theorem_b_run();
    assert_eq!(out.report.checks.len(), 1);
    assert_eq!(out.report.checks[0].criterion, 8);
    assert_eq!(out.timings.len(), 1);
    for f in ["report.json", "descent.json", "certificate.json", "counterexample.json", "witness.csv", "model.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
        if f != "report.json" {
            assert!(out.report.artifacts.iter().any(|a| a == f), "{f}");
        }
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.report_path).unwrap()).unwrap();
    assert_eq!(json["schema_version"], SCHEMA_VERSION);
    assert_eq!(json["scenario"], "theorem-b");
    assert_eq!(json["pass"], out.report.pass);
    assert_eq!(out.exit_code(), if out.report.pass { 0 } else { 1 });
    // witness.csv is plottable
    assert!(emit_plots(dir.path()).unwrap().len() >= 2);
}

#[test]
fn theorem_b_report_is_deterministic() {
    let (_, first) = theorem_b_run();
    let dir = tempfile::tempdir().unwrap();
    let second = run_scenario(&theorem_b(), dir.path()).unwrap();
    assert_eq!(std::fs::read(&first.report_path).unwrap(), std::fs::read(&second.report_path).unwrap());
    for f in ["descent.json", "certificate.json", "witness.csv"] {
        let a = std::fs::read(first.report_path.with_file_name(f)).unwrap();
        let b = std::fs::read(dir.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn theorem_a_small_scenario_emits_catalog() {
    let cfg = ScenarioConfig {
        scenario: Scenario::TheoremA,
        epsilons: vec![0.0],
        levels: vec![7, 8],
        omegas: separatrix_lab::curves::omega_menu()[..3].to_vec(),
        ..ScenarioConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&cfg, dir.path()).unwrap();
    let crit: Vec<u8> = out.report.checks.iter().map(|c| c.criterion).collect();
    assert_eq!(crit, [5, 6, 7]);
    assert!(dir.path().join("curves.json").is_file());
    let acc = std::fs::read_to_string(dir.path().join("accumulation.csv")).unwrap();
    assert!(acc.lines().count() >= 2);
    assert!(out.report.artifacts.iter().any(|a| a.starts_with("circle_eps")));
}
