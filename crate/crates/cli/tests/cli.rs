use std::path::Path;
use wheeljump::campaign::{run_botp, CampaignConfig, ParameterLibrary};
use wheeljump_cli::{run, EXIT_FAILED, EXIT_OK, EXIT_USAGE};

fn invoke(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("wheeljump").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn dir_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn plan_reports_takeoff_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(&["plan", "--height", "0.260806", "--out", &dir_arg(dir.path())]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("take-off velocity  2.0000 m/s"), "{out}");
    assert!(dir.path().join("plan_0p261.json").exists());
}

#[test]
fn infeasible_height_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = invoke(&["plan", "--height", "0", "--out", &dir_arg(dir.path())]);
    assert_eq!(code, EXIT_FAILED);
    let (code, _) = invoke(&["plan", "--height", "5", "--out", &dir_arg(dir.path())]);
    assert_eq!(code, EXIT_FAILED);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    assert_eq!(invoke(&["plan"]).0, EXIT_USAGE);
    assert_eq!(invoke(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(
        invoke(&["--config", "/nonexistent/cfg.toml", "plan", "--height", "0.3", "--out", &out]).0,
        EXIT_USAGE
    );
    assert_eq!(invoke(&["optimize", "--height", "0.3", "--budget", "0", "--out", &out]).0, EXIT_USAGE);
    assert_eq!(invoke(&["simulate", "--height", "0.3", "--method", "botp", "--out", &out]).0, EXIT_USAGE);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[robot]\nwheel_radius = -1.0\n").unwrap();
    let (code, _) = invoke(&["--config", cfg.to_str().unwrap(), "plan", "--height", "0.3", "--out", &out]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn simulate_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, out) = invoke(&["simulate", "--height", "0.3", "--out", &dir_arg(d.path())]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(out.contains("error="), "{out}");
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("trial_wjbd_0p300.csv")).unwrap();
    let bytes = read(&a);
    assert_eq!(bytes, read(&b));
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("t,phase,z_wheel,z_com,knee_angle,knee_torque,knee_rate\n"));
}

#[test]
fn campaign_library_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    let (code, text) = invoke(&["campaign", "--budget", "20", "--seed", "0", "--height", "0.3", "--out", &out]);
    assert_eq!(code, EXIT_OK, "{text}");
    for f in ["library.json", "comparison.csv", "opt_0p300_seed0.json", "convergence_0p300_seed0.csv"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(csv.starts_with("target,method,height_error_pct,energy_J,torque_step_Nm,iterations"));
    assert_eq!(csv.lines().count(), 3);

    let lib = ParameterLibrary::from_json(&std::fs::read_to_string(dir.path().join("library.json")).unwrap()).unwrap();
    let botp = lib.entry(0.3).unwrap().botp.as_ref().unwrap();
    let cfg = CampaignConfig::default();
    let rec = run_botp(&botp.best_params, botp.prejump_angle, &cfg.robot, &cfg.sim, &cfg.optimizer).unwrap();
    let stored = botp.runs[0].metrics.height;
    assert!((rec.apex_wheel_height - stored).abs() <= 1e-12 * stored.abs());

    let lib_path = dir.path().join("library.json");
    let (code, text) = invoke(&[
        "simulate", "--height", "0.3", "--method", "botp", "--params", lib_path.to_str().unwrap(), "--out", &out,
    ]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(dir.path().join("trial_botp_0p300.csv").exists());
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[robot]\nspring_stiffness = 2500.0\n").unwrap();
    let (_, base) = invoke(&["plan", "--height", "0.3", "--out", &dir_arg(dir.path())]);
    let (code, stiff) = invoke(&["--config", cfg.to_str().unwrap(), "plan", "--height", "0.3", "--out", &dir_arg(dir.path())]);
    assert_eq!(code, EXIT_OK);
    assert_ne!(base, stiff);
}
