use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ensx");

fn tiny_config(workspace: &Path, mcmc: &str, extra: &str) -> String {
    format!(
        r#"{{
  "workspace": {ws:?},
  "seed": 7,
  "mcmc": {mcmc},
  {extra}
  "synthetic": {{
    "grid": {{"lat_first": 30.0, "lat_last": 28.0, "nlat": 3, "lon_start": 260.0, "dlon": 1.0, "nlon": 4}},
    "land_share": 0.7,
    "t2m": {{"location": 38.0, "location_per_degree": -0.3, "scale": 2.0, "shape": -0.1}},
    "ensembles": {{
      "small": {{"members": 20, "mode": "blocks"}},
      "huge": {{"members": 500, "mode": "maxima"}},
      "reference": {{"members": 1, "mode": "blocks"}}
    }}
  }}
}}"#,
        ws = workspace.to_str().unwrap()
    )
}

const FAST_MCMC: &str = r#"{"chains": 4, "iterations": 2000, "burn_in": 1000, "thinning": 2}"#;

fn ensx(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("ENSX_WORKSPACE")
        .env_remove("ENSX_JOBS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_config_validates() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    let out = ensx(&cfg, &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn invalid_config_exits_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let cfg = dir.path().join("bad.json");
    let text = tiny_config(
        &ws,
        r#"{"iterations": 100, "burn_in": 100}"#,
        r#""analysis": {"extreme_probability": 1.5},"#,
    );
    std::fs::write(&cfg, text).unwrap();

    let out = ensx(&cfg, &["validate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("analysis.extreme_probability"), "{err}");
    assert!(err.contains("mcmc.burn_in"), "{err}");

    let out = ensx(&cfg, &["run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!ws.exists());
}

#[test]
fn malformed_json_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"workspace": "w", "sed": 1}"#).unwrap();
    let out = ensx(&cfg, &["validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sed"));
}

#[test]
fn missing_inputs_exit_2_with_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let cfg = dir.path().join("run.json");
    // fit before extract: the maxima file does not exist yet
    std::fs::write(&cfg, tiny_config(&ws, FAST_MCMC, "")).unwrap();
    let out = ensx(&cfg, &["fit"]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(stderr(&out).lines().last().unwrap()).unwrap();
    assert_eq!(report["stage"], "fit");
    assert!(report["error"].as_str().unwrap().contains("t2m.ensx"));
}

#[test]
fn reruns_and_single_stage_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, tiny_config(&ws, FAST_MCMC, "")).unwrap();

    let out = ensx(&cfg, &["run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let first = std::fs::read(ws.join("manifest.json")).unwrap();
    assert!(ws.join("report/exceedance.csv").exists());
    assert!(ws.join("report/maps/t2m_confidence.png").exists());

    let out = ensx(&cfg, &["run", "--stage", "fit", "--stage", "compare"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(std::fs::read(ws.join("manifest.json")).unwrap(), first);

    let out = Command::new(BIN)
        .args(["--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("run")
        .env("ENSX_JOBS", "3")
        .env_remove("ENSX_WORKSPACE")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(std::fs::read(ws.join("manifest.json")).unwrap(), first);
}

#[test]
fn workspace_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, tiny_config(&dir.path().join("unused"), FAST_MCMC, "")).unwrap();
    let ws = dir.path().join("elsewhere");
    let out = Command::new(BIN)
        .arg("--config")
        .arg(&cfg)
        .arg("synth")
        .env("ENSX_WORKSPACE", &ws)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(ws.join("synth/truth.csv").exists());
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn convergence_warnings_set_the_configured_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let short = r#"{"chains": 4, "iterations": 24, "burn_in": 12, "thinning": 1, "adaptation_window": 4}"#;
    for (code, expected) in [("3", 3), ("0", 0)] {
        let cfg = dir.path().join(format!("run{code}.json"));
        let extra = format!(r#""variables": ["t2m"], "convergence_exit_code": {code},"#);
        std::fs::write(&cfg, tiny_config(&ws, short, &extra)).unwrap();
        let out = ensx(&cfg, &["run"]);
        assert_eq!(out.status.code(), Some(expected), "{}", stderr(&out));
        if expected == 3 {
            assert!(stderr(&out).contains("R-hat"));
        }
    }
}
