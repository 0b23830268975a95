use std::fs;

use super::*;

const LTI: &str = r#"
experiment = "closed_loop_run"
name = "unit"
reference = [1.0]

[plant]
kind = "lti"
a = [[-1.0]]
b = [[1.0]]
c = [[1.0]]

[controller]
mode = "saturating"
k = 0.5
input_map = "identity"
u_set = { kind = "box", dimension = 1, lower = [-2.0], upper = [2.0] }

[numerics]
h = 1e-2
horizon = 5.0

[initial]
policy = "explicit"
x0 = [0.0]
u0 = [0.0]
"#;

const SV: &str = r#"
experiment = "reference_schedule"

[plant]
kind = "synchronverter"

[controller]
mode = "saturating"
k = 2.0
input_map = "sv-right-inverse"
sv_polygon = { radius = 15000.0, vertices = 12, margin = 500.0 }

[schedule]
preset = "power_schedule"
"#;

fn lti() -> ExperimentConfig {
    ExperimentConfig::from_toml(LTI).unwrap()
}

#[test]
fn toml_round_trip_preserves_config() {
    let cfg = lti();
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn unknown_fields_are_parse_errors() {
    let text = LTI.replace("horizon = 5.0", "horizon = 5.0\nhorizn = 3.0");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn bundled_style_configs_validate() {
    assert!(validate_experiment(&lti()).is_empty());
    let sv = ExperimentConfig::from_toml(SV).unwrap();
    assert_eq!(validate_experiment(&sv), vec![]);
}

#[test]
fn negative_step_is_diagnosed() {
    let mut cfg = lti();
    cfg.numerics.h = -1e-3;
    let d = validate_experiment(&cfg);
    assert!(d.iter().any(|d| d.field == "numerics.h"), "{d:?}");
}

#[test]
fn decreasing_gains_required_for_sp_check() {
    let mut cfg = lti();
    cfg.experiment = ExperimentKind::SpConsistency;
    cfg.gains = Some(vec![0.1, 0.5]);
    assert!(validate_experiment(&cfg).iter().any(|d| d.field == "gains"));
}

#[test]
fn box_outside_region_cites_vertex() {
    let text = SV
        .replace("input_map = \"sv-right-inverse\"", "input_map = \"static-matrix\"")
        .replace(
            "sv_polygon = { radius = 15000.0, vertices = 12, margin = 500.0 }",
            "u_set = { kind = \"box\", dimension = 2, lower = [-3000.0, 50.0], upper = [3500.0, 6000.0] }",
        );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let d = validate_experiment(&cfg);
    assert!(!d.is_empty());
    assert!(d.iter().all(|d| d.field == "controller.u_set"), "{d:?}");
    assert!(d[0].message.contains("vertex"), "{}", d[0]);
}

#[test]
fn oversized_polygon_is_still_clipped_inside_region() {
    let text = SV.replace("radius = 15000.0", "radius = 60000.0");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert!(validate_experiment(&cfg).is_empty());
}

#[test]
fn dimension_mismatch_in_reference() {
    let mut cfg = lti();
    cfg.reference = Some(vec![1.0, 2.0]);
    assert!(validate_experiment(&cfg).iter().any(|d| d.field == "reference"));
}

#[test]
fn run_writes_manifest_and_summary_last() {
    let dir = tempfile::tempdir().unwrap();
    let over = RunOverrides {
        out: Some(dir.path().to_path_buf()),
        seed: Some(5),
    };
    let s = run_config(&lti(), LTI.as_bytes(), &over).unwrap();
    assert!(s.is_ok());
    assert_eq!(s.seed, 5);
    assert_eq!(s.segments.len(), 1);
    for m in &s.manifest {
        let bytes = fs::read(dir.path().join(&m.file)).unwrap();
        assert_eq!(bytes.len() as u64, m.bytes);
        assert_eq!(hex::encode(sha2::Sha256::digest(&bytes)), m.sha256);
    }
    let summary = fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    assert!(summary.contains(&s.config_hash));
    // no temporaries left behind
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), s.manifest.len() + 1);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = lti();
    let sa = run_config(
        &cfg,
        LTI.as_bytes(),
        &RunOverrides {
            out: Some(a.path().into()),
            seed: None,
        },
    )
    .unwrap();
    let sb = run_config(
        &cfg,
        LTI.as_bytes(),
        &RunOverrides {
            out: Some(b.path().into()),
            seed: None,
        },
    )
    .unwrap();
    assert_eq!(sa.manifest, sb.manifest);
}

#[test]
fn error_exit_codes() {
    assert_eq!(ExperimentError::Parse("x".into()).exit_code(), exit_code::CONFIG_PARSE);
    assert_eq!(ExperimentError::Invalid(vec![]).exit_code(), exit_code::CONFIG_INVALID);
    assert_eq!(ExperimentError::Numerical("x".into()).exit_code(), exit_code::NUMERICAL);
    let io = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
    assert_eq!(ExperimentError::from(io).exit_code(), exit_code::IO);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = lti();
    cfg.numerics.horizon = 0.0;
    let err = run_config(
        &cfg,
        b"",
        &RunOverrides {
            out: Some(dir.path().into()),
            seed: None,
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), exit_code::CONFIG_INVALID);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn missing_file_is_io_error() {
    let err = run_experiment(std::path::Path::new("/nonexistent/cfg.toml"), &RunOverrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), exit_code::IO);
}

use sha2::Digest;
