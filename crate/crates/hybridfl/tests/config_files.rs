use std::path::PathBuf;

use hybridfl::config::{emit_config, parse_config};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("yaml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let config = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = parse_config(&emit_config(&config)).unwrap();
        assert_eq!(config, again);
        assert_eq!(config.config_hash(), again.config_hash());
        seen += 1;
    }
    assert!(seen >= 5);
}

const MINIMAL: &str = "experiment:\n  name: x\nmodel:\n  kind: logistic\n  input_dim: 2\n  num_classes: 2\n";

fn error_path(extra: &str) -> String {
    parse_config(&format!("{MINIMAL}{extra}")).unwrap_err().path
}

#[test]
fn errors_name_the_offending_field() {
    assert_eq!(error_path("federated:\n  enabled: true\n  num_clients: 0\n"), "federated.num_clients");
    assert_eq!(error_path("secure_mpc:\n  enabled: true\n"), "secure_mpc.enabled");
    assert_eq!(
        error_path("federated:\n  enabled: true\nsecure_mpc:\n  enabled: true\n  threshold: 4\n"),
        "secure_mpc.threshold"
    );
    assert_eq!(
        error_path("federated:\n  enabled: true\ndifferential_privacy:\n  enabled: true\n  strategy: ldp_pe\n  epsilon: 1.0\n"),
        "differential_privacy.delta"
    );
    assert_eq!(
        error_path("federated:\n  enabled: true\ndifferential_privacy:\n  enabled: true\n  strategy: wrong\n"),
        "differential_privacy.strategy"
    );
    assert_eq!(error_path("training:\n  learning_rate: fast\n"), "training.learning_rate");
    assert_eq!(error_path("training:\n  momentum: 0.9\n"), "training.momentum");
    assert_eq!(error_path("dataset:\n  source: csv\n"), "dataset.params.path");
}

#[test]
fn central_dp_with_secure_aggregation_is_rejected() {
    let extra = "federated:\n  enabled: true\nsecure_mpc:\n  enabled: true\ndifferential_privacy:\n  enabled: true\n  strategy: cdp_sf\n  epsilon: 1.0\n  delta: 1.0e-5\n";
    let e = parse_config(&format!("{MINIMAL}{extra}")).unwrap_err();
    assert!(e.path.starts_with("differential_privacy"), "{e}");
}

#[test]
fn hash_changes_with_any_setting() {
    let a = parse_config(MINIMAL).unwrap();
    let b = parse_config(&format!("{MINIMAL}training:\n  epochs: 6\n")).unwrap();
    let c = parse_config(&MINIMAL.replace("name: x", "name: y")).unwrap();
    assert_ne!(a.config_hash(), b.config_hash());
    assert_ne!(a.experiment_id(), c.experiment_id());
    assert!(a.experiment_id().starts_with("x-"));
}

#[test]
fn shipped_baseline_keeps_seed_batch_and_patience() {
    let text = std::fs::read_to_string(configs_dir().join("baseline.yaml")).unwrap();
    let c = parse_config(&text).unwrap();
    assert_eq!(c.experiment.seed, 42);
    assert_eq!(c.dataset.batch_size, 32);
    assert_eq!(c.training.early_stopping_patience, 7);
    assert!(!c.federated.enabled && !c.secure_mpc.enabled && !c.differential_privacy.enabled);
}

#[test]
fn image_pipeline_layout_is_rejected_at_first_unknown_key() {
    let foreign = "experiment:
  name: \"baseline_resnet18\"
  seed: 42
  output_dir: \"./results/baseline\"
model:
  architecture: \"resnet18\"
  num_classes: 4
dataset:
  batch_size: 32
training:
  early_stopping_patience: 7
privacy:
  federated: false
";
    let e = parse_config(foreign).unwrap_err();
    assert_eq!(e.path, "model.architecture", "{e}");
}
