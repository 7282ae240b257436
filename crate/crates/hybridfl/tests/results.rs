use std::path::PathBuf;

use hybridfl::config::{parse_config, ExperimentConfig};
use hybridfl::experiment::{load_result, run_experiment, write_result, RunOptions, RunResult, SEED_PRESET};
use hybridfl::report::{compare_runs, plot_data, write_plot_csv};
use hybridfl_core::stats::{bonferroni, cohens_d, paired_t_test};

const SMALL: &str = "experiment:
  name: small
model:
  kind: logistic
  input_dim: 8
  num_classes: 3
dataset:
  params:
    num_samples: 600
    separation: 6.0
training:
  epochs: 3
  learning_rate: 0.05
";

fn config(extra: &str) -> ExperimentConfig {
    parse_config(&format!("{SMALL}{extra}")).unwrap()
}

fn run(c: &ExperimentConfig) -> RunResult {
    run_experiment(c, &RunOptions::default()).unwrap()
}

fn schema() -> serde_json::Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas/run_result.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn repeated_runs_share_a_result_hash() {
    let c = config("");
    let (a, b) = (run(&c), run(&c));
    assert_eq!(a.reproducibility.result_hash, b.reproducibility.result_hash);
    assert_eq!(a.reproducibility.config_hash, c.config_hash());

    let hashes: Vec<String> = SEED_PRESET
        .iter()
        .map(|&s| {
            let mut cs = c.clone();
            cs.experiment.seed = s;
            let first = run(&cs).reproducibility.result_hash;
            assert_eq!(first, run(&cs).reproducibility.result_hash);
            first
        })
        .collect();
    assert_ne!(hashes[0], hashes[1]);
    assert_ne!(hashes[1], hashes[2]);
    assert_ne!(hashes[0], hashes[2]);
}

#[test]
fn results_conform_to_the_schema() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let variants = [
        "",
        "federated:\n  enabled: true\n",
        "federated:\n  enabled: true\nsecure_mpc:\n  enabled: true\n",
        "federated:\n  enabled: true\ndifferential_privacy:\n  enabled: true\n  strategy: ldp_mod\n  epsilon: 1.0\n  delta: 1.0e-5\n",
        "monitoring:\n  track_energy: false\n",
    ];
    for extra in variants {
        let r = run(&config(extra));
        let value = serde_json::to_value(&r).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| format!("{} at {}", e, e.instance_path())).collect();
        assert!(errors.is_empty(), "{extra}: {errors:?}");
    }
    let mut broken = serde_json::to_value(run(&config(""))).unwrap();
    broken["results"]["status"] = "finished".into();
    assert!(!validator.is_valid(&broken));
}

#[test]
fn one_client_federation_matches_the_baseline() {
    let base = run(&config(""));
    let fl = run(&config("federated:\n  enabled: true\n  num_clients: 1\n  num_rounds: 3\n"));
    assert_eq!(base.results.confusion_matrix, fl.results.confusion_matrix);
    assert_eq!(base.results.accuracy, fl.results.accuracy);
    assert_eq!(base.results.mcc, fl.results.mcc);
    assert!((base.results.auc.unwrap() - fl.results.auc.unwrap()).abs() < 1e-9);
}

#[test]
fn energy_is_null_when_tracking_is_off() {
    let r = run(&config("monitoring:\n  track_energy: false\n"));
    assert_eq!(r.results.energy_kwh, None);
    assert_eq!(r.results.co2_kg, None);
    let on = run(&config(""));
    let kwh = on.results.energy_kwh.unwrap();
    assert!((kwh - on.results.training_time * 70.0 / 3.6e6).abs() < 1e-15);
}

#[test]
fn written_results_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&config(""));
    let path = write_result(&r, dir.path()).unwrap();
    assert_eq!(path.file_name().unwrap().to_str().unwrap(), format!("{}.json", r.experiment_id));
    assert_eq!(load_result(&path).unwrap(), r);
}

fn fake(name: &str, seed: u64, accuracy: f64, time: f64, template: &RunResult) -> RunResult {
    let mut r = template.clone();
    r.configuration.experiment.name = name.into();
    r.configuration.experiment.seed = seed;
    r.experiment_id = r.configuration.experiment_id();
    r.reproducibility.seed = seed;
    r.results.accuracy = accuracy;
    r.results.training_time = time;
    r.results.energy_kwh = Some(time * 70.0 / 3.6e6);
    r
}

#[test]
fn comparison_matches_statistics_oracle() {
    let t = run(&config(""));
    let base = [0.91, 0.88, 0.95];
    let dp = [0.25, 0.31, 0.22];
    let smpc = [0.90, 0.89, 0.93];
    let mut results = Vec::new();
    for (i, &s) in SEED_PRESET.iter().enumerate() {
        results.push(fake("baseline", s, base[i], 9.8, &t));
        results.push(fake("fl_dp", s, dp[i], 20.0, &t));
        results.push(fake("fl_smpc", s, smpc[i], 235.6, &t));
    }
    let rows = compare_runs(&results, "baseline").unwrap();
    assert_eq!(rows[0].config, "baseline");
    assert_eq!(rows[0].overhead_factor, Some(1.0));
    assert_eq!(rows[0].delta_accuracy, 0.0);
    assert_eq!(rows[0].p_value, None);

    let smpc_row = rows.iter().find(|r| r.config == "fl_smpc").unwrap();
    assert!((smpc_row.overhead_factor.unwrap() - 24.0).abs() < 0.1);

    let t_dp = paired_t_test(&dp, &base).unwrap();
    let t_smpc = paired_t_test(&smpc, &base).unwrap();
    let adjusted = bonferroni(&[t_dp.p_value, t_smpc.p_value], 2).unwrap();
    let dp_row = rows.iter().find(|r| r.config == "fl_dp").unwrap();
    assert!((dp_row.t_statistic.unwrap() - t_dp.statistic).abs() < 1e-12);
    assert!((dp_row.p_bonferroni.unwrap() - adjusted[0]).abs() < 1e-12);
    assert!((smpc_row.p_bonferroni.unwrap() - adjusted[1]).abs() < 1e-12);
    assert!((dp_row.cohens_d.unwrap() - cohens_d(&dp, &base).unwrap()).abs() < 1e-12);

    let by_id = compare_runs(&results, &results[0].experiment_id).unwrap();
    assert_eq!(by_id, rows);
    assert!(compare_runs(&results, "nope").is_err());
    assert!(compare_runs(&results[..1], "baseline").is_err());
}

#[test]
fn plot_rows_read_back_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let t = run(&config(""));
    let a = fake("baseline", 42, 0.97, 9.8, &t);
    let b = fake("smpc", 42, 0.96, 235.6, &t);
    let paths: Vec<PathBuf> = [&a, &b].iter().map(|r| write_result(r, dir.path()).unwrap()).collect();
    let loaded: Vec<RunResult> = paths.iter().map(|p| load_result(p).unwrap()).collect();
    let rows = plot_data(&loaded, None).unwrap();
    let mut buf = Vec::new();
    write_plot_csv(&mut buf, &rows).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["config", "accuracy", "overhead_factor", "mcc", "energy_kwh"]
    );
    let records: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    for (rec, src) in records.iter().zip(&loaded) {
        assert_eq!(&rec[0], src.configuration.experiment.name);
        assert_eq!(rec[1].parse::<f64>().unwrap(), src.results.accuracy);
        assert_eq!(rec[3].parse::<f64>().unwrap(), src.results.mcc);
        assert_eq!(rec[4].parse::<f64>().unwrap(), src.results.energy_kwh.unwrap());
    }
    let overhead: f64 = records[1][2].parse().unwrap();
    assert!((overhead - 235.6 / 9.8).abs() < 1e-12);
}
