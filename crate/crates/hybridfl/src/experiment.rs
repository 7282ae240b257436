//! Experiment pipeline: data preparation, centralized or federated training
//! under telemetry, validation metrics and the JSON result record.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hybridfl_core::data::{generate_blobs, split_train_val, Dataset};
use hybridfl_core::federation::{partition_clients, partition_report, run_federated, RunStatus};
use hybridfl_core::learner::{predict, train_centralized, ParamVector};
use hybridfl_core::metrics::classification_metrics_with;
use hybridfl_core::{FederationError, StreamFactory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ConfigError, DataSource, ExperimentConfig, DEFAULT_NUM_SAMPLES, DEFAULT_SEPARATION};
use crate::dataset_io::{load_csv, DataFileError};
use crate::telemetry::{RunTelemetry, SystemClock, Telemetry};

/// Seeds run by the multi-seed preset.
pub const SEED_PRESET: [u64; 3] = [42, 123, 456];

pub const DATA_STREAM: &str = "data/generate";
pub const SPLIT_STREAM: &str = "data/split";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration at {0}")]
    Config(#[from] ConfigError),
    #[error("data preparation: {0}")]
    Data(String),
    #[error("dataset file: {0}")]
    DataFile(#[from] DataFileError),
    #[error("training: {0}")]
    Training(#[from] FederationError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed result file: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("baseline `{0}` is not among the results")]
    MissingBaseline(String),
    #[error("need at least {needed} result files, got {got}")]
    TooFewResults { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub mean_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub mean_grad_norm: f64,
    pub survivors: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub mode: String,
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
    /// `null` when no class has both positive and negative samples.
    pub auc: Option<f64>,
    pub training_time: f64,
    /// `null` when energy tracking is disabled.
    pub energy_kwh: Option<f64>,
    pub co2_kg: Option<f64>,
    pub status: String,
    pub failure_reason: Option<String>,
    pub round_history: Vec<RoundEntry>,
    pub epoch_history: Vec<EpochEntry>,
    pub confusion_matrix: Vec<Vec<u64>>,
    /// Per-client class counts of the federated partition.
    pub partition: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub strategy: String,
    pub sigma: f64,
    pub delta: f64,
    /// Largest epsilon spent by any client; `null` when unbounded (sigma = 0)
    /// or when the strategy has no per-step accountant.
    pub epsilon_spent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryReport {
    pub wall_seconds: f64,
    pub peak_rss_bytes: Option<u64>,
    pub device: String,
    pub watts: f64,
    pub utilization: f64,
    pub carbon_intensity: f64,
    pub phases: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducibility {
    pub seed: u64,
    pub config_hash: String,
    pub result_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment_id: String,
    /// Wall-clock creation time; never hashed.
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub git_commit: Option<String>,
    pub configuration: ExperimentConfig,
    pub results: Results,
    pub privacy: Option<PrivacyReport>,
    pub telemetry: TelemetryReport,
    pub reproducibility: Reproducibility,
}

/// The deterministic part of a result; its hash is the result hash.
#[derive(Serialize)]
struct HashedView<'a> {
    experiment_id: &'a str,
    configuration: &'a ExperimentConfig,
    mode: &'a str,
    accuracy: f64,
    f1: f64,
    mcc: f64,
    precision: f64,
    recall: f64,
    auc: Option<f64>,
    status: &'a str,
    failure_reason: Option<&'a str>,
    rounds: Vec<(usize, f64, f64, f64, usize)>,
    epochs: &'a [EpochEntry],
    confusion_matrix: &'a [Vec<u64>],
    partition: Option<&'a Vec<Vec<usize>>>,
    privacy: Option<&'a PrivacyReport>,
}

impl RunResult {
    /// Recomputes the hash over every field except timings, energy, memory,
    /// `created_at` and `git_commit`.
    pub fn compute_result_hash(&self) -> String {
        let r = &self.results;
        let view = HashedView {
            experiment_id: &self.experiment_id,
            configuration: &self.configuration,
            mode: &r.mode,
            accuracy: r.accuracy,
            f1: r.f1,
            mcc: r.mcc,
            precision: r.precision,
            recall: r.recall,
            auc: r.auc,
            status: &r.status,
            failure_reason: r.failure_reason.as_deref(),
            rounds: r
                .round_history
                .iter()
                .map(|e| (e.round, e.val_accuracy, e.val_loss, e.mean_grad_norm, e.survivors))
                .collect(),
            epochs: &r.epoch_history,
            confusion_matrix: &r.confusion_matrix,
            partition: r.partition.as_ref(),
            privacy: self.privacy.as_ref(),
        };
        hex(&Sha256::digest(serde_json::to_vec(&view).expect("result serializes")))
    }

    pub fn status(&self) -> &str {
        &self.results.status
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub git_commit: Option<String>,
}

/// The current `HEAD` of the enclosing git checkout, if any.
pub fn detect_git_commit() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .stderr(std::process::Stdio::null())
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Loads or generates the dataset and splits it into train and validation.
pub fn prepare_data(config: &ExperimentConfig, streams: &StreamFactory) -> Result<(Dataset, Dataset), ExperimentError> {
    let k = config.model.num_classes;
    let d = config.model.input_dim;
    let data = match config.dataset.source {
        DataSource::Synthetic => {
            let p = &config.dataset.params;
            let mut rng = streams.stream(DATA_STREAM).map_err(|e| ExperimentError::Data(e.to_string()))?;
            generate_blobs(
                k,
                d,
                p.num_samples.unwrap_or(DEFAULT_NUM_SAMPLES),
                p.separation.unwrap_or(DEFAULT_SEPARATION),
                &mut rng,
            )
            .map_err(|e| ExperimentError::Data(e.to_string()))?
        }
        DataSource::Csv => {
            let path = config.dataset.params.path.as_deref().expect("validated csv path");
            let raw = load_csv(path)?;
            if raw.dim() != d {
                return Err(ConfigError::new(
                    "model.input_dim",
                    format!("dataset has {} features, config says {d}", raw.dim()),
                )
                .into());
            }
            if raw.num_classes() > k {
                return Err(ConfigError::new(
                    "model.num_classes",
                    format!("dataset has labels up to {}, config allows {k} classes", raw.num_classes() - 1),
                )
                .into());
            }
            Dataset::new(raw.features().to_vec(), raw.labels().to_vec(), d, k)
                .map_err(|e| ExperimentError::Data(e.to_string()))?
        }
    };
    let mut rng = streams.stream(SPLIT_STREAM).map_err(|e| ExperimentError::Data(e.to_string()))?;
    let split = split_train_val(data.labels(), config.dataset.train_fraction, &mut rng)
        .map_err(|e| ExperimentError::Data(e.to_string()))?;
    Ok((data.subset(&split.train), data.subset(&split.val)))
}

/// Per-client class histograms of the configured federated partition.
pub fn partition_histograms(config: &ExperimentConfig) -> Result<Vec<Vec<usize>>, ExperimentError> {
    let fl = config.fl_config().ok_or_else(|| {
        ConfigError::new("federated.enabled", "partition reports need a federated configuration")
    })?;
    let streams = StreamFactory::new(config.experiment.seed);
    let (train, _) = prepare_data(config, &streams)?;
    let partition = partition_clients(&fl, &train, &streams)?;
    Ok(partition_report(&partition, &train))
}

struct Trained {
    mode: &'static str,
    params: ParamVector,
    status: RunStatus,
    rounds: Vec<RoundEntry>,
    epochs: Vec<EpochEntry>,
    partition: Option<Vec<Vec<usize>>>,
    epsilon: Option<f64>,
}

fn train(
    config: &ExperimentConfig,
    train_set: &Dataset,
    val: &Dataset,
    streams: &StreamFactory,
) -> Result<Trained, ExperimentError> {
    let spec = config.model_spec();
    match config.fl_config() {
        None => {
            let (params, history) =
                train_centralized(&spec, train_set, val, &config.train_hyper(), streams, |_, _| {})?;
            Ok(Trained {
                mode: "centralized",
                params,
                status: RunStatus::Completed,
                rounds: Vec::new(),
                epochs: history
                    .epochs
                    .iter()
                    .map(|e| EpochEntry {
                        epoch: e.epoch,
                        train_loss: e.train_loss,
                        val_accuracy: e.val_accuracy,
                        val_loss: e.val_loss,
                        mean_grad_norm: e.mean_grad_norm,
                    })
                    .collect(),
                partition: None,
                epsilon: None,
            })
        }
        Some(fl) => {
            let clock = SystemClock::new();
            let out = run_federated(&fl, &spec, train_set, val, streams, &clock, |_, _| {})?;
            Ok(Trained {
                mode: "federated",
                params: out.best_params,
                status: out.status,
                rounds: out
                    .history
                    .iter()
                    .map(|r| RoundEntry {
                        round: r.round,
                        val_accuracy: r.val_accuracy,
                        val_loss: r.val_loss,
                        mean_grad_norm: r.mean_grad_norm,
                        survivors: r.survivors,
                        wall_seconds: r.wall_seconds,
                    })
                    .collect(),
                epochs: Vec::new(),
                partition: Some(partition_report(&out.partition, train_set)),
                epsilon: out.epsilon,
            })
        }
    }
}

/// Runs one experiment. The result is not written to disk.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<RunResult, ExperimentError> {
    config.validate()?;
    let telemetry = Telemetry::new();
    let streams = StreamFactory::new(config.experiment.seed);
    let (train_set, val) = telemetry.time("data", || prepare_data(config, &streams))?;
    let trained = telemetry.time("training", || train(config, &train_set, &val, &streams))?;
    let report = telemetry.time("evaluation", || {
        let (pred, scores) = predict(&trained.params, &config.model_spec(), &val);
        classification_metrics_with(val.labels(), &pred, &scores, config.model.num_classes, config.averaging())
    });
    let report = report.map_err(|e| ExperimentError::Data(e.to_string()))?;

    let training_time = telemetry.total("training");
    let profile = config.power_profile();
    let measured = RunTelemetry::new(
        training_time,
        &profile,
        config.monitoring.carbon_intensity,
        telemetry.phases(),
    );
    let track = config.monitoring.track_energy;
    let k = config.model.num_classes;
    let confusion_matrix = (0..k)
        .map(|t| (0..k).map(|p| report.confusion.get(t, p)).collect())
        .collect();
    let failure_reason = match &trained.status {
        RunStatus::Completed => None,
        RunStatus::FailedConvergence { reason, .. } => Some(reason.clone()),
        RunStatus::ProtocolAbort { message, .. } => Some(message.clone()),
    };
    let privacy = config.differential_privacy.enabled.then(|| PrivacyReport {
        strategy: serde_json::to_value(config.differential_privacy.strategy)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        sigma: config.sigma().unwrap_or(0.0),
        delta: config.differential_privacy.delta.unwrap_or(0.0),
        epsilon_spent: trained.epsilon.filter(|e| e.is_finite()),
    });

    let mut result = RunResult {
        experiment_id: config.experiment_id(),
        created_at: chrono::Utc::now().to_rfc3339(),
        git_commit: options.git_commit.clone(),
        configuration: config.clone(),
        results: Results {
            mode: trained.mode.into(),
            accuracy: report.accuracy,
            f1: report.f1,
            mcc: report.mcc,
            precision: report.precision,
            recall: report.recall,
            auc: report.auc,
            training_time,
            energy_kwh: track.then_some(measured.energy_kwh),
            co2_kg: track.then_some(measured.co2_kg),
            status: trained.status.as_str().into(),
            failure_reason,
            round_history: trained.rounds,
            epoch_history: trained.epochs,
            confusion_matrix,
            partition: trained.partition,
        },
        privacy,
        telemetry: TelemetryReport {
            wall_seconds: measured.wall_seconds,
            peak_rss_bytes: measured.peak_rss_bytes,
            device: profile.device.clone(),
            watts: profile.watts,
            utilization: profile.utilization,
            carbon_intensity: config.monitoring.carbon_intensity,
            phases: measured.phases,
        },
        reproducibility: Reproducibility {
            seed: config.experiment.seed,
            config_hash: config.config_hash(),
            result_hash: String::new(),
        },
    };
    result.reproducibility.result_hash = result.compute_result_hash();
    Ok(result)
}

/// Writes `<dir>/<experiment_id>.json` and returns its path.
pub fn write_result(result: &RunResult, dir: &Path) -> Result<PathBuf, ExperimentError> {
    let io_err = |source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let path = dir.join(format!("{}.json", result.experiment_id));
    fs::write(&path, result.to_json() + "\n").map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn load_result(path: &Path) -> Result<RunResult, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and validates a YAML config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(crate::config::parse_config(&text)?)
}
