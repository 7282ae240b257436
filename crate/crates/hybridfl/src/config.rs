//! Strict YAML experiment configuration.
//!
//! Every section rejects unknown keys. Omitted fields take the defaults
//! listed on each field.

use std::fmt;
use std::path::PathBuf;

use hybridfl_core::dp::{calibrate_sigma, DpStrategy, NoiseCalibration};
use hybridfl_core::energy::{PowerProfile, DEFAULT_CARBON_INTENSITY, DEFAULT_WATTS};
use hybridfl_core::federation::{DpSettings, Dropout, FlConfig, SecAggSettings};
use hybridfl_core::learner::{ModelKind, ModelSpec, TrainHyper};
use hybridfl_core::metrics::Averaging;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A validation failure located at a dotted config path.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub federated: FederatedSection,
    #[serde(default)]
    pub secure_mpc: SecureMpcSection,
    #[serde(default)]
    pub differential_privacy: DifferentialPrivacySection,
    #[serde(default)]
    pub monitoring: MonitoringSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Default 42.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Default `./results`.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindName {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKindName,
    pub input_dim: usize,
    /// Required for `mlp`, rejected for `logistic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    /// Synthetic only; default 3000.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_samples: Option<usize>,
    /// Synthetic only; default 6.0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    /// CSV only; required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default = "default_source")]
    pub source: DataSource,
    #[serde(default)]
    pub params: DatasetParams,
    /// Default 32.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Default 0.92.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            params: DatasetParams::default(),
            batch_size: default_batch_size(),
            train_fraction: default_train_fraction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingName {
    Macro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// Centralized epochs; default 5.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Default 0.01.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerName,
    /// Default 7.
    #[serde(default = "default_patience")]
    pub early_stopping_patience: usize,
    /// Averaging of precision, recall and F1; default macro.
    #[serde(default = "default_averaging")]
    pub metric_averaging: AveragingName,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            optimizer: OptimizerName::Adam,
            early_stopping_patience: default_patience(),
            metric_averaging: AveragingName::Macro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionName {
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedSection {
    #[serde(default)]
    pub enabled: bool,
    /// Default 3.
    #[serde(default = "default_clients")]
    pub num_clients: usize,
    /// Default 5.
    #[serde(default = "default_rounds")]
    pub num_rounds: usize,
    /// Default 1.
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    /// Falls back to `training.learning_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_lr: Option<f64>,
    #[serde(default = "default_partition")]
    pub data_partition: PartitionName,
    /// Dirichlet concentration; default 0.1.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for FederatedSection {
    fn default() -> Self {
        Self {
            enabled: false,
            num_clients: default_clients(),
            num_rounds: default_rounds(),
            local_epochs: default_local_epochs(),
            client_lr: None,
            data_partition: PartitionName::Dirichlet,
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutEntry {
    pub round: usize,
    pub client: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecureMpcSection {
    #[serde(default)]
    pub enabled: bool,
    /// Default 2.
    #[serde(default = "default_threshold")]
    pub threshold: usize,
    /// Must equal `federated.num_clients`; default 3.
    #[serde(default = "default_clients")]
    pub total_shares: usize,
    /// Default 16.
    #[serde(default = "default_bits")]
    pub quantization_bits: u32,
    /// Clients that may drop; must not exceed `total_shares - threshold`.
    /// Default 1.
    #[serde(default = "default_resilience")]
    pub dropout_resilience: usize,
    /// Fixed-point clip range; default 8.0.
    #[serde(default = "default_clip_range")]
    pub clip_range: f64,
    /// Injected message losses (0-based client ids); default none.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropouts: Vec<DropoutEntry>,
}

impl Default for SecureMpcSection {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: default_threshold(),
            total_shares: default_clients(),
            quantization_bits: default_bits(),
            dropout_resilience: default_resilience(),
            clip_range: default_clip_range(),
            dropouts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    CdpSf,
    CdpSa,
    LdpMod,
    LdpPe,
}

impl From<StrategyName> for DpStrategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::CdpSf => DpStrategy::CdpSf,
            StrategyName::CdpSa => DpStrategy::CdpSa,
            StrategyName::LdpMod => DpStrategy::LdpMod,
            StrategyName::LdpPe => DpStrategy::LdpPe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationName {
    Accountant,
    PaperFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifferentialPrivacySection {
    #[serde(default)]
    pub enabled: bool,
    /// Required when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyName>,
    /// Required when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Required when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Default 1.0.
    #[serde(default = "default_one")]
    pub noise_multiplier: f64,
    /// Default 1.0.
    #[serde(default = "default_one")]
    pub max_grad_norm: f64,
    /// Default 32.
    #[serde(default = "default_batch_size")]
    pub lot_size: usize,
    /// Default accountant (`sigma = noise_multiplier * C`).
    #[serde(default = "default_calibration")]
    pub calibration: CalibrationName,
}

impl Default for DifferentialPrivacySection {
    fn default() -> Self {
        Self {
            enabled: false,
            strategy: None,
            epsilon: None,
            delta: None,
            noise_multiplier: 1.0,
            max_grad_norm: 1.0,
            lot_size: default_batch_size(),
            calibration: CalibrationName::Accountant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfileSection {
    #[serde(default = "default_device")]
    pub device: String,
    /// Default 70 W.
    #[serde(default = "default_watts")]
    pub watts: f64,
    /// Default 1.0.
    #[serde(default = "default_one")]
    pub utilization: f64,
}

impl Default for PowerProfileSection {
    fn default() -> Self {
        Self {
            device: default_device(),
            watts: DEFAULT_WATTS,
            utilization: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitoringSection {
    /// Default true.
    #[serde(default = "default_true")]
    pub track_energy: bool,
    #[serde(default)]
    pub power_profile: PowerProfileSection,
    /// kg CO2 per kWh; default 0.475.
    #[serde(default = "default_carbon")]
    pub carbon_intensity: f64,
    /// Stop federated runs flagged by the convergence monitor. Defaults to
    /// `differential_privacy.enabled` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_failure_detection: Option<bool>,
}

impl Default for MonitoringSection {
    fn default() -> Self {
        Self {
            track_energy: true,
            power_profile: PowerProfileSection::default(),
            carbon_intensity: DEFAULT_CARBON_INTENSITY,
            early_failure_detection: None,
        }
    }
}

fn default_seed() -> u64 {
    42
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("./results")
}
fn default_source() -> DataSource {
    DataSource::Synthetic
}
fn default_batch_size() -> usize {
    32
}
fn default_train_fraction() -> f64 {
    0.92
}
fn default_epochs() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_optimizer() -> OptimizerName {
    OptimizerName::Adam
}
fn default_patience() -> usize {
    7
}
fn default_averaging() -> AveragingName {
    AveragingName::Macro
}
fn default_clients() -> usize {
    3
}
fn default_rounds() -> usize {
    5
}
fn default_local_epochs() -> usize {
    1
}
fn default_partition() -> PartitionName {
    PartitionName::Dirichlet
}
fn default_alpha() -> f64 {
    0.1
}
fn default_threshold() -> usize {
    2
}
fn default_bits() -> u32 {
    16
}
fn default_resilience() -> usize {
    1
}
fn default_clip_range() -> f64 {
    8.0
}
fn default_one() -> f64 {
    1.0
}
fn default_calibration() -> CalibrationName {
    CalibrationName::Accountant
}
fn default_device() -> String {
    "cpu".into()
}
fn default_watts() -> f64 {
    DEFAULT_WATTS
}
fn default_true() -> bool {
    true
}
fn default_carbon() -> f64 {
    DEFAULT_CARBON_INTENSITY
}

pub const DEFAULT_NUM_SAMPLES: usize = 3000;
pub const DEFAULT_SEPARATION: f64 = 6.0;

/// Parses and validates a YAML document.
pub fn parse_config(yaml: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = serde_yaml::Deserializer::from_str(yaml);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(if path == "." { String::from("<root>") } else { path }, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn emit_config(config: &ExperimentConfig) -> String {
    serde_yaml::to_string(config).expect("config serializes")
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be positive and finite, got {v}")))
    }
}

fn at_least_one(path: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(ConfigError::new(path, "must be at least 1"))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment.name.trim().is_empty() {
            return Err(ConfigError::new("experiment.name", "must not be empty"));
        }
        let m = &self.model;
        at_least_one("model.input_dim", m.input_dim)?;
        if m.num_classes < 2 {
            return Err(ConfigError::new("model.num_classes", "must be at least 2"));
        }
        match (m.kind, m.hidden_dim) {
            (ModelKindName::Mlp, None) => {
                return Err(ConfigError::new("model.hidden_dim", "required for kind mlp"));
            }
            (ModelKindName::Mlp, Some(h)) => at_least_one("model.hidden_dim", h)?,
            (ModelKindName::Logistic, Some(_)) => {
                return Err(ConfigError::new("model.hidden_dim", "not used by kind logistic"));
            }
            (ModelKindName::Logistic, None) => {}
        }

        let d = &self.dataset;
        at_least_one("dataset.batch_size", d.batch_size)?;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(ConfigError::new("dataset.train_fraction", "must lie in (0, 1)"));
        }
        match d.source {
            DataSource::Synthetic => {
                if d.params.path.is_some() {
                    return Err(ConfigError::new("dataset.params.path", "only valid for source csv"));
                }
                if let Some(n) = d.params.num_samples {
                    if n < m.num_classes {
                        return Err(ConfigError::new(
                            "dataset.params.num_samples",
                            "must be at least model.num_classes",
                        ));
                    }
                }
                if let Some(s) = d.params.separation {
                    if !(s >= 0.0 && s.is_finite()) {
                        return Err(ConfigError::new("dataset.params.separation", "must be finite and >= 0"));
                    }
                }
            }
            DataSource::Csv => {
                if d.params.path.is_none() {
                    return Err(ConfigError::new("dataset.params.path", "required for source csv"));
                }
                if d.params.num_samples.is_some() || d.params.separation.is_some() {
                    return Err(ConfigError::new("dataset.params", "num_samples and separation are synthetic-only"));
                }
            }
        }

        let t = &self.training;
        at_least_one("training.epochs", t.epochs)?;
        positive("training.learning_rate", t.learning_rate)?;

        let f = &self.federated;
        if f.enabled {
            at_least_one("federated.num_clients", f.num_clients)?;
            at_least_one("federated.num_rounds", f.num_rounds)?;
            at_least_one("federated.local_epochs", f.local_epochs)?;
            positive("federated.alpha", f.alpha)?;
            if let Some(lr) = f.client_lr {
                positive("federated.client_lr", lr)?;
            }
        }

        let s = &self.secure_mpc;
        if s.enabled {
            if !f.enabled {
                return Err(ConfigError::new("secure_mpc.enabled", "secure aggregation requires federated.enabled"));
            }
            if s.total_shares != f.num_clients {
                return Err(ConfigError::new(
                    "secure_mpc.total_shares",
                    format!("must equal federated.num_clients ({})", f.num_clients),
                ));
            }
            if s.threshold == 0 || s.threshold > s.total_shares {
                return Err(ConfigError::new("secure_mpc.threshold", "must lie in 1..=total_shares"));
            }
            if s.dropout_resilience > s.total_shares - s.threshold {
                return Err(ConfigError::new(
                    "secure_mpc.dropout_resilience",
                    "cannot exceed total_shares - threshold",
                ));
            }
            if !(1..=59).contains(&s.quantization_bits) {
                return Err(ConfigError::new("secure_mpc.quantization_bits", "must lie in 1..=59"));
            }
            positive("secure_mpc.clip_range", s.clip_range)?;
            for (i, drop) in s.dropouts.iter().enumerate() {
                if drop.client >= f.num_clients {
                    return Err(ConfigError::new(format!("secure_mpc.dropouts[{i}].client"), "no such client"));
                }
                if drop.round >= f.num_rounds {
                    return Err(ConfigError::new(format!("secure_mpc.dropouts[{i}].round"), "no such round"));
                }
            }
        }

        let p = &self.differential_privacy;
        if p.enabled {
            let strategy = p
                .strategy
                .ok_or_else(|| ConfigError::new("differential_privacy.strategy", "required when enabled"))?;
            let epsilon = p
                .epsilon
                .ok_or_else(|| ConfigError::new("differential_privacy.epsilon", "required when enabled"))?;
            let delta = p
                .delta
                .ok_or_else(|| ConfigError::new("differential_privacy.delta", "required when enabled"))?;
            positive("differential_privacy.epsilon", epsilon)?;
            if !(delta > 0.0 && delta < 1.0) {
                return Err(ConfigError::new("differential_privacy.delta", "must lie in (0, 1)"));
            }
            positive("differential_privacy.max_grad_norm", p.max_grad_norm)?;
            if !(p.noise_multiplier >= 0.0 && p.noise_multiplier.is_finite()) {
                return Err(ConfigError::new("differential_privacy.noise_multiplier", "must be finite and >= 0"));
            }
            at_least_one("differential_privacy.lot_size", p.lot_size)?;
            if !f.enabled {
                return Err(ConfigError::new(
                    "differential_privacy.enabled",
                    "the DP strategies are federated and require federated.enabled",
                ));
            }
            if s.enabled && !DpStrategy::from(strategy).is_local() {
                return Err(ConfigError::new(
                    "differential_privacy.strategy",
                    "central strategies need individual updates and cannot run under secure_mpc",
                ));
            }
        }

        let mo = &self.monitoring;
        PowerProfile::new(&mo.power_profile.device, mo.power_profile.watts, mo.power_profile.utilization)
            .map_err(|e| ConfigError::new("monitoring.power_profile", e.to_string()))?;
        if !(mo.carbon_intensity >= 0.0 && mo.carbon_intensity.is_finite()) {
            return Err(ConfigError::new("monitoring.carbon_intensity", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(canonical))
    }

    /// `name-<first 12 hex digits of the config hash>`.
    pub fn experiment_id(&self) -> String {
        format!("{}-{}", self.experiment.name, &self.config_hash()[..12])
    }

    pub fn model_spec(&self) -> ModelSpec {
        let kind = match self.model.kind {
            ModelKindName::Logistic => ModelKind::Logistic,
            ModelKindName::Mlp => ModelKind::Mlp {
                hidden_dim: self.model.hidden_dim.unwrap_or(1),
            },
        };
        ModelSpec::new(kind, self.model.input_dim, self.model.num_classes).expect("validated model section")
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.training.epochs,
            learning_rate: self.training.learning_rate,
            batch_size: self.dataset.batch_size,
            patience: self.training.early_stopping_patience,
        }
    }

    pub fn averaging(&self) -> Averaging {
        match self.training.metric_averaging {
            AveragingName::Macro => Averaging::Macro,
            AveragingName::Weighted => Averaging::Weighted,
        }
    }

    pub fn power_profile(&self) -> PowerProfile {
        let p = &self.monitoring.power_profile;
        PowerProfile::new(&p.device, p.watts, p.utilization).expect("validated power profile")
    }

    /// Calibrated noise scale, when DP is enabled.
    pub fn sigma(&self) -> Option<f64> {
        let p = &self.differential_privacy;
        if !p.enabled {
            return None;
        }
        let mode = match p.calibration {
            CalibrationName::Accountant => NoiseCalibration::Accountant,
            CalibrationName::PaperFormula => NoiseCalibration::PaperFormula,
        };
        calibrate_sigma(mode, p.max_grad_norm, p.noise_multiplier, p.epsilon.unwrap_or(1.0)).ok()
    }

    pub fn early_failure_detection(&self) -> bool {
        self.monitoring
            .early_failure_detection
            .unwrap_or(self.differential_privacy.enabled)
    }

    /// The federation settings, when federated training is enabled.
    pub fn fl_config(&self) -> Option<FlConfig> {
        let f = &self.federated;
        if !f.enabled {
            return None;
        }
        let secure_aggregation = self.secure_mpc.enabled.then(|| SecAggSettings {
            threshold: self.secure_mpc.threshold,
            quantization_bits: self.secure_mpc.quantization_bits,
            clip_range: self.secure_mpc.clip_range,
            dropouts: self
                .secure_mpc
                .dropouts
                .iter()
                .map(|d| Dropout {
                    round: d.round,
                    client: d.client,
                })
                .collect(),
        });
        let p = &self.differential_privacy;
        let dp = match (p.enabled, p.strategy, self.sigma()) {
            (true, Some(strategy), Some(sigma)) => Some(DpSettings {
                strategy: strategy.into(),
                clip: p.max_grad_norm,
                sigma,
                lot_size: p.lot_size,
                delta: p.delta.unwrap_or(1e-5),
            }),
            _ => None,
        };
        Some(FlConfig {
            num_clients: f.num_clients,
            num_rounds: f.num_rounds,
            local_epochs: f.local_epochs,
            learning_rate: f.client_lr.unwrap_or(self.training.learning_rate),
            batch_size: self.dataset.batch_size,
            dirichlet_alpha: f.alpha,
            secure_aggregation,
            dp,
            early_failure_detection: self.early_failure_detection(),
            patience: Some(self.training.early_stopping_patience),
        })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    use fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment:\n  name: t\nmodel:\n  kind: logistic\n  input_dim: 4\n  num_classes: 3\n";

    #[test]
    fn defaults_are_filled() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment.seed, 42);
        assert_eq!(c.training.early_stopping_patience, 7);
        assert_eq!(c.federated.alpha, 0.1);
        assert_eq!(c.secure_mpc.quantization_bits, 16);
        assert_eq!(c.dataset.batch_size, 32);
        assert!(!c.early_failure_detection());
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let e = parse_config(&format!("{MINIMAL}training:\n  epochz: 3\n")).unwrap_err();
        assert!(e.path.starts_with("training"), "{e}");
        assert!(e.message.contains("epochz"), "{e}");
    }

    #[test]
    fn type_mismatch_names_its_path() {
        let e = parse_config(&MINIMAL.replace("input_dim: 4", "input_dim: four")).unwrap_err();
        assert_eq!(e.path, "model.input_dim");
    }

    #[test]
    fn dp_without_epsilon() {
        let y = format!(
            "{MINIMAL}federated:\n  enabled: true\ndifferential_privacy:\n  enabled: true\n  strategy: ldp_pe\n  delta: 1.0e-5\n"
        );
        assert_eq!(parse_config(&y).unwrap_err().path, "differential_privacy.epsilon");
    }

    #[test]
    fn smpc_requires_federated() {
        let e = parse_config(&format!("{MINIMAL}secure_mpc:\n  enabled: true\n")).unwrap_err();
        assert_eq!(e.path, "secure_mpc.enabled");
    }

    #[test]
    fn emit_parse_round_trip() {
        let y = format!(
            "{MINIMAL}federated:\n  enabled: true\nsecure_mpc:\n  enabled: true\n  dropouts:\n  - {{round: 1, client: 0}}\n"
        );
        let c = parse_config(&y).unwrap();
        assert_eq!(parse_config(&emit_config(&c)).unwrap(), c);
    }

    #[test]
    fn id_is_name_plus_hash_prefix() {
        let c = parse_config(MINIMAL).unwrap();
        let id = c.experiment_id();
        assert!(id.starts_with("t-"));
        assert_eq!(id.len(), 2 + 12);
        let mut other = c.clone();
        other.experiment.seed = 123;
        assert_ne!(other.config_hash(), c.config_hash());
    }
}
