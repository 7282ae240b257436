//! FedAvg over simulated clients with plain, secure or differentially private
//! aggregation, and the convergence-failure monitor.
//!
//! Clients keep their Adam state across rounds and restart each round from
//! the broadcast global parameters. A single client with plain aggregation
//! therefore follows the centralized trajectory.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{dirichlet_partition, Dataset, Partition};
use crate::dp::{
    apply_cdp_sa, apply_cdp_sf, apply_ldp_mod, ldp_pe_local_step, lot_sampling_rate, AdaptiveClipState,
    DpStrategy, RdpAccountant,
};
use crate::error::{FederationError, SecAggError};
use crate::field::FixedPointCodec;
use crate::learner::{
    evaluate, init_params, plain_step, run_epoch, shuffle_stream_name, AdamState, EarlyStopState, EpochStats,
    ModelSpec, ParamVector, INIT_STREAM,
};
use crate::secagg::SecAggSession;
use crate::stream::StreamFactory;
use crate::vecops;

pub const ACCURACY_FLOOR: f64 = 0.3;
pub const REASON_BELOW_THRESHOLD: &str = "Accuracy below threshold for 3 rounds";
pub const REASON_NO_IMPROVEMENT: &str = "No improvement from initialization";

/// A client (0-based) whose masked vector is lost in a given round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dropout {
    pub round: usize,
    pub client: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecAggSettings {
    pub threshold: usize,
    pub quantization_bits: u32,
    pub clip_range: f64,
    pub dropouts: Vec<Dropout>,
}

impl SecAggSettings {
    pub fn new(threshold: usize) -> Self {
        Self {
            threshold,
            quantization_bits: 16,
            clip_range: 8.0,
            dropouts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpSettings {
    pub strategy: DpStrategy,
    /// Clipping bound `C` (initial bound for CDP-SA).
    pub clip: f64,
    /// Calibrated noise scale, in the units of the clipped quantity.
    pub sigma: f64,
    pub lot_size: usize,
    pub delta: f64,
}

impl DpSettings {
    /// `sigma / C`, the multiplier the accountant and the per-bound
    /// mechanisms work with.
    pub fn noise_multiplier(&self) -> f64 {
        self.sigma / self.clip
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub num_clients: usize,
    pub num_rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dirichlet_alpha: f64,
    pub secure_aggregation: Option<SecAggSettings>,
    pub dp: Option<DpSettings>,
    /// Consult [`monitor_convergence_failure`] after every round.
    pub early_failure_detection: bool,
    /// Early stopping on validation accuracy, as in centralized training.
    pub patience: Option<usize>,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            num_clients: 3,
            num_rounds: 5,
            local_epochs: 1,
            learning_rate: 0.01,
            batch_size: 32,
            dirichlet_alpha: 0.1,
            secure_aggregation: None,
            dp: None,
            early_failure_detection: false,
            patience: None,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<(), FederationError> {
        let err = |m: &str| Err(FederationError::Config(m.into()));
        if self.num_clients == 0 {
            return err("num_clients must be at least 1");
        }
        if self.num_rounds == 0 {
            return err("num_rounds must be at least 1");
        }
        if self.local_epochs == 0 {
            return err("local_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be finite and non-negative");
        }
        if !(self.dirichlet_alpha > 0.0) {
            return err("dirichlet alpha must be positive");
        }
        if let Some(sa) = &self.secure_aggregation {
            if sa.threshold == 0 || sa.threshold > self.num_clients {
                return Err(FederationError::Config(format!(
                    "secure aggregation threshold {} must lie in 1..={}",
                    sa.threshold, self.num_clients
                )));
            }
            if sa.dropouts.iter().any(|d| d.client >= self.num_clients) {
                return err("dropout names a client outside the federation");
            }
            FixedPointCodec::new(sa.clip_range, sa.quantization_bits)
                .map_err(|e| FederationError::Config(format!("{e}")))?;
        }
        if let Some(dp) = &self.dp {
            if !(dp.clip > 0.0 && dp.clip.is_finite()) || !(dp.sigma >= 0.0 && dp.sigma.is_finite()) {
                return err("dp needs finite clip > 0 and sigma >= 0");
            }
            if !(dp.delta > 0.0 && dp.delta < 1.0) {
                return err("dp delta must lie in (0, 1)");
            }
            if dp.lot_size == 0 {
                return err("lot_size must be at least 1");
            }
            if self.secure_aggregation.is_some() && !dp.strategy.is_local() {
                return err("central DP needs the server to see individual updates and cannot run under secure aggregation");
            }
        }
        Ok(())
    }
}

/// Weighted FedAvg, `sum w_i u_i / sum w_i`.
pub fn fedavg_aggregate<V: AsRef<[f64]>>(updates: &[V], weights: &[f64]) -> Result<Vec<f64>, FederationError> {
    if updates.is_empty() {
        return Err(FederationError::EmptyUpdates);
    }
    if weights.len() != updates.len() {
        return Err(FederationError::Config(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(FederationError::NonPositiveWeight);
    }
    let dim = updates[0].as_ref().len();
    for (index, u) in updates.iter().enumerate() {
        if u.as_ref().len() != dim {
            return Err(FederationError::DimensionMismatch {
                index,
                expected: dim,
                got: u.as_ref().len(),
            });
        }
    }
    if updates.len() == 1 {
        return Ok(updates[0].as_ref().to_vec());
    }
    Ok(vecops::weighted_mean(updates, weights))
}

/// Failure check over the validation accuracies of rounds `0..=round`.
pub fn monitor_convergence_failure(val_acc_history: &[f64], round: usize) -> (bool, String) {
    let upto = &val_acc_history[..(round + 1).min(val_acc_history.len())];
    if round >= 2 && upto.len() >= 3 && upto[upto.len() - 3..].iter().all(|&a| a < ACCURACY_FLOOR) {
        return (true, REASON_BELOW_THRESHOLD.into());
    }
    if round >= 3 && upto.len() >= 4 && upto[upto.len() - 1] <= upto[0] {
        return (true, REASON_NO_IMPROVEMENT.into());
    }
    (false, String::from("continuing"))
}

/// Per-client DP-SGD state for LDP-PE.
#[derive(Debug, Clone)]
pub struct LocalDp {
    pub clip: f64,
    /// Noise multiplier; the step adds `N(0, (noise_multiplier * clip)^2)`.
    pub noise_multiplier: f64,
    pub accountant: RdpAccountant,
}

/// Where a client's local epochs sit in the global schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalSchedule {
    pub client: usize,
    pub round: usize,
    pub first_epoch: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
}

/// Runs the local epochs from `global` and returns `new - global` together
/// with the mean per-epoch statistics.
pub fn client_local_train(
    global: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    schedule: &LocalSchedule,
    adam: &mut AdamState,
    mut dp_local: Option<&mut LocalDp>,
    streams: &StreamFactory,
) -> Result<(Vec<f64>, EpochStats), FederationError> {
    if data.is_empty() {
        return Err(crate::error::LearnerError::EmptyTrainingSet.into());
    }
    let mut params = global.clone();
    let mut noise = streams.stream(&format!("dp/ldp_pe/client/{}/round/{}", schedule.client, schedule.round))?;
    let mut total = EpochStats::default();
    for e in 0..schedule.local_epochs {
        let mut rng = streams.stream(&shuffle_stream_name(schedule.client, schedule.first_epoch + e))?;
        let stats = match dp_local.as_deref_mut() {
            None => run_epoch(&mut params, data, schedule.batch_size, &mut rng, |p, b| {
                plain_step(p, spec, data, b, adam).map_err(FederationError::from)
            })?,
            Some(dp) => run_epoch(&mut params, data, schedule.batch_size, &mut rng, |p, b| {
                ldp_pe_local_step(p, spec, data, b, dp.clip, dp.noise_multiplier, &mut noise, adam, &mut dp.accountant)
                    .map_err(FederationError::from)
            })?,
        };
        total.mean_loss += stats.mean_loss;
        total.mean_grad_norm += stats.mean_grad_norm;
        total.steps += stats.steps;
    }
    let k = schedule.local_epochs as f64;
    total.mean_loss /= k;
    total.mean_grad_norm /= k;
    Ok((vecops::sub(params.values(), global.values()), total))
}

/// Wall-clock source; the core never reads time itself.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// A clock frozen at zero, for runs that do not record timings.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub mean_grad_norm: f64,
    pub wall_seconds: f64,
    /// Clients whose updates entered the aggregate.
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    FailedConvergence { round: usize, reason: String },
    ProtocolAbort { round: usize, message: String },
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::FailedConvergence { .. } => "failed_convergence",
            RunStatus::ProtocolAbort { .. } => "protocol_abort",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FederatedOutcome {
    /// Global parameters after the last completed round.
    pub params: ParamVector,
    /// Global parameters of the round with the best validation accuracy.
    pub best_params: ParamVector,
    pub best_round: Option<usize>,
    pub stopped_early: bool,
    pub history: Vec<RoundRecord>,
    pub status: RunStatus,
    pub partition: Partition,
    /// Largest epsilon spent by any client (LDP-PE only).
    pub epsilon: Option<f64>,
}

pub const PARTITION_STREAM: &str = "data/partition";

/// Partitions `train` with the configured Dirichlet skew.
pub fn partition_clients(
    config: &FlConfig,
    train: &Dataset,
    streams: &StreamFactory,
) -> Result<Partition, FederationError> {
    let mut rng = streams.stream(PARTITION_STREAM)?;
    Ok(dirichlet_partition(
        train.labels(),
        config.num_clients,
        config.dirichlet_alpha,
        &mut rng,
    )?)
}

enum Aggregated {
    Update(Vec<f64>, usize),
    Abort(String),
}

struct Server<'a> {
    config: &'a FlConfig,
    streams: &'a StreamFactory,
    adaptive: Option<AdaptiveClipState>,
}

impl Server<'_> {
    fn aggregate(&mut self, round: usize, deltas: &[Vec<f64>], sizes: &[f64]) -> Result<Aggregated, FederationError> {
        let n = deltas.len();
        if let Some(sa) = &self.config.secure_aggregation {
            let total: f64 = sizes.iter().sum();
            let scaled: Vec<Vec<f64>> = deltas
                .iter()
                .zip(sizes)
                .map(|(d, &w)| d.iter().map(|x| x * (w / total)).collect())
                .collect();
            let codec = FixedPointCodec::new(sa.clip_range, sa.quantization_bits).map_err(SecAggError::from)?;
            let mut rng = self.streams.stream(&format!("secagg/round/{round}"))?;
            let mut session = SecAggSession::setup(n, sa.threshold, deltas[0].len(), codec, &mut rng)?;
            let dropped: Vec<usize> = sa
                .dropouts
                .iter()
                .filter(|d| d.round == round)
                .map(|d| d.client + 1)
                .collect();
            return match session.simulate_round(&scaled, &dropped) {
                Ok(sum) => {
                    let survived: f64 = session.survivors().iter().map(|&id| sizes[id - 1]).sum();
                    let factor = total / survived;
                    let update = if factor == 1.0 {
                        sum
                    } else {
                        sum.iter().map(|x| x * factor).collect()
                    };
                    Ok(Aggregated::Update(update, session.survivors().len()))
                }
                Err(e @ SecAggError::Aborted { .. }) => Ok(Aggregated::Abort(format!("{e}"))),
                Err(e) => Err(e.into()),
            };
        }
        let update = match self.config.dp.map(|d| (d.strategy, d)) {
            Some((DpStrategy::CdpSf, dp)) => {
                let mut rng = self.streams.stream(&format!("dp/cdp/round/{round}"))?;
                apply_cdp_sf(deltas, dp.clip, dp.noise_multiplier(), &mut rng)?
            }
            Some((DpStrategy::CdpSa, dp)) => {
                let mut rng = self.streams.stream(&format!("dp/cdp/round/{round}"))?;
                let state = self.adaptive.unwrap_or_else(|| AdaptiveClipState::new(dp.clip));
                let (agg, next) = apply_cdp_sa(deltas, state, dp.noise_multiplier(), &mut rng)?;
                self.adaptive = Some(next);
                agg
            }
            _ => fedavg_aggregate(deltas, sizes)?,
        };
        Ok(Aggregated::Update(update, n))
    }
}

/// Full-participation FedAvg over a Dirichlet partition of `train`,
/// evaluated on `val` after every round. `observer` sees each round's record
/// and the new global parameters.
pub fn run_federated(
    config: &FlConfig,
    spec: &ModelSpec,
    train: &Dataset,
    val: &Dataset,
    streams: &StreamFactory,
    clock: &dyn Clock,
    mut observer: impl FnMut(&RoundRecord, &ParamVector),
) -> Result<FederatedOutcome, FederationError> {
    config.validate()?;
    let partition = partition_clients(config, train, streams)?;
    let clients: Vec<Dataset> = partition.assignments.iter().map(|idx| train.subset(idx)).collect();
    let sizes: Vec<f64> = clients.iter().map(|c| c.len() as f64).collect();

    let mut global = init_params(spec, &mut streams.stream(INIT_STREAM)?);
    let mut adams: Vec<AdamState> = (0..config.num_clients)
        .map(|_| AdamState::new(global.len(), config.learning_rate))
        .collect();

    let local_dp = config.dp.filter(|d| d.strategy == DpStrategy::LdpPe);
    let mut ldp: Vec<LocalDp> = match local_dp {
        Some(dp) => clients
            .iter()
            .map(|c| {
                let q = lot_sampling_rate(dp.lot_size, c.len())?;
                Ok(LocalDp {
                    clip: dp.clip,
                    noise_multiplier: dp.noise_multiplier(),
                    accountant: RdpAccountant::new(q, dp.noise_multiplier())?,
                })
            })
            .collect::<Result<_, FederationError>>()?,
        None => Vec::new(),
    };
    let batch_size = local_dp.map_or(config.batch_size, |d| d.lot_size);

    let mut server = Server {
        config,
        streams,
        adaptive: None,
    };
    let mut history = Vec::with_capacity(config.num_rounds);
    let mut accuracies = Vec::with_capacity(config.num_rounds);
    let mut status = RunStatus::Completed;
    let mut early = config.patience.map(EarlyStopState::new);
    let mut best_params = global.clone();
    let mut best_round = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut stopped_early = false;

    for round in 0..config.num_rounds {
        let started = clock.now_seconds();
        let mut deltas = Vec::with_capacity(clients.len());
        let mut grad_norm = 0.0;
        for (c, data) in clients.iter().enumerate() {
            let schedule = LocalSchedule {
                client: c,
                round,
                first_epoch: round * config.local_epochs,
                local_epochs: config.local_epochs,
                batch_size,
            };
            let (mut delta, stats) =
                client_local_train(&global, spec, data, &schedule, &mut adams[c], ldp.get_mut(c), streams)?;
            if let Some(dp) = config.dp.filter(|d| d.strategy == DpStrategy::LdpMod) {
                let mut rng = streams.stream(&format!("dp/ldp_mod/client/{c}/round/{round}"))?;
                delta = apply_ldp_mod(&delta, dp.clip, dp.sigma, &mut rng)?;
            }
            grad_norm += stats.mean_grad_norm;
            deltas.push(delta);
        }
        let (update, survivors) = match server.aggregate(round, &deltas, &sizes)? {
            Aggregated::Update(u, s) => (u, s),
            Aggregated::Abort(message) => {
                status = RunStatus::ProtocolAbort { round, message };
                break;
            }
        };
        vecops::add_assign(global.values_mut(), &update);
        let eval = evaluate(&global, spec, val);
        let record = RoundRecord {
            round,
            val_accuracy: eval.accuracy,
            val_loss: eval.loss,
            mean_grad_norm: grad_norm / clients.len() as f64,
            wall_seconds: clock.now_seconds() - started,
            survivors,
        };
        observer(&record, &global);
        accuracies.push(eval.accuracy);
        history.push(record);
        if eval.accuracy > best_acc {
            best_acc = eval.accuracy;
            best_params = global.clone();
            best_round = Some(round);
        }
        if config.early_failure_detection {
            let (failed, reason) = monitor_convergence_failure(&accuracies, round);
            if failed {
                status = RunStatus::FailedConvergence { round, reason };
                break;
            }
        }
        if let Some(es) = early.as_mut() {
            if es.observe(eval.accuracy).1 {
                stopped_early = true;
                break;
            }
        }
    }

    let epsilon = match local_dp {
        Some(dp) => {
            let mut worst: f64 = 0.0;
            for l in &ldp {
                worst = worst.max(l.accountant.epsilon(dp.delta)?);
            }
            Some(worst)
        }
        None => None,
    };
    Ok(FederatedOutcome {
        params: global,
        best_params,
        best_round,
        stopped_early,
        history,
        status,
        partition,
        epsilon,
    })
}

/// Per-client class counts of a partition.
pub fn partition_report(partition: &Partition, train: &Dataset) -> Vec<Vec<usize>> {
    partition.class_histograms(train.labels(), train.num_classes())
}
