//! Differential-privacy mechanisms, the RDP accountant and the four
//! federated DP strategies (CDP-SF, CDP-SA, LDP-Mod, LDP-PE).
//!
//! Noise conventions:
//!
//! * CDP-SF / CDP-SA add `N(0, (sigma * C / n)^2)` to the mean of `n` clipped
//!   client updates.
//! * LDP-Mod adds `N(0, sigma^2)` to the client's clipped update.
//! * LDP-PE adds `N(0, (sigma * C)^2)` to the sum of per-sample clipped
//!   gradients before dividing by the batch length.

use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::DpError;
use crate::learner::{adam_step, per_sample_loss_grads, AdamState, ModelSpec, ParamVector, StepStats};
use crate::vecops::{self, l2_norm};

/// Scales `v` onto the ball of radius `clip`. Vectors already inside the ball
/// are returned unchanged, bit for bit.
pub fn clip_to_norm(v: &[f64], clip: f64) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm <= clip {
        v.to_vec()
    } else {
        let scale = clip / norm;
        v.iter().map(|x| x * scale).collect()
    }
}

pub fn clip_per_sample<V: AsRef<[f64]>>(grads: &[V], clip: f64) -> Vec<Vec<f64>> {
    grads.iter().map(|g| clip_to_norm(g.as_ref(), clip)).collect()
}

/// `sigma = C * noise_multiplier / epsilon`.
pub fn calibrate_sigma_paper(clip: f64, noise_multiplier: f64, epsilon: f64) -> Result<f64, DpError> {
    if !(epsilon > 0.0) {
        return Err(DpError::NonPositiveEpsilon(epsilon));
    }
    Ok(clip * noise_multiplier / epsilon)
}

/// How the noise scale is derived from the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseCalibration {
    /// `sigma = noise_multiplier * C`; the accountant reports the epsilon spent.
    #[default]
    Accountant,
    /// `sigma = C * noise_multiplier / epsilon`.
    PaperFormula,
}

pub fn calibrate_sigma(
    mode: NoiseCalibration,
    clip: f64,
    noise_multiplier: f64,
    epsilon: f64,
) -> Result<f64, DpError> {
    match mode {
        NoiseCalibration::Accountant => Ok(noise_multiplier * clip),
        NoiseCalibration::PaperFormula => calibrate_sigma_paper(clip, noise_multiplier, epsilon),
    }
}

/// Adds independent `N(0, sigma^2)` to every coordinate. `sigma == 0` returns
/// the input without consuming randomness.
pub fn add_gaussian_noise<R: RngCore + ?Sized>(v: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(rng);
            x + sigma * z
        })
        .collect()
}

/// Default Renyi orders: 1.25, 1.5, 1.75, then every integer 2..=64.
pub fn default_orders() -> Vec<f64> {
    let mut orders = alloc::vec![1.25, 1.5, 1.75];
    orders.extend((2..=64).map(f64::from));
    orders
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

fn log_binomial(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// RDP of one application of the (subsampled) Gaussian mechanism with noise
/// multiplier `sigma` and sampling rate `q`, at order `alpha > 1`.
///
/// For `q = 1` this is `alpha / (2 sigma^2)`. For `q < 1` the integer-order
/// binomial expansion is evaluated at `ceil(alpha)` (RDP is non-decreasing in
/// the order, so this upper-bounds fractional orders), capped by the
/// full-batch value.
pub fn rdp_gaussian(q: f64, sigma: f64, alpha: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    let full = alpha / (2.0 * sigma * sigma);
    if q >= 1.0 {
        return full;
    }
    let order = libm::ceil(alpha) as u64;
    let (log_q, log_1mq) = (libm::log(q), libm::log1p(-q));
    let mut log_a = f64::NEG_INFINITY;
    for k in 0..=order {
        let kf = k as f64;
        let term = log_binomial(order, k)
            + (order - k) as f64 * log_1mq
            + kf * log_q
            + (kf * kf - kf) / (2.0 * sigma * sigma);
        log_a = log_add_exp(log_a, term);
    }
    let subsampled = log_a / (order as f64 - 1.0);
    subsampled.max(0.0).min(full)
}

/// Composes per-step RDP over a fixed order grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpAccountant {
    orders: Vec<f64>,
    rdp: Vec<f64>,
    sampling_rate: f64,
    noise_multiplier: f64,
    steps: u64,
}

impl RdpAccountant {
    pub fn new(sampling_rate: f64, noise_multiplier: f64) -> Result<Self, DpError> {
        Self::with_orders(sampling_rate, noise_multiplier, default_orders())
    }

    pub fn with_orders(sampling_rate: f64, noise_multiplier: f64, orders: Vec<f64>) -> Result<Self, DpError> {
        if !(0.0..=1.0).contains(&sampling_rate) {
            return Err(DpError::InvalidParameter(alloc::format!(
                "sampling rate {sampling_rate} outside [0, 1]"
            )));
        }
        if !(noise_multiplier >= 0.0) {
            return Err(DpError::InvalidParameter(alloc::format!(
                "noise multiplier {noise_multiplier} must be >= 0"
            )));
        }
        if orders.is_empty() || orders.iter().any(|&a| !(a > 1.0)) {
            return Err(DpError::InvalidParameter("orders must be nonempty and > 1".into()));
        }
        let rdp = alloc::vec![0.0; orders.len()];
        Ok(Self {
            orders,
            rdp,
            sampling_rate,
            noise_multiplier,
            steps: 0,
        })
    }

    pub fn step(&mut self) {
        for (acc, &alpha) in self.rdp.iter_mut().zip(&self.orders) {
            *acc += rdp_gaussian(self.sampling_rate, self.noise_multiplier, alpha);
        }
        self.steps += 1;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn rdp(&self) -> &[f64] {
        &self.rdp
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn noise_multiplier(&self) -> f64 {
        self.noise_multiplier
    }

    /// `min_alpha rdp(alpha) + ln(1/delta) / (alpha - 1)`; zero before any
    /// step and `f64::INFINITY` when the noise multiplier is zero.
    pub fn epsilon(&self, delta: f64) -> Result<f64, DpError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DpError::InvalidParameter(alloc::format!("delta {delta} outside (0, 1)")));
        }
        if self.steps == 0 {
            return Ok(0.0);
        }
        let log_inv_delta = -libm::log(delta);
        Ok(self
            .orders
            .iter()
            .zip(&self.rdp)
            .map(|(&alpha, &r)| r + log_inv_delta / (alpha - 1.0))
            .fold(f64::INFINITY, f64::min))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpStrategy {
    /// Central DP, server-side fixed clipping.
    CdpSf,
    /// Central DP, server-side adaptive clipping.
    CdpSa,
    /// Local DP on the whole client update.
    LdpMod,
    /// Local DP-SGD with per-sample clipping during client training.
    LdpPe,
}

impl DpStrategy {
    pub fn is_local(self) -> bool {
        matches!(self, DpStrategy::LdpMod | DpStrategy::LdpPe)
    }
}

/// Geometric quantile tracking of the clipping bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveClipState {
    pub clip: f64,
    pub target_quantile: f64,
    pub learning_rate: f64,
}

impl AdaptiveClipState {
    pub const DEFAULT_TARGET_QUANTILE: f64 = 0.5;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.2;

    pub fn new(clip: f64) -> Self {
        Self {
            clip,
            target_quantile: Self::DEFAULT_TARGET_QUANTILE,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
        }
    }

    /// `C <- C * exp(-lr * (fraction_clipped - target))`.
    pub fn updated(&self, fraction_clipped: f64) -> Self {
        Self {
            clip: self.clip * libm::exp(-self.learning_rate * (fraction_clipped - self.target_quantile)),
            ..*self
        }
    }
}

fn check_updates<V: AsRef<[f64]>>(updates: &[V]) -> Result<(), DpError> {
    if updates.is_empty() {
        return Err(DpError::EmptyUpdates);
    }
    let dim = updates[0].as_ref().len();
    if updates.iter().any(|u| u.as_ref().len() != dim) {
        return Err(DpError::InvalidParameter("updates differ in length".into()));
    }
    Ok(())
}

/// Clip every update to `clip`, take the uniform mean, add
/// `N(0, (sigma * clip / n)^2)` per coordinate.
pub fn apply_cdp_sf<V: AsRef<[f64]>, R: RngCore + ?Sized>(
    updates: &[V],
    clip: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DpError> {
    check_updates(updates)?;
    if !(clip > 0.0) || !(sigma >= 0.0) {
        return Err(DpError::InvalidParameter("clip must be > 0 and sigma >= 0".into()));
    }
    let clipped = clip_per_sample(updates, clip);
    let weights = alloc::vec![1.0; clipped.len()];
    let mean = vecops::weighted_mean(&clipped, &weights);
    let std = sigma * clip / updates.len() as f64;
    Ok(add_gaussian_noise(&mean, std, rng))
}

/// CDP-SF with the adaptive bound, followed by the bound update.
pub fn apply_cdp_sa<V: AsRef<[f64]>, R: RngCore + ?Sized>(
    updates: &[V],
    state: AdaptiveClipState,
    sigma: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, AdaptiveClipState), DpError> {
    check_updates(updates)?;
    let clipped_count = updates
        .iter()
        .filter(|u| l2_norm(u.as_ref()) > state.clip)
        .count();
    let aggregate = apply_cdp_sf(updates, state.clip, sigma, rng)?;
    let fraction = clipped_count as f64 / updates.len() as f64;
    Ok((aggregate, state.updated(fraction)))
}

/// Client-side: clip the whole update to `clip` and add `N(0, sigma^2)`.
pub fn apply_ldp_mod<R: RngCore + ?Sized>(
    update: &[f64],
    clip: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>, DpError> {
    if !(clip >= 0.0) || !(sigma >= 0.0) {
        return Err(DpError::InvalidParameter("clip and sigma must be >= 0".into()));
    }
    Ok(add_gaussian_noise(&clip_to_norm(update, clip), sigma, rng))
}

/// Sampling rate for LDP-PE on a client holding `client_size` samples.
pub fn lot_sampling_rate(lot_size: usize, client_size: usize) -> Result<f64, DpError> {
    if lot_size == 0 || lot_size > client_size {
        return Err(DpError::LotTooLarge {
            lot: lot_size,
            available: client_size,
        });
    }
    Ok(lot_size as f64 / client_size as f64)
}

/// One DP-SGD step: per-sample clip to `clip`, sum, add `N(0, (sigma*clip)^2)`,
/// divide by the batch length, apply Adam, advance the accountant.
#[allow(clippy::too_many_arguments)]
pub fn ldp_pe_local_step<R: RngCore + ?Sized>(
    params: &mut ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
    clip: f64,
    sigma: f64,
    rng: &mut R,
    adam: &mut AdamState,
    accountant: &mut RdpAccountant,
) -> Result<StepStats, DpError> {
    if batch.len() > data.len() {
        return Err(DpError::LotTooLarge {
            lot: batch.len(),
            available: data.len(),
        });
    }
    let (losses, grads) = per_sample_loss_grads(params, spec, data, batch)
        .map_err(|e| DpError::InvalidParameter(alloc::format!("{e}")))?;
    let clipped = clip_per_sample(&grads, clip);
    let mut sum = alloc::vec![0.0; params.len()];
    for g in &clipped {
        vecops::add_assign(&mut sum, g);
    }
    let noisy = add_gaussian_noise(&sum, sigma * clip, rng);
    let n = batch.len() as f64;
    let grad: Vec<f64> = noisy.iter().map(|g| g / n).collect();
    adam_step(params.values_mut(), &grad, adam);
    accountant.step();
    Ok(StepStats {
        loss: losses.iter().sum::<f64>() / n,
        grad_norm: l2_norm(&grad),
    })
}
