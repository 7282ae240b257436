//! Wall-clock spans, peak memory and the modeled energy of a run.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use hybridfl_core::energy::{estimate_co2, estimate_energy, PowerProfile};
use hybridfl_core::federation::Clock;

/// Monotonic clock measured from its creation.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_seconds(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Accumulates wall time per label. Spans may nest and may be recorded from
/// several threads.
#[derive(Debug, Default)]
pub struct Telemetry {
    totals: Mutex<BTreeMap<String, f64>>,
}

pub struct Span<'a> {
    owner: &'a Telemetry,
    label: String,
    started: Instant,
}

impl Drop for Span<'_> {
    fn drop(&mut self) {
        let elapsed = self.started.elapsed().as_secs_f64();
        let mut totals = self.owner.totals.lock().unwrap_or_else(|e| e.into_inner());
        *totals.entry(std::mem::take(&mut self.label)).or_insert(0.0) += elapsed;
    }
}

impl Telemetry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn span(&self, label: &str) -> Span<'_> {
        Span {
            owner: self,
            label: label.to_string(),
            started: Instant::now(),
        }
    }

    /// Runs `f` inside a span.
    pub fn time<T>(&self, label: &str, f: impl FnOnce() -> T) -> T {
        let _span = self.span(label);
        f()
    }

    pub fn total(&self, label: &str) -> f64 {
        self.phases().get(label).copied().unwrap_or(0.0)
    }

    pub fn phases(&self) -> BTreeMap<String, f64> {
        self.totals.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Peak resident set size of this process, where the platform reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTelemetry {
    pub wall_seconds: f64,
    pub peak_rss_bytes: Option<u64>,
    pub energy_kwh: f64,
    pub co2_kg: f64,
    pub phases: BTreeMap<String, f64>,
}

impl RunTelemetry {
    pub fn new(wall_seconds: f64, profile: &PowerProfile, carbon_intensity: f64, phases: BTreeMap<String, f64>) -> Self {
        let energy_kwh = estimate_energy(wall_seconds, profile);
        Self {
            wall_seconds,
            peak_rss_bytes: peak_rss_bytes(),
            energy_kwh,
            co2_kg: estimate_co2(energy_kwh, carbon_intensity),
            phases,
        }
    }
}
