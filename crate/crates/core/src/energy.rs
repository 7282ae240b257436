//! Modeled energy, CO2 and overhead arithmetic.

use crate::error::MetricsError;

pub const JOULES_PER_KWH: f64 = 3.6e6;
pub const DEFAULT_WATTS: f64 = 70.0;
pub const DEFAULT_CARBON_INTENSITY: f64 = 0.475;

/// Declared average draw of the device running the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub device: alloc::string::String,
    pub watts: f64,
    pub utilization: f64,
}

impl PowerProfile {
    pub fn new(device: &str, watts: f64, utilization: f64) -> Result<Self, MetricsError> {
        if !(watts >= 0.0 && watts.is_finite()) || !(0.0..=1.0).contains(&utilization) {
            return Err(MetricsError::InvalidPowerProfile(alloc::format!(
                "power profile needs watts >= 0 and utilization in [0, 1], got {watts} W at {utilization}"
            )));
        }
        Ok(Self {
            device: device.into(),
            watts,
            utilization,
        })
    }
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            device: "cpu".into(),
            watts: DEFAULT_WATTS,
            utilization: 1.0,
        }
    }
}

/// `E = P * utilization * t`, in kWh.
pub fn estimate_energy(wall_seconds: f64, profile: &PowerProfile) -> f64 {
    profile.watts * profile.utilization * wall_seconds / JOULES_PER_KWH
}

pub fn estimate_co2(energy_kwh: f64, carbon_intensity_kg_per_kwh: f64) -> f64 {
    energy_kwh * carbon_intensity_kg_per_kwh
}

pub fn overhead_factor(run_seconds: f64, baseline_seconds: f64) -> Result<f64, MetricsError> {
    if !(baseline_seconds > 0.0) {
        return Err(MetricsError::NonPositiveBaseline(baseline_seconds));
    }
    Ok(run_seconds / baseline_seconds)
}
