//! Run configuration: global stream settings plus one section per channel.
//!
//! The on-disk form is TOML with flat keys and repeated `[[channel]]`
//! sections. Unknown keys are rejected so typos fail loudly instead of
//! silently falling back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::ChannelConfig;
use crate::error::{CoreError, Result};
use crate::simulator::Scenario;
use crate::telemetry::atomic_write;

fn default_time_column() -> String {
    "t".into()
}
fn default_rate_hz() -> f64 {
    25.0
}
fn default_rate_tolerance() -> f64 {
    0.2
}

/// Everything a detection run needs to know.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_time_column")]
    pub time_column: String,
    /// Nominal sample rate; used for rate-health reporting only.
    #[serde(default = "default_rate_hz")]
    pub rate_hz: f64,
    /// Allowed fractional deviation of each inter-sample period.
    #[serde(default = "default_rate_tolerance")]
    pub rate_tolerance: f64,
    #[serde(rename = "channel", default)]
    pub channels: Vec<ChannelConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            time_column: default_time_column(),
            rate_hz: default_rate_hz(),
            rate_tolerance: default_rate_tolerance(),
            channels: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.time_column.is_empty() {
            return Err(CoreError::Config("time column must not be empty".into()));
        }
        if !self.rate_hz.is_finite() || self.rate_hz <= 0.0 {
            return Err(CoreError::Config(format!(
                "sample rate must be positive, got {}",
                self.rate_hz
            )));
        }
        if !self.rate_tolerance.is_finite() || self.rate_tolerance < 0.0 {
            return Err(CoreError::Config(format!(
                "rate tolerance must be >= 0, got {}",
                self.rate_tolerance
            )));
        }
        if self.channels.is_empty() {
            return Err(CoreError::Config(
                "at least one channel must be configured".into(),
            ));
        }
        let mut names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(CoreError::Config(format!(
                    "duplicate channel name '{}'",
                    pair[0]
                )));
            }
        }
        for channel in &self.channels {
            channel.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| CoreError::Config(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = toml::to_string_pretty(self)
            .map_err(|e| CoreError::Config(format!("cannot encode configuration: {e}")))?;
        atomic_write(path, |w| w.write_all(body.as_bytes()))
    }

    /// Configuration matched to a simulated scenario: its clock and one
    /// channel per simulated channel, model orders taken from the plant.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        RunConfig {
            time_column: "t".into(),
            rate_hz: scenario.rate_hz(),
            rate_tolerance: default_rate_tolerance(),
            channels: scenario.detector_configs(),
        }
    }
}
