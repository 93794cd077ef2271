//! Per-channel anomaly detection.
//!
//! Each channel pairs one input signal with one output signal and runs a
//! four-phase state machine:
//!
//! * `Warmup`: the model identifies itself on live data. Nothing is judged.
//! * `ModelStable`: parameter updates have settled; prediction-error
//!   statistics start accumulating.
//! * `Armed`: the error variance has settled too; samples are scored.
//! * `Anomaly`: a score crossed the threshold. Latched until `reset`, with
//!   model and statistics frozen so the fault cannot be learned away.

use serde::{Deserialize, Serialize};

use crate::arx::{ArxOrder, RegressorWindow};
use crate::error::{CoreError, Result};
use crate::rls::{RlsEstimator, DEFAULT_COV_SCALE, DEFAULT_EPSILON};
use crate::stats::{RunningStats, VarianceStabilityTracker};

/// Detector lifecycle phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Warmup,
    ModelStable,
    Armed,
    Anomaly,
}

impl Phase {
    /// Stable integer encoding used in trace files.
    pub fn index(self) -> u8 {
        match self {
            Phase::Warmup => 0,
            Phase::ModelStable => 1,
            Phase::Armed => 2,
            Phase::Anomaly => 3,
        }
    }

    pub fn from_index(index: u8) -> Option<Phase> {
        match index {
            0 => Some(Phase::Warmup),
            1 => Some(Phase::ModelStable),
            2 => Some(Phase::Armed),
            3 => Some(Phase::Anomaly),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::ModelStable => "model_stable",
            Phase::Armed => "armed",
            Phase::Anomaly => "anomaly",
        }
    }
}

fn default_na() -> usize {
    25
}
fn default_nb() -> usize {
    25
}
fn default_cov_scale() -> f64 {
    DEFAULT_COV_SCALE
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_hold() -> u64 {
    50
}
fn default_forgetting() -> f64 {
    1.0
}
fn default_warmup_min_samples() -> usize {
    200
}
fn default_z_threshold() -> f64 {
    4.5
}
fn default_variance_window() -> usize {
    50
}
fn default_variance_rel_tol() -> f64 {
    0.05
}
fn default_sigma_floor() -> f64 {
    1e-9
}

/// Complete per-channel configuration.
///
/// All tuning knobs have defaults; a minimal channel only names itself and
/// its two telemetry columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub name: String,
    /// Telemetry column holding the commanded or upstream signal.
    pub input_field: String,
    /// Telemetry column holding the measured response.
    pub output_field: String,
    /// Model the output as measured minus commanded instead of the raw value.
    #[serde(default)]
    pub derived_output: bool,
    /// Output lag count.
    #[serde(default = "default_na")]
    pub na: usize,
    /// Input lag count beyond the current sample.
    #[serde(default = "default_nb")]
    pub nb: usize,
    #[serde(default = "default_cov_scale")]
    pub cov_scale: f64,
    /// Parameter-update norm below which the model counts as settled.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Consecutive settled updates required before leaving warmup.
    #[serde(default = "default_hold")]
    pub hold: u64,
    #[serde(default = "default_forgetting")]
    pub forgetting: f64,
    /// Hard lower bound on warmup length, in samples.
    #[serde(default = "default_warmup_min_samples")]
    pub warmup_min_samples: usize,
    #[serde(default = "default_z_threshold")]
    pub z_threshold: f64,
    /// Consecutive small variance changes required before arming.
    #[serde(default = "default_variance_window")]
    pub variance_window: usize,
    #[serde(default = "default_variance_rel_tol")]
    pub variance_rel_tol: f64,
    /// Lower bound on the error standard deviation used for scoring. Keeps
    /// near-noiseless channels from flagging numerical dust as anomalies.
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
    /// Accumulate error statistics from the first primed sample instead of
    /// waiting for model stability.
    #[serde(default)]
    pub stats_from_start: bool,
}

impl ChannelConfig {
    pub fn new(
        name: impl Into<String>,
        input_field: impl Into<String>,
        output_field: impl Into<String>,
    ) -> Self {
        ChannelConfig {
            name: name.into(),
            input_field: input_field.into(),
            output_field: output_field.into(),
            derived_output: false,
            na: default_na(),
            nb: default_nb(),
            cov_scale: default_cov_scale(),
            epsilon: default_epsilon(),
            hold: default_hold(),
            forgetting: default_forgetting(),
            warmup_min_samples: default_warmup_min_samples(),
            z_threshold: default_z_threshold(),
            variance_window: default_variance_window(),
            variance_rel_tol: default_variance_rel_tol(),
            sigma_floor: default_sigma_floor(),
            stats_from_start: false,
        }
    }

    pub fn order(&self) -> ArxOrder {
        ArxOrder::new(self.na, self.nb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(CoreError::Config("channel name must not be empty".into()));
        }
        if self.input_field.is_empty() || self.output_field.is_empty() {
            return Err(CoreError::Config(format!(
                "channel '{}': input and output column names must not be empty",
                self.name
            )));
        }
        if !self.z_threshold.is_finite() || self.z_threshold <= 0.0 {
            return Err(CoreError::Config(format!(
                "channel '{}': z threshold must be positive, got {}",
                self.name, self.z_threshold
            )));
        }
        if !self.sigma_floor.is_finite() || self.sigma_floor < 0.0 {
            return Err(CoreError::Config(format!(
                "channel '{}': sigma floor must be non-negative, got {}",
                self.name, self.sigma_floor
            )));
        }
        if self.warmup_min_samples == 0 {
            return Err(CoreError::Config(format!(
                "channel '{}': warmup must be at least one sample",
                self.name
            )));
        }
        if self.hold == 0 {
            return Err(CoreError::Config(format!(
                "channel '{}': stability hold must be at least 1",
                self.name
            )));
        }
        // Constructor argument checks cover the numeric ranges.
        RlsEstimator::with_options(self.order(), self.cov_scale, self.epsilon, self.forgetting)?;
        VarianceStabilityTracker::new(self.variance_window, self.variance_rel_tol)?;
        Ok(())
    }
}

/// One per-sample trace record.
///
/// `sigma` and `z` are 0 while the error statistics are undefined; the
/// `phase` column disambiguates. Before the lag window is primed, `y_hat`
/// and `err` are 0 as well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub y_hat: f64,
    pub err: f64,
    pub sigma: f64,
    pub z: f64,
    pub phase: Phase,
}

/// An anomaly report: the first threshold crossing on an armed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub channel: String,
    pub t: f64,
    pub z: f64,
    pub error: f64,
    /// Phase the detector latched into when the event fired.
    pub phase: Phase,
}

/// Result of feeding one sample to a channel detector.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    /// Sample processed; the trace row is always present, the event only on
    /// the sample that latched the anomaly.
    Processed {
        trace: TraceRow,
        event: Option<DetectionEvent>,
    },
    /// Sample carried a non-finite value and was dropped without touching
    /// any state.
    SkippedNonFinite { t: f64 },
}

impl StepOutcome {
    pub fn event(&self) -> Option<&DetectionEvent> {
        match self {
            StepOutcome::Processed { event, .. } => event.as_ref(),
            StepOutcome::SkippedNonFinite { .. } => None,
        }
    }

    pub fn trace(&self) -> Option<&TraceRow> {
        match self {
            StepOutcome::Processed { trace, .. } => Some(trace),
            StepOutcome::SkippedNonFinite { .. } => None,
        }
    }
}

/// Streaming detector for a single input-output channel.
#[derive(Debug, Clone)]
pub struct ChannelDetector {
    cfg: ChannelConfig,
    window: RegressorWindow,
    estimator: RlsEstimator,
    stats: RunningStats,
    var_tracker: VarianceStabilityTracker,
    phase: Phase,
    samples_seen: usize,
    skipped_samples: usize,
    armed_at: Option<f64>,
    triggered_at: Option<f64>,
}

impl ChannelDetector {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        let estimator =
            RlsEstimator::with_options(cfg.order(), cfg.cov_scale, cfg.epsilon, cfg.forgetting)?;
        let var_tracker = VarianceStabilityTracker::new(cfg.variance_window, cfg.variance_rel_tol)?;
        Ok(ChannelDetector {
            window: RegressorWindow::new(cfg.order()),
            estimator,
            stats: RunningStats::new(),
            var_tracker,
            phase: Phase::Warmup,
            samples_seen: 0,
            skipped_samples: 0,
            armed_at: None,
            triggered_at: None,
            cfg,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_anomalous(&self) -> bool {
        self.phase == Phase::Anomaly
    }

    /// Samples processed since construction or the last `reset`.
    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    /// Samples dropped for carrying non-finite values.
    pub fn skipped_samples(&self) -> usize {
        self.skipped_samples
    }

    /// Time of the sample on which the channel armed, if it has.
    pub fn armed_at(&self) -> Option<f64> {
        self.armed_at
    }

    /// Time of the sample that latched the anomaly, if any.
    pub fn triggered_at(&self) -> Option<f64> {
        self.triggered_at
    }

    pub fn estimator(&self) -> &RlsEstimator {
        &self.estimator
    }

    pub fn error_stats(&self) -> &RunningStats {
        &self.stats
    }

    /// Clears the anomaly latch and restarts identification at the current
    /// stream position. Equivalent to replacing the detector with a fresh
    /// one built from the same config: the lag window re-primes on the next
    /// `dim` samples.
    pub fn reset(&mut self) {
        self.estimator = RlsEstimator::with_options(
            self.cfg.order(),
            self.cfg.cov_scale,
            self.cfg.epsilon,
            self.cfg.forgetting,
        )
        .expect("config was validated at construction");
        self.window = RegressorWindow::new(self.cfg.order());
        self.stats = RunningStats::new();
        self.var_tracker.reset();
        self.phase = Phase::Warmup;
        self.samples_seen = 0;
        self.skipped_samples = 0;
        self.armed_at = None;
        self.triggered_at = None;
    }

    /// Feeds one sample. Returns the trace row and, on the sample that
    /// latches an anomaly, the detection event.
    pub fn step(&mut self, t: f64, u: f64, y: f64) -> StepOutcome {
        if !u.is_finite() || !y.is_finite() {
            self.skipped_samples += 1;
            return StepOutcome::SkippedNonFinite { t };
        }
        self.samples_seen += 1;

        let mut row = TraceRow {
            t,
            u,
            y,
            y_hat: 0.0,
            err: 0.0,
            sigma: 0.0,
            z: 0.0,
            phase: self.phase,
        };

        let Some(phi) = self.window.regressor(u) else {
            // Lag window still filling; nothing to predict against yet.
            self.window.push(u, y);
            return StepOutcome::Processed {
                trace: row,
                event: None,
            };
        };

        row.y_hat = self
            .estimator
            .predict(&phi)
            .expect("window regressor matches estimator order");
        row.err = y - row.y_hat;
        if self.stats.count() >= 2 {
            row.sigma = self
                .stats
                .std_dev()
                .unwrap_or(0.0)
                .max(self.cfg.sigma_floor);
            row.z = self
                .stats
                .z_score_floored(row.err, self.cfg.sigma_floor)
                .unwrap_or(0.0);
        }

        let mut event = None;
        match self.phase {
            Phase::Warmup => {
                self.learn(&phi, y);
                if self.cfg.stats_from_start {
                    self.track_error(row.err);
                }
                if self.samples_seen >= self.cfg.warmup_min_samples
                    && self.estimator.is_stable(self.cfg.hold)
                {
                    self.phase = Phase::ModelStable;
                }
            }
            Phase::ModelStable => {
                self.learn(&phi, y);
                self.track_error(row.err);
                if self.var_tracker.is_stable() {
                    self.phase = Phase::Armed;
                    self.armed_at = Some(t);
                }
            }
            Phase::Armed => {
                if row.z >= self.cfg.z_threshold {
                    // Latch. The offending sample must not update the model
                    // or the statistics, or a slow fault could teach the
                    // detector to accept itself.
                    self.phase = Phase::Anomaly;
                    self.triggered_at = Some(t);
                    row.phase = Phase::Anomaly;
                    event = Some(DetectionEvent {
                        channel: self.cfg.name.clone(),
                        t,
                        z: row.z,
                        error: row.err,
                        phase: Phase::Anomaly,
                    });
                } else {
                    self.learn(&phi, y);
                    self.track_error(row.err);
                }
            }
            Phase::Anomaly => {
                // Frozen: keep tracing, learn nothing.
            }
        }

        self.window.push(u, y);
        StepOutcome::Processed { trace: row, event }
    }

    fn learn(&mut self, phi: &crate::arx::Regressor, y: f64) {
        self.estimator
            .update(phi, y)
            .expect("finite inputs were checked before learning");
    }

    fn track_error(&mut self, err: f64) {
        self.stats
            .update(err)
            .expect("prediction error is finite for finite inputs");
        self.var_tracker.observe(&self.stats);
    }
}

/// True once any channel has latched an anomaly.
pub fn system_anomaly(channels: &[ChannelDetector]) -> bool {
    channels.iter().any(ChannelDetector::is_anomalous)
}

/// Names of the channels currently latched, in input order.
pub fn anomalous_channels(channels: &[ChannelDetector]) -> Vec<&str> {
    channels
        .iter()
        .filter(|c| c.is_anomalous())
        .map(|c| c.cfg.name.as_str())
        .collect()
}
