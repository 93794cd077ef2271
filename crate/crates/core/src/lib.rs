//! Streaming anomaly detection for paired input-output telemetry channels.
//!
//! Each channel is modeled online as a linear transfer function fitted by
//! recursive least squares; one-step prediction errors are scored against
//! their own running statistics, and a score past the threshold latches the
//! channel as anomalous. The crate also ships a plant simulator with fault
//! injection and an evaluation harness that scores detection runs against
//! ground truth.

pub mod arx;
pub mod config;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod rls;
pub mod simulator;
pub mod stats;
pub mod telemetry;

pub use arx::{ArxOrder, Regressor, RegressorWindow};
pub use config::RunConfig;
pub use detector::{
    anomalous_channels, system_anomaly, ChannelConfig, ChannelDetector, DetectionEvent, Phase,
    StepOutcome, TraceRow,
};
pub use error::{CoreError, ErrorCategory, Result};
pub use evaluation::{
    classify, percent_truncated, render_report, summarize, write_outcomes, write_report,
    CategorySummary, EvaluationSummary, MetricCounts, SequenceOutcome, SequenceVerdict,
};
pub use pipeline::{
    discover_scenarios, evaluate_scenarios, run_detection, score_precomputed, write_run_outputs,
    write_scenario_data, ChannelRunResult, DetectionRun, EvaluationReport, ScenarioFiles,
};
pub use rls::RlsEstimator;
pub use simulator::{
    read_scenario_spec, read_truth, scenario_suite, simulate, simulate_scenario, write_truth,
    ChannelDynamics, ChannelSpec, Excitation, FaultModel, FaultSpec, GroundTruth, Scenario,
    ScenarioChannel, ScenarioSpec, SimRun, TruthFault,
};
pub use stats::{RunningStats, VarianceStabilityTracker};
pub use telemetry::{
    atomic_write, bind_channel, check_rate, load_telemetry, read_events, write_events,
    write_telemetry, write_trace, Format, RateReport, Telemetry, TelemetryFrame, TelemetryReader,
    TelemetrySchema,
};
