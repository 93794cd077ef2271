//! End-to-end plumbing: run detectors over telemetry, write run outputs,
//! and score directories of generated scenarios.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::detector::{ChannelDetector, DetectionEvent, Phase, StepOutcome, TraceRow};
use crate::error::{CoreError, Result};
use crate::evaluation::{classify, summarize, EvaluationSummary, SequenceOutcome};
use crate::simulator::{read_truth, simulate_scenario, write_truth, Scenario};
use crate::telemetry::{
    bind_channel, check_rate, load_telemetry, read_events, write_events, write_telemetry,
    write_trace, Format, RateReport, Telemetry,
};

/// Everything one channel produced over a run.
#[derive(Debug, Clone)]
pub struct ChannelRunResult {
    pub channel: String,
    pub trace: Vec<TraceRow>,
    pub skipped_samples: usize,
    pub final_phase: Phase,
    pub armed_at: Option<f64>,
    pub triggered_at: Option<f64>,
}

/// Result of running a full detector bank over one telemetry table.
#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub channels: Vec<ChannelRunResult>,
    /// All events, in time order; ties keep channel order.
    pub events: Vec<DetectionEvent>,
    pub rate: RateReport,
}

/// Runs every configured channel over the telemetry, frame by frame.
pub fn run_detection(telemetry: &Telemetry, config: &RunConfig) -> Result<DetectionRun> {
    config.validate()?;
    let mut detectors = Vec::with_capacity(config.channels.len());
    let mut bindings = Vec::with_capacity(config.channels.len());
    for channel in &config.channels {
        bindings.push(bind_channel(
            &telemetry.schema,
            channel,
            Path::new("telemetry"),
        )?);
        detectors.push(ChannelDetector::new(channel.clone())?);
    }
    let mut traces: Vec<Vec<TraceRow>> =
        vec![Vec::with_capacity(telemetry.frames.len()); detectors.len()];
    let mut events = Vec::new();
    // Frames must arrive in time order: pushing per frame is what keeps the
    // merged event list sorted without an explicit sort.
    let mut last_t = f64::NEG_INFINITY;
    for frame in &telemetry.frames {
        if frame.t <= last_t {
            return Err(CoreError::TimestampRegression {
                previous: last_t,
                current: frame.t,
            });
        }
        last_t = frame.t;
        for ((detector, binding), trace) in
            detectors.iter_mut().zip(&bindings).zip(traces.iter_mut())
        {
            let (u, y) = binding.sample(frame);
            match detector.step(frame.t, u, y) {
                StepOutcome::Processed { trace: row, event } => {
                    trace.push(row);
                    if let Some(e) = event {
                        events.push(e);
                    }
                }
                StepOutcome::SkippedNonFinite { .. } => {}
            }
        }
    }
    let rate = check_rate(&telemetry.frames, config.rate_hz, config.rate_tolerance);
    let channels = detectors
        .into_iter()
        .zip(traces)
        .map(|(det, trace)| ChannelRunResult {
            channel: det.config().name.clone(),
            trace,
            skipped_samples: det.skipped_samples(),
            final_phase: det.phase(),
            armed_at: det.armed_at(),
            triggered_at: det.triggered_at(),
        })
        .collect();
    Ok(DetectionRun {
        channels,
        events,
        rate,
    })
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Tsv => "tsv",
    }
}

/// Writes a run's events plus one trace file per channel into `dir`.
pub fn write_run_outputs(dir: &Path, run: &DetectionRun, format: Format) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    write_events(
        &dir.join(format!("events.{}", ext(format))),
        &run.events,
        format,
    )?;
    for channel in &run.channels {
        write_trace(
            &dir.join(format!("{}.trace.{}", channel.channel, ext(format))),
            &channel.trace,
            format,
        )?;
    }
    Ok(())
}

/// Generates a scenario and writes its `telemetry.csv`, `truth.toml`, and
/// matching `config.toml` into `dir`.
pub fn write_scenario_data(dir: &Path, scenario: &Scenario) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let run = simulate_scenario(scenario)?;
    write_telemetry(&dir.join("telemetry.csv"), &run.telemetry, Format::Csv)?;
    write_truth(&dir.join("truth.toml"), &run.truth)?;
    RunConfig::for_scenario(scenario).save(&dir.join("config.toml"))
}

/// The three files that make a scenario directory scoreable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioFiles {
    pub name: String,
    pub dir: PathBuf,
    pub telemetry: PathBuf,
    pub truth: PathBuf,
    pub config: PathBuf,
}

/// Finds scenario directories under `root`, sorted by name. A directory
/// counts as a scenario when it holds a `truth.toml`; the other two files
/// must then be present.
pub fn discover_scenarios(root: &Path) -> Result<Vec<ScenarioFiles>> {
    let entries = std::fs::read_dir(root).map_err(|e| CoreError::io(root, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CoreError::io(root, e))?;
        let dir = entry.path();
        if !dir.is_dir() || !dir.join("truth.toml").exists() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let files = ScenarioFiles {
            telemetry: dir.join("telemetry.csv"),
            truth: dir.join("truth.toml"),
            config: dir.join("config.toml"),
            name,
            dir,
        };
        for required in [&files.telemetry, &files.config] {
            if !required.exists() {
                return Err(CoreError::Schema {
                    path: required.clone(),
                    message: "scenario directory is missing this file".into(),
                });
            }
        }
        found.push(files);
    }
    found.sort_by(|a, b| a.name.cmp(&b.name));
    if found.is_empty() {
        return Err(CoreError::Config(format!(
            "no scenario directories under {}",
            root.display()
        )));
    }
    Ok(found)
}

/// Outcome set plus its summary.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub outcomes: Vec<SequenceOutcome>,
    pub summary: EvaluationSummary,
}

/// Scores each scenario: run detection per its config, classify against its
/// truth. With `out_dir` set, per-scenario events and traces are written
/// under `out_dir/<name>/`. `z_override` replaces every channel's threshold,
/// which is what a threshold sweep varies.
pub fn evaluate_scenarios(
    scenarios: &[ScenarioFiles],
    out_dir: Option<&Path>,
    z_override: Option<f64>,
) -> Result<EvaluationReport> {
    let mut outcomes = Vec::with_capacity(scenarios.len());
    for files in scenarios {
        let mut config = RunConfig::load(&files.config)?;
        if let Some(z) = z_override {
            for channel in &mut config.channels {
                channel.z_threshold = z;
            }
        }
        let telemetry = load_telemetry(&files.telemetry, &config.time_column)?;
        let run = run_detection(&telemetry, &config)?;
        if let Some(out) = out_dir {
            write_run_outputs(&out.join(&files.name), &run, Format::Csv)?;
        }
        let truth = read_truth(&files.truth)?;
        outcomes.push(classify(&truth, &run.events));
    }
    let summary = summarize(&outcomes);
    Ok(EvaluationReport { outcomes, summary })
}

/// Scores already-detected runs: every directory under `root` holding both a
/// `truth.toml` and an `events.csv` is classified without re-running
/// detection. Lets externally produced event logs be scored with the same
/// rules.
pub fn score_precomputed(root: &Path) -> Result<EvaluationReport> {
    let entries = std::fs::read_dir(root).map_err(|e| CoreError::io(root, e))?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CoreError::io(root, e))?;
        let dir = entry.path();
        if dir.is_dir() && dir.join("truth.toml").exists() {
            dirs.push(dir);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CoreError::Config(format!(
            "no directories with truth.toml under {}",
            root.display()
        )));
    }
    let mut outcomes = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let events_path = dir.join("events.csv");
        if !events_path.exists() {
            return Err(CoreError::Schema {
                path: events_path,
                message: "directory has truth.toml but no events.csv".into(),
            });
        }
        let truth = read_truth(&dir.join("truth.toml"))?;
        let events = read_events(&events_path)?;
        outcomes.push(classify(&truth, &events));
    }
    let summary = summarize(&outcomes);
    Ok(EvaluationReport { outcomes, summary })
}
