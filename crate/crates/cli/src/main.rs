//! Command-line front end: generate scenario data, run detection over a
//! telemetry file, score scenario directories, and sweep thresholds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use arxdet_core::{
    atomic_write, discover_scenarios, evaluate_scenarios, load_telemetry, percent_truncated,
    read_scenario_spec, render_report, run_detection, scenario_suite, score_precomputed,
    write_outcomes, write_report, write_run_outputs, write_scenario_data, CoreError, ErrorCategory,
    EvaluationReport, Format, RunConfig,
};

#[derive(Parser)]
#[command(name = "arxdet", version, about = "Streaming anomaly detection over paired telemetry signals", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded evaluation suite: one directory per scenario with
    /// telemetry, ground truth, and a matching detector config.
    Simulate {
        /// Directory to create scenario directories under.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Master seed; every scenario derives its own stream from it.
        #[arg(long, default_value_t = 2, env = "ARXDET_SEED")]
        seed: u64,
        /// Generate only the named scenario.
        #[arg(long, value_name = "NAME")]
        scenario: Option<String>,
        /// Generate one custom scenario from a TOML spec file instead of the
        /// suite; the spec file carries its own seed.
        #[arg(long, value_name = "FILE", conflicts_with_all = ["seed", "scenario", "list"])]
        spec: Option<PathBuf>,
        /// List scenario names without generating anything.
        #[arg(long)]
        list: bool,
    },
    /// Run the detector bank from a config over one telemetry file.
    Detect {
        /// Telemetry table (.csv or .tsv), first column strictly increasing time.
        #[arg(long, value_name = "FILE")]
        telemetry: PathBuf,
        /// Run configuration (TOML).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Directory for events and per-channel traces.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Output format for events and traces.
        #[arg(long, default_value = "csv", value_parser = ["csv", "tsv"])]
        format: String,
    },
    /// Score a directory of scenario runs against their ground truth and
    /// write a category report.
    Evaluate {
        /// Root holding one subdirectory per scenario.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Directory for report.txt, outcomes.csv, and per-run outputs.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Override every channel's anomaly threshold.
        #[arg(long, value_name = "Z", env = "ARXDET_THRESHOLD")]
        threshold: Option<f64>,
        /// Score existing events.csv files instead of re-running detection.
        #[arg(long)]
        precomputed: bool,
    },
    /// Evaluate the same data at several thresholds and emit one CSV row per
    /// threshold.
    Sweep {
        /// Root holding one subdirectory per scenario.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// CSV file for the sweep table.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Comma-separated threshold list.
        #[arg(long, value_delimiter = ',', default_value = "3.0,4.5,6.0")]
        thresholds: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Stable exit codes per error category so scripts can branch on failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>().map(CoreError::category) {
        Some(ErrorCategory::Config) => 2,
        Some(ErrorCategory::Schema) => 3,
        Some(ErrorCategory::Stream) => 4,
        Some(ErrorCategory::Io) => 5,
        Some(ErrorCategory::Internal) | None => 1,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate {
            out,
            seed,
            scenario,
            spec,
            list,
        } => simulate_cmd(&out, seed, scenario.as_deref(), spec.as_deref(), list),
        Command::Detect {
            telemetry,
            config,
            out,
            format,
        } => detect_cmd(&telemetry, &config, &out, &format),
        Command::Evaluate {
            data,
            out,
            threshold,
            precomputed,
        } => evaluate_cmd(&data, &out, threshold, precomputed),
        Command::Sweep {
            data,
            out,
            thresholds,
        } => sweep_cmd(&data, &out, &thresholds),
    }
}

fn simulate_cmd(
    out: &Path,
    seed: u64,
    only: Option<&str>,
    spec: Option<&Path>,
    list: bool,
) -> anyhow::Result<()> {
    if let Some(spec) = spec {
        let scenario = read_scenario_spec(spec)?;
        write_scenario_data(&out.join(&scenario.name), &scenario)
            .with_context(|| format!("generating {}", scenario.name))?;
        println!("wrote scenario {} under {}", scenario.name, out.display());
        return Ok(());
    }
    let mut scenarios = scenario_suite(seed);
    if list {
        for s in &scenarios {
            println!("{}\t{}", s.name, s.category);
        }
        return Ok(());
    }
    if let Some(name) = only {
        scenarios.retain(|s| s.name == name);
        if scenarios.is_empty() {
            return Err(CoreError::Config(format!(
                "no scenario named {name}; run with --list to see the suite"
            ))
            .into());
        }
    }
    for s in &scenarios {
        write_scenario_data(&out.join(&s.name), s)
            .with_context(|| format!("generating {}", s.name))?;
    }
    println!(
        "wrote {} scenario(s) under {}",
        scenarios.len(),
        out.display()
    );
    Ok(())
}

fn detect_cmd(telemetry: &Path, config: &Path, out: &Path, format: &str) -> anyhow::Result<()> {
    let format = Format::parse(format)?;
    let config = RunConfig::load(config)?;
    let telemetry = load_telemetry(telemetry, &config.time_column)?;
    let run = run_detection(&telemetry, &config)?;
    write_run_outputs(out, &run, format)?;

    if run.rate.violations > 0 {
        eprintln!(
            "warning: {} of {} sample intervals off the nominal rate",
            run.rate.violations, run.rate.intervals
        );
    }
    for channel in &run.channels {
        let armed = match channel.armed_at {
            Some(t) => format!("armed at {t:.2}s"),
            None => "never armed".into(),
        };
        println!(
            "{}: {} over {} samples, {}, ended {}",
            channel.channel,
            channel.trace.len(),
            channel.trace.len() + channel.skipped_samples,
            armed,
            channel.final_phase.name(),
        );
    }
    if run.events.is_empty() {
        println!("no anomalies");
    }
    for event in &run.events {
        println!(
            "anomaly on {} at t={:.3}s (z={:.2}, error={:+.5})",
            event.channel, event.t, event.z, event.error
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn evaluate_cmd(
    data: &Path,
    out: &Path,
    threshold: Option<f64>,
    precomputed: bool,
) -> anyhow::Result<()> {
    let report = if precomputed {
        if threshold.is_some() {
            bail!("--threshold cannot rescore precomputed events");
        }
        score_precomputed(data)?
    } else {
        let scenarios = discover_scenarios(data)?;
        evaluate_scenarios(&scenarios, Some(out), threshold)?
    };
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out, e))?;
    write_report(&out.join("report.txt"), &report.summary)?;
    write_outcomes(&out.join("outcomes.csv"), &report.outcomes)?;
    print!("{}", render_report(&report.summary));
    Ok(())
}

fn sweep_cmd(data: &Path, out: &Path, thresholds: &[f64]) -> anyhow::Result<()> {
    if thresholds.is_empty() {
        bail!("sweep needs at least one threshold");
    }
    let scenarios = discover_scenarios(data)?;
    let mut table = String::from(
        "threshold,sequences,true_positives,false_positives,false_negatives,true_negatives,precision,recall,accuracy\n",
    );
    for &z in thresholds {
        if !z.is_finite() || z < 0.0 {
            return Err(CoreError::Config(format!("threshold must be >= 0, got {z}")).into());
        }
        let EvaluationReport { summary, .. } = evaluate_scenarios(&scenarios, None, Some(z))?;
        let c = &summary.overall.counts;
        let row = format!(
            "{z},{},{},{},{},{},{},{},{}",
            c.sequences,
            c.true_positives,
            c.false_positives,
            c.false_negatives,
            c.true_negatives,
            percent_truncated(c.precision()),
            percent_truncated(c.recall()),
            percent_truncated(c.accuracy()),
        );
        println!("{row}");
        table.push_str(&row);
        table.push('\n');
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    atomic_write(out, |w| w.write_all(table.as_bytes()))?;
    println!("sweep table in {}", out.display());
    Ok(())
}
