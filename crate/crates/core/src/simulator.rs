//! Synthetic telemetry with known dynamics and injectable faults.
//!
//! Every run is reproducible from a seed, and every generated sequence is
//! paired with a ground-truth record saying whether, where, and when a fault
//! was injected. Downstream code treats these runs as reference data: the
//! recursion here is the definition of how an input-output channel behaves.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arx::ArxOrder;
use crate::detector::ChannelConfig;
use crate::error::{CoreError, Result};
use crate::telemetry::{atomic_write, Telemetry, TelemetryFrame, TelemetrySchema};

/// Upper bound on the spectral radius of accepted dynamics. Anything at or
/// above this drifts too close to instability for a finite-horizon run.
pub const STABILITY_LIMIT: f64 = 0.95;

/// Faults may only begin after this much stream time, leaving room for a
/// detector to identify the healthy plant first.
pub const MIN_FAULT_ONSET_S: f64 = 8.0;

/// Input signal shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Excitation {
    /// Zero-mean Gaussian samples with the given standard deviation.
    WhiteNoise { amplitude: f64 },
    /// Sum of equal-amplitude sinusoids with random phases plus Gaussian
    /// dither of standard deviation `noise`.
    SumOfSines {
        amplitude: f64,
        freqs_hz: Vec<f64>,
        noise: f64,
    },
    /// Piecewise-constant level redrawn uniformly from `[-amplitude,
    /// amplitude]` every `hold_s` seconds, plus Gaussian dither.
    StepRich {
        amplitude: f64,
        hold_s: f64,
        noise: f64,
    },
}

impl Excitation {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        match self {
            Excitation::WhiteNoise { amplitude } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return bad(format!(
                        "white noise amplitude must be >= 0, got {amplitude}"
                    ));
                }
            }
            Excitation::SumOfSines {
                amplitude,
                freqs_hz,
                noise,
            } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return bad(format!("sine amplitude must be >= 0, got {amplitude}"));
                }
                if freqs_hz.is_empty() || freqs_hz.iter().any(|f| !f.is_finite() || *f <= 0.0) {
                    return bad("sine frequencies must be positive and non-empty".into());
                }
                if !noise.is_finite() || *noise < 0.0 {
                    return bad(format!("excitation noise must be >= 0, got {noise}"));
                }
            }
            Excitation::StepRich {
                amplitude,
                hold_s,
                noise,
            } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return bad(format!("step amplitude must be >= 0, got {amplitude}"));
                }
                if !hold_s.is_finite() || *hold_s <= 0.0 {
                    return bad(format!("step hold time must be positive, got {hold_s}"));
                }
                if !noise.is_finite() || *noise < 0.0 {
                    return bad(format!("excitation noise must be >= 0, got {noise}"));
                }
            }
        }
        Ok(())
    }

    fn generate(&self, n: usize, rate_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Excitation::WhiteNoise { amplitude } => {
                let dist = Normal::new(0.0, *amplitude).expect("validated amplitude");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            Excitation::SumOfSines {
                amplitude,
                freqs_hz,
                noise,
            } => {
                let phases: Vec<f64> = freqs_hz
                    .iter()
                    .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                    .collect();
                let dither = Normal::new(0.0, *noise).expect("validated noise");
                (0..n)
                    .map(|k| {
                        let t = k as f64 / rate_hz;
                        let s: f64 = freqs_hz
                            .iter()
                            .zip(&phases)
                            .map(|(f, p)| (std::f64::consts::TAU * f * t + p).sin())
                            .sum();
                        amplitude * s + dither.sample(rng)
                    })
                    .collect()
            }
            Excitation::StepRich {
                amplitude,
                hold_s,
                noise,
            } => {
                let hold = ((hold_s * rate_hz).round() as usize).max(1);
                let dither = Normal::new(0.0, *noise).expect("validated noise");
                let mut level = 0.0;
                (0..n)
                    .map(|k| {
                        if k % hold == 0 {
                            level = rng.random_range(-*amplitude..=*amplitude);
                        }
                        level + dither.sample(rng)
                    })
                    .collect()
            }
        }
    }
}

/// A linear input-output channel with additive output noise:
///
/// `y(k) = a1 y(k-1) + ... + b0 u(k) + b1 u(k-1) + ... + n(k)`
///
/// Construction rejects dynamics whose poles are not safely inside the unit
/// circle, so an instance is always a plant a run can settle on.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDynamics {
    a: Vec<f64>,
    b: Vec<f64>,
    noise_sigma: f64,
    excitation: Excitation,
    rate_hz: f64,
}

impl ChannelDynamics {
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        noise_sigma: f64,
        excitation: Excitation,
        rate_hz: f64,
    ) -> Result<Self> {
        if b.is_empty() {
            return Err(CoreError::Config(
                "dynamics need at least the direct input coefficient b0".into(),
            ));
        }
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "dynamics coefficient",
            });
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(CoreError::Config(format!(
                "output noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        if !rate_hz.is_finite() || rate_hz <= 0.0 {
            return Err(CoreError::Config(format!(
                "sample rate must be positive, got {rate_hz}"
            )));
        }
        excitation.validate()?;
        let dynamics = ChannelDynamics {
            a,
            b,
            noise_sigma,
            excitation,
            rate_hz,
        };
        let radius = dynamics.spectral_radius();
        if radius >= STABILITY_LIMIT {
            return Err(CoreError::UnstableDynamics {
                radius,
                limit: STABILITY_LIMIT,
            });
        }
        Ok(dynamics)
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn excitation(&self) -> &Excitation {
        &self.excitation
    }

    /// Model order matching this plant exactly.
    pub fn order(&self) -> ArxOrder {
        ArxOrder::new(self.a.len(), self.b.len().saturating_sub(1))
    }

    /// Largest pole magnitude, from the companion matrix of the output
    /// recursion.
    pub fn spectral_radius(&self) -> f64 {
        let na = self.a.len();
        if na == 0 {
            return 0.0;
        }
        let mut m = DMatrix::<f64>::zeros(na, na);
        for (j, &aj) in self.a.iter().enumerate() {
            m[(0, j)] = aj;
        }
        for i in 1..na {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Draws dynamics whose poles are placed directly inside radius 0.85,
    /// so stability holds by construction for any seed.
    pub fn random_stable(
        rng: &mut impl Rng,
        na: usize,
        nb: usize,
        noise_sigma: f64,
        excitation: Excitation,
        rate_hz: f64,
    ) -> Self {
        let mut poly = vec![1.0];
        let mut remaining = na;
        while remaining > 0 {
            if remaining >= 2 && rng.random_bool(0.5) {
                let r = 0.85 * rng.random::<f64>();
                let theta = std::f64::consts::PI * rng.random::<f64>();
                poly = poly_mul(&poly, &[1.0, -2.0 * r * theta.cos(), r * r]);
                remaining -= 2;
            } else {
                let root = rng.random_range(-0.85..0.85);
                poly = poly_mul(&poly, &[1.0, -root]);
                remaining -= 1;
            }
        }
        let a: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut b = vec![sign * rng.random_range(0.2..1.0)];
        for _ in 0..nb {
            b.push(rng.random_range(-0.5..0.5));
        }
        ChannelDynamics::new(a, b, noise_sigma, excitation, rate_hz)
            .expect("pole placement keeps the radius below the limit")
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out[i + j] += pi * qj;
        }
    }
    out
}

/// What goes wrong with a channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultModel {
    /// Output freezes at a constant.
    StuckAtConstant { value: f64 },
    /// Input effectiveness scales by `factor` from onset on; the recursion
    /// keeps running on the faulted trajectory.
    GainChange { factor: f64 },
    /// A ramp of `slope` units per second adds onto the output.
    OutputDrift { slope: f64 },
    /// The output decays first-order toward `floor`, input influence gone.
    PowerCut { floor: f64, time_constant_s: f64 },
}

impl FaultModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FaultModel::StuckAtConstant { .. } => "stuck_at_constant",
            FaultModel::GainChange { .. } => "gain_change",
            FaultModel::OutputDrift { .. } => "output_drift",
            FaultModel::PowerCut { .. } => "power_cut",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            FaultModel::StuckAtConstant { value } => value.is_finite(),
            FaultModel::GainChange { factor } => factor.is_finite() && factor >= 0.0,
            FaultModel::OutputDrift { slope } => slope.is_finite(),
            FaultModel::PowerCut {
                floor,
                time_constant_s,
            } => floor.is_finite() && time_constant_s.is_finite() && time_constant_s > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config(format!(
                "invalid {} fault parameters: {self:?}",
                self.kind_name()
            )))
        }
    }
}

/// A fault plus when it begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub model: FaultModel,
    pub onset_s: f64,
}

impl FaultSpec {
    fn validate(&self, duration_s: f64) -> Result<()> {
        self.model.validate()?;
        if !self.onset_s.is_finite() || self.onset_s < MIN_FAULT_ONSET_S {
            return Err(CoreError::Config(format!(
                "fault onset must be at least {MIN_FAULT_ONSET_S}s into the run, got {}s",
                self.onset_s
            )));
        }
        if self.onset_s >= duration_s {
            return Err(CoreError::Config(format!(
                "fault onset {}s is not inside the {duration_s}s run",
                self.onset_s
            )));
        }
        Ok(())
    }
}

/// Ground truth for one generated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub category: String,
    pub rate_hz: f64,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<TruthFault>,
}

/// The injected fault as recorded in a truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFault {
    pub channel: String,
    pub kind: String,
    pub onset_s: f64,
}

impl GroundTruth {
    pub fn is_faulty(&self) -> bool {
        self.fault.is_some()
    }
}

/// Writes a ground-truth sidecar.
pub fn write_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let body = toml::to_string_pretty(truth)
        .map_err(|e| CoreError::Config(format!("cannot encode ground truth: {e}")))?;
    atomic_write(path, |w| w.write_all(body.as_bytes()))
}

/// Reads a ground-truth sidecar.
pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let body = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    toml::from_str(&body).map_err(|e| CoreError::Schema {
        path: path.to_path_buf(),
        message: format!("invalid ground truth: {e}"),
    })
}

/// A generated run: the telemetry table plus its ground truth.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub telemetry: Telemetry,
    pub truth: GroundTruth,
}

fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One output step of the recursion; `gain` scales the input contribution.
/// Faulted and nominal passes share this so that a gain of exactly 1
/// reproduces the nominal trajectory bit for bit.
fn next_output(a: &[f64], b: &[f64], y: &[f64], u: &[f64], k: usize, gain: f64, e: f64) -> f64 {
    let mut acc = e;
    for (i, &ai) in a.iter().enumerate() {
        if k > i {
            acc += ai * y[k - 1 - i];
        }
    }
    for (j, &bj) in b.iter().enumerate() {
        if k >= j {
            acc += gain * (bj * u[k - j]);
        }
    }
    acc
}

fn forward(a: &[f64], b: &[f64], u: &[f64], e: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(u.len());
    for (k, &ek) in e.iter().enumerate() {
        let yk = next_output(a, b, &y, u, k, 1.0, ek);
        y.push(yk);
    }
    y
}

fn apply_fault(
    dynamics: &ChannelDynamics,
    spec: &FaultSpec,
    u: &[f64],
    e: &[f64],
    y_nom: &[f64],
) -> Vec<f64> {
    let rate = dynamics.rate_hz;
    let onset_idx = ((spec.onset_s * rate - 1e-9).ceil() as usize).min(y_nom.len());
    match spec.model {
        FaultModel::StuckAtConstant { value } => {
            let mut y = y_nom.to_vec();
            for yk in &mut y[onset_idx..] {
                *yk = value;
            }
            y
        }
        FaultModel::OutputDrift { slope } => {
            let mut y = y_nom.to_vec();
            for (k, yk) in y.iter_mut().enumerate().skip(onset_idx) {
                *yk += slope * (k as f64 / rate - spec.onset_s);
            }
            y
        }
        FaultModel::GainChange { factor } => {
            let mut y = y_nom[..onset_idx].to_vec();
            for (k, &ek) in e.iter().enumerate().skip(onset_idx) {
                let yk = next_output(&dynamics.a, &dynamics.b, &y, u, k, factor, ek);
                y.push(yk);
            }
            y
        }
        FaultModel::PowerCut {
            floor,
            time_constant_s,
        } => {
            let alpha = (-1.0 / (rate * time_constant_s)).exp();
            let mut y = y_nom[..onset_idx].to_vec();
            for k in onset_idx..y_nom.len() {
                let prev = if k == 0 { 0.0 } else { y[k - 1] };
                y.push(floor + (prev - floor) * alpha + e[k]);
            }
            y
        }
    }
}

fn synthesize(
    dynamics: &ChannelDynamics,
    fault: Option<&FaultSpec>,
    duration_s: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(CoreError::Config(format!(
            "run duration must be positive, got {duration_s}"
        )));
    }
    if let Some(spec) = fault {
        spec.validate(duration_s)?;
    }
    let n = (duration_s * dynamics.rate_hz).round() as usize;
    if n < 2 {
        return Err(CoreError::Config(format!(
            "run of {duration_s}s at {} Hz has fewer than two samples",
            dynamics.rate_hz
        )));
    }
    let mut u_rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let mut e_rng = ChaCha8Rng::seed_from_u64(mix(seed, 2));
    let u = dynamics
        .excitation
        .generate(n, dynamics.rate_hz, &mut u_rng);
    let noise = Normal::new(0.0, dynamics.noise_sigma).expect("validated sigma");
    let e: Vec<f64> = (0..n).map(|_| noise.sample(&mut e_rng)).collect();
    let y_nom = forward(&dynamics.a, &dynamics.b, &u, &e);
    let y = match fault {
        None => y_nom,
        Some(spec) => apply_fault(dynamics, spec, &u, &e, &y_nom),
    };
    Ok((u, y))
}

/// Generates a single-channel run with columns `u` and `y`.
pub fn simulate(
    dynamics: &ChannelDynamics,
    fault: Option<&FaultSpec>,
    duration_s: f64,
    seed: u64,
) -> Result<SimRun> {
    let (u, y) = synthesize(dynamics, fault, duration_s, seed)?;
    let schema = TelemetrySchema {
        time_column: "t".into(),
        columns: vec!["u".into(), "y".into()],
    };
    let frames = u
        .iter()
        .zip(&y)
        .enumerate()
        .map(|(k, (&uk, &yk))| TelemetryFrame {
            t: k as f64 / dynamics.rate_hz,
            values: vec![uk, yk],
        })
        .collect();
    let truth = GroundTruth {
        scenario: "channel".into(),
        category: match fault {
            Some(spec) => spec.model.kind_name().into(),
            None => "no_failure".into(),
        },
        rate_hz: dynamics.rate_hz,
        duration_s,
        fault: fault.map(|spec| TruthFault {
            channel: "channel".into(),
            kind: spec.model.kind_name().into(),
            onset_s: spec.onset_s,
        }),
    };
    Ok(SimRun {
        telemetry: Telemetry { schema, frames },
        truth,
    })
}

/// One channel inside a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioChannel {
    pub name: String,
    pub dynamics: ChannelDynamics,
    pub fault: Option<FaultSpec>,
}

/// A named multi-channel run with at most one fault.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub category: String,
    pub duration_s: f64,
    pub seed: u64,
    pub channels: Vec<ScenarioChannel>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(CoreError::Config("scenario name must not be empty".into()));
        }
        if self.channels.is_empty() {
            return Err(CoreError::Config(format!(
                "scenario '{}' has no channels",
                self.name
            )));
        }
        for pair in self.channels.windows(2) {
            if pair[0].dynamics.rate_hz != pair[1].dynamics.rate_hz {
                return Err(CoreError::Config(format!(
                    "scenario '{}': channels disagree on sample rate",
                    self.name
                )));
            }
        }
        let mut names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.channels.len() {
            return Err(CoreError::Config(format!(
                "scenario '{}' has duplicate channel names",
                self.name
            )));
        }
        let faults = self.channels.iter().filter(|c| c.fault.is_some()).count();
        if faults > 1 {
            return Err(CoreError::Config(format!(
                "scenario '{}' injects {faults} faults; at most one is allowed",
                self.name
            )));
        }
        for ch in &self.channels {
            if let Some(spec) = &ch.fault {
                spec.validate(self.duration_s)?;
            }
        }
        Ok(())
    }

    pub fn rate_hz(&self) -> f64 {
        self.channels
            .first()
            .map(|c| c.dynamics.rate_hz)
            .unwrap_or(0.0)
    }

    /// Detector settings sized to this scenario: model orders match the true
    /// plant, everything else stays at defaults.
    pub fn detector_configs(&self) -> Vec<ChannelConfig> {
        self.channels
            .iter()
            .map(|ch| {
                let mut cfg = ChannelConfig::new(
                    &ch.name,
                    format!("{}_cmd", ch.name),
                    format!("{}_meas", ch.name),
                );
                let order = ch.dynamics.order();
                cfg.na = order.na;
                cfg.nb = order.nb;
                cfg
            })
            .collect()
    }
}

/// Runs every channel of a scenario on a shared clock. Column names are
/// `<channel>_cmd` and `<channel>_meas`.
fn default_spec_category() -> String {
    "custom".into()
}

/// Plain-data scenario description as written in a spec file. Converting to
/// a [`Scenario`] goes through the validating constructors, so a parsed spec
/// can still be rejected (unstable dynamics, bad fault onset, and so on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default = "default_spec_category")]
    pub category: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "channel")]
    pub channels: Vec<ChannelSpec>,
}

/// One channel of a [`ScenarioSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    /// Output-lag coefficients, most recent first.
    pub a: Vec<f64>,
    /// Input coefficients, current sample first.
    pub b: Vec<f64>,
    pub noise_sigma: f64,
    pub rate_hz: f64,
    /// Defaults to the step-rich input used by the built-in suite.
    #[serde(default = "suite_excitation")]
    pub excitation: Excitation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
}

impl ScenarioSpec {
    pub fn into_scenario(self) -> Result<Scenario> {
        let mut channels = Vec::with_capacity(self.channels.len());
        for ch in self.channels {
            channels.push(ScenarioChannel {
                name: ch.name,
                dynamics: ChannelDynamics::new(
                    ch.a,
                    ch.b,
                    ch.noise_sigma,
                    ch.excitation,
                    ch.rate_hz,
                )?,
                fault: ch.fault,
            });
        }
        let scenario = Scenario {
            name: self.name,
            category: self.category,
            duration_s: self.duration_s,
            seed: self.seed,
            channels,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Loads and validates a scenario spec file (TOML).
pub fn read_scenario_spec(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let spec: ScenarioSpec = toml::from_str(&text)
        .map_err(|e| CoreError::Config(format!("invalid scenario spec {}: {e}", path.display())))?;
    spec.into_scenario()
}

pub fn simulate_scenario(scenario: &Scenario) -> Result<SimRun> {
    scenario.validate()?;
    let rate = scenario.rate_hz();
    let mut columns = Vec::new();
    let mut series: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut fault = None;
    for (i, ch) in scenario.channels.iter().enumerate() {
        let pair = synthesize(
            &ch.dynamics,
            ch.fault.as_ref(),
            scenario.duration_s,
            mix(scenario.seed, 1000 + i as u64),
        )?;
        columns.push(format!("{}_cmd", ch.name));
        columns.push(format!("{}_meas", ch.name));
        if let Some(spec) = &ch.fault {
            fault = Some(TruthFault {
                channel: ch.name.clone(),
                kind: spec.model.kind_name().into(),
                onset_s: spec.onset_s,
            });
        }
        series.push(pair);
    }
    let n = series[0].0.len();
    let frames = (0..n)
        .map(|k| TelemetryFrame {
            t: k as f64 / rate,
            values: series.iter().flat_map(|(u, y)| [u[k], y[k]]).collect(),
        })
        .collect();
    Ok(SimRun {
        telemetry: Telemetry {
            schema: TelemetrySchema {
                time_column: "t".into(),
                columns,
            },
            frames,
        },
        truth: GroundTruth {
            scenario: scenario.name.clone(),
            category: scenario.category.clone(),
            rate_hz: rate,
            duration_s: scenario.duration_s,
            fault,
        },
    })
}

// Plant presets used by the scenario suite. Pole positions, in order:
// {0.5, 0.6}, {0.4, 0.5}, {0.8}, {0.6, 0.8}.
fn preset_engine(rate_hz: f64) -> ChannelDynamics {
    ChannelDynamics::new(
        vec![1.1, -0.3],
        vec![0.5, 0.2],
        0.01,
        suite_excitation(),
        rate_hz,
    )
    .expect("preset is stable")
}

fn preset_rudder(rate_hz: f64) -> ChannelDynamics {
    ChannelDynamics::new(
        vec![0.9, -0.2],
        vec![0.7],
        0.01,
        suite_excitation(),
        rate_hz,
    )
    .expect("preset is stable")
}

fn preset_elevator(rate_hz: f64) -> ChannelDynamics {
    ChannelDynamics::new(vec![0.8], vec![0.4, 0.1], 0.01, suite_excitation(), rate_hz)
        .expect("preset is stable")
}

fn preset_aileron(rate_hz: f64) -> ChannelDynamics {
    ChannelDynamics::new(
        vec![1.4, -0.48],
        vec![0.3, 0.3],
        0.01,
        suite_excitation(),
        rate_hz,
    )
    .expect("preset is stable")
}

fn suite_excitation() -> Excitation {
    Excitation::StepRich {
        amplitude: 0.6,
        hold_s: 2.0,
        noise: 0.15,
    }
}

const SUITE_RATE_HZ: f64 = 25.0;
const SUITE_DURATION_S: f64 = 60.0;
const SUITE_ONSET_S: f64 = 30.0;

/// The fixed evaluation suite: 22 scenarios across six categories, with one
/// fault per faulty scenario and five clean runs. All randomness derives
/// from `master_seed`.
pub fn scenario_suite(master_seed: u64) -> Vec<Scenario> {
    let mut scenarios = Vec::new();
    let mut idx = 0u64;
    let mut push = |name: String,
                    category: &str,
                    channels: Vec<ScenarioChannel>,
                    scenarios: &mut Vec<Scenario>| {
        idx += 1;
        scenarios.push(Scenario {
            name,
            category: category.into(),
            duration_s: SUITE_DURATION_S,
            seed: mix(master_seed, idx),
            channels,
        });
    };
    let single = |name: &str, dynamics: ChannelDynamics, fault: FaultModel| {
        vec![ScenarioChannel {
            name: name.into(),
            dynamics,
            fault: Some(FaultSpec {
                model: fault,
                onset_s: SUITE_ONSET_S,
            }),
        }]
    };

    for i in 1..=4 {
        push(
            format!("engine_power_cut_{i}"),
            "engine",
            single(
                "engine",
                preset_engine(SUITE_RATE_HZ),
                FaultModel::PowerCut {
                    floor: 0.0,
                    time_constant_s: 2.0,
                },
            ),
            &mut scenarios,
        );
    }
    for (i, factor) in [0.4, 0.5, 0.6].into_iter().enumerate() {
        push(
            format!("engine_gain_drop_{}", i + 1),
            "engine",
            single(
                "engine",
                preset_engine(SUITE_RATE_HZ),
                FaultModel::GainChange { factor },
            ),
            &mut scenarios,
        );
    }
    for (i, value) in [-0.4, 0.4, 0.0].into_iter().enumerate() {
        push(
            format!("rudder_stuck_{}", i + 1),
            "rudder",
            single(
                "rudder",
                preset_rudder(SUITE_RATE_HZ),
                FaultModel::StuckAtConstant { value },
            ),
            &mut scenarios,
        );
    }
    push(
        "elevator_stuck_1".into(),
        "elevator",
        single(
            "elevator",
            preset_elevator(SUITE_RATE_HZ),
            FaultModel::StuckAtConstant { value: 0.0 },
        ),
        &mut scenarios,
    );
    push(
        "elevator_drift_1".into(),
        "elevator",
        single(
            "elevator",
            preset_elevator(SUITE_RATE_HZ),
            FaultModel::OutputDrift { slope: 0.15 },
        ),
        &mut scenarios,
    );
    for (i, value) in [0.0, 0.3, -0.3, 0.2].into_iter().enumerate() {
        push(
            format!("aileron_stuck_{}", i + 1),
            "aileron",
            single(
                "aileron",
                preset_aileron(SUITE_RATE_HZ),
                FaultModel::StuckAtConstant { value },
            ),
            &mut scenarios,
        );
    }
    push(
        "rudder_aileron_stuck_1".into(),
        "rudder_aileron",
        vec![
            ScenarioChannel {
                name: "rudder".into(),
                dynamics: preset_rudder(SUITE_RATE_HZ),
                fault: None,
            },
            ScenarioChannel {
                name: "aileron".into(),
                dynamics: preset_aileron(SUITE_RATE_HZ),
                fault: Some(FaultSpec {
                    model: FaultModel::StuckAtConstant { value: 0.0 },
                    onset_s: SUITE_ONSET_S,
                }),
            },
        ],
        &mut scenarios,
    );
    let clean_presets = [
        ("engine", preset_engine(SUITE_RATE_HZ)),
        ("rudder", preset_rudder(SUITE_RATE_HZ)),
        ("elevator", preset_elevator(SUITE_RATE_HZ)),
        ("aileron", preset_aileron(SUITE_RATE_HZ)),
        ("engine", preset_engine(SUITE_RATE_HZ)),
    ];
    for (i, (name, dynamics)) in clean_presets.into_iter().enumerate() {
        push(
            format!("no_failure_{}", i + 1),
            "no_failure",
            vec![ScenarioChannel {
                name: name.into(),
                dynamics,
                fault: None,
            }],
            &mut scenarios,
        );
    }
    scenarios
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn white(amplitude: f64) -> Excitation {
        Excitation::WhiteNoise { amplitude }
    }

    #[test]
    fn rejects_unstable_dynamics_with_radius() {
        let err = ChannelDynamics::new(vec![1.05], vec![1.0], 0.0, white(1.0), 25.0).unwrap_err();
        match err {
            CoreError::UnstableDynamics { radius, limit } => {
                assert!((radius - 1.05).abs() < 1e-9);
                assert_eq!(limit, STABILITY_LIMIT);
            }
            other => panic!("expected instability error, got {other:?}"),
        }
    }

    #[test]
    fn spectral_radius_matches_known_pole_sets() {
        let d = ChannelDynamics::new(vec![0.5], vec![1.0], 0.0, white(1.0), 25.0).unwrap();
        assert!((d.spectral_radius() - 0.5).abs() < 1e-12);
        // z^2 - 1.1 z + 0.3 has roots 0.5 and 0.6.
        let d = ChannelDynamics::new(vec![1.1, -0.3], vec![1.0], 0.0, white(1.0), 25.0).unwrap();
        assert!((d.spectral_radius() - 0.6).abs() < 1e-12);
        let d = ChannelDynamics::new(vec![], vec![1.0], 0.0, white(1.0), 25.0).unwrap();
        assert_eq!(d.spectral_radius(), 0.0);
    }

    #[test]
    fn random_stable_is_always_inside_the_limit() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let d = ChannelDynamics::random_stable(&mut rng, 4, 2, 0.01, white(1.0), 25.0);
            assert!(d.spectral_radius() < STABILITY_LIMIT);
            assert_eq!(d.order(), ArxOrder::new(4, 2));
        }
    }

    #[test]
    fn impulse_response_of_first_order_plant_is_geometric() {
        let mut u = vec![0.0; 16];
        u[0] = 1.0;
        let e = vec![0.0; 16];
        let y = forward(&[0.5], &[1.0], &u, &e);
        for (k, &yk) in y.iter().enumerate() {
            assert_eq!(yk, 0.5f64.powi(k as i32), "sample {k}");
        }
    }

    #[test]
    fn step_response_of_second_order_plant_matches_hand_recursion() {
        let u = vec![1.0; 600];
        let e = vec![0.0; 600];
        let y = forward(&[1.1, -0.3], &[0.5, 0.2], &u, &e);
        for (k, expected) in [0.5, 1.25, 1.925, 2.4425].into_iter().enumerate() {
            assert!((y[k] - expected).abs() < 1e-12, "sample {k}: {}", y[k]);
        }
        // Steady state: y (1 - 1.1 + 0.3) = 0.7.
        assert!((y[599] - 3.5).abs() < 1e-9);
    }

    #[test]
    fn simulate_is_deterministic_in_the_seed() {
        let d = preset_engine(25.0);
        let a = simulate(&d, None, 20.0, 9).unwrap();
        let b = simulate(&d, None, 20.0, 9).unwrap();
        let c = simulate(&d, None, 20.0, 10).unwrap();
        assert_eq!(a.telemetry.frames.len(), 500);
        for (fa, fb) in a.telemetry.frames.iter().zip(&b.telemetry.frames) {
            assert_eq!(fa.t.to_bits(), fb.t.to_bits());
            for (x, y) in fa.values.iter().zip(&fb.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let differs = a
            .telemetry
            .frames
            .iter()
            .zip(&c.telemetry.frames)
            .any(|(fa, fc)| fa.values != fc.values);
        assert!(differs, "different seeds must not collide");
    }

    fn fault_at(model: FaultModel, onset_s: f64) -> FaultSpec {
        FaultSpec { model, onset_s }
    }

    #[test]
    fn stuck_fault_freezes_output_from_onset() {
        let d = preset_rudder(25.0);
        let spec = fault_at(FaultModel::StuckAtConstant { value: 0.25 }, 10.0);
        let run = simulate(&d, Some(&spec), 20.0, 5).unwrap();
        let onset_idx = 250;
        for (k, frame) in run.telemetry.frames.iter().enumerate() {
            if k >= onset_idx {
                assert_eq!(frame.values[1], 0.25, "sample {k}");
            }
        }
        let before: Vec<f64> = run.telemetry.frames[..onset_idx]
            .iter()
            .map(|f| f.values[1])
            .collect();
        assert!(before.iter().any(|&y| y != 0.25));
    }

    #[test]
    fn unit_gain_change_reproduces_nominal_run_exactly() {
        let d = preset_engine(25.0);
        let spec = fault_at(FaultModel::GainChange { factor: 1.0 }, 10.0);
        let nominal = simulate(&d, None, 20.0, 5).unwrap();
        let faulted = simulate(&d, Some(&spec), 20.0, 5).unwrap();
        for (a, b) in nominal
            .telemetry
            .frames
            .iter()
            .zip(&faulted.telemetry.frames)
        {
            assert_eq!(a.values[1].to_bits(), b.values[1].to_bits());
        }
    }

    #[test]
    fn gain_change_diverges_only_after_onset() {
        let d = preset_engine(25.0);
        let spec = fault_at(FaultModel::GainChange { factor: 0.5 }, 10.0);
        let nominal = simulate(&d, None, 20.0, 5).unwrap();
        let faulted = simulate(&d, Some(&spec), 20.0, 5).unwrap();
        let onset_idx = 250;
        for k in 0..onset_idx {
            assert_eq!(
                nominal.telemetry.frames[k].values[1].to_bits(),
                faulted.telemetry.frames[k].values[1].to_bits(),
                "pre-onset sample {k}"
            );
        }
        let diverged = (onset_idx..500).any(|k| {
            nominal.telemetry.frames[k].values[1] != faulted.telemetry.frames[k].values[1]
        });
        assert!(diverged);
    }

    #[test]
    fn drift_fault_adds_exactly_a_ramp() {
        let d = preset_elevator(25.0);
        let spec = fault_at(FaultModel::OutputDrift { slope: 0.2 }, 10.0);
        let nominal = simulate(&d, None, 20.0, 5).unwrap();
        let faulted = simulate(&d, Some(&spec), 20.0, 5).unwrap();
        for (k, (a, b)) in nominal
            .telemetry
            .frames
            .iter()
            .zip(&faulted.telemetry.frames)
            .enumerate()
        {
            let expected = if k < 250 {
                0.0
            } else {
                0.2 * (k as f64 / 25.0 - 10.0)
            };
            assert!(
                ((b.values[1] - a.values[1]) - expected).abs() < 1e-9,
                "sample {k}"
            );
        }
    }

    #[test]
    fn power_cut_decays_to_the_floor() {
        let d = ChannelDynamics::new(
            vec![1.1, -0.3],
            vec![0.5, 0.2],
            0.0,
            Excitation::StepRich {
                amplitude: 0.6,
                hold_s: 2.0,
                noise: 0.0,
            },
            25.0,
        )
        .unwrap();
        let spec = fault_at(
            FaultModel::PowerCut {
                floor: 0.1,
                time_constant_s: 2.0,
            },
            10.0,
        );
        let run = simulate(&d, Some(&spec), 30.0, 5).unwrap();
        let y: Vec<f64> = run.telemetry.frames.iter().map(|f| f.values[1]).collect();
        let onset_idx = 250;
        let alpha = (-1.0f64 / (25.0 * 2.0)).exp();
        for k in onset_idx..y.len() {
            let prev = y[k - 1];
            let expected = 0.1 + (prev - 0.1) * alpha;
            assert!((y[k] - expected).abs() < 1e-12, "sample {k}");
        }
        // Five time constants after onset the transient is gone.
        let settled = y[(onset_idx + 250)..].iter().map(|v| (v - 0.1).abs());
        let start_gap = (y[onset_idx - 1] - 0.1).abs();
        for gap in settled {
            assert!(gap < 0.01 * start_gap.max(1.0));
        }
    }

    #[test]
    fn fault_validation_rejects_bad_onsets() {
        let d = preset_rudder(25.0);
        let late = fault_at(FaultModel::StuckAtConstant { value: 0.0 }, 25.0);
        assert!(matches!(
            simulate(&d, Some(&late), 20.0, 1).unwrap_err(),
            CoreError::Config(_)
        ));
        let early = fault_at(FaultModel::StuckAtConstant { value: 0.0 }, 2.0);
        assert!(matches!(
            simulate(&d, Some(&early), 20.0, 1).unwrap_err(),
            CoreError::Config(_)
        ));
    }

    #[test]
    fn scenario_rejects_multiple_faults_and_duplicate_names() {
        let fault = Some(fault_at(FaultModel::StuckAtConstant { value: 0.0 }, 10.0));
        let mk = |name: &str, fault: Option<FaultSpec>| ScenarioChannel {
            name: name.into(),
            dynamics: preset_rudder(25.0),
            fault,
        };
        let scenario = Scenario {
            name: "two_faults".into(),
            category: "rudder".into(),
            duration_s: 20.0,
            seed: 1,
            channels: vec![mk("a", fault), mk("b", fault)],
        };
        assert!(matches!(
            scenario.validate().unwrap_err(),
            CoreError::Config(_)
        ));
        let scenario = Scenario {
            name: "dupes".into(),
            category: "rudder".into(),
            duration_s: 20.0,
            seed: 1,
            channels: vec![mk("a", None), mk("a", None)],
        };
        assert!(matches!(
            scenario.validate().unwrap_err(),
            CoreError::Config(_)
        ));
    }

    #[test]
    fn scenario_run_lays_out_columns_per_channel() {
        let scenario = Scenario {
            name: "pair".into(),
            category: "rudder_aileron".into(),
            duration_s: 20.0,
            seed: 3,
            channels: vec![
                ScenarioChannel {
                    name: "rudder".into(),
                    dynamics: preset_rudder(25.0),
                    fault: None,
                },
                ScenarioChannel {
                    name: "aileron".into(),
                    dynamics: preset_aileron(25.0),
                    fault: Some(fault_at(FaultModel::StuckAtConstant { value: 0.0 }, 10.0)),
                },
            ],
        };
        let run = simulate_scenario(&scenario).unwrap();
        assert_eq!(
            run.telemetry.schema.columns,
            vec!["rudder_cmd", "rudder_meas", "aileron_cmd", "aileron_meas"]
        );
        assert_eq!(run.telemetry.frames.len(), 500);
        let truth_fault = run.truth.fault.unwrap();
        assert_eq!(truth_fault.channel, "aileron");
        assert_eq!(truth_fault.kind, "stuck_at_constant");
        assert_eq!(truth_fault.onset_s, 10.0);
        let configs = scenario.detector_configs();
        assert_eq!(configs.len(), 2);
        assert_eq!(configs[0].input_field, "rudder_cmd");
        assert_eq!(configs[1].na, 2);
        assert_eq!(configs[1].nb, 1);
    }

    #[test]
    fn suite_mirrors_the_reference_counts() {
        let suite = scenario_suite(7);
        assert_eq!(suite.len(), 22);
        let mut by_category: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &suite {
            *by_category.entry(s.category.as_str()).or_default() += 1;
            s.validate().unwrap();
            let faults: Vec<_> = s.channels.iter().filter_map(|c| c.fault).collect();
            if s.category == "no_failure" {
                assert!(faults.is_empty(), "{}", s.name);
            } else {
                assert_eq!(faults.len(), 1, "{}", s.name);
                assert_eq!(faults[0].onset_s, SUITE_ONSET_S);
            }
        }
        let expected: BTreeMap<&str, usize> = [
            ("engine", 7),
            ("rudder", 3),
            ("elevator", 2),
            ("aileron", 4),
            ("rudder_aileron", 1),
            ("no_failure", 5),
        ]
        .into_iter()
        .collect();
        assert_eq!(by_category, expected);
        let mut names: Vec<&str> = suite.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 22, "scenario names must be unique");
        assert_eq!(scenario_suite(7), suite, "suite must be reproducible");
        assert_ne!(scenario_suite(8)[0].seed, suite[0].seed);
    }

    #[test]
    fn truth_sidecar_round_trips_through_toml() {
        let truth = GroundTruth {
            scenario: "engine_power_cut_1".into(),
            category: "engine".into(),
            rate_hz: 25.0,
            duration_s: 60.0,
            fault: Some(TruthFault {
                channel: "engine".into(),
                kind: "power_cut".into(),
                onset_s: 30.0,
            }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.toml");
        write_truth(&path, &truth).unwrap();
        assert_eq!(read_truth(&path).unwrap(), truth);

        let clean = GroundTruth {
            scenario: "no_failure_1".into(),
            category: "no_failure".into(),
            rate_hz: 25.0,
            duration_s: 60.0,
            fault: None,
        };
        let path = dir.path().join("clean.toml");
        write_truth(&path, &clean).unwrap();
        let loaded = read_truth(&path).unwrap();
        assert!(!loaded.is_faulty());
        assert_eq!(loaded, clean);
    }

    const SPEC_TEXT: &str = r#"
name = "bench"
duration_s = 40.0
seed = 9

[[channel]]
name = "servo"
a = [0.8]
b = [0.4, 0.1]
noise_sigma = 0.01
rate_hz = 25.0

[channel.fault]
onset_s = 20.0

[channel.fault.model]
kind = "stuck_at_constant"
value = 0.0
"#;

    fn write_spec(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let path = dir.path().join("spec.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn scenario_spec_file_builds_a_validated_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = read_scenario_spec(&write_spec(&dir, SPEC_TEXT)).unwrap();
        assert_eq!(scenario.name, "bench");
        assert_eq!(scenario.category, "custom");
        assert_eq!(scenario.seed, 9);
        assert_eq!(scenario.rate_hz(), 25.0);
        let ch = &scenario.channels[0];
        assert_eq!(ch.dynamics.order(), ArxOrder { na: 1, nb: 1 });
        // The omitted excitation falls back to the suite's input.
        assert_eq!(ch.dynamics.excitation(), &suite_excitation());
        assert!(matches!(
            ch.fault.as_ref().unwrap().model,
            FaultModel::StuckAtConstant { value } if value == 0.0
        ));
        let run = simulate_scenario(&scenario).unwrap();
        assert_eq!(run.telemetry.frames.len(), 1000);
        assert_eq!(run.truth.fault.as_ref().unwrap().onset_s, 20.0);
    }

    #[test]
    fn scenario_spec_rejects_bad_dynamics_onsets_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let unstable = SPEC_TEXT.replace("a = [0.8]", "a = [1.2]");
        assert!(matches!(
            read_scenario_spec(&write_spec(&dir, &unstable)).unwrap_err(),
            CoreError::UnstableDynamics { .. }
        ));

        let late_onset = SPEC_TEXT.replace("onset_s = 20.0", "onset_s = 45.0");
        let err = read_scenario_spec(&write_spec(&dir, &late_onset)).unwrap_err();
        assert!(matches!(err, CoreError::Config(_)), "got {err}");

        let typo = SPEC_TEXT.replace("noise_sigma", "noise_sgima");
        let err = read_scenario_spec(&write_spec(&dir, &typo)).unwrap_err();
        assert!(err.to_string().contains("noise_sgima"), "got {err}");
    }
}
