//! Scoring detection runs against ground truth.
//!
//! Classification is per sequence, not per sample: a faulty sequence counts
//! as detected if any channel fires at or after the fault onset. A firing
//! before onset is a premature detection, which is double-counted as both a
//! false positive (the alarm was wrong when it fired) and a false negative
//! (the actual fault went unreported).

use std::collections::BTreeMap;
use std::path::Path;

use crate::detector::DetectionEvent;
use crate::error::Result;
use crate::simulator::GroundTruth;
use crate::telemetry::atomic_write;

/// Per-sequence outcome of comparing events against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceVerdict {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
    /// Fired before the fault existed; counts as both FP and FN.
    PrematureDetection,
}

impl SequenceVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceVerdict::TruePositive => "true_positive",
            SequenceVerdict::FalsePositive => "false_positive",
            SequenceVerdict::FalseNegative => "false_negative",
            SequenceVerdict::TrueNegative => "true_negative",
            SequenceVerdict::PrematureDetection => "premature_detection",
        }
    }
}

/// One scored sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub scenario: String,
    pub category: String,
    pub duration_s: f64,
    pub verdict: SequenceVerdict,
    /// Time of the earliest event, if any fired.
    pub first_event_t: Option<f64>,
    /// Seconds from fault onset to the first event; present only for true
    /// positives.
    pub detection_time_s: Option<f64>,
}

/// Scores one sequence. The earliest event across all channels decides.
pub fn classify(truth: &GroundTruth, events: &[DetectionEvent]) -> SequenceOutcome {
    let first_event_t = events
        .iter()
        .map(|e| e.t)
        .fold(None, |acc: Option<f64>, t| {
            Some(acc.map_or(t, |a| a.min(t)))
        });
    let (verdict, detection_time_s) = match (&truth.fault, first_event_t) {
        (None, None) => (SequenceVerdict::TrueNegative, None),
        (None, Some(_)) => (SequenceVerdict::FalsePositive, None),
        (Some(_), None) => (SequenceVerdict::FalseNegative, None),
        (Some(fault), Some(t)) => {
            if t < fault.onset_s {
                (SequenceVerdict::PrematureDetection, None)
            } else {
                (SequenceVerdict::TruePositive, Some(t - fault.onset_s))
            }
        }
    };
    SequenceOutcome {
        scenario: truth.scenario.clone(),
        category: truth.category.clone(),
        duration_s: truth.duration_s,
        verdict,
        first_event_t,
        detection_time_s,
    }
}

/// Confusion counts over a set of sequences. `sequences` is the number of
/// sequences scored; premature detections add to both error counts, so the
/// four cells can sum past it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricCounts {
    pub sequences: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl MetricCounts {
    pub fn add(&mut self, verdict: SequenceVerdict) {
        self.sequences += 1;
        match verdict {
            SequenceVerdict::TruePositive => self.true_positives += 1,
            SequenceVerdict::FalsePositive => self.false_positives += 1,
            SequenceVerdict::FalseNegative => self.false_negatives += 1,
            SequenceVerdict::TrueNegative => self.true_negatives += 1,
            SequenceVerdict::PrematureDetection => {
                self.false_positives += 1;
                self.false_negatives += 1;
            }
        }
    }

    /// TP / (TP + FP); undefined when nothing fired.
    pub fn precision(&self) -> Option<f64> {
        ratio(
            self.true_positives,
            self.true_positives + self.false_positives,
        )
    }

    /// TP / (TP + FN); undefined without faulty sequences.
    pub fn recall(&self) -> Option<f64> {
        ratio(
            self.true_positives,
            self.true_positives + self.false_negatives,
        )
    }

    /// (TP + TN) / sequences. The denominator is the sequence count, so a
    /// premature detection subtracts once even though it sits in two cells.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.true_positives + self.true_negatives, self.sequences)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Formats a ratio as a percentage truncated (never rounded) to two
/// decimals; `None` renders as `-`. Truncation keeps a score just under the
/// next hundredth from being overstated.
pub fn percent_truncated(ratio: Option<f64>) -> String {
    match ratio {
        None => "-".into(),
        Some(r) => {
            let t = (r * 10000.0).floor() / 100.0;
            format!("{t:.2}")
        }
    }
}

/// Aggregates for one category of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySummary {
    pub category: String,
    pub counts: MetricCounts,
    pub total_duration_s: f64,
    pub detections: usize,
    pub avg_detection_time_s: Option<f64>,
    pub max_detection_time_s: Option<f64>,
}

impl CategorySummary {
    fn new(category: &str) -> Self {
        CategorySummary {
            category: category.into(),
            counts: MetricCounts::default(),
            total_duration_s: 0.0,
            detections: 0,
            avg_detection_time_s: None,
            max_detection_time_s: None,
        }
    }

    fn absorb(&mut self, outcome: &SequenceOutcome) {
        self.counts.add(outcome.verdict);
        self.total_duration_s += outcome.duration_s;
        if let Some(dt) = outcome.detection_time_s {
            self.detections += 1;
            let sum = self.avg_detection_time_s.unwrap_or(0.0) * (self.detections - 1) as f64;
            self.avg_detection_time_s = Some((sum + dt) / self.detections as f64);
            self.max_detection_time_s = Some(self.max_detection_time_s.map_or(dt, |m| m.max(dt)));
        }
    }
}

/// Full evaluation result: per-category rows plus the overall row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSummary {
    pub categories: Vec<CategorySummary>,
    pub overall: CategorySummary,
}

/// Fixed ordering for the known categories; anything else follows
/// alphabetically.
const CATEGORY_ORDER: [&str; 6] = [
    "engine",
    "rudder",
    "elevator",
    "aileron",
    "rudder_aileron",
    "no_failure",
];

fn category_rank(name: &str) -> (usize, &str) {
    let rank = CATEGORY_ORDER
        .iter()
        .position(|c| *c == name)
        .unwrap_or(CATEGORY_ORDER.len());
    (rank, name)
}

/// Groups outcomes by category and computes the overall row.
pub fn summarize(outcomes: &[SequenceOutcome]) -> EvaluationSummary {
    let mut by_category: BTreeMap<(usize, &str), CategorySummary> = BTreeMap::new();
    let mut overall = CategorySummary::new("total");
    for outcome in outcomes {
        by_category
            .entry(category_rank(&outcome.category))
            .or_insert_with(|| CategorySummary::new(&outcome.category))
            .absorb(outcome);
        overall.absorb(outcome);
    }
    EvaluationSummary {
        categories: by_category.into_values().collect(),
        overall,
    }
}

fn time_cell(value: Option<f64>) -> String {
    match value {
        None => "-".into(),
        Some(v) => format!("{v:.2}"),
    }
}

/// Renders the human-readable report: one row per category, a total row,
/// confusion counts, and the three headline percentages.
pub fn render_report(summary: &EvaluationSummary) -> String {
    let mut out = String::new();
    let header = format!(
        "{:<16} {:>9} {:>10} {:>9} {:>14} {:>14}\n",
        "category", "sequences", "total_s", "detected", "avg_detect_s", "max_detect_s"
    );
    out.push_str(&header);
    let row = |s: &CategorySummary| {
        format!(
            "{:<16} {:>9} {:>10.1} {:>9} {:>14} {:>14}\n",
            s.category,
            s.counts.sequences,
            s.total_duration_s,
            s.detections,
            time_cell(s.avg_detection_time_s),
            time_cell(s.max_detection_time_s),
        )
    };
    for category in &summary.categories {
        out.push_str(&row(category));
    }
    out.push_str(&row(&summary.overall));
    let counts = &summary.overall.counts;
    out.push('\n');
    out.push_str(&format!("true positives:  {}\n", counts.true_positives));
    out.push_str(&format!("false positives: {}\n", counts.false_positives));
    out.push_str(&format!("false negatives: {}\n", counts.false_negatives));
    out.push_str(&format!("true negatives:  {}\n", counts.true_negatives));
    out.push('\n');
    out.push_str(&format!(
        "precision: {}%\n",
        percent_truncated(counts.precision())
    ));
    out.push_str(&format!(
        "recall:    {}%\n",
        percent_truncated(counts.recall())
    ));
    out.push_str(&format!(
        "accuracy:  {}%\n",
        percent_truncated(counts.accuracy())
    ));
    out
}

/// Writes the rendered report.
pub fn write_report(path: &Path, summary: &EvaluationSummary) -> Result<()> {
    let body = render_report(summary);
    atomic_write(path, |w| w.write_all(body.as_bytes()))
}

/// Writes per-sequence outcomes as CSV. Optional cells are left empty.
pub fn write_outcomes(path: &Path, outcomes: &[SequenceOutcome]) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(
            w,
            "scenario,category,verdict,first_event_t,detection_time_s"
        )?;
        for o in outcomes {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                o.scenario,
                o.category,
                o.verdict.as_str(),
                opt(o.first_event_t),
                opt(o.detection_time_s)
            )?;
        }
        Ok(())
    })
}
