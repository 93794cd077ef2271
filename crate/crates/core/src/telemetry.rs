//! Telemetry ingestion and trace/event output.
//!
//! The canonical input is delimited text with a header row, one column
//! holding time in seconds and the remaining columns holding signal values.
//! Readers are single-pass and report malformed rows with their line number.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::detector::{ChannelConfig, DetectionEvent, Phase, TraceRow};
use crate::error::{CoreError, Result};

/// Column layout of a telemetry table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetrySchema {
    pub time_column: String,
    /// Signal columns, in file order, excluding the time column.
    pub columns: Vec<String>,
}

impl TelemetrySchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// One timestamped row of signal values, parallel to `TelemetrySchema::columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    pub t: f64,
    pub values: Vec<f64>,
}

/// A fully loaded telemetry table.
#[derive(Debug, Clone)]
pub struct Telemetry {
    pub schema: TelemetrySchema,
    pub frames: Vec<TelemetryFrame>,
}

impl Telemetry {
    pub fn duration_s(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) => last.t - first.t,
            _ => 0.0,
        }
    }
}

/// Output delimiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Tsv,
}

impl Format {
    fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "csv" => Ok(Format::Csv),
            "tsv" => Ok(Format::Tsv),
            other => Err(CoreError::Config(format!(
                "unknown format '{other}', expected csv or tsv"
            ))),
        }
    }
}

/// Streaming reader yielding frames in file order.
///
/// Enforces strictly increasing time and numeric cells; violations surface
/// as errors naming the offending line.
pub struct TelemetryReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    schema: TelemetrySchema,
    time_idx: usize,
    prev_t: Option<f64>,
    path: PathBuf,
}

impl TelemetryReader<File> {
    pub fn open(path: &Path, time_column: &str, format: Format) -> Result<Self> {
        let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_reader(file, time_column, format, path.to_path_buf())
    }
}

impl<R: Read> TelemetryReader<R> {
    pub fn from_reader(
        reader: R,
        time_column: &str,
        format: Format,
        path: PathBuf,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(format.delimiter())
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CoreError::Schema {
                path: path.clone(),
                message: format!("cannot read header row: {e}"),
            })?
            .clone();
        let mut time_idx = None;
        let mut columns = Vec::new();
        for (i, name) in headers.iter().enumerate() {
            if name == time_column {
                time_idx = Some(i);
            } else {
                columns.push(name.to_string());
            }
        }
        let time_idx = time_idx.ok_or_else(|| CoreError::Schema {
            path: path.clone(),
            message: format!("missing time column '{time_column}'"),
        })?;
        Ok(TelemetryReader {
            records: rdr.into_records(),
            schema: TelemetrySchema {
                time_column: time_column.to_string(),
                columns,
            },
            time_idx,
            prev_t: None,
            path,
        })
    }

    pub fn schema(&self) -> &TelemetrySchema {
        &self.schema
    }

    fn parse_record(&mut self, record: csv::StringRecord, line: u64) -> Result<TelemetryFrame> {
        let expected = self.schema.columns.len() + 1;
        if record.len() != expected {
            return Err(CoreError::Row {
                line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut t = 0.0;
        let mut values = Vec::with_capacity(self.schema.columns.len());
        for (i, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| CoreError::Row {
                line,
                message: format!(
                    "column '{}': not a number: '{cell}'",
                    header_name(&self.schema, self.time_idx, i)
                ),
            })?;
            if i == self.time_idx {
                t = value;
            } else {
                values.push(value);
            }
        }
        if !t.is_finite() {
            return Err(CoreError::Row {
                line,
                message: format!("time value is not finite: {t}"),
            });
        }
        if let Some(prev) = self.prev_t {
            if t <= prev {
                return Err(CoreError::Stream {
                    line,
                    message: format!("time must increase strictly: {prev} then {t}"),
                });
            }
        }
        self.prev_t = Some(t);
        Ok(TelemetryFrame { t, values })
    }
}

fn header_name(schema: &TelemetrySchema, time_idx: usize, field_idx: usize) -> &str {
    if field_idx == time_idx {
        &schema.time_column
    } else {
        let col = if field_idx < time_idx {
            field_idx
        } else {
            field_idx - 1
        };
        schema.columns.get(col).map(String::as_str).unwrap_or("?")
    }
}

impl<R: Read> Iterator for TelemetryReader<R> {
    type Item = Result<TelemetryFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = match self.records.next()? {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Some(Err(CoreError::Row {
                    line,
                    message: format!("unreadable row in {}: {e}", self.path.display()),
                }));
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        Some(self.parse_record(record, line))
    }
}

/// Loads a whole telemetry file into memory.
pub fn load_telemetry(path: &Path, time_column: &str) -> Result<Telemetry> {
    let format = format_for_path(path);
    let reader = TelemetryReader::open(path, time_column, format)?;
    let schema = reader.schema().clone();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok(Telemetry { schema, frames })
}

fn format_for_path(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => Format::Tsv,
        _ => Format::Csv,
    }
}

/// Sampling-rate health of a frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub nominal_period_s: f64,
    pub intervals: usize,
    pub violations: usize,
    pub min_period_s: f64,
    pub max_period_s: f64,
}

impl RateReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.intervals == 0 {
            0.0
        } else {
            self.violations as f64 / self.intervals as f64
        }
    }
}

/// Measures how many inter-sample periods deviate from the nominal period by
/// more than `tolerance` (a fraction of the period). Deviations are reported,
/// never fatal: the estimator tolerates small rate jitter.
pub fn check_rate(frames: &[TelemetryFrame], nominal_rate_hz: f64, tolerance: f64) -> RateReport {
    let nominal_period_s = 1.0 / nominal_rate_hz;
    let mut report = RateReport {
        nominal_period_s,
        intervals: 0,
        violations: 0,
        min_period_s: f64::INFINITY,
        max_period_s: 0.0,
    };
    for pair in frames.windows(2) {
        let period = pair[1].t - pair[0].t;
        report.intervals += 1;
        report.min_period_s = report.min_period_s.min(period);
        report.max_period_s = report.max_period_s.max(period);
        if (period - nominal_period_s).abs() > tolerance * nominal_period_s {
            report.violations += 1;
        }
    }
    if report.intervals == 0 {
        report.min_period_s = 0.0;
    }
    report
}

/// Resolved column positions for one configured channel.
#[derive(Debug, Clone, Copy)]
pub struct ChannelBinding {
    pub u_idx: usize,
    pub y_idx: usize,
    pub derived: bool,
}

impl ChannelBinding {
    /// Extracts the (input, output) pair. With `derived` set the output is
    /// the measured-minus-commanded error signal.
    pub fn sample(&self, frame: &TelemetryFrame) -> (f64, f64) {
        let u = frame.values[self.u_idx];
        let y = frame.values[self.y_idx];
        if self.derived {
            (u, y - u)
        } else {
            (u, y)
        }
    }
}

/// Resolves a channel's configured column names against a schema.
pub fn bind_channel(
    schema: &TelemetrySchema,
    cfg: &ChannelConfig,
    path: &Path,
) -> Result<ChannelBinding> {
    let u_idx = schema
        .column_index(&cfg.input_field)
        .ok_or_else(|| CoreError::Schema {
            path: path.to_path_buf(),
            message: format!(
                "channel '{}': missing input column '{}'",
                cfg.name, cfg.input_field
            ),
        })?;
    let y_idx = schema
        .column_index(&cfg.output_field)
        .ok_or_else(|| CoreError::Schema {
            path: path.to_path_buf(),
            message: format!(
                "channel '{}': missing output column '{}'",
                cfg.name, cfg.output_field
            ),
        })?;
    Ok(ChannelBinding {
        u_idx,
        y_idx,
        derived: cfg.derived_output,
    })
}

/// One-off extraction of a channel sample from a frame.
pub fn derive_channel(
    schema: &TelemetrySchema,
    frame: &TelemetryFrame,
    cfg: &ChannelConfig,
) -> Result<(f64, f64)> {
    let binding = bind_channel(schema, cfg, Path::new("<frame>"))?;
    Ok(binding.sample(frame))
}

/// Writes a file via a sibling temp file plus rename, so readers never see
/// a half-written file.
pub fn atomic_write<F>(path: &Path, write_body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match parent {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new(),
    }
    .map_err(|e| CoreError::io(path, e))?;
    write_body(tmp.as_file_mut()).map_err(|e| CoreError::io(path, e))?;
    tmp.as_file_mut()
        .flush()
        .map_err(|e| CoreError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| CoreError::io(path, e.error))?;
    Ok(())
}

fn delim(format: Format) -> char {
    format.delimiter() as char
}

/// Writes a telemetry table; time column first, then signal columns in order.
pub fn write_telemetry(path: &Path, telemetry: &Telemetry, format: Format) -> Result<()> {
    let d = delim(format);
    atomic_write(path, |w| {
        write!(w, "{}", telemetry.schema.time_column)?;
        for col in &telemetry.schema.columns {
            write!(w, "{d}{col}")?;
        }
        writeln!(w)?;
        for frame in &telemetry.frames {
            write!(w, "{}", frame.t)?;
            for v in &frame.values {
                write!(w, "{d}{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Trace column order: `t, u, y, y_hat, err, sigma, z, phase`.
pub const TRACE_COLUMNS: [&str; 8] = ["t", "u", "y", "y_hat", "err", "sigma", "z", "phase"];

/// Writes per-sample trace rows for plotting and offline analysis.
///
/// `sigma` and `z` are written as 0 on rows where the error statistics are
/// not yet defined; the `phase` column (0 warmup, 1 model-stable, 2 armed,
/// 3 anomaly) tells those rows apart.
pub fn write_trace(path: &Path, rows: &[TraceRow], format: Format) -> Result<()> {
    let d = delim(format);
    atomic_write(path, |w| {
        writeln!(w, "{}", TRACE_COLUMNS.join(&d.to_string()))?;
        for r in rows {
            writeln!(
                w,
                "{}{d}{}{d}{}{d}{}{d}{}{d}{}{d}{}{d}{}",
                r.t,
                r.u,
                r.y,
                r.y_hat,
                r.err,
                r.sigma,
                r.z,
                r.phase.index()
            )?;
        }
        Ok(())
    })
}

/// Writes detection events as `t, channel, z, err`.
pub fn write_events(path: &Path, events: &[DetectionEvent], format: Format) -> Result<()> {
    let d = delim(format);
    atomic_write(path, |w| {
        writeln!(w, "t{d}channel{d}z{d}err")?;
        for e in events {
            writeln!(w, "{}{d}{}{d}{}{d}{}", e.t, e.channel, e.z, e.error)?;
        }
        Ok(())
    })
}

/// Reads an events file written by [`write_events`].
pub fn read_events(path: &Path) -> Result<Vec<DetectionEvent>> {
    let format = format_for_path(path);
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| CoreError::Schema {
            path: path.to_path_buf(),
            message: format!("cannot read header row: {e}"),
        })?
        .clone();
    let idx = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CoreError::Schema {
                path: path.to_path_buf(),
                message: format!("missing column '{name}'"),
            })
    };
    let (ti, ci, zi, ei) = (idx("t")?, idx("channel")?, idx("z")?, idx("err")?);
    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CoreError::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: format!("unreadable row: {e}"),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize, what: &str| -> Result<f64> {
            record
                .get(i)
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| CoreError::Row {
                    line,
                    message: format!("column '{what}': not a number"),
                })
        };
        events.push(DetectionEvent {
            t: num(ti, "t")?,
            channel: record.get(ci).unwrap_or("").to_string(),
            z: num(zi, "z")?,
            error: num(ei, "err")?,
            phase: Phase::Anomaly,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::ChannelConfig;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn loads_well_formed_file() {
        let f = write_tmp("t,u,y\n0.0,1.0,2.0\n0.04,1.5,2.5\n0.08,2.0,3.0\n");
        let telemetry = load_telemetry(f.path(), "t").unwrap();
        assert_eq!(telemetry.schema.columns, vec!["u", "y"]);
        assert_eq!(telemetry.frames.len(), 3);
        assert_eq!(telemetry.frames[1].t, 0.04);
        assert_eq!(telemetry.frames[2].values, vec![2.0, 3.0]);
    }

    #[test]
    fn shuffled_time_column_names_first_offending_line() {
        let f = write_tmp("t,u\n0.0,1.0\n0.08,1.0\n0.04,1.0\n");
        let err = load_telemetry(f.path(), "t").unwrap_err();
        match err {
            CoreError::Stream { line, .. } => assert_eq!(line, 4),
            other => panic!("expected stream error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_line_and_column() {
        let f = write_tmp("t,u\n0.0,1.0\n0.04,oops\n");
        let err = load_telemetry(f.path(), "t").unwrap_err();
        match err {
            CoreError::Row { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("'u'"), "message: {message}");
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_time_column_is_schema_error() {
        let f = write_tmp("time,u\n0.0,1.0\n");
        let err = load_telemetry(f.path(), "t").unwrap_err();
        assert!(matches!(err, CoreError::Schema { .. }));
    }

    #[test]
    fn telemetry_round_trip_preserves_values_exactly() {
        let schema = TelemetrySchema {
            time_column: "t".into(),
            columns: vec!["u".into(), "y".into()],
        };
        let frames: Vec<TelemetryFrame> = (0..100)
            .map(|k| TelemetryFrame {
                t: k as f64 * 0.04,
                values: vec![(k as f64 * 0.7).sin(), 1.0 / (k as f64 + 3.0)],
            })
            .collect();
        let telemetry = Telemetry { schema, frames };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.csv");
        write_telemetry(&path, &telemetry, Format::Csv).unwrap();
        let loaded = load_telemetry(&path, "t").unwrap();
        assert_eq!(loaded.schema, telemetry.schema);
        assert_eq!(loaded.frames.len(), telemetry.frames.len());
        for (a, b) in loaded.frames.iter().zip(&telemetry.frames) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    fn frames_at(times: &[f64]) -> Vec<TelemetryFrame> {
        times
            .iter()
            .map(|&t| TelemetryFrame { t, values: vec![] })
            .collect()
    }

    #[test]
    fn exact_rate_has_no_violations() {
        let times: Vec<f64> = (0..1000).map(|k| k as f64 / 25.0).collect();
        let report = check_rate(&frames_at(&times), 25.0, 0.2);
        assert_eq!(report.intervals, 999);
        assert_eq!(report.violations, 0);
        assert_eq!(report.violation_fraction(), 0.0);
    }

    #[test]
    fn dropped_frame_is_flagged_once() {
        let mut times: Vec<f64> = (0..1000).map(|k| k as f64 / 25.0).collect();
        times.remove(500);
        let report = check_rate(&frames_at(&times), 25.0, 0.2);
        assert_eq!(report.violations, 1);
    }

    #[test]
    fn jitter_within_tolerance_passes() {
        // +-10% jitter alternating, checked at 20% tolerance.
        let mut times = Vec::new();
        let mut t = 0.0;
        for k in 0..1000 {
            times.push(t);
            let jitter = if k % 2 == 0 { 1.1 } else { 0.9 };
            t += jitter / 25.0;
        }
        let report = check_rate(&frames_at(&times), 25.0, 0.2);
        assert_eq!(report.violations, 0);
    }

    fn channel_cfg(derived: bool) -> ChannelConfig {
        let mut cfg = ChannelConfig::new("roll", "roll_cmd", "roll_meas");
        cfg.derived_output = derived;
        cfg
    }

    #[test]
    fn derive_channel_plain_and_error_signal() {
        let schema = TelemetrySchema {
            time_column: "t".into(),
            columns: vec!["roll_cmd".into(), "roll_meas".into()],
        };
        let frame = TelemetryFrame {
            t: 0.0,
            values: vec![0.2, 0.25],
        };
        let (u, y) = derive_channel(&schema, &frame, &channel_cfg(true)).unwrap();
        assert_eq!(u, 0.2);
        assert!((y - 0.05).abs() < 1e-15);
        let (_, y) = derive_channel(&schema, &frame, &channel_cfg(false)).unwrap();
        assert_eq!(y, 0.25);
    }

    #[test]
    fn missing_channel_column_is_schema_error() {
        let schema = TelemetrySchema {
            time_column: "t".into(),
            columns: vec!["roll_cmd".into()],
        };
        let frame = TelemetryFrame {
            t: 0.0,
            values: vec![0.2],
        };
        let err = derive_channel(&schema, &frame, &channel_cfg(false)).unwrap_err();
        match err {
            CoreError::Schema { message, .. } => {
                assert!(message.contains("roll_meas"), "message: {message}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn empty_event_stream_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        write_events(&path, &[], Format::Csv).unwrap();
        let contents = std::fs::read_to_string(&path).unwrap();
        assert_eq!(contents, "t,channel,z,err\n");
        assert!(read_events(&path).unwrap().is_empty());
    }

    #[test]
    fn events_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let events = vec![DetectionEvent {
            channel: "roll".into(),
            t: 31.96,
            z: 7.25,
            error: 0.31,
            phase: Phase::Anomaly,
        }];
        write_events(&path, &events, Format::Csv).unwrap();
        let loaded = read_events(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].channel, "roll");
        assert_eq!(loaded[0].t, 31.96);
        assert_eq!(loaded[0].z, 7.25);
        assert_eq!(loaded[0].error, 0.31);
    }
}
