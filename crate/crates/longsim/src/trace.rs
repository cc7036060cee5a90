//! Per-frame run traces: schema, CSV persistence, and parsing for replay.
//!
//! One row per control frame (plus a final off-grid row at the instant of
//! impact when a run ends in collision). Floats are written in shortest
//! round-trip form, so a parsed trace reproduces the in-memory values
//! bit-exactly and every metric can be recomputed from the file alone.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::control::CommandSource;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace schema version {found} is not supported (expected {TRACE_SCHEMA_VERSION})")]
    SchemaMismatch { found: String },
    #[error("missing trace header line")]
    MissingHeader,
    #[error("malformed trace header: {0}")]
    BadHeader(String),
    #[error("trace is truncated: fewer than two rows")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Run-level context a trace carries so metrics can be recomputed from the
/// file with no other inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub schema_version: u32,
    pub family: String,
    pub seed: u64,
    pub condition: String,
    /// Planned run horizon, s.
    pub horizon: f64,
    /// Control frame period, s.
    pub control_dt: f64,
    /// AEB trigger threshold used by the run, s.
    pub ttc_threshold: f64,
    /// Reference distance for the travel-time metric, m.
    pub d_ref: f64,
}

/// One control frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub s_front: f64,
    pub v: f64,
    /// Realized acceleration at the frame time, m/s^2.
    pub a_realized: f64,
    /// Command issued at the frame (post-safeguards), m/s^2.
    pub a_cmd: f64,
    pub source: CommandSource,
    pub eb_active: bool,
    /// Ground truth of the nearest in-lane forward object, if any.
    pub truth_gap: Option<f64>,
    pub truth_vrel: Option<f64>,
    /// Primary track state, if any.
    pub perceived_gap: Option<f64>,
    pub track_vrel: Option<f64>,
    pub track_id: Option<u64>,
    pub track_age: Option<u32>,
    /// Perception-instability fraction at this frame.
    pub instability: f64,
    /// Ground-truth follower time headway, s (MultiVehicle only).
    pub follower_headway: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    /// Frames on the regular control grid. Drops the trailing impact row
    /// when the run ended mid-frame, so series metrics see uniform spacing.
    pub fn uniform_rows(&self) -> &[TraceRow] {
        let n = self.rows.len();
        if n >= 2 {
            let dt = self.rows[n - 1].t - self.rows[n - 2].t;
            if (dt - self.meta.control_dt).abs() > 1e-9 {
                return &self.rows[..n - 1];
            }
        }
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        writeln!(
            w,
            "# longsim-trace v{} family={} seed={} condition={} horizon={} control_dt={} ttc_threshold={} d_ref={}",
            self.meta.schema_version,
            self.meta.family,
            self.meta.seed,
            self.meta.condition,
            self.meta.horizon,
            self.meta.control_dt,
            self.meta.ttc_threshold,
            self.meta.d_ref
        )?;
        let mut csv = csv::Writer::from_writer(w);
        for row in &self.rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<RunTrace, TraceError> {
        let mut reader = BufReader::new(r);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let meta = parse_header(header.trim_end())?;
        let mut csv = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for row in csv.deserialize() {
            rows.push(row?);
        }
        if rows.len() < 2 {
            return Err(TraceError::Truncated);
        }
        Ok(RunTrace { meta, rows })
    }

    pub fn load(path: &Path) -> Result<RunTrace, TraceError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }
}

fn parse_header(line: &str) -> Result<TraceMeta, TraceError> {
    let rest = line
        .strip_prefix("# longsim-trace v")
        .ok_or(TraceError::MissingHeader)?;
    let mut parts = rest.split_whitespace();
    let version_str = parts.next().ok_or(TraceError::MissingHeader)?;
    let version: u32 = version_str
        .parse()
        .map_err(|_| TraceError::SchemaMismatch {
            found: version_str.to_string(),
        })?;
    if version != TRACE_SCHEMA_VERSION {
        return Err(TraceError::SchemaMismatch {
            found: version_str.to_string(),
        });
    }
    let mut meta = TraceMeta {
        schema_version: version,
        family: String::new(),
        seed: 0,
        condition: String::new(),
        horizon: 0.0,
        control_dt: 0.1,
        ttc_threshold: 1.2,
        d_ref: 0.0,
    };
    for kv in parts {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| TraceError::BadHeader(kv.to_string()))?;
        let bad = || TraceError::BadHeader(kv.to_string());
        match key {
            "family" => meta.family = value.to_string(),
            "seed" => meta.seed = value.parse().map_err(|_| bad())?,
            "condition" => meta.condition = value.to_string(),
            "horizon" => meta.horizon = value.parse().map_err(|_| bad())?,
            "control_dt" => meta.control_dt = value.parse().map_err(|_| bad())?,
            "ttc_threshold" => meta.ttc_threshold = value.parse().map_err(|_| bad())?,
            "d_ref" => meta.d_ref = value.parse().map_err(|_| bad())?,
            _ => {} // forward compatible: ignore unknown keys
        }
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace() -> RunTrace {
        let meta = TraceMeta {
            schema_version: TRACE_SCHEMA_VERSION,
            family: "highway_following".into(),
            seed: 42,
            condition: "baseline".into(),
            horizon: 40.0,
            control_dt: 0.1,
            ttc_threshold: 1.2,
            d_ref: 600.0,
        };
        let rows = (0..5)
            .map(|k| TraceRow {
                t: k as f64 * 0.1,
                s_front: 3.0 * k as f64,
                v: 30.0 + 0.017 * k as f64,
                a_realized: -0.123456789012345 * k as f64,
                a_cmd: -0.2 * k as f64,
                source: CommandSource::Acc,
                eb_active: false,
                truth_gap: Some(50.0 - k as f64),
                truth_vrel: Some(1.5),
                perceived_gap: if k == 0 { None } else { Some(50.1 - k as f64) },
                track_vrel: if k == 0 { None } else { Some(1.4) },
                track_id: if k == 0 { None } else { Some(1) },
                track_age: if k == 0 { None } else { Some(k as u32) },
                instability: 0.0,
                follower_headway: None,
            })
            .collect();
        RunTrace { meta, rows }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let parsed = RunTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn schema_mismatch_is_versioned_error() {
        let mut buf = Vec::new();
        sample_trace().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("longsim-trace v1", "longsim-trace v9");
        match RunTrace::read_csv(text.as_bytes()) {
            Err(TraceError::SchemaMismatch { found }) => assert_eq!(found, "9"),
            other => panic!("expected schema mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_trace_is_rejected() {
        let mut trace = sample_trace();
        trace.rows.truncate(1);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert!(matches!(
            RunTrace::read_csv(buf.as_slice()),
            Err(TraceError::Truncated)
        ));
    }

    #[test]
    fn uniform_rows_drop_impact_tail() {
        let mut trace = sample_trace();
        let mut last = *trace.rows.last().unwrap();
        last.t += 0.034; // off-grid impact instant
        trace.rows.push(last);
        assert_eq!(trace.uniform_rows().len(), trace.rows.len() - 1);
    }
}
