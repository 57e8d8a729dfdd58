//! CSV traces and reports.
//!
//! Floats are written with `{:e}`, which is the shortest representation that
//! parses back to the same bits, so a reload reproduces every value exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::metrics::MetricReport;
use crate::harness::sim::{EpisodeTrace, StepRecord};

/// Flat numeric view of a trace: one column per scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

// same order as `vector_fields`
const VECTOR_COLUMNS: [&str; 11] = ["q", "qdot", "xhat", "xtilde", "y", "y_tilde", "a", "delta", "r", "u_nom", "u"];

fn vector_fields(r: &StepRecord) -> [&nalgebra::DVector<f64>; 11] {
    [
        &r.q, &r.qdot, &r.xhat, &r.xtilde, &r.y, &r.y_tilde, &r.a, &r.delta, &r.r, &r.u_nom, &r.u,
    ]
}

pub fn trace_header(joints: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    for name in VECTOR_COLUMNS {
        let len = match name {
            "xhat" | "xtilde" => 2 * joints,
            _ => joints,
        };
        h.extend((0..len).map(|i| format!("{name}_{i}")));
    }
    for s in [
        "z", "w", "z_tilde", "f", "p_x", "p_y", "p_bar_x", "p_bar_y", "p_bar_a_x", "p_bar_a_y", "alarm",
        "jacobian_cond", "attack_budget_used", "richardson", "attack_fallback",
    ] {
        h.push(s.to_string());
    }
    h
}

impl TraceTable {
    pub fn from_trace(trace: &EpisodeTrace, joints: usize) -> Self {
        let header = trace_header(joints);
        let rows = trace
            .rows
            .iter()
            .map(|r| {
                let mut row = Vec::with_capacity(header.len());
                row.push(r.k as f64);
                for v in vector_fields(r) {
                    row.extend(v.iter().copied());
                }
                row.extend([
                    r.z,
                    r.w,
                    r.z_tilde,
                    r.f,
                    r.p.x,
                    r.p.y,
                    r.p_bar.x,
                    r.p_bar.y,
                    r.p_bar_a.x,
                    r.p_bar_a.y,
                    f64::from(u8::from(r.alarm)),
                    r.jacobian_cond,
                    r.attack_budget_used,
                    r.richardson,
                    f64::from(u8::from(r.attack_fallback)),
                ]);
                row
            })
            .collect();
        Self { header, rows }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Bitwise equality, treating NaNs with equal payloads as equal.
    pub fn bit_equal(&self, other: &Self) -> bool {
        self.header == other.header
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Config(format!("{}: row {}: bad number {s:?}: {e}", path.display(), i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

pub fn export_trace_csv(trace: &EpisodeTrace, joints: usize, path: &Path) -> Result<()> {
    TraceTable::from_trace(trace, joints).write_csv(path)
}

pub const REPORT_HEADER: [&str; 14] = [
    "mode",
    "seed",
    "window_start",
    "window_end",
    "devmax_nominal",
    "devrms_nominal",
    "devmax_attack",
    "devrms_attack",
    "mean_effort",
    "alarm_count",
    "max_w_ratio",
    "f_min",
    "f_mean",
    "steps",
];

/// One row per report.
pub fn export_reports_csv(reports: &[MetricReport], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for m in reports {
        w.write_record([
            m.mode.label().to_string(),
            m.seed.to_string(),
            m.window_start.to_string(),
            m.window_end.to_string(),
            format!("{:e}", m.devmax_nominal),
            format!("{:e}", m.devrms_nominal),
            format!("{:e}", m.devmax_attack),
            format!("{:e}", m.devrms_attack),
            format!("{:e}", m.mean_effort),
            m.alarm_count.to_string(),
            format!("{:e}", m.max_w_ratio),
            format!("{:e}", m.f_min),
            format!("{:e}", m.f_mean),
            (m.window_end - m.window_start).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
