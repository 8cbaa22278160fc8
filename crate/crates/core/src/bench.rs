//! Latency statistics and memory reports, plus their JSON/CSV renderings.
//!
//! Standard deviation is the population form (divide by n).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::ledger::MemoryAccounting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("statistics need at least one sample")]
pub struct EmptySamples;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    pub sd: f64,
}

/// Single pass (Welford) summary.
pub fn stats(samples: &[f64]) -> Result<Stats, EmptySamples> {
    let (&first, rest) = samples.split_first().ok_or(EmptySamples)?;
    let (mut min, mut max, mut mean, mut m2) = (first, first, first, 0.0);
    for (i, &x) in rest.iter().enumerate() {
        let n = (i + 2) as f64;
        min = min.min(x);
        max = max.max(x);
        let delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    let n = samples.len();
    Ok(Stats {
        n,
        min,
        max,
        avg: mean,
        sd: (m2 / n as f64).max(0.0).sqrt(),
    })
}

impl Stats {
    /// `N, Min, Max, Avg., SD` with two decimals.
    pub fn row(&self) -> [String; 5] {
        [
            self.n.to_string(),
            format!("{:.2}", self.min),
            format!("{:.2}", self.max),
            format!("{:.2}", self.avg),
            format!("{:.2}", self.sd),
        ]
    }
}

pub const LATENCY_CSV_HEADER: &str = "Scenario,N,Min,Max,Avg.,SD";
pub const MEMORY_CSV_HEADER: &str =
    "initial_bytes,post_start_bytes,delta_bytes,per_block_bytes,blocks";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub scenario: String,
    pub n: usize,
    pub min_ms: f64,
    pub max_ms: f64,
    pub avg_ms: f64,
    pub sd_ms: f64,
    pub sd_kind: &'static str,
    pub samples: Vec<f64>,
}

impl LatencyReport {
    pub fn new(scenario: impl Into<String>, samples: Vec<f64>) -> Result<Self, EmptySamples> {
        let s = stats(&samples)?;
        Ok(LatencyReport {
            scenario: scenario.into(),
            n: s.n,
            min_ms: s.min,
            max_ms: s.max,
            avg_ms: s.avg,
            sd_ms: s.sd,
            sd_kind: "population",
            samples,
        })
    }

    pub fn stats(&self) -> Stats {
        Stats {
            n: self.n,
            min: self.min_ms,
            max: self.max_ms,
            avg: self.avg_ms,
            sd: self.sd_ms,
        }
    }

    pub fn to_csv(&self) -> String {
        let [n, min, max, avg, sd] = self.stats().row();
        format!("{LATENCY_CSV_HEADER}\n{},{n},{min},{max},{avg},{sd}\n", self.scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryReport {
    pub initial_bytes: u64,
    pub post_start_bytes: u64,
    pub delta_bytes: i64,
    pub per_block_bytes: u64,
    pub blocks: u64,
}

impl MemoryReport {
    /// Accounting before and after a node's chain was brought up.
    pub fn between(initial: &MemoryAccounting, after: &MemoryAccounting) -> Self {
        let total = |m: &MemoryAccounting| m.index_bytes + m.state_bytes;
        MemoryReport {
            initial_bytes: total(initial),
            post_start_bytes: total(after),
            delta_bytes: total(after) as i64 - total(initial) as i64,
            per_block_bytes: after.per_block_bytes,
            blocks: after.blocks,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{MEMORY_CSV_HEADER}\n{},{},{},{},{}\n",
            self.initial_bytes, self.post_start_bytes, self.delta_bytes, self.per_block_bytes, self.blocks
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }
}

/// Plain-text table of latency rows in `N, Min, Max, Avg., SD` order.
pub fn latency_table(reports: &[LatencyReport]) -> String {
    let headers = ["Scenario", "N", "Min", "Max", "Avg.", "SD"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.scenario.clone()];
            row.extend(r.stats().row());
            row
        })
        .collect();
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([headers[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  "));
    };
    line(headers.to_vec(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Writes `<scenario>-latency.{json,csv}` and `memory.{json,csv}` into
/// `dir`, returning the paths written.
pub fn write_reports(
    dir: &Path,
    latency: &LatencyReport,
    memory: &MemoryReport,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        (format!("{}-latency.json", latency.scenario), latency.to_json()),
        (format!("{}-latency.csv", latency.scenario), latency.to_csv()),
        ("memory.json".to_owned(), memory.to_json()),
        ("memory.csv".to_owned(), memory.to_csv()),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample() {
        let s = stats(&[42.5]).unwrap();
        assert_eq!((s.min, s.max, s.avg, s.sd), (42.5, 42.5, 42.5, 0.0));
    }

    #[test]
    fn constant_samples_have_zero_sd() {
        assert_eq!(stats(&[7.0; 20]).unwrap().sd, 0.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(stats(&[]), Err(EmptySamples));
    }

    #[test]
    fn csv_columns_follow_table_order() {
        let r = LatencyReport::new("S1", vec![85.0, 159.5, 120.0]).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(LATENCY_CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("S1,3,85.00,159.50,"));
    }

    #[test]
    fn table_has_header_and_rows() {
        let r = LatencyReport::new("S2", vec![80.0, 150.0]).unwrap();
        let t = latency_table(&[r]);
        assert!(t.lines().next().unwrap().contains("Avg."));
        assert!(t.contains("115.00"));
    }
}
