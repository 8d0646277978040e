//! File layout and serialization helpers.
//!
//! Payload files (CSV tables, summary.json, path dumps) are deterministic
//! functions of the configuration and seed. Anything environment-dependent
//! (wall-clock time, binary version) is quarantined to metadata.json so
//! payload bytes can be compared across runs.

use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub fn ensure_dir(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)
}

/// Formats a time for a file name: shortest round-trip decimal, so 20.0
/// becomes "20" and 2.5 stays "2.5".
pub fn fmt_time(t: f64) -> String {
    format!("{t}")
}

pub fn field_file(dir: &Path, t: f64, cells: usize) -> PathBuf {
    dir.join(format!("fields_t{}_n{}.csv", fmt_time(t), cells))
}

pub fn diagnostics_file(dir: &Path, cells: usize) -> PathBuf {
    dir.join(format!("diagnostics_n{cells}.csv"))
}

pub fn path_file(dir: &Path, realization: usize) -> PathBuf {
    dir.join("paths").join(format!("realization_{realization}.bin"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

#[derive(Serialize)]
struct Metadata {
    unix_time_seconds: u64,
    generator: &'static str,
    version: &'static str,
}

/// Writes metadata.json. This is the only output allowed to differ between
/// reruns of the same experiment.
pub fn write_metadata(dir: &Path) -> std::io::Result<()> {
    let unix_time_seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &dir.join("metadata.json"),
        &Metadata {
            unix_time_seconds,
            generator: "sch-lab",
            version: env!("CARGO_PKG_VERSION"),
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// nbins + 1 edges, ascending; empty when there was no data.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    // Linear interpolation between order statistics (the common "type 7").
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Freedman-Diaconis binning: width 2 IQR / n^(1/3), degenerating to a
/// single bin when the data has no spread.
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    let mut data: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if data.is_empty() {
        return Histogram { edges: Vec::new(), counts: Vec::new() };
    }
    data.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = data.len();
    let min = data[0];
    let max = data[n - 1];
    let iqr = quantile(&data, 0.75) - quantile(&data, 0.25);
    let width = 2.0 * iqr / (n as f64).cbrt();
    let nbins = if width > 0.0 && max > min {
        (((max - min) / width).ceil() as usize).clamp(1, 10_000)
    } else {
        1
    };
    let mut edges = Vec::with_capacity(nbins + 1);
    for i in 0..=nbins {
        edges.push(min + (max - min) * i as f64 / nbins as f64);
    }
    let mut counts = vec![0usize; nbins];
    for v in &data {
        let mut idx = if max > min {
            ((v - min) / (max - min) * nbins as f64) as usize
        } else {
            0
        };
        if idx >= nbins {
            idx = nbins - 1; // the maximum lands in the last bin
        }
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "bin_lo,bin_hi,count")?;
    for (i, count) in hist.counts.iter().enumerate() {
        writeln!(out, "{},{},{}", hist.edges[i], hist.edges[i + 1], count)?;
    }
    out.flush()
}
