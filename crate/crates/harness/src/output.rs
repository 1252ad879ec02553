//! Metric CSV, ensemble CSV and 16-bit PGM writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::ArrayView2;

use crate::error::HarnessError;

/// One `iter,metric,dim,value` row. `dim` is empty for scalar metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iter: usize,
    pub metric: String,
    pub dim: Option<usize>,
    pub value: f64,
}

impl MetricRow {
    pub fn scalar(iter: usize, metric: &str, value: f64) -> Self {
        MetricRow {
            iter,
            metric: metric.to_string(),
            dim: None,
            value,
        }
    }

    pub fn indexed(iter: usize, metric: &str, dim: usize, value: f64) -> Self {
        MetricRow {
            iter,
            metric: metric.to_string(),
            dim: Some(dim),
            value,
        }
    }
}

pub const CSV_HEADER: [&str; 4] = ["iter", "metric", "dim", "value"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Shortest string that parses back to the same value (`Debug` switches
/// to exponent form for very small and very large magnitudes).
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Streams metric rows to disk, flushing after each batch so a failed run
/// keeps everything written so far.
pub struct MetricSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl MetricSink {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer
            .write_record(CSV_HEADER)
            .map_err(|e| io_err(path, e))?;
        writer.flush().map_err(|e| io_err(path, e))?;
        Ok(MetricSink {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn write(&mut self, rows: &[MetricRow]) -> Result<(), HarnessError> {
        for r in rows {
            let dim = r.dim.map(|d| d.to_string()).unwrap_or_default();
            self.writer
                .write_record([
                    r.iter.to_string(),
                    r.metric.clone(),
                    dim,
                    format_float(r.value),
                ])
                .map_err(|e| io_err(&self.path, e))?;
        }
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}

pub fn write_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<(), HarnessError> {
    let mut sink = MetricSink::create(path)?;
    sink.write(rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let bad = || io_err(path, format!("malformed row {rec:?}"));
        let iter = rec[0].parse().map_err(|_| bad())?;
        let dim = if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse().map_err(|_| bad())?)
        };
        let value = parse_float(&rec[3]).ok_or_else(bad)?;
        rows.push(MetricRow {
            iter,
            metric: rec[1].to_string(),
            dim,
            value,
        });
    }
    Ok(rows)
}

/// Particles as rows, columns `x0..x{d-1}`.
pub fn write_ensemble_csv(positions: ArrayView2<f64>, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (0..positions.ncols()).map(|l| format!("x{l}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| io_err(path, e))?;
    for row in positions.outer_iter() {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Grey levels clamped to `[lo, hi]` and scaled to the full 16-bit range.
pub fn quantize(values: &[f64], lo: f64, hi: f64) -> Vec<u16> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    values
        .iter()
        .map(|&v| {
            let t = if v.is_finite() {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (t * 65535.0).round() as u16
        })
        .collect()
}

/// Binary 16-bit PGM (P5).
pub fn write_pgm(
    pixels: &[u16],
    width: usize,
    height: usize,
    path: &Path,
) -> Result<(), HarnessError> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, pixels.to_vec()).ok_or_else(|| {
            io_err(
                path,
                format!("{} pixels do not fill {width}x{height}", pixels.len()),
            )
        })?;
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| io_err(path, e))
}

/// Reads a P2 or P5 PGM back as 16-bit grey levels.
pub fn read_pgm(path: &Path) -> Result<(Vec<u16>, usize, usize), HarnessError> {
    let img = image::open(path)
        .map_err(|e| io_err(path, e))?
        .into_luma16();
    let (w, h) = img.dimensions();
    Ok((img.into_raw(), w as usize, h as usize))
}
