use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::training::RunLog;
use crate::{Error, Result};

/// One evaluated reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub record_id: String,
    pub split: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean and (population) standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    /// Aggregates keyed by `(method, split)`.
    pub fn summary(&self) -> BTreeMap<(String, String), Summary> {
        let mut groups: BTreeMap<(String, String), Vec<&MetricRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.method.clone(), r.split.clone())).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|(key, rows)| {
                let p: Vec<f64> = rows.iter().map(|r| r.psnr).collect();
                let s: Vec<f64> = rows.iter().map(|r| r.ssim).collect();
                let (psnr_mean, psnr_std) = mean_std(&p);
                let (ssim_mean, ssim_std) = mean_std(&s);
                let summary = Summary {
                    count: rows.len(),
                    psnr_mean,
                    psnr_std,
                    ssim_mean,
                    ssim_std,
                };
                (key, summary)
            })
            .collect()
    }

    /// Mean PSNR of `method` across all of its rows.
    pub fn mean_psnr(&self, method: &str) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.method == method).map(|r| r.psnr).collect();
        mean_std(&v).0
    }

    /// CSV with header `method,record_id,psnr_db,ssim`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "method,record_id,psnr_db,ssim")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.method, r.record_id, r.psnr, r.ssim)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::file(path, e))
    }

    /// Markdown table of the per-method summaries.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| method | split | n | PSNR (dB) | SSIM |\n|---|---|---|---|---|\n");
        for ((method, split), m) in self.summary() {
            s.push_str(&format!(
                "| {method} | {split} | {} | {:.2} ± {:.2} | {:.4} ± {:.4} |\n",
                m.count, m.psnr_mean, m.psnr_std, m.ssim_mean, m.ssim_std
            ));
        }
        s
    }
}

/// Which logged quantity a curve follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveMetric {
    Psnr,
    Loss,
}

/// Mean-over-records curve of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub method: String,
    pub iterations: Vec<usize>,
    pub values: Vec<f64>,
}

/// Averages every method's logs at each logged iteration.
///
/// Iterations are aligned by value; a point averages whichever rows of that
/// method report it (all subjects of all of its logs).
pub fn curve_report(logs: &[(String, RunLog)], metric: CurveMetric) -> Vec<Curve> {
    let mut by_method: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (method, log) in logs {
        if !order.contains(&method.as_str()) {
            order.push(method);
        }
        let points = by_method.entry(method).or_default();
        for row in log.rows() {
            let v = match metric {
                CurveMetric::Psnr => row.psnr,
                CurveMetric::Loss => Some(row.loss),
            };
            if let Some(v) = v {
                points.entry(row.iteration).or_default().push(v);
            }
        }
    }
    order
        .into_iter()
        .map(|m| {
            let points = &by_method[m];
            Curve {
                method: m.to_string(),
                iterations: points.keys().cloned().collect(),
                values: points.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect(),
            }
        })
        .collect()
}

/// Long-format CSV: `method,iteration,value`.
pub fn write_curves_csv(curves: &[Curve], mut w: impl Write) -> Result<()> {
    writeln!(w, "method,iteration,value")?;
    for c in curves {
        for (it, v) in c.iterations.iter().zip(&c.values) {
            writeln!(w, "{},{},{}", c.method, it, v)?;
        }
    }
    Ok(())
}
