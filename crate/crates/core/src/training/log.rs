use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// Updates applied before this evaluation.
    pub iteration: usize,
    pub subject_id: String,
    pub loss: f64,
    /// Only for synthetic data with ground truth.
    pub psnr: Option<f64>,
    /// Wall time since the start of the run.
    pub wall_ms: u64,
}

/// Per-subject training curves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "iteration,subject_id,loss,psnr,wall_ms";

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; iterations never decrease and values stay finite.
    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration < last.iteration {
                return Err(Error::Domain(format!(
                    "log iteration {} follows {}",
                    row.iteration, last.iteration
                )));
            }
        }
        if !row.loss.is_finite() || row.psnr.is_some_and(f64::is_nan) {
            return Err(Error::Numerical(format!("non-finite log value at iteration {}", row.iteration)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct logged iterations.
    pub fn iterations(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.iteration).collect();
        v.dedup();
        v
    }

    fn mean_at(&self, iteration: usize, f: impl Fn(&LogRow) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.iteration == iteration).filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean loss over subjects at a logged iteration.
    pub fn loss_at(&self, iteration: usize) -> Option<f64> {
        self.mean_at(iteration, |r| Some(r.loss))
    }

    /// Mean PSNR over subjects at a logged iteration.
    pub fn psnr_at(&self, iteration: usize) -> Option<f64> {
        self.mean_at(iteration, |r| r.psnr)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().and_then(|r| self.loss_at(r.iteration))
    }

    /// Equal up to wall-clock timings.
    pub fn same_trajectory(&self, other: &RunLog) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.subject_id == b.subject_id
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.psnr.map(f64::to_bits) == b.psnr.map(f64::to_bits)
            })
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        for r in &self.rows {
            let psnr = r.psnr.map(|p| p.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.iteration, r.subject_id, r.loss, psnr, r.wall_ms)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::file(path, e))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::Format("run log header mismatch".into()));
        }
        let bad = |l: &str| Error::Format(format!("bad run log line `{l}`"));
        let mut log = RunLog::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            log.push(LogRow {
                iteration: f[0].parse().map_err(|_| bad(line))?,
                subject_id: f[1].to_string(),
                loss: f[2].parse().map_err(|_| bad(line))?,
                psnr: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| bad(line))?) },
                wall_ms: f[4].parse().map_err(|_| bad(line))?,
            })?;
        }
        Ok(log)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_csv(&text)
    }
}
