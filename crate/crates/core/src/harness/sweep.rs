//! Cartesian parameter sweeps written as CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::episode::{run_trials, FeedbackPolicy, Link};
use super::metrics::{fmt_sig, mean_stderr};
use super::scenario::{FeedbackMode, ScenarioConfig};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "avg_snr_db,cbr,feedback_mode,bits,n_trials,mean_psnr_db,stderr_psnr_db,mean_mse,stderr_mse,seed";

/// Axes of a sweep; every combination becomes one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub avg_snr_db: Vec<f64>,
    pub cbr: Vec<f64>,
    pub feedback: Vec<FeedbackMode>,
}

impl SweepGrid {
    /// The single cell of `s`.
    pub fn single(s: &ScenarioConfig) -> Self {
        Self {
            avg_snr_db: vec![s.avg_snr_db],
            cbr: vec![s.cbr],
            feedback: vec![s.feedback.clone()],
        }
    }

    pub fn cells(&self) -> usize {
        self.avg_snr_db.len() * self.cbr.len() * self.feedback.len()
    }
}

/// Summary statistics of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub avg_snr_db: f64,
    pub cbr: f64,
    pub feedback_mode: &'static str,
    pub bits: u32,
    pub n_trials: usize,
    pub mean_psnr_db: f64,
    pub stderr_psnr_db: f64,
    pub mean_mse: f64,
    pub stderr_mse: f64,
    pub seed: u64,
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        [
            fmt_sig(self.avg_snr_db, 6),
            fmt_sig(self.cbr, 6),
            self.feedback_mode.to_string(),
            self.bits.to_string(),
            self.n_trials.to_string(),
            fmt_sig(self.mean_psnr_db, 6),
            fmt_sig(self.stderr_psnr_db, 6),
            fmt_sig(self.mean_mse, 6),
            fmt_sig(self.stderr_mse, 6),
            self.seed.to_string(),
        ]
        .join(",")
    }
}

/// Runs every cell of `grid` with the rest of `base` fixed. Cells run in
/// order (SNR, then CBR, then feedback); trials within a cell run in
/// parallel and every cell reuses `base.seed`.
pub fn sweep_rows(base: &ScenarioConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let link = Link::new(base)?;
    let mut rows = Vec::with_capacity(grid.cells());
    for &snr in &grid.avg_snr_db {
        for &cbr in &grid.cbr {
            for mode in &grid.feedback {
                let policy = FeedbackPolicy::from_mode(mode, &base.cqi)?;
                let recs = run_trials(&link, &policy, cbr, snr, base.n_trials, base.seed)?;
                let psnrs: Vec<f64> = recs.iter().map(|r| r.psnr_db).collect();
                let mses: Vec<f64> = recs.iter().map(|r| r.mse).collect();
                let (mean_psnr_db, stderr_psnr_db) = mean_stderr(&psnrs);
                let (mean_mse, stderr_mse) = mean_stderr(&mses);
                rows.push(SweepRow {
                    avg_snr_db: snr,
                    cbr,
                    feedback_mode: mode.name(),
                    bits: mode.bits(),
                    n_trials: base.n_trials,
                    mean_psnr_db,
                    stderr_psnr_db,
                    mean_mse,
                    stderr_mse,
                    seed: base.seed,
                });
            }
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv_line());
    }
    out
}

/// Runs the sweep on `workers` threads (all cores when `None`) and writes the CSV.
pub fn run_sweep(base: &ScenarioConfig, grid: &SweepGrid, out_path: &Path, workers: Option<usize>) -> Result<String> {
    let csv = with_workers(workers, || sweep_rows(base, grid).map(|rows| rows_to_csv(&rows)))?;
    fs::write(out_path, &csv).map_err(|e| Error::io(out_path, e))?;
    Ok(csv)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}
