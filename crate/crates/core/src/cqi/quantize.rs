//! Fixed uniform SNR quantizers.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `2^bits` equal cells over `[lo, hi)` dB, demapped to cell midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformQuantizer {
    pub lo: f64,
    pub hi: f64,
    pub bits: u32,
}

impl UniformQuantizer {
    pub fn new(lo: f64, hi: f64, bits: u32) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidInput(format!("quantizer range [{lo}, {hi}) is empty")));
        }
        if bits == 0 || bits > 16 {
            return Err(Error::InvalidInput(format!("quantizer bits must be in 1..=16, got {bits}")));
        }
        Ok(Self { lo, hi, bits })
    }

    pub fn levels(&self) -> usize {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.levels() as f64
    }

    /// Cell index; values outside the range clamp to the end cells.
    pub fn index(&self, snr_db: f64) -> usize {
        let top = self.levels() - 1;
        let cell = ((snr_db - self.lo) / self.step()).floor();
        if cell.is_nan() || cell < 0.0 {
            0
        } else if cell >= top as f64 {
            top
        } else {
            cell as usize
        }
    }

    pub fn midpoint(&self, index: usize) -> f64 {
        self.lo + (index as f64 + 0.5) * self.step()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.levels()).map(|i| self.midpoint(i)).collect()
    }

    /// Quantize then demap.
    pub fn requantize(&self, snr_db: f64) -> f64 {
        self.midpoint(self.index(snr_db))
    }
}

/// Cell index of `snr_db` under a `bits`-bit uniform quantizer on `[lo, hi)`.
pub fn uniform_quantize(snr_db: f64, lo: f64, hi: f64, bits: u32) -> Result<usize> {
    Ok(UniformQuantizer::new(lo, hi, bits)?.index(snr_db))
}
