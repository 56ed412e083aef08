use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{OfdmConfig, SymbolBlock};
use crate::{Error, Result};

/// OFDM modulator/demodulator with cached unitary FFT plans.
///
/// Both directions are scaled by `1/sqrt(L_f)` so noise variance is the same in
/// the time and frequency domains.
#[derive(Clone)]
pub struct OfdmModem {
    cfg: OfdmConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    norm: f64,
}

impl std::fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmModem").field("cfg", &self.cfg).finish()
    }
}

impl OfdmModem {
    pub fn new(cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            forward: planner.plan_fft_forward(cfg.n_subcarriers),
            inverse: planner.plan_fft_inverse(cfg.n_subcarriers),
            norm: 1.0 / (cfg.n_subcarriers as f64).sqrt(),
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    /// Builds the time-domain frame: pilot symbol(s) first, then data symbols,
    /// each as a unitary IDFT with the last `L_cp` samples copied in front.
    pub fn modulate(&self, block: &SymbolBlock, pilot: &[Complex64]) -> Result<Vec<Complex64>> {
        let cfg = &self.cfg;
        let lf = cfg.n_subcarriers;
        if block.n_rows != cfg.n_data_symbols || block.n_cols != lf || block.symbols.len() != lf * block.n_rows {
            return Err(Error::Config(format!(
                "block is {}x{}, expected {}x{}",
                block.n_rows, block.n_cols, cfg.n_data_symbols, lf
            )));
        }
        if pilot.len() != lf {
            return Err(Error::Config(format!("pilot length {} != {} subcarriers", pilot.len(), lf)));
        }
        if pilot.iter().any(|p| (p.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidPilot("pilot entries must have unit magnitude".into()));
        }
        let mut frame = Vec::with_capacity(cfg.frame_len());
        let mut buf = vec![Complex64::new(0.0, 0.0); lf];
        let rows = (0..cfg.n_pilot_symbols)
            .map(|_| pilot)
            .chain((0..cfg.n_data_symbols).map(|t| block.row(t)));
        for row in rows {
            buf.copy_from_slice(row);
            self.inverse.process(&mut buf);
            for s in &mut buf {
                *s *= self.norm;
            }
            frame.extend_from_slice(&buf[lf - cfg.cp_length..]);
            frame.extend_from_slice(&buf);
        }
        Ok(frame)
    }

    /// Removes cyclic prefixes and applies the unitary DFT per symbol.
    /// Returns `(data N_s x L_f, pilot observations N_p x L_f)`.
    pub fn demodulate(&self, received: &[Complex64]) -> Result<(SymbolBlock, Vec<Vec<Complex64>>)> {
        let cfg = &self.cfg;
        if received.len() != cfg.frame_len() {
            return Err(Error::Framing(format!(
                "frame has {} samples, expected {}",
                received.len(),
                cfg.frame_len()
            )));
        }
        let lf = cfg.n_subcarriers;
        let sym_len = lf + cfg.cp_length;
        let mut rows = Vec::with_capacity(cfg.n_pilot_symbols + cfg.n_data_symbols);
        for chunk in received.chunks_exact(sym_len) {
            let mut buf = chunk[cfg.cp_length..].to_vec();
            self.forward.process(&mut buf);
            for s in &mut buf {
                *s *= self.norm;
            }
            rows.push(buf);
        }
        let data_rows = rows.split_off(cfg.n_pilot_symbols);
        let data = SymbolBlock::from_rows(&data_rows)?;
        Ok((data, rows))
    }
}

/// One-shot modulation; see [`OfdmModem::modulate`].
pub fn ofdm_modulate(block: &SymbolBlock, pilot: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    OfdmModem::new(cfg)?.modulate(block, pilot)
}

/// One-shot demodulation; see [`OfdmModem::demodulate`].
pub fn ofdm_demodulate(received: &[Complex64], cfg: &OfdmConfig) -> Result<(SymbolBlock, Vec<Vec<Complex64>>)> {
    OfdmModem::new(cfg)?.demodulate(received)
}
