//! Physical layer: power-normalised symbol blocks, OFDM framing and the
//! tapped-delay-line block-fading channel.

mod channel;
mod ofdm;

pub use channel::{
    apply_channel, exponential_pdp, frequency_correlation, parse_pdp, sample_channel_process,
    ChannelProcessConfig, ChannelRealization,
};
pub use ofdm::{ofdm_demodulate, ofdm_modulate, OfdmModem};

use num_complex::Complex64;

use crate::{Error, Result};

/// OFDM numerology and per-symbol power budget.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    /// Data OFDM symbols per fading block.
    pub n_data_symbols: usize,
    /// Pilot OFDM symbols prepended to each block.
    pub n_pilot_symbols: usize,
    pub n_subcarriers: usize,
    pub cp_length: usize,
    /// Average power per complex data symbol.
    pub power_budget: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n_data_symbols: 8,
            n_pilot_symbols: 1,
            n_subcarriers: 64,
            cp_length: 16,
            power_budget: 1.0,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_data_symbols == 0 || self.n_pilot_symbols == 0 || self.n_subcarriers == 0 || self.cp_length == 0 {
            return Err(Error::Config("OFDM counts must all be at least 1".into()));
        }
        if !(self.power_budget.is_finite() && self.power_budget > 0.0) {
            return Err(Error::Config(format!("power budget must be positive, got {}", self.power_budget)));
        }
        Ok(())
    }

    /// Checks that a channel with `n_taps` taps causes no inter-block interference.
    pub fn check_taps(&self, n_taps: usize) -> Result<()> {
        if n_taps > self.cp_length + 1 {
            return Err(Error::Config(format!(
                "{} taps exceed cyclic prefix length {} + 1",
                n_taps, self.cp_length
            )));
        }
        Ok(())
    }

    /// Complex data symbols carried by one fading block (N_s * L_f).
    pub fn symbols_per_block(&self) -> usize {
        self.n_data_symbols * self.n_subcarriers
    }

    /// Real-valued slots per block: two per complex symbol.
    pub fn real_slots_per_block(&self) -> usize {
        2 * self.symbols_per_block()
    }

    /// Time-domain samples per block including pilots and cyclic prefixes.
    pub fn frame_len(&self) -> usize {
        (self.n_data_symbols + self.n_pilot_symbols) * (self.n_subcarriers + self.cp_length)
    }

    /// Real slots carried by each subcarrier within one block.
    pub fn slots_per_subcarrier(&self) -> usize {
        2 * self.n_data_symbols
    }

    /// Maps a real slot index to `(ofdm symbol, subcarrier, imaginary part?)`.
    ///
    /// Slots are laid out subcarrier-major: the `2 * N_s` slots of subcarrier 0
    /// come first, alternating real and imaginary parts over the OFDM symbols.
    pub fn slot_position(&self, slot: usize) -> (usize, usize, bool) {
        let per_sc = self.slots_per_subcarrier();
        let k = slot / per_sc;
        let r = slot % per_sc;
        (r / 2, k, r % 2 == 1)
    }
}

/// Complex data symbols of one fading block, row-major `N_s x L_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: Vec<Complex64>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub layer_index: usize,
    pub block_index: usize,
    /// Scalar applied by the last power normalisation; delivered to the
    /// receiver as error-free side information together with the mask record.
    pub power_scale: f64,
}

impl SymbolBlock {
    pub fn zeros(cfg: &OfdmConfig, layer_index: usize, block_index: usize) -> Self {
        Self {
            symbols: vec![Complex64::new(0.0, 0.0); cfg.symbols_per_block()],
            n_rows: cfg.n_data_symbols,
            n_cols: cfg.n_subcarriers,
            layer_index,
            block_index,
            power_scale: 1.0,
        }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidInput("ragged symbol rows".into()));
        }
        Ok(Self {
            symbols: rows.concat(),
            n_rows,
            n_cols,
            layer_index: 0,
            block_index: 0,
            power_scale: 1.0,
        })
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> Complex64 {
        self.symbols[t * self.n_cols + k]
    }

    #[inline]
    pub fn get_mut(&mut self, t: usize, k: usize) -> &mut Complex64 {
        &mut self.symbols[t * self.n_cols + k]
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.symbols[t * self.n_cols..(t + 1) * self.n_cols]
    }

    pub fn mean_power(&self) -> f64 {
        if self.symbols.is_empty() {
            return 0.0;
        }
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }

    /// Reads real slot `slot` under the layout of [`OfdmConfig::slot_position`].
    pub fn slot(&self, cfg: &OfdmConfig, slot: usize) -> f64 {
        let (t, k, imag) = cfg.slot_position(slot);
        let s = self.get(t, k);
        if imag {
            s.im
        } else {
            s.re
        }
    }

    pub fn set_slot(&mut self, cfg: &OfdmConfig, slot: usize, value: f64) {
        let (t, k, imag) = cfg.slot_position(slot);
        let s = self.get_mut(t, k);
        if imag {
            s.im = value;
        } else {
            s.re = value;
        }
    }
}

/// Scales `block` by one positive scalar so its mean squared magnitude equals
/// `budget`. An all-zero block is returned unchanged. The applied scalar is
/// accumulated into [`SymbolBlock::power_scale`].
pub fn normalize_power(block: &SymbolBlock, budget: f64) -> Result<SymbolBlock> {
    if block.symbols.is_empty() {
        return Err(Error::InvalidInput("empty symbol block".into()));
    }
    if block.symbols.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite symbol in block".into()));
    }
    let power = block.mean_power();
    let mut out = block.clone();
    if power == 0.0 {
        return Ok(out);
    }
    let scale = (budget / power).sqrt();
    for s in &mut out.symbols {
        *s *= scale;
    }
    out.power_scale *= scale;
    Ok(out)
}
