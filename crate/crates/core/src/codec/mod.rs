//! Coarse-to-fine adaptive transmission over a linear surrogate codec.
//!
//! The coarse stage allocates rate and power for a whole layer from the fed
//! back average SNR; the fine stage re-weights each block just before it is
//! sent, using the instantaneous SNR and the per-subcarrier mean profile.

pub mod alloc;
mod coarse;
mod fine;
pub mod source;
pub mod waterfill;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::phy::OfdmConfig;
use crate::snr::SNR_FLOOR_DB;
use crate::{Error, Result};
use self::waterfill::mmse_waterfill;

pub use alloc::{allocate_rates, RateAllocation};
pub use coarse::{BlockPlan, CoarseDecoding, CoarseEncoded, CoarseLayout};
pub use fine::{ChannelStatistics, FineEncoded, FinePlan, RemainingPool};
pub use source::{SourceConfig, SurrogateSource};

/// Which adaptation stages react to feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptationMode {
    #[default]
    Both,
    CoarseOnly,
    FineOnly,
    Neither,
}

impl AdaptationMode {
    pub const ALL: [AdaptationMode; 4] = [Self::Both, Self::CoarseOnly, Self::FineOnly, Self::Neither];

    /// Coarse tables follow the fed-back average SNR.
    pub fn coarse_adaptive(self) -> bool {
        matches!(self, Self::Both | Self::CoarseOnly)
    }

    /// Blocks are re-weighted per instantaneous SNR.
    pub fn fine_adaptive(self) -> bool {
        matches!(self, Self::Both | Self::FineOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Both => "both",
            Self::CoarseOnly => "coarse-only",
            Self::FineOnly => "fine-only",
            Self::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Scale from sequence entropy (bits) to transmitted real values.
    pub alpha: f64,
    /// Components per rate-allocation sequence.
    pub sequence_len: usize,
    /// Average SNRs (dB) a non-adaptive coarse stage is designed to serve.
    pub design_grid_db: Vec<f64>,
    /// Operating point (dB) assumed by a non-adaptive coarse stage.
    pub anchor_db: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            sequence_len: 64,
            design_grid_db: (0..=20).map(f64::from).collect(),
            anchor_db: 10.0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.sequence_len == 0 {
            return Err(Error::Config("sequence_len must be positive".into()));
        }
        if self.design_grid_db.is_empty() || self.design_grid_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("design_grid_db must be a nonempty list of finite values".into()));
        }
        if !self.anchor_db.is_finite() {
            return Err(Error::Config("anchor_db must be finite".into()));
        }
        Ok(())
    }
}

/// Largest SNR (dB) used for designing allocations; keeps noise positive.
pub const DESIGN_SNR_CEIL_DB: f64 = 60.0;

/// Per-real-dimension noise at `snr_db` for symbol power `power`.
pub fn design_noise(power: f64, snr_db: f64) -> f64 {
    let db = snr_db.clamp(SNR_FLOOR_DB, DESIGN_SNR_CEIL_DB);
    power / (2.0 * 10f64.powf(db / 10.0))
}

/// Per-real-dimension noise at `snr_db`, unclamped; `+inf` gives zero.
pub fn noise_at(power: f64, snr_db: f64) -> f64 {
    power / (2.0 * 10f64.powf(snr_db / 10.0))
}

/// Shared, read-only codec tables for one OFDM configuration and mode.
///
/// Robust allocations are memoised by block content; the cache is the only
/// interior state and never changes results.
#[derive(Debug)]
pub struct CodecState {
    ofdm: OfdmConfig,
    cfg: CodecConfig,
    mode: AdaptationMode,
    /// Per-subcarrier gain levels (dB) the coarse design averages over;
    /// empty means a flat channel.
    fading_db: Vec<f64>,
    robust_cache: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl CodecState {
    pub fn new(ofdm: OfdmConfig, cfg: CodecConfig, mode: AdaptationMode) -> Result<Self> {
        ofdm.validate()?;
        cfg.validate()?;
        Ok(Self {
            ofdm,
            cfg,
            mode,
            fading_db: Vec::new(),
            robust_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Makes coarse designs average over subcarrier gains `fading_db`.
    pub fn with_fading(mut self, fading_db: Vec<f64>) -> Result<Self> {
        if fading_db.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidInput("fading levels must be finite".into()));
        }
        self.fading_db = fading_db;
        self.robust_cache = Mutex::new(HashMap::new());
        Ok(self)
    }

    pub fn fading_db(&self) -> &[f64] {
        &self.fading_db
    }

    pub fn ofdm(&self) -> &OfdmConfig {
        &self.ofdm
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    pub fn mode(&self) -> AdaptationMode {
        self.mode
    }

    fn block_power(&self) -> f64 {
        self.ofdm.symbols_per_block() as f64 * self.ofdm.power_budget
    }

    /// Coarse powers for a block with `variances`: designed at `design_db`
    /// when given, else over the whole design grid. Either way the noise is
    /// spread over the fading levels. Memoised by content.
    fn coarse_powers(&self, variances: &[f64], design_db: Option<f64>) -> Arc<Vec<f64>> {
        let p = self.ofdm.power_budget;
        let snrs: Vec<f64> = match design_db {
            Some(d) => vec![d],
            None => self.cfg.design_grid_db.clone(),
        };
        if self.fading_db.is_empty() && snrs.len() == 1 {
            let noise = vec![design_noise(p, snrs[0]); variances.len()];
            return Arc::new(mmse_waterfill(variances, &noise, self.block_power()));
        }
        let mut h = DefaultHasher::new();
        for v in variances.iter().chain(&snrs) {
            v.to_bits().hash(&mut h);
        }
        let key = h.finish();
        if let Some(hit) = self.robust_cache.lock().expect("cache poisoned").get(&key) {
            return hit.clone();
        }
        let fading: &[f64] = if self.fading_db.is_empty() { &[0.0] } else { &self.fading_db };
        let levels: Vec<f64> = snrs
            .iter()
            .flat_map(|&g| fading.iter().map(move |&f| design_noise(p, g + f)))
            .collect();
        let unit = vec![1.0; variances.len()];
        let powers = Arc::new(waterfill::robust_waterfill(variances, &unit, &levels, self.block_power()));
        self.robust_cache
            .lock()
            .expect("cache poisoned")
            .insert(key, powers.clone());
        powers
    }
}
