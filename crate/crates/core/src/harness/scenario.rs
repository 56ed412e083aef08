//! Scenario description and the fixed-SNR channel scenario families.

use std::path::PathBuf;

use crate::codec::{AdaptationMode, CodecConfig, SourceConfig};
use crate::cqi::CqiConfig;
use crate::phy::{ChannelProcessConfig, OfdmConfig};
use crate::receiver::EstimationMethod;
use crate::{Error, Result};

/// What the receiver reports about each block's channel.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackMode {
    /// Exact average and instantaneous SNR.
    Perfect,
    /// Quantized average SNR only; the fine stage sees that value too.
    Average,
    /// Uniform `bits`-bit instantaneous-SNR quantizer.
    Uniform { bits: u32 },
    /// Learned quantizer loaded from a policy file.
    Rl { bits: u32, policy: PathBuf },
}

impl FeedbackMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Perfect => "perfect",
            Self::Average => "average",
            Self::Uniform { .. } => "uniform",
            Self::Rl { .. } => "rl",
        }
    }

    pub fn bits(&self) -> u32 {
        match self {
            Self::Perfect | Self::Average => 0,
            Self::Uniform { bits } | Self::Rl { bits, .. } => *bits,
        }
    }
}

/// Everything needed to run trials of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Average SNR in dB; `+inf` means a noiseless link.
    pub avg_snr_db: f64,
    pub cbr: f64,
    pub channel: ChannelProcessConfig,
    pub n_trials: usize,
    pub feedback: FeedbackMode,
    pub seed: u64,
    pub mode: AdaptationMode,
    pub estimator: EstimationMethod,
    pub ofdm: OfdmConfig,
    pub source: SourceConfig,
    pub codec: CodecConfig,
    pub cqi: CqiConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            avg_snr_db: 10.0,
            cbr: 1.0 / 24.0,
            channel: ChannelProcessConfig::default(),
            n_trials: 100,
            feedback: FeedbackMode::Perfect,
            seed: 1,
            mode: AdaptationMode::Both,
            estimator: EstimationMethod::Lmmse,
            ofdm: OfdmConfig::default(),
            source: SourceConfig::default(),
            codec: CodecConfig::default(),
            cqi: CqiConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if !(self.cbr.is_finite() && self.cbr > 0.0) {
            return Err(Error::Config(format!("cbr must be positive, got {}", self.cbr)));
        }
        if self.avg_snr_db.is_nan() || self.avg_snr_db == f64::NEG_INFINITY {
            return Err(Error::Config("avg_snr_db must be a number or +inf".into()));
        }
        self.ofdm.validate()?;
        self.ofdm.check_taps(self.channel.n_taps)?;
        self.channel.validate()?;
        self.source.validate()?;
        self.codec.validate()?;
        self.cqi.validate()
    }
}

/// Channel knobs of the three scenario groups: (temporal correlation, fading spread).
pub const CHANNEL_GROUPS: [(f64, f64); 3] = [(0.3, 0.25), (0.3, 1.0), (0.95, 1.0)];

/// Cases per scenario group.
pub const CASES_PER_GROUP: usize = 8;

/// 24 scenarios at 10 dB: three channel groups of eight cases. Cases within
/// a group differ only in seed.
pub fn build_fig6_scenarios(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut out = Vec::with_capacity(CHANNEL_GROUPS.len() * CASES_PER_GROUP);
    for (g, &(rho, spread)) in CHANNEL_GROUPS.iter().enumerate() {
        for case in 0..CASES_PER_GROUP {
            let mut s = base.clone();
            s.avg_snr_db = 10.0;
            s.channel.temporal_correlation = rho;
            s.channel.fading_spread = spread;
            s.seed = base.seed.wrapping_add((g * CASES_PER_GROUP + case) as u64);
            out.push(s);
        }
    }
    out
}

/// Group (0-based) of scenario `i` from [`build_fig6_scenarios`].
pub fn scenario_group(i: usize) -> usize {
    i / CASES_PER_GROUP
}
