//! TOML configuration files.
//!
//! Sections: `[scenario]`, `[sweep]`, `[channel]`, `[ofdm]`, `[source]`,
//! `[codec]`, `[cqi]`. Every key is optional and falls back to its default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{FeedbackMode, ScenarioConfig};
use super::sweep::SweepGrid;
use crate::codec::{AdaptationMode, CodecConfig, SourceConfig};
use crate::cqi::CqiConfig;
use crate::phy::{exponential_pdp, parse_pdp, ChannelProcessConfig, OfdmConfig};
use crate::receiver::EstimationMethod;
use crate::{Error, Result};

/// A ratio written as a number or as `"a/b"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Number(f64),
    Text(String),
}

impl Ratio {
    pub fn value(&self) -> Result<f64> {
        match self {
            Ratio::Number(x) => Ok(*x),
            Ratio::Text(t) => {
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("cannot read ratio {t:?}")))
                };
                match t.split_once('/') {
                    Some((a, b)) => Ok(parse(a)? / parse(b)?),
                    None => parse(t),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub avg_snr_db: f64,
    pub cbr: Ratio,
    pub n_trials: usize,
    /// `perfect`, `average`, `uniform` or `rl`.
    pub feedback: String,
    pub bits: u32,
    pub policy: Option<PathBuf>,
    pub mode: AdaptationMode,
    pub estimator: EstimationMethod,
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            avg_snr_db: 10.0,
            cbr: Ratio::Text("1/24".into()),
            n_trials: 100,
            feedback: "perfect".into(),
            bits: 3,
            policy: None,
            mode: AdaptationMode::Both,
            estimator: EstimationMethod::Lmmse,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub avg_snr_db: Vec<f64>,
    pub cbr: Vec<Ratio>,
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub n_taps: usize,
    /// Comma-separated tap powers; normalised to unit sum. Overrides `pdp_decay_db`.
    pub power_delay_profile: Option<String>,
    /// Exponential profile decay per tap, dB.
    pub pdp_decay_db: f64,
    pub temporal_correlation: f64,
    pub fading_spread: f64,
    pub rng_seed: u64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            n_taps: 8,
            power_delay_profile: None,
            pdp_decay_db: 3.0,
            temporal_correlation: 0.0,
            fading_spread: 1.0,
            rng_seed: 0,
        }
    }
}

impl ChannelSection {
    pub fn to_process(&self) -> Result<ChannelProcessConfig> {
        let pdp = match &self.power_delay_profile {
            Some(text) => parse_pdp(text)?,
            None => exponential_pdp(self.n_taps, self.pdp_decay_db),
        };
        let cfg = ChannelProcessConfig {
            n_taps: pdp.len(),
            power_delay_profile: pdp,
            temporal_correlation: self.temporal_correlation,
            fading_spread: self.fading_spread,
            rng_seed: self.rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    pub sweep: SweepSection,
    pub channel: ChannelSection,
    pub ofdm: OfdmConfig,
    pub source: SourceConfig,
    pub codec: CodecConfig,
    pub cqi: CqiConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The file that reproduces `s`; sweep axes are left empty.
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        let (policy, bits) = match &s.feedback {
            FeedbackMode::Rl { bits, policy } => (Some(policy.clone()), *bits),
            FeedbackMode::Uniform { bits } => (None, *bits),
            FeedbackMode::Perfect | FeedbackMode::Average => (None, ScenarioSection::default().bits),
        };
        let pdp = &s.channel.power_delay_profile;
        Self {
            scenario: ScenarioSection {
                avg_snr_db: s.avg_snr_db,
                cbr: Ratio::Number(s.cbr),
                n_trials: s.n_trials,
                feedback: s.feedback.name().into(),
                bits,
                policy,
                mode: s.mode,
                estimator: s.estimator,
                seed: s.seed,
            },
            sweep: SweepSection::default(),
            channel: ChannelSection {
                n_taps: pdp.len(),
                power_delay_profile: Some(pdp.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")),
                temporal_correlation: s.channel.temporal_correlation,
                fading_spread: s.channel.fading_spread,
                rng_seed: s.channel.rng_seed,
                ..ChannelSection::default()
            },
            ofdm: s.ofdm.clone(),
            source: s.source.clone(),
            codec: s.codec.clone(),
            cqi: s.cqi.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn feedback_mode(&self, name: &str) -> Result<FeedbackMode> {
        let bits = self.scenario.bits;
        Ok(match name {
            "perfect" => FeedbackMode::Perfect,
            "average" => FeedbackMode::Average,
            "uniform" => FeedbackMode::Uniform { bits },
            "rl" => FeedbackMode::Rl {
                bits,
                policy: self
                    .scenario
                    .policy
                    .clone()
                    .ok_or_else(|| Error::Config("feedback \"rl\" needs scenario.policy".into()))?,
            },
            other => return Err(Error::Config(format!("unknown feedback mode {other:?}"))),
        })
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let cfg = ScenarioConfig {
            avg_snr_db: s.avg_snr_db,
            cbr: s.cbr.value()?,
            channel: self.channel.to_process()?,
            n_trials: s.n_trials,
            feedback: self.feedback_mode(&s.feedback)?,
            seed: s.seed,
            mode: s.mode,
            estimator: s.estimator,
            ofdm: self.ofdm.clone(),
            source: self.source.clone(),
            codec: self.codec.clone(),
            cqi: self.cqi.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sweep axes; an empty axis falls back to the scenario's single value.
    pub fn sweep_grid(&self) -> Result<SweepGrid> {
        let base = self.scenario()?;
        let mut grid = SweepGrid::single(&base);
        if !self.sweep.avg_snr_db.is_empty() {
            grid.avg_snr_db = self.sweep.avg_snr_db.clone();
        }
        if !self.sweep.cbr.is_empty() {
            grid.cbr = self.sweep.cbr.iter().map(Ratio::value).collect::<Result<_>>()?;
        }
        if !self.sweep.feedback.is_empty() {
            grid.feedback = self.sweep.feedback.iter().map(|f| self.feedback_mode(f)).collect::<Result<_>>()?;
        }
        if grid.cbr.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config("sweep cbr values must be positive".into()));
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ConfigFile::parse("").unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.avg_snr_db, 10.0);
        assert!((s.cbr - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(s.channel.n_taps, 8);
    }

    #[test]
    fn sections_override_defaults() {
        let c = ConfigFile::parse(
            r#"
[scenario]
avg_snr_db = 5.0
cbr = "1/12"
feedback = "uniform"
bits = 2
mode = "fine-only"
estimator = "ls"

[sweep]
avg_snr_db = [0.0, 10.0]
cbr = [0.5, "1/24"]

[channel]
power_delay_profile = "2, 1, 1"
temporal_correlation = 0.95

[ofdm]
n_data_symbols = 4
"#,
        )
        .unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.feedback, FeedbackMode::Uniform { bits: 2 });
        assert_eq!(s.mode, AdaptationMode::FineOnly);
        assert_eq!(s.estimator, EstimationMethod::Ls);
        assert_eq!(s.channel.power_delay_profile, vec![0.5, 0.25, 0.25]);
        assert_eq!(s.ofdm.n_data_symbols, 4);
        let g = c.sweep_grid().unwrap();
        assert_eq!(g.cells(), 4);
    }

    #[test]
    fn scenario_survives_a_file_round_trip() {
        let mut s = ScenarioConfig {
            feedback: FeedbackMode::Uniform { bits: 2 },
            cbr: 1.0 / 12.0,
            avg_snr_db: f64::INFINITY,
            ..ScenarioConfig::default()
        };
        s.channel.temporal_correlation = 0.95;
        let text = ConfigFile::from_scenario(&s).to_toml().unwrap();
        let back = ConfigFile::parse(&text).unwrap().scenario().unwrap();
        assert_eq!(back, s, "{text}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("[scenario]\nsnr = 3\n").is_err());
        let c = ConfigFile::parse("[scenario]\nfeedback = \"rl\"\n").unwrap();
        assert!(matches!(c.scenario(), Err(Error::Config(_))));
    }
}
