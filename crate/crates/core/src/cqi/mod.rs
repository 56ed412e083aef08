//! Learned limited-rate feedback of instantaneous channel quality.

pub mod bandit;
pub mod demap;
pub mod dqn;
pub mod policy_io;
pub mod qnet;
pub mod quantize;
pub mod reward;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use demap::DemapParams;
pub use dqn::{select_action, sync_target, dqn_update, DqnAgent, Experience, ReplayBuffer};
pub use policy_io::Policy;
pub use qnet::QNetwork;
pub use quantize::{uniform_quantize, UniformQuantizer};
pub use reward::compute_reward;
pub use train::{lloyd_levels, train_alternating, TrainOutcome, TrainingLog};

/// Feature scale applied to dB inputs of the network.
pub const FEATURE_SCALE: f64 = 0.1;

/// Channel state observed when choosing a CQI.
#[derive(Debug, Clone, PartialEq)]
pub struct RlState {
    pub avg_snr_db: f64,
    pub subcarrier_snrs_db: Vec<f64>,
}

impl RlState {
    /// `[avg, per-subcarrier...]`, clamped to +-60 dB and scaled by [`FEATURE_SCALE`].
    pub fn features(&self) -> Vec<f64> {
        std::iter::once(self.avg_snr_db)
            .chain(self.subcarrier_snrs_db.iter().copied())
            .map(|v| v.clamp(-60.0, 60.0) * FEATURE_SCALE)
            .collect()
    }
}

/// Action values of `state` under `net`.
pub fn qnet_forward(state: &RlState, net: &QNetwork) -> Vec<f64> {
    net.forward(&state.features())
}

/// Demapped SNR of `cqi`.
pub fn cqi_to_snr(cqi: usize, params: &DemapParams) -> Result<f64> {
    params.snr_db(cqi)
}

/// Feedback quantizers, network shape and training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqiConfig {
    /// Bits per instantaneous-SNR report.
    pub bits: u32,
    pub avg_snr_bits: u32,
    pub avg_snr_range_db: [f64; 2],
    pub inst_snr_range_db: [f64; 2],
    pub hidden_widths: Vec<usize>,
    pub demap_hidden: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub discount: f64,
    pub step_size: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub reward_scale: f64,
    pub deviation_weight_start: f64,
    pub deviation_weight_end: f64,
    pub demap_step_size: f64,
    pub demap_init: DemapInit,
    /// Half-width (dB) of the central difference on demapped SNRs.
    pub demap_probe_db: f64,
    /// Alternation rounds, value-learning epochs and demap epochs per round.
    pub rounds: usize,
    pub value_epochs: usize,
    pub demap_epochs: usize,
    pub episodes_per_epoch: usize,
    /// Gradient steps per new experience during value learning.
    pub updates_per_experience: usize,
    /// Average SNRs (dB) drawn uniformly for training episodes.
    pub train_avg_snr_db: [f64; 2],
    /// Loss above which training is aborted.
    pub divergence_loss: f64,
}

/// Starting point of the demapper before alternating training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemapInit {
    /// Midpoints of the uniform baseline quantizer.
    Uniform,
    /// Minimum-deviation levels for effective SNRs drawn from training
    /// episodes, started from the uniform midpoints.
    Lloyd,
}

impl Default for CqiConfig {
    fn default() -> Self {
        Self {
            bits: 3,
            avg_snr_bits: 3,
            avg_snr_range_db: [0.0, 20.0],
            inst_snr_range_db: [-5.0, 25.0],
            hidden_widths: vec![128, 64],
            demap_hidden: 8,
            replay_capacity: 100_000,
            batch_size: 64,
            target_sync_interval: 100,
            discount: 0.9,
            step_size: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            reward_scale: 1.0 / 50.0,
            deviation_weight_start: -1.0,
            deviation_weight_end: -0.1,
            demap_step_size: 0.05,
            demap_init: DemapInit::Lloyd,
            demap_probe_db: 0.25,
            rounds: 3,
            value_epochs: 10,
            demap_epochs: 4,
            episodes_per_epoch: 32,
            updates_per_experience: 1,
            train_avg_snr_db: [0.0, 20.0],
            divergence_loss: 1e6,
        }
    }
}

impl CqiConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(1..=8).contains(&self.bits) || !(1..=8).contains(&self.avg_snr_bits) {
            return bad("bits must be in 1..=8");
        }
        if self.avg_snr_range_db[1] <= self.avg_snr_range_db[0] || self.inst_snr_range_db[1] <= self.inst_snr_range_db[0] {
            return bad("quantizer ranges must be increasing");
        }
        if self.hidden_widths.contains(&0) || self.demap_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size || self.target_sync_interval == 0 {
            return bad("replay capacity must hold a batch; batch and sync interval must be positive");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) || !(self.step_size > 0.0 && self.step_size < 1.0) {
            return bad("discount and step size must lie in (0, 1)");
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) || self.epsilon_end > self.epsilon_start {
            return bad("epsilon schedule must decrease within [0, 1]");
        }
        if !(self.reward_scale > 0.0) || !(self.demap_step_size > 0.0) || !(self.demap_probe_db > 0.0) {
            return bad("reward scale, demap step and probe must be positive");
        }
        if self.train_avg_snr_db[1] < self.train_avg_snr_db[0] {
            return bad("train_avg_snr_db must be ordered");
        }
        if self.episodes_per_epoch == 0 {
            return bad("episodes_per_epoch must be positive");
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        1 << self.bits
    }

    pub fn avg_quantizer(&self) -> UniformQuantizer {
        UniformQuantizer::new(self.avg_snr_range_db[0], self.avg_snr_range_db[1], self.avg_snr_bits)
            .expect("validated quantizer range")
    }

    pub fn inst_quantizer(&self) -> UniformQuantizer {
        UniformQuantizer::new(self.inst_snr_range_db[0], self.inst_snr_range_db[1], self.bits)
            .expect("validated quantizer range")
    }

    /// `[inputs, hidden..., actions]` for `n_subcarriers`.
    pub fn layer_sizes(&self, n_subcarriers: usize) -> Vec<usize> {
        let mut s = vec![n_subcarriers + 1];
        s.extend(&self.hidden_widths);
        s.push(self.levels());
        s
    }

    pub fn agent_params(&self) -> dqn::AgentParams {
        dqn::AgentParams {
            replay_capacity: self.replay_capacity,
            batch_size: self.batch_size,
            target_sync_interval: self.target_sync_interval,
            discount: self.discount,
            step_size: self.step_size,
        }
    }
}
