//! One-step sanity world: pick one of two fixed SNR levels to describe a
//! uniformly drawn SNR, paying the squared error.

use rand::Rng;

use super::dqn::{argmax, select_action, AgentParams, DqnAgent, Experience};
use super::qnet::QNetwork;
use super::FEATURE_SCALE;
use crate::rng::stream;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BanditWorld {
    /// SNRs are drawn uniformly from `[lo, hi)` dB.
    pub lo: f64,
    pub hi: f64,
    /// Demapped value of each action, dB.
    pub levels: Vec<f64>,
    /// Multiplies the negative squared error.
    pub reward_scale: f64,
}

impl Default for BanditWorld {
    fn default() -> Self {
        Self {
            lo: -5.0,
            hi: 25.0,
            levels: vec![2.5, 17.5],
            reward_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditTraining {
    pub steps: usize,
    pub hidden_widths: Vec<usize>,
    pub agent: AgentParams,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for BanditTraining {
    fn default() -> Self {
        Self {
            steps: 20_000,
            hidden_widths: vec![128, 64],
            agent: AgentParams {
                replay_capacity: 100_000,
                batch_size: 64,
                target_sync_interval: 100,
                discount: 0.9,
                step_size: 1e-3,
            },
            epsilon_start: 1.0,
            epsilon_end: 0.05,
        }
    }
}

impl BanditWorld {
    pub fn reward(&self, snr_db: f64, action: usize) -> f64 {
        -self.reward_scale * (snr_db - self.levels[action]).powi(2)
    }

    /// Mean squared error of the threshold rule "action 0 below `t`",
    /// integrated exactly over the uniform SNR law.
    pub fn threshold_distortion(&self, t: f64) -> f64 {
        let t = t.clamp(self.lo, self.hi);
        // integral of (x - c)^2 over [a, b]
        let seg = |a: f64, b: f64, c: f64| ((b - c).powi(3) - (a - c).powi(3)) / 3.0;
        (seg(self.lo, t, self.levels[0]) + seg(t, self.hi, self.levels[1])) / (self.hi - self.lo)
    }

    /// Exhaustive search over thresholds on a `resolution` dB grid.
    pub fn optimal_threshold(&self, resolution: f64) -> f64 {
        let n = ((self.hi - self.lo) / resolution).round() as usize;
        let mut best = (f64::INFINITY, self.lo);
        for i in 0..=n {
            let t = self.lo + i as f64 * resolution;
            let d = self.threshold_distortion(t);
            if d < best.0 {
                best = (d, t);
            }
        }
        best.1
    }

    /// SNRs on a `resolution` grid where the greedy action changes.
    pub fn policy_switch_points(&self, net: &QNetwork, resolution: f64) -> Vec<f64> {
        let n = ((self.hi - self.lo) / resolution).round() as usize;
        let act = |x: f64| argmax(&net.forward(&[x * FEATURE_SCALE]));
        let mut prev = act(self.lo);
        let mut out = Vec::new();
        for i in 1..=n {
            let x = self.lo + i as f64 * resolution;
            let a = act(x);
            if a != prev {
                out.push(x - 0.5 * resolution);
                prev = a;
            }
        }
        out
    }

    /// Trains a value network on this world with one update per step.
    pub fn train(&self, cfg: &BanditTraining, seed: u64) -> Result<DqnAgent> {
        let mut rng = stream(seed);
        let mut sizes = vec![1];
        sizes.extend(&cfg.hidden_widths);
        sizes.push(self.levels.len());
        let mut agent = DqnAgent::new(QNetwork::random(&sizes, &mut rng), cfg.agent.clone());
        for step in 0..cfg.steps {
            let frac = step as f64 / cfg.steps.max(1) as f64;
            let eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
            let snr = rng.random_range(self.lo..self.hi);
            let state = vec![snr * FEATURE_SCALE];
            let action = select_action(&state, &agent.net, eps, &mut rng);
            agent.replay.push(Experience {
                state,
                action,
                reward: self.reward(snr, action),
                next: None,
            });
            agent.learn(&mut rng)?;
        }
        Ok(agent)
    }
}
