//! Alternating training of the CQI value network and the demapper.
//!
//! Each round first fits the value network with the demapper frozen, then
//! fits the demapper to episode distortion with the value network frozen and
//! acting greedily. Rollouts inside an epoch run in parallel from per-episode
//! seeds against a snapshot of the parameters; updates are applied
//! sequentially in episode order, so a seed fixes the whole run.

use rand::Rng;
use rayon::prelude::*;

use super::demap::{DemapAdam, DemapGradient, DemapParams};
use super::dqn::{select_action, DqnAgent, Experience};
use super::policy_io::Policy;
use super::qnet::QNetwork;
use super::reward::compute_reward;
use super::{CqiConfig, DemapInit};
use crate::harness::metrics::{fmt_sig, psnr, PEAK_VALUE};
use crate::harness::{Link, PreparedTrial, ScenarioConfig};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Episodes sampled for the minimum-deviation demapper start.
const LLOYD_EPISODES: usize = 256;
const LLOYD_ITERATIONS: usize = 50;

pub const LOG_HEADER: &str = "epoch,phase,loss,mean_reward,mean_distortion,epsilon";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Value,
    Demap,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Self::Value => "value",
            Self::Demap => "demap",
        }
    }
}

/// One epoch's summary. `loss` is the mean DQN loss (NaN before the replay
/// holds a batch) in value epochs and the mean distortion in dB in demap
/// epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_distortion: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                r.phase.name(),
                fmt_sig(r.loss, 6),
                fmt_sig(r.mean_reward, 6),
                fmt_sig(r.mean_distortion, 6),
                fmt_sig(r.epsilon, 6)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub log: TrainingLog,
    pub updates: u64,
    pub syncs: u64,
}

/// One rollout's transitions and outcome.
struct Rollout {
    experiences: Vec<Experience>,
    mse: f64,
}

/// What every rollout shares.
struct Env<'a> {
    link: &'a Link,
    cfg: &'a CqiConfig,
    cbr: f64,
}

impl Env<'_> {
    /// Draws the episode's average SNR and prepares its trial.
    fn trial(&self, episode_seed: u64) -> Result<PreparedTrial> {
        let [lo, hi] = self.cfg.train_avg_snr_db;
        let avg = if hi > lo { stream(derive_seed(episode_seed, 2)).random_range(lo..hi) } else { lo };
        let hat = self.cfg.avg_quantizer().requantize(avg);
        PreparedTrial::prepare(self.link, self.cbr, avg, hat, derive_seed(episode_seed, 0))
    }
}

fn episode_mse(trial: &PreparedTrial, link: &Link, feedback: &[Option<f64>]) -> Result<f64> {
    let out = trial.transmit(link, feedback)?;
    Ok(trial.mse_from(out.iter().map(|o| o.sq_err).sum()))
}

fn rollout(env: &Env, net: &QNetwork, demap: &DemapParams, epsilon: f64, eta: f64, episode_seed: u64) -> Result<Rollout> {
    let trial = env.trial(episode_seed)?;
    let mut rng = stream(derive_seed(episode_seed, 1));
    let n = trial.n_blocks();
    let states: Vec<Vec<f64>> = (0..n).map(|g| trial.state(g).features()).collect();
    let actions: Vec<usize> = states.iter().map(|s| select_action(s, net, epsilon, &mut rng)).collect();
    let feedback = actions.iter().map(|&a| demap.snr_db(a).map(Some)).collect::<Result<Vec<_>>>()?;
    let mse = episode_mse(&trial, env.link, &feedback)?;
    let psnr_db = psnr(mse, PEAK_VALUE)?;
    let experiences = (0..n)
        .map(|g| Experience {
            state: states[g].clone(),
            action: actions[g],
            reward: compute_reward(
                psnr_db,
                trial.blocks[g].report.effective_db,
                feedback[g].expect("every block has a report"),
                env.cfg.reward_scale,
                eta,
            ),
            next: states.get(g + 1).cloned(),
        })
        .collect();
    Ok(Rollout { experiences, mse })
}

/// Gradient of the greedy episode's distortion (dB) w.r.t. the demapper, by
/// central differences on each block's demapped SNR.
fn demap_gradient(env: &Env, net: &QNetwork, demap: &DemapParams, episode_seed: u64) -> Result<(DemapGradient, f64)> {
    let (link, trial) = (env.link, env.trial(episode_seed)?);
    let mut unused = stream(0);
    let actions: Vec<usize> = (0..trial.n_blocks())
        .map(|g| select_action(&trial.state(g).features(), net, 0.0, &mut unused))
        .collect();
    let base: Vec<Option<f64>> = actions.iter().map(|&a| demap.snr_db(a).map(Some)).collect::<Result<_>>()?;
    let mse = episode_mse(&trial, link, &base)?;
    let db = |m: f64| 10.0 * m.max(f64::MIN_POSITIVE).log10();
    let h = env.cfg.demap_probe_db;
    let mut grad = DemapGradient::zeros_like(demap);
    for (m, &a) in actions.iter().enumerate() {
        let mut fb = base.clone();
        let centre = base[m].expect("every block has a report");
        fb[m] = Some(centre + h);
        let up = episode_mse(&trial, link, &fb)?;
        fb[m] = Some(centre - h);
        let down = episode_mse(&trial, link, &fb)?;
        grad.add_scaled(&demap.gradient(a), (db(up) - db(down)) / (2.0 * h));
    }
    Ok((grad, mse))
}

/// Scalar Lloyd-Max iteration: levels minimising squared deviation of
/// `samples` from their nearest level. A level whose cell empties keeps its
/// value. Output stays sorted when `init` is.
pub fn lloyd_levels(samples: &[f64], init: &[f64], iterations: usize) -> Vec<f64> {
    let mut levels = init.to_vec();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    for _ in 0..iterations {
        let mut lo = 0;
        let mut next = levels.clone();
        for i in 0..levels.len() {
            let hi = match levels.get(i + 1) {
                Some(up) => sorted.partition_point(|&x| x < 0.5 * (levels[i] + up)),
                None => sorted.len(),
            };
            if hi > lo {
                next[i] = sorted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            }
            lo = hi;
        }
        if next == levels {
            break;
        }
        levels = next;
    }
    levels
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Linear interpolation from `start` to `end` at step `i` of `n`.
fn schedule(start: f64, end: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        start
    } else {
        start + (end - start) * i as f64 / (n - 1) as f64
    }
}

/// Trains a CQI policy on `scenario`'s link. The scenario's average SNR is
/// ignored; episodes draw it from `cfg.train_avg_snr_db`.
pub fn train_alternating(cfg: &CqiConfig, scenario: &ScenarioConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let link = Link::new(scenario)?;
    let env = Env {
        link: &link,
        cfg,
        cbr: scenario.cbr,
    };
    let l_f = scenario.ofdm.n_subcarriers;
    let mut rng = stream(seed);
    let net = QNetwork::random(&cfg.layer_sizes(l_f), &mut rng);
    let mut agent = DqnAgent::new(net, cfg.agent_params());
    let mut episode = 0u64;
    let mut next_seeds = |count: usize| -> Vec<u64> {
        let s = (0..count as u64).map(|i| derive_seed(seed, 1 + episode + i)).collect();
        episode += count as u64;
        s
    };
    let mut table = cfg.inst_quantizer().midpoints();
    if cfg.demap_init == DemapInit::Lloyd {
        let effective = next_seeds(LLOYD_EPISODES)
            .par_iter()
            .map(|&s| Ok(env.trial(s)?.blocks.iter().map(|b| b.report.effective_db).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?
            .concat();
        table = lloyd_levels(&effective, &table, LLOYD_ITERATIONS);
    }
    let mut demap = DemapParams::from_table(&table, cfg.demap_hidden);
    let mut demap_opt = DemapAdam::new(&demap, cfg.demap_step_size);
    let mut log = TrainingLog::default();
    let value_epochs = cfg.rounds * cfg.value_epochs;
    let mut value_epoch = 0;

    for round in 0..cfg.rounds {
        let eta = schedule(cfg.deviation_weight_start, cfg.deviation_weight_end, round, cfg.rounds);
        for _ in 0..cfg.value_epochs {
            let epsilon = schedule(cfg.epsilon_start, cfg.epsilon_end, value_epoch, value_epochs);
            let seeds = next_seeds(cfg.episodes_per_epoch);
            let snapshot = agent.net.clone();
            let rollouts = seeds
                .par_iter()
                .map(|&s| rollout(&env, &snapshot, &demap, epsilon, eta, s))
                .collect::<Result<Vec<_>>>()?;
            let mut losses = Vec::new();
            for e in rollouts.iter().flat_map(|r| &r.experiences) {
                agent.replay.push(e.clone());
                for _ in 0..cfg.updates_per_experience {
                    if let Some(loss) = agent.learn(&mut rng)? {
                        losses.push(loss);
                    }
                }
            }
            let row = LogRow {
                epoch: log.rows.len(),
                phase: Phase::Value,
                loss: mean(losses.iter().copied()),
                mean_reward: mean(rollouts.iter().flat_map(|r| &r.experiences).map(|e| e.reward)),
                mean_distortion: mean(rollouts.iter().map(|r| r.mse)),
                epsilon,
            };
            let worst = losses.iter().copied().fold(0.0, f64::max);
            log.rows.push(row);
            if !(worst <= cfg.divergence_loss) {
                return Err(Error::Diverged {
                    epoch: log.rows.len() - 1,
                    loss: worst,
                    log_csv: log.to_csv(),
                });
            }
            value_epoch += 1;
        }
        for _ in 0..cfg.demap_epochs {
            let seeds = next_seeds(cfg.episodes_per_epoch);
            let results = seeds
                .par_iter()
                .map(|&s| demap_gradient(&env, &agent.net, &demap, s))
                .collect::<Result<Vec<_>>>()?;
            for (g, _) in &results {
                demap_opt.apply(&mut demap, g)?;
            }
            log.rows.push(LogRow {
                epoch: log.rows.len(),
                phase: Phase::Demap,
                loss: mean(results.iter().map(|(_, m)| 10.0 * m.log10())),
                mean_reward: f64::NAN,
                mean_distortion: mean(results.iter().map(|(_, m)| *m)),
                epsilon: 0.0,
            });
        }
    }
    Ok(TrainOutcome {
        policy: Policy {
            bits: cfg.bits,
            n_subcarriers: l_f,
            net: agent.net.clone(),
            demap,
        },
        updates: agent.updates(),
        syncs: agent.syncs(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CqiConfig {
        CqiConfig {
            bits: 1,
            hidden_widths: vec![8],
            batch_size: 4,
            target_sync_interval: 3,
            rounds: 2,
            value_epochs: 2,
            demap_epochs: 1,
            episodes_per_epoch: 4,
            demap_init: DemapInit::Uniform,
            ..CqiConfig::default()
        }
    }

    #[test]
    fn schedule_hits_both_ends() {
        assert_eq!(schedule(1.0, 0.05, 0, 5), 1.0);
        assert!((schedule(1.0, 0.05, 4, 5) - 0.05).abs() < 1e-15);
        assert_eq!(schedule(-1.0, -0.1, 0, 1), -1.0);
    }

    #[test]
    fn lloyd_finds_cluster_means() {
        let xs = [0.0, 0.0, 1.0, 1.0, 10.0, 10.0, 11.0, 11.0];
        assert_eq!(lloyd_levels(&xs, &[2.0, 8.0], 50), vec![0.5, 10.5]);
        // the top level's cell is empty and keeps its value
        assert_eq!(lloyd_levels(&[1.0, 3.0], &[0.0, 100.0], 50), vec![2.0, 100.0]);
    }

    #[test]
    fn training_is_deterministic_and_logs_schedule() {
        let s = ScenarioConfig::default();
        let a = train_alternating(&tiny(), &s, 5).unwrap();
        let b = train_alternating(&tiny(), &s, 5).unwrap();
        assert_eq!(a.policy.to_bytes(), b.policy.to_bytes());
        assert_eq!(a.log.to_csv(), b.log.to_csv());
        let c = train_alternating(&tiny(), &s, 6).unwrap();
        assert_ne!(a.policy.to_bytes(), c.policy.to_bytes());

        let value: Vec<&LogRow> = a.log.rows.iter().filter(|r| r.phase == Phase::Value).collect();
        assert_eq!(value.len(), 4);
        assert_eq!(a.log.rows.len(), 6);
        assert_eq!(value[0].epsilon, 1.0);
        assert!((value[3].epsilon - 0.05).abs() < 1e-12);
        assert!(value.windows(2).all(|w| w[1].epsilon <= w[0].epsilon));
        assert_eq!(a.syncs, a.updates / 3);
        assert!(a.updates > 0);
        assert!(a.log.to_csv().starts_with(LOG_HEADER));
    }

    #[test]
    fn divergence_is_reported_with_log() {
        let cfg = CqiConfig {
            divergence_loss: 1e-300,
            ..tiny()
        };
        match train_alternating(&cfg, &ScenarioConfig::default(), 5) {
            Err(Error::Diverged { log_csv, .. }) => assert!(log_csv.starts_with(LOG_HEADER)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn lloyd_start_stays_sorted_inside_support() {
        let cfg = CqiConfig {
            bits: 2,
            rounds: 1,
            value_epochs: 0,
            demap_epochs: 0,
            demap_init: DemapInit::Lloyd,
            ..tiny()
        };
        let out = train_alternating(&cfg, &ScenarioConfig::default(), 3).unwrap();
        let t = out.policy.demap.table();
        assert!(t.windows(2).all(|w| w[0] < w[1]), "{t:?}");
        assert!(t[0] > -30.0 && t[3] < 40.0, "{t:?}");
    }
}
