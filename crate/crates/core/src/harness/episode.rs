//! One transmission of a full source draw over the fading link.
//!
//! A trial is pre-sampled (source, coarse encoding, channel trace, noise
//! seeds) so it can be re-sent with different feedback values under
//! identical randomness.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::metrics::{psnr, PEAK_VALUE};
use super::scenario::{FeedbackMode, ScenarioConfig};
use crate::codec::{
    AdaptationMode, ChannelStatistics, CoarseDecoding, CoarseEncoded, CodecState, FineEncoded, RemainingPool, SourceConfig,
    SurrogateSource,
};
use crate::cqi::{select_action, CqiConfig, Policy, RlState, UniformQuantizer};
use crate::phy::{apply_channel, frequency_correlation, sample_channel_process, ChannelProcessConfig, ChannelRealization, OfdmModem};
use crate::receiver::{ls_estimate, zf_equalize, EstimationMethod, FreqResponseEstimate, LmmseFilter, ZF_EPSILON};
use crate::rng::{derive_seed, stream};
use crate::snr::{SnrReport, DEFAULT_BETA};
use crate::{Complex64, Error, Result};

/// Smallest noise variance used when describing a noiseless link's quality.
const REPORT_NOISE_FLOOR: f64 = 1e-30;

/// Channel draws behind the transmitter's channel statistics.
pub const STATISTICS_DRAWS: usize = 4096;

/// Quantiles of subcarrier gain the coarse design averages over.
pub const FADING_LEVELS: usize = 8;

/// Immutable per-scenario machinery shared by all trials.
#[derive(Debug)]
pub struct Link {
    pub codec: CodecState,
    pub modem: OfdmModem,
    pub channel: ChannelProcessConfig,
    pub source: SourceConfig,
    pub estimator: EstimationMethod,
    pub avg_quantizer: UniformQuantizer,
    /// What the transmitter knows about the channel law.
    pub stats: ChannelStatistics,
    pilot: Vec<Complex64>,
    freq_corr: Vec<Complex64>,
    lmmse_cache: Mutex<HashMap<u64, Arc<LmmseFilter>>>,
}

impl Link {
    pub fn new(s: &ScenarioConfig) -> Result<Self> {
        s.validate()?;
        let l_f = s.ofdm.n_subcarriers;
        let profile = s.channel.mean_gain_profile(l_f);
        let profile_db = profile.iter().map(|g| 10.0 * g.max(1e-30).log10()).collect();
        let (offsets, fading) = channel_law(&s.channel, s.ofdm.power_budget, l_f)?;
        let stats = ChannelStatistics::new(profile_db, offsets)?;
        Ok(Self {
            codec: CodecState::new(s.ofdm.clone(), s.codec.clone(), s.mode)?.with_fading(fading)?,
            modem: OfdmModem::new(&s.ofdm)?,
            channel: s.channel.clone(),
            source: s.source.clone(),
            estimator: s.estimator,
            avg_quantizer: s.cqi.avg_quantizer(),
            stats,
            pilot: vec![Complex64::new(1.0, 0.0); l_f],
            freq_corr: frequency_correlation(&s.channel.power_delay_profile, l_f),
            lmmse_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn power(&self) -> f64 {
        self.codec.ofdm().power_budget
    }

    pub fn mode(&self) -> AdaptationMode {
        self.codec.mode()
    }

    /// Noise variance giving average SNR `avg_snr_db`.
    pub fn noise_variance(&self, avg_snr_db: f64) -> f64 {
        self.power() / 10f64.powf(avg_snr_db / 10.0)
    }

    fn lmmse(&self, noise_variance: f64) -> Result<Arc<LmmseFilter>> {
        let key = noise_variance.to_bits();
        if let Some(f) = self.lmmse_cache.lock().expect("cache poisoned").get(&key) {
            return Ok(f.clone());
        }
        let cfg = self.codec.ofdm();
        // LS over N_p pilot symbols averages the noise down by N_p
        let ls_noise = noise_variance / cfg.n_pilot_symbols as f64;
        let f = Arc::new(LmmseFilter::new(&self.freq_corr, cfg.n_subcarriers, ls_noise, 1.0)?);
        self.lmmse_cache.lock().expect("cache poisoned").insert(key, f.clone());
        Ok(f)
    }
}

/// Effective-SNR offsets of many draws of the channel law, and midpoint
/// quantiles of the subcarrier gain (dB) over the same draws.
fn channel_law(channel: &ChannelProcessConfig, power: f64, l_f: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = stream(derive_seed(channel.rng_seed, 0x5747));
    let draws = sample_channel_process(channel, STATISTICS_DRAWS, l_f, power, &mut rng)?;
    let mut offsets = Vec::with_capacity(draws.len());
    let mut gains = Vec::with_capacity(draws.len() * l_f);
    for c in &draws {
        let r = SnrReport::new(&c.freq_response, power, power, DEFAULT_BETA)?;
        offsets.push(r.effective_db);
        gains.extend_from_slice(&r.subcarrier_db);
    }
    gains.sort_by(f64::total_cmp);
    let fading = (0..FADING_LEVELS)
        .map(|q| gains[((2 * q + 1) * gains.len()) / (2 * FADING_LEVELS)])
        .collect();
    Ok((offsets, fading))
}

/// Run-time feedback rule.
#[derive(Debug, Clone)]
pub enum FeedbackPolicy {
    Perfect,
    Average,
    Uniform(UniformQuantizer),
    Learned(Box<Policy>),
}

impl FeedbackPolicy {
    /// Builds the rule for `mode`, loading a policy file if needed.
    pub fn from_mode(mode: &FeedbackMode, cqi: &CqiConfig) -> Result<Self> {
        Ok(match mode {
            FeedbackMode::Perfect => Self::Perfect,
            FeedbackMode::Average => Self::Average,
            FeedbackMode::Uniform { bits } => {
                let [lo, hi] = cqi.inst_snr_range_db;
                Self::Uniform(UniformQuantizer::new(lo, hi, *bits)?)
            }
            FeedbackMode::Rl { bits, policy } => {
                let p = Policy::load(policy)?;
                if p.bits != *bits {
                    return Err(Error::Config(format!(
                        "policy {} has {} bits, scenario asks for {bits}",
                        policy.display(),
                        p.bits
                    )));
                }
                Self::Learned(Box::new(p))
            }
        })
    }

    /// Average SNR the transmitter designs for.
    pub fn avg_snr_hat(&self, link: &Link, avg_snr_db: f64) -> f64 {
        match self {
            Self::Perfect => avg_snr_db,
            _ => link.avg_quantizer.requantize(avg_snr_db),
        }
    }

    /// Reported CQI (if any) and the effective SNR the transmitter infers
    /// from it; `None` when there is no per-block report.
    pub fn report(&self, trial: &PreparedTrial, block: usize) -> Result<(Option<usize>, Option<f64>)> {
        let eff = trial.blocks[block].report.effective_db;
        Ok(match self {
            Self::Perfect => (None, Some(eff)),
            Self::Average => (None, None),
            Self::Uniform(q) => {
                let i = q.index(eff);
                (Some(i), Some(q.midpoint(i)))
            }
            Self::Learned(p) => {
                let features = trial.state(block).features();
                // greedy selection never draws from the stream
                let a = select_action(&features, &p.net, 0.0, &mut stream(0));
                (Some(a), Some(p.demap.snr_db(a)?))
            }
        })
    }
}

/// Pre-sampled state of one block.
#[derive(Debug, Clone)]
pub struct BlockContext {
    pub layer: usize,
    pub index: usize,
    pub channel: ChannelRealization,
    /// Channel quality computed from the true response.
    pub report: SnrReport,
    noise_seed: u64,
}

/// Squared error and erasures of one sent block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOutcome {
    pub sq_err: f64,
    pub erasures: usize,
}

/// Everything random about one trial, fixed up front.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub seed: u64,
    pub avg_snr_db: f64,
    pub avg_snr_hat_db: f64,
    pub noise_variance: f64,
    pub source: SurrogateSource,
    pub layers: Vec<CoarseEncoded>,
    pub blocks: Vec<BlockContext>,
    /// Squared error from coefficients that are never sent.
    pub masked_sq_err: f64,
}

impl PreparedTrial {
    pub fn prepare(link: &Link, cbr: f64, avg_snr_db: f64, avg_snr_hat_db: f64, seed: u64) -> Result<Self> {
        let source = SurrogateSource::sample(&link.source, derive_seed(seed, 0))?;
        let noise_variance = link.noise_variance(avg_snr_db);
        let mut layers = Vec::with_capacity(source.n_layers);
        let mut masked_sq_err = 0.0;
        for l in 0..source.n_layers {
            let (x, v) = source.layer(l);
            let enc = link.codec.coarse_encode(x, v, l, avg_snr_hat_db, cbr)?;
            let mut sent = vec![false; x.len()];
            for plan in &enc.plans {
                for &c in &plan.coefficient_index {
                    sent[c] = true;
                }
            }
            masked_sq_err += x.iter().zip(&sent).filter(|(_, s)| !**s).map(|(c, _)| c * c).sum::<f64>();
            layers.push(enc);
        }
        let n_blocks: usize = layers.iter().map(|e| e.blocks.len()).sum();
        let l_f = link.codec.ofdm().n_subcarriers;
        let mut chan_rng = stream(derive_seed(derive_seed(seed, 1), link.channel.rng_seed));
        let channels = if n_blocks > 0 {
            sample_channel_process(&link.channel, n_blocks, l_f, noise_variance, &mut chan_rng)?
        } else {
            Vec::new()
        };
        let report_noise = noise_variance.max(link.power() * REPORT_NOISE_FLOOR);
        let mut blocks = Vec::with_capacity(n_blocks);
        let mut channels = channels.into_iter();
        for (l, enc) in layers.iter().enumerate() {
            for index in 0..enc.blocks.len() {
                let g = blocks.len();
                let channel = channels.next().expect("one channel per block");
                let report = SnrReport::new(&channel.freq_response, link.power(), report_noise, DEFAULT_BETA)
                    .map_err(|e| e.at_block(g))?;
                blocks.push(BlockContext {
                    layer: l,
                    index,
                    channel,
                    report,
                    noise_seed: derive_seed(seed, 1000 + g as u64),
                });
            }
        }
        Ok(Self {
            seed,
            avg_snr_db,
            avg_snr_hat_db,
            noise_variance,
            source,
            layers,
            blocks,
            masked_sq_err,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Observation the CQI policy sees before block `g`.
    pub fn state(&self, g: usize) -> RlState {
        RlState {
            avg_snr_db: self.avg_snr_db,
            subcarrier_snrs_db: self.blocks[g].report.subcarrier_db.clone(),
        }
    }

    /// Sends every block in order, block `g` with the fine stage told
    /// `feedback[g]`.
    pub fn transmit(&self, link: &Link, feedback: &[Option<f64>]) -> Result<Vec<BlockOutcome>> {
        if feedback.len() != self.n_blocks() {
            return Err(Error::Contract(format!("{} feedback values for {} blocks", feedback.len(), self.n_blocks())));
        }
        let mut out = Vec::with_capacity(self.n_blocks());
        let mut pool: Option<RemainingPool> = None;
        for (g, ctx) in self.blocks.iter().enumerate() {
            if ctx.index == 0 {
                pool = Some(RemainingPool::new(&self.layers[ctx.layer]));
            }
            let pool = pool.as_mut().expect("layers start at index 0");
            let sent = link
                .codec
                .fine_encode(pool, feedback[g], &link.stats)
                .and_then(|sent| self.send(link, ctx, &sent))
                .map_err(|e| e.at_block(g))?;
            out.push(sent);
        }
        Ok(out)
    }

    fn send(&self, link: &Link, ctx: &BlockContext, sent: &FineEncoded) -> Result<BlockOutcome> {
        let codec = &link.codec;
        let plan = &sent.plan.coarse;
        let frame = link.modem.modulate(&sent.block, &link.pilot)?;
        let rx = apply_channel(&frame, &ctx.channel, &mut stream(ctx.noise_seed))?;
        let (mut data, pilots) = link.modem.demodulate(&rx)?;
        data.power_scale = sent.block.power_scale;
        data.layer_index = sent.block.layer_index;
        data.block_index = sent.block.block_index;

        let est = match link.estimator {
            EstimationMethod::Oracle => FreqResponseEstimate::oracle(&ctx.channel.freq_response),
            EstimationMethod::Ls => ls_estimate(&pilots, &link.pilot)?,
            EstimationMethod::Lmmse => link.lmmse(self.noise_variance)?.apply(&ls_estimate(&pilots, &link.pilot)?),
        };
        let eq = zf_equalize(&data, &est, ZF_EPSILON);
        let erasures = eq.erased.iter().filter(|e| **e).count();

        let estimates = if link.mode().fine_adaptive() {
            let report_noise = self.noise_variance.max(link.power() * REPORT_NOISE_FLOOR);
            let seen = SnrReport::new(&est.values, link.power(), report_noise, DEFAULT_BETA)?;
            let coarse_hat = codec.fine_decode(&eq.block, &sent.plan, &seen, &eq.erased)?;
            codec.decode_block(&coarse_hat, plan, CoarseDecoding::Refined, None)?
        } else {
            let snr_db = if link.mode().coarse_adaptive() {
                self.avg_snr_db
            } else {
                codec.config().anchor_db
            };
            codec.decode_block(&eq.block, plan, CoarseDecoding::Scalar { snr_db }, Some(&eq.erased))?
        };
        let (x, _) = self.source.layer(ctx.layer);
        let sq_err = plan
            .coefficient_index
            .iter()
            .zip(&estimates)
            .map(|(&c, e)| (x[c] - e) * (x[c] - e))
            .sum();
        Ok(BlockOutcome { sq_err, erasures })
    }

    /// Per-coefficient MSE given the squared errors of all blocks.
    pub fn mse_from(&self, block_sq_err: f64) -> f64 {
        (self.masked_sq_err + block_sq_err) / self.source.len() as f64
    }

    /// Complex channel symbols spent per source coefficient.
    pub fn cbr_actual(&self, link: &Link) -> f64 {
        (self.n_blocks() * link.codec.ofdm().symbols_per_block()) as f64 / self.source.len() as f64
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord {
    pub seed: u64,
    pub mse: f64,
    pub psnr_db: f64,
    pub cbr_actual: f64,
    pub avg_snr_hat_db: f64,
    pub effective_snr_db: Vec<f64>,
    pub feedback_snr_db: Vec<Option<f64>>,
    pub cqi: Vec<Option<usize>>,
    pub erasures: Vec<usize>,
}

/// Runs one trial end to end.
pub fn run_episode(link: &Link, policy: &FeedbackPolicy, cbr: f64, avg_snr_db: f64, seed: u64) -> Result<TransmissionRecord> {
    let hat = policy.avg_snr_hat(link, avg_snr_db);
    let trial = PreparedTrial::prepare(link, cbr, avg_snr_db, hat, seed)?;
    let n = trial.n_blocks();
    let mut rec = TransmissionRecord {
        seed,
        mse: 0.0,
        psnr_db: 0.0,
        cbr_actual: trial.cbr_actual(link),
        avg_snr_hat_db: hat,
        effective_snr_db: Vec::with_capacity(n),
        feedback_snr_db: Vec::with_capacity(n),
        cqi: Vec::with_capacity(n),
        erasures: Vec::with_capacity(n),
    };
    for g in 0..n {
        let (cqi, fb) = policy.report(&trial, g).map_err(|e| e.at_block(g))?;
        rec.effective_snr_db.push(trial.blocks[g].report.effective_db);
        rec.feedback_snr_db.push(fb);
        rec.cqi.push(cqi);
    }
    let outcomes = trial.transmit(link, &rec.feedback_snr_db)?;
    rec.erasures = outcomes.iter().map(|o| o.erasures).collect();
    rec.mse = trial.mse_from(outcomes.iter().map(|o| o.sq_err).sum());
    rec.psnr_db = psnr(rec.mse, PEAK_VALUE)?;
    Ok(rec)
}

/// Runs `n_trials` trials in parallel; trial `i` uses `derive_seed(seed, i)`
/// and results come back in trial order.
pub fn run_trials(
    link: &Link,
    policy: &FeedbackPolicy,
    cbr: f64,
    avg_snr_db: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<TransmissionRecord>> {
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_episode(link, policy, cbr, avg_snr_db, derive_seed(seed, i)))
        .collect()
}

/// Runs a scenario's trials with its own feedback mode.
pub fn run_scenario(s: &ScenarioConfig) -> Result<Vec<TransmissionRecord>> {
    let link = Link::new(s)?;
    let policy = FeedbackPolicy::from_mode(&s.feedback, &s.cqi)?;
    run_trials(&link, &policy, s.cbr, s.avg_snr_db, s.n_trials, s.seed)
}
