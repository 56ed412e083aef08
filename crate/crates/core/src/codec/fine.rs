//! Block-level re-weighting from instantaneous channel quality.

use std::collections::VecDeque;

use super::coarse::{BlockPlan, CoarseEncoded};
use super::waterfill::{mmse_shrink, mmse_waterfill};
use super::{design_noise, noise_at, CodecState};
use crate::phy::{normalize_power, SymbolBlock};
use crate::snr::SnrReport;
use crate::{Error, Result};

/// Coarse blocks of one layer not yet sent. Confined to one episode.
#[derive(Debug, Clone)]
pub struct RemainingPool {
    queue: VecDeque<(SymbolBlock, BlockPlan)>,
}

impl RemainingPool {
    pub fn new(enc: &CoarseEncoded) -> Self {
        Self {
            queue: enc.blocks.iter().cloned().zip(enc.plans.iter().cloned()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn head(&self) -> Option<&SymbolBlock> {
        self.queue.front().map(|(b, _)| b)
    }
}

/// What the transmitter knows about the channel law, independent of any
/// single block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelStatistics {
    /// Mean per-subcarrier gain in dB; empty means flat.
    pub mean_profile_db: Vec<f64>,
    /// Sorted draws of block effective SNR minus average SNR, dB. Empty
    /// disables content reordering.
    pub effective_offsets_db: Vec<f64>,
}

impl ChannelStatistics {
    pub fn new(mean_profile_db: Vec<f64>, mut effective_offsets_db: Vec<f64>) -> Result<Self> {
        if effective_offsets_db.iter().chain(&mean_profile_db).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("channel statistics must be finite".into()));
        }
        effective_offsets_db.sort_by(f64::total_cmp);
        Ok(Self { mean_profile_db, effective_offsets_db })
    }

    pub fn mean_offset_db(&self) -> f64 {
        if self.effective_offsets_db.is_empty() {
            return 0.0;
        }
        self.effective_offsets_db.iter().sum::<f64>() / self.effective_offsets_db.len() as f64
    }

    /// Fraction of draws whose offset exceeds `offset_db`.
    pub fn prob_better(&self, offset_db: f64) -> f64 {
        let n = self.effective_offsets_db.len();
        if n == 0 {
            return 0.0;
        }
        let below = self.effective_offsets_db.partition_point(|&x| x <= offset_db);
        (n - below) as f64 / n as f64
    }

    /// Pool position to send now when `remaining` blocks are left. The
    /// current block takes the slot matching its expected rank among the
    /// remaining blocks; halves round toward the head.
    pub fn pick(&self, offset_db: f64, remaining: usize) -> usize {
        if remaining <= 1 {
            return 0;
        }
        let rank = (remaining - 1) as f64 * self.prob_better(offset_db);
        ((rank - 0.5).ceil().max(0.0) as usize).min(remaining - 1)
    }
}

/// How one transmitted block was derived from its coarse block.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePlan {
    pub coarse: BlockPlan,
    /// Normalisation scalar of the coarse block.
    pub coarse_scale: f64,
    /// Real slot carrying coarse position `j`.
    pub slot_of_position: Vec<usize>,
    /// Slot powers after re-weighting, summing to the block budget.
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineEncoded {
    pub block: SymbolBlock,
    pub plan: FinePlan,
}

impl CodecState {
    /// Removes one block from `pool` and produces the block to transmit now.
    ///
    /// `inst_snr_q` is the fed-back effective SNR of the coming block, or
    /// `None` when no instantaneous report exists; then the head block goes
    /// out unchanged. Otherwise the block's offset from the coarse operating
    /// point is ranked against `stats`: a block expected to beat the others
    /// carries the most important remaining content, a poor one defers it.
    /// The chosen block's most powerful positions move to the strongest mean
    /// subcarriers, and slot powers shift by the difference between
    /// water-filling at the reported SNR (less the mean offset) and at the
    /// operating point. With empty statistics, a report at the operating
    /// point changes nothing. In modes without fine adaptation the head
    /// block is returned as is.
    pub fn fine_encode(&self, pool: &mut RemainingPool, inst_snr_q: Option<f64>, stats: &ChannelStatistics) -> Result<FineEncoded> {
        let front = pool
            .queue
            .front()
            .ok_or_else(|| Error::Contract("fine_encode called with no remaining blocks".into()))?;
        let pick = match inst_snr_q {
            Some(snr) if self.mode.fine_adaptive() => stats.pick(snr - front.1.design_db, pool.len()),
            _ => 0,
        };
        let (head, coarse) = pool.queue.remove(pick).expect("pick within pool");
        match inst_snr_q {
            Some(snr) => self.fine_encode_head(head, coarse, snr - stats.mean_offset_db(), &stats.mean_profile_db),
            None => Ok(self.passthrough(head, coarse)),
        }
    }

    fn passthrough(&self, head: SymbolBlock, coarse: BlockPlan) -> FineEncoded {
        let plan = FinePlan {
            slot_of_position: (0..coarse.len()).collect(),
            powers: coarse.powers.clone(),
            coarse_scale: head.power_scale,
            coarse,
        };
        FineEncoded { block: head, plan }
    }

    /// Re-weights a chosen coarse block for design SNR `design_snr_db`.
    pub fn fine_encode_head(
        &self,
        head: SymbolBlock,
        coarse: BlockPlan,
        design_snr_db: f64,
        mean_profile_db: &[f64],
    ) -> Result<FineEncoded> {
        let l_f = self.ofdm.n_subcarriers;
        if !mean_profile_db.is_empty() && mean_profile_db.len() != l_f {
            return Err(Error::InvalidInput(format!(
                "mean profile has {} entries, expected {l_f}",
                mean_profile_db.len()
            )));
        }
        if !self.mode.fine_adaptive() {
            return Ok(self.passthrough(head, coarse));
        }
        let n = coarse.len();

        let rel_gain = relative_gains(mean_profile_db, l_f);
        let spc = self.ofdm.slots_per_subcarrier();
        let flat = rel_gain.iter().all(|&g| g == rel_gain[0]);
        let slot_of_position: Vec<usize> = if flat {
            (0..n).collect()
        } else {
            let mut by_gain: Vec<usize> = (0..l_f).collect();
            by_gain.sort_by(|&a, &b| rel_gain[b].total_cmp(&rel_gain[a]));
            let mut by_power: Vec<usize> = (0..n).collect();
            by_power.sort_by(|&a, &b| coarse.powers[b].total_cmp(&coarse.powers[a]));
            let mut slots = vec![0; n];
            for (rank, &j) in by_power.iter().enumerate() {
                slots[j] = by_gain[rank / spc] * spc + rank % spc;
            }
            slots
        };

        let active: Vec<usize> = (0..n).filter(|&j| coarse.powers[j] > 0.0).collect();
        let base = design_noise(self.ofdm.power_budget, design_snr_db);
        let var: Vec<f64> = active.iter().map(|&j| coarse.variances[j]).collect();
        let noise: Vec<f64> = active
            .iter()
            .map(|&j| base / rel_gain[slot_of_position[j] / spc])
            .collect();
        let target = mmse_waterfill(&var, &noise, self.block_power());
        let mut powers = vec![0.0; n];
        for (a, &j) in active.iter().enumerate() {
            powers[j] = (target[a] + coarse.powers[j] - coarse.anchor_powers[j]).max(0.0);
        }
        let spent: f64 = powers.iter().sum();
        if spent > 0.0 {
            let fix = self.block_power() / spent;
            for p in &mut powers {
                *p *= fix;
            }
        }

        let mut block = SymbolBlock::zeros(&self.ofdm, head.layer_index, head.block_index);
        for &j in &active {
            let v = head.slot(&self.ofdm, j) * (powers[j] / coarse.powers[j]).sqrt();
            block.set_slot(&self.ofdm, slot_of_position[j], v);
        }
        block.power_scale = head.power_scale;
        let block = normalize_power(&block, self.ofdm.power_budget).map_err(|e| e.at_block(head.block_index))?;
        Ok(FineEncoded {
            block,
            plan: FinePlan {
                coarse,
                coarse_scale: head.power_scale,
                slot_of_position,
                powers,
            },
        })
    }

    /// Estimates the coarse block behind an equalised received block.
    ///
    /// Each slot gets linear MMSE shrinkage at the noise implied by its
    /// subcarrier's SNR in `report`; erased subcarriers and unpowered slots
    /// give zero. The result is laid out like the coarse block and carries
    /// its normalisation scalar.
    pub fn fine_decode(&self, received: &SymbolBlock, plan: &FinePlan, report: &SnrReport, erased: &[bool]) -> Result<SymbolBlock> {
        let l_f = self.ofdm.n_subcarriers;
        if received.symbols.len() != self.ofdm.symbols_per_block() {
            return Err(Error::Framing(format!("received block has {} symbols", received.symbols.len())));
        }
        if report.subcarrier_db.len() != l_f || (!erased.is_empty() && erased.len() != l_f) {
            return Err(Error::InvalidInput("report or erasure mask does not match subcarrier count".into()));
        }
        let spc = self.ofdm.slots_per_subcarrier();
        let mut out = SymbolBlock::zeros(&self.ofdm, received.layer_index, received.block_index);
        out.power_scale = plan.coarse_scale;
        for j in 0..plan.coarse.len() {
            let slot = plan.slot_of_position[j];
            let k = slot / spc;
            if plan.powers[j] <= 0.0 || erased.get(k).copied().unwrap_or(false) {
                continue;
            }
            let v = plan.coarse.variances[j];
            let amp = received.power_scale * (plan.powers[j] / v).sqrt();
            let noise = noise_at(self.ofdm.power_budget, report.subcarrier_db[k]);
            let x = mmse_shrink(amp, v, noise) * received.slot(&self.ofdm, slot);
            out.set_slot(&self.ofdm, j, plan.coarse_scale * plan.coarse.gain(j) * x);
        }
        Ok(out)
    }
}

/// Linear subcarrier gains relative to their mean; flat when `profile_db` is empty.
fn relative_gains(profile_db: &[f64], l_f: usize) -> Vec<f64> {
    if profile_db.is_empty() {
        return vec![1.0; l_f];
    }
    let lin: Vec<f64> = profile_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
    let mean = lin.iter().sum::<f64>() / lin.len() as f64;
    lin.iter().map(|g| g / mean).collect()
}
