//! Layer-level encoding: ordering, rate allocation, masking, regrouping and
//! the average-SNR power tables; and the matching layer-level decoder.

use std::fmt::Write as _;

use super::alloc::allocate_rates;
use super::waterfill::{mmse_shrink, mmse_waterfill};
use super::{design_noise, noise_at, CodecState, RateAllocation};
use crate::phy::{normalize_power, SymbolBlock};
use crate::{Error, Result};

/// What the transmitter did with the coefficients of one block.
///
/// Position `j` of the block holds coefficient `coefficient_index[j]`
/// (layer-local) at real slot `j`; positions past `len()` are padding.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    pub coefficient_index: Vec<usize>,
    pub variances: Vec<f64>,
    /// Coarse slot powers, summing to the block budget.
    pub powers: Vec<f64>,
    /// Flat-channel water-filling at the coarse operating point; equals
    /// `powers` when the coarse stage tracks the fed-back SNR.
    pub anchor_powers: Vec<f64>,
    /// Coarse operating point, dB.
    pub design_db: f64,
}

impl BlockPlan {
    pub fn len(&self) -> usize {
        self.coefficient_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficient_index.is_empty()
    }

    /// Amplitude gain of position `j` before block normalisation.
    pub fn gain(&self, j: usize) -> f64 {
        (self.powers[j] / self.variances[j]).sqrt()
    }
}

/// Coarse-encoded layer: blocks in transmission order plus the tables the
/// receiver needs to undo them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEncoded {
    pub blocks: Vec<SymbolBlock>,
    pub plans: Vec<BlockPlan>,
    pub alloc: RateAllocation,
    pub layer_index: usize,
    /// Layer-local indices sorted by decreasing variance.
    pub order: Vec<usize>,
    pub layer_len: usize,
    /// Per-component kept-prefix length of its sequence, in layer-local order.
    component_length: Vec<usize>,
}

impl CoarseEncoded {
    /// Coefficients sent plus coefficients masked; always the layer length.
    pub fn accounted(&self) -> usize {
        self.plans.iter().map(BlockPlan::len).sum::<usize>() + self.alloc.masked()
    }

    /// Allocation table, one row per component:
    /// `component,variance,length,gain` where `length` is the kept length
    /// of the component's sequence and `gain` is zero for masked components.
    pub fn allocation_csv(&self) -> String {
        let mut variance = vec![0.0; self.layer_len];
        let mut gain = vec![0.0; self.layer_len];
        for plan in &self.plans {
            for j in 0..plan.len() {
                gain[plan.coefficient_index[j]] = plan.gain(j);
            }
        }
        let mut out = String::from("component,variance,length,gain\n");
        for plan in &self.plans {
            for (j, &c) in plan.coefficient_index.iter().enumerate() {
                variance[c] = plan.variances[j];
            }
        }
        for c in 0..self.layer_len {
            let _ = writeln!(out, "{c},{:e},{},{:e}", variance[c], self.component_length[c], gain[c]);
        }
        out
    }
}

/// How [`CodecState::coarse_decode`] turns received values into coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoarseDecoding {
    /// Blocks already hold MMSE estimates of the coarse symbols; only the
    /// coarse gains are inverted.
    Refined,
    /// Blocks hold equalised channel outputs; apply scalar MMSE assuming a
    /// flat channel at this average SNR (dB).
    Scalar { snr_db: f64 },
}

impl CodecState {
    /// Encodes one layer.
    ///
    /// Components are ordered by decreasing variance and cut into sequences;
    /// each sequence keeps an entropy-proportional prefix of the
    /// `2 * round(cbr * n)` real values the layer may use. Kept values are
    /// packed into blocks in sequence order with zero padding at the end,
    /// scaled by the coarse power table, and each block is normalised to the
    /// power budget. The table follows `avg_snr_q` (dB) in coarse-adaptive
    /// modes and the design grid otherwise.
    pub fn coarse_encode(
        &self,
        coefficients: &[f64],
        variances: &[f64],
        layer_index: usize,
        avg_snr_q: f64,
        cbr: f64,
    ) -> Result<CoarseEncoded> {
        if coefficients.len() != variances.len() {
            return Err(Error::InvalidInput("coefficient and variance lengths differ".into()));
        }
        if !(cbr.is_finite() && cbr >= 0.0) {
            return Err(Error::InvalidInput(format!("cbr must be a nonnegative ratio, got {cbr}")));
        }
        if variances.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidInput("variances must be positive and finite".into()));
        }
        let n = coefficients.len();
        let budget = 2 * (cbr * n as f64).round() as usize;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
        let sorted_var: Vec<f64> = order.iter().map(|&i| variances[i]).collect();
        let seqs: Vec<&[f64]> = sorted_var.chunks(self.cfg.sequence_len).collect();
        let mut alloc = allocate_rates(&seqs, self.cfg.alpha, budget);
        let capacity = self.ofdm.real_slots_per_block();
        alloc.frame(capacity);

        let mut component_length = vec![0; n];
        let mut kept = Vec::with_capacity(alloc.transmitted());
        for (o, chunk) in order.chunks(self.cfg.sequence_len).enumerate() {
            for &c in chunk {
                component_length[c] = alloc.lengths[o];
            }
            kept.extend_from_slice(&chunk[..alloc.lengths[o]]);
        }

        let p = self.ofdm.power_budget;
        let block_power = self.block_power();
        let mut blocks = Vec::with_capacity(alloc.n_blocks);
        let mut plans = Vec::with_capacity(alloc.n_blocks);
        for (b, members) in kept.chunks(capacity).enumerate() {
            let var: Vec<f64> = members.iter().map(|&c| variances[c]).collect();
            let anchor_db = if self.mode.coarse_adaptive() { avg_snr_q } else { self.cfg.anchor_db };
            let anchor_powers = mmse_waterfill(&var, &vec![design_noise(p, anchor_db); var.len()], block_power);
            let design = self.mode.coarse_adaptive().then_some(avg_snr_q);
            let powers = self.coarse_powers(&var, design).to_vec();
            let plan = BlockPlan {
                coefficient_index: members.to_vec(),
                variances: var,
                powers,
                anchor_powers,
                design_db: anchor_db,
            };
            let mut block = SymbolBlock::zeros(&self.ofdm, layer_index, b);
            for (j, &c) in members.iter().enumerate() {
                block.set_slot(&self.ofdm, j, plan.gain(j) * coefficients[c]);
            }
            blocks.push(normalize_power(&block, p).map_err(|e| e.at_block(b))?);
            plans.push(plan);
        }
        Ok(CoarseEncoded {
            blocks,
            plans,
            alloc,
            layer_index,
            order,
            layer_len: n,
            component_length,
        })
    }

    /// Rebuilds a layer from its received blocks. Masked coefficients and
    /// positions on erased subcarriers come back as the prior mean (zero).
    ///
    /// `erased[b][k]` flags subcarrier `k` of block `b`; pass an empty slice
    /// when nothing is erased.
    pub fn coarse_decode(
        &self,
        blocks: &[SymbolBlock],
        enc: &CoarseLayout<'_>,
        decoding: CoarseDecoding,
        erased: &[Vec<bool>],
    ) -> Result<Vec<f64>> {
        let CoarseLayout { plans, alloc, layer_len } = *enc;
        if blocks.len() != alloc.n_blocks || plans.len() != alloc.n_blocks {
            return Err(Error::Framing(format!(
                "expected {} blocks, got {} blocks and {} plans",
                alloc.n_blocks,
                blocks.len(),
                plans.len()
            )));
        }
        if !erased.is_empty() && erased.len() != blocks.len() {
            return Err(Error::Framing("erasure masks do not match block count".into()));
        }
        let mut out = vec![0.0; layer_len];
        for (b, (block, plan)) in blocks.iter().zip(plans).enumerate() {
            let est = self
                .decode_block(block, plan, decoding, erased.get(b).map(Vec::as_slice))
                .map_err(|e| e.at_block(b))?;
            for (j, &c) in plan.coefficient_index.iter().enumerate() {
                if c >= layer_len {
                    return Err(Error::Framing(format!("coefficient index {c} outside layer")).at_block(b));
                }
                out[c] = est[j];
            }
        }
        Ok(out)
    }
}

impl CodecState {
    /// Coefficient estimates for the positions of one block, in plan order.
    pub fn decode_block(
        &self,
        block: &SymbolBlock,
        plan: &BlockPlan,
        decoding: CoarseDecoding,
        erased: Option<&[bool]>,
    ) -> Result<Vec<f64>> {
        if block.symbols.len() != self.ofdm.symbols_per_block() {
            return Err(Error::Framing(format!("block has {} symbols", block.symbols.len())));
        }
        let spc = self.ofdm.slots_per_subcarrier();
        let noise = match decoding {
            CoarseDecoding::Refined => 0.0,
            CoarseDecoding::Scalar { snr_db } => noise_at(self.ofdm.power_budget, snr_db),
        };
        let mut est = vec![0.0; plan.len()];
        for (j, e) in est.iter_mut().enumerate() {
            if plan.powers[j] <= 0.0 || erased.is_some_and(|m| m[j / spc]) {
                continue;
            }
            let amp = block.power_scale * plan.gain(j);
            let y = block.slot(&self.ofdm, j);
            *e = match decoding {
                CoarseDecoding::Refined => y / amp,
                CoarseDecoding::Scalar { .. } => mmse_shrink(amp, plan.variances[j], noise) * y,
            };
        }
        Ok(est)
    }
}

/// Receiver-side view of a coarse encoding.
#[derive(Debug, Clone, Copy)]
pub struct CoarseLayout<'a> {
    pub plans: &'a [BlockPlan],
    pub alloc: &'a RateAllocation,
    pub layer_len: usize,
}

impl CoarseEncoded {
    pub fn layout(&self) -> CoarseLayout<'_> {
        CoarseLayout {
            plans: &self.plans,
            alloc: &self.alloc,
            layer_len: self.layer_len,
        }
    }
}
