//! Entropy-proportional transmission lengths per coefficient sequence.

use serde::Serialize;

/// Resolution at which component entropies are measured; a component with
/// variance well below `ENTROPY_RESOLUTION^2` carries almost no rate.
pub const ENTROPY_RESOLUTION: f64 = 1e-2;

/// Rate of a Gaussian component of variance `v` quantized at `ENTROPY_RESOLUTION`, in bits.
pub fn component_entropy(variance: f64) -> f64 {
    0.5 * (1.0 + variance / (ENTROPY_RESOLUTION * ENTROPY_RESOLUTION)).log2()
}

/// Lengths (in real values) kept from each sequence, plus the block framing they imply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateAllocation {
    /// Kept prefix length of each sequence.
    pub lengths: Vec<usize>,
    /// Dimension (number of real coefficients) of each sequence.
    pub dimensions: Vec<usize>,
    pub alpha: f64,
    /// Zero values appended after the last kept coefficient to fill the final block.
    pub padding: usize,
    pub n_blocks: usize,
}

impl RateAllocation {
    pub fn transmitted(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn masked(&self) -> usize {
        self.dimensions.iter().sum::<usize>() - self.transmitted()
    }

    /// Kept-prefix lengths; identical to `lengths` since masks are prefixes.
    pub fn mask_record(&self) -> &[usize] {
        &self.lengths
    }

    /// Keep mask of sequence `o`: ones then zeros.
    pub fn mask(&self, o: usize) -> Vec<bool> {
        (0..self.dimensions[o]).map(|c| c < self.lengths[o]).collect()
    }

    /// Attach block framing for blocks holding `block_capacity` real values each.
    pub(crate) fn frame(&mut self, block_capacity: usize) {
        let used = self.transmitted();
        self.n_blocks = used.div_ceil(block_capacity);
        self.padding = self.n_blocks * block_capacity - used;
    }
}

/// Largest-remainder rounding of `quotas` to integers summing to `total`,
/// never exceeding `caps`. Ties go to the lower index.
pub fn largest_remainder(quotas: &[f64], caps: &[usize], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = quotas
        .iter()
        .zip(caps)
        .map(|(&q, &c)| (q.max(0.0).floor() as usize).min(c))
        .collect();
    let mut left = total.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    let rem = |i: usize| quotas[i].max(0.0) - out[i] as f64;
    let rems: Vec<f64> = (0..quotas.len()).map(rem).collect();
    order.sort_by(|&a, &b| rems[b].total_cmp(&rems[a]));
    // one pass by remainder; further passes only if caps block units
    while left > 0 {
        let before = left;
        for &i in &order {
            if left == 0 {
                break;
            }
            if out[i] < caps[i] {
                out[i] += 1;
                left -= 1;
            }
        }
        if left == before {
            break;
        }
    }
    out
}

/// Split `budget` real values across sequences in proportion to `alpha`
/// times their summed component entropies, capped at each sequence's
/// dimension. When the scaled entropy total is below the budget the
/// unscaled quotas are used and the total is their floor.
pub fn allocate_rates(sequences: &[&[f64]], alpha: f64, budget: usize) -> RateAllocation {
    let dims: Vec<usize> = sequences.iter().map(|s| s.len()).collect();
    let raw: Vec<f64> = sequences
        .iter()
        .map(|s| alpha * s.iter().map(|&v| component_entropy(v)).sum::<f64>())
        .collect();
    let capacity: usize = dims.iter().sum();
    let raw_total: f64 = raw.iter().sum();
    let binding = raw_total >= budget as f64;
    let total = if binding { budget } else { raw_total.floor() as usize }.min(capacity);

    let mut quotas = raw.clone();
    let mut capped = vec![false; raw.len()];
    if binding && raw_total > 0.0 {
        // proportional share of the budget, redistributing past dimension caps
        loop {
            let fixed: f64 = (0..raw.len()).filter(|&i| capped[i]).map(|i| dims[i] as f64).sum();
            let free_raw: f64 = (0..raw.len()).filter(|&i| !capped[i]).map(|i| raw[i]).sum();
            let room = total as f64 - fixed;
            let mut changed = false;
            for i in 0..raw.len() {
                if capped[i] {
                    quotas[i] = dims[i] as f64;
                    continue;
                }
                quotas[i] = if free_raw > 0.0 { raw[i] * room / free_raw } else { 0.0 };
                if quotas[i] > dims[i] as f64 {
                    capped[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    } else {
        for i in 0..raw.len() {
            quotas[i] = quotas[i].min(dims[i] as f64);
        }
    }
    let lengths = largest_remainder(&quotas, &dims, total);
    RateAllocation {
        lengths,
        dimensions: dims,
        alpha,
        padding: 0,
        n_blocks: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive minimiser of sum (k - q)^2 with fixed total and caps;
    /// lexicographically larger vectors win ties (lower index first).
    fn brute_round(quotas: &[f64], caps: &[usize], total: usize) -> Vec<usize> {
        fn rec(i: usize, left: usize, q: &[f64], caps: &[usize], cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
            if i == q.len() {
                if left == 0 {
                    let cost: f64 = cur.iter().zip(q).map(|(&k, &x)| (k as f64 - x).powi(2)).sum();
                    if cost < best.0 - 1e-12 {
                        *best = (cost, cur.clone());
                    }
                }
                return;
            }
            for k in (0..=caps[i].min(left)).rev() {
                cur.push(k);
                rec(i + 1, left - k, q, caps, cur, best);
                cur.pop();
            }
        }
        let mut best = (f64::INFINITY, vec![]);
        rec(0, total, quotas, caps, &mut vec![], &mut best);
        best.1
    }

    #[test]
    fn equal_sequences_share_evenly() {
        let seq = vec![0.3; 20];
        let seqs: Vec<&[f64]> = (0..10).map(|_| seq.as_slice()).collect();
        let a = allocate_rates(&seqs, 1.0, 100);
        assert_eq!(a.lengths, vec![10; 10]);
    }

    #[test]
    fn dominant_sequence_takes_everything() {
        let big = vec![1.0; 8];
        let tiny = vec![1e-6; 8];
        let seqs: Vec<&[f64]> = vec![&big, &tiny, &tiny, &tiny];
        let a = allocate_rates(&seqs, 1.0, 8);
        assert_eq!(a.lengths, vec![8, 0, 0, 0]);
    }

    #[test]
    fn two_sequence_split_matches_brute_force() {
        let low = vec![1.0; 16];
        let high = vec![4.0; 16];
        let a = allocate_rates(&[&low, &high], 1.0, 12);
        // independent quotas from the entropy ratio
        let h = |v: f64| 0.5 * (1.0 + v / 1e-4).log2();
        let (h1, h4) = (16.0 * h(1.0), 16.0 * h(4.0));
        let q = [12.0 * h1 / (h1 + h4), 12.0 * h4 / (h1 + h4)];
        assert_eq!(a.lengths, brute_round(&q, &[16, 16], 12));
        assert_eq!(a.transmitted(), 12);
    }

    #[test]
    fn largest_remainder_matches_brute_force_on_grid() {
        let cases: &[(&[f64], &[usize], usize)] = &[
            (&[1.5, 1.5, 1.0], &[5, 5, 5], 4),
            (&[0.3, 0.3, 0.3, 2.1], &[3, 3, 3, 3], 3),
            (&[2.6, 0.7, 0.7], &[2, 4, 4], 4),
            (&[0.25, 0.25, 0.25, 0.25], &[1, 1, 1, 1], 1),
        ];
        for &(q, c, t) in cases {
            assert_eq!(largest_remainder(q, c, t), brute_round(q, c, t), "{q:?}");
        }
    }

    #[test]
    fn zero_budget_keeps_nothing() {
        let s = vec![1.0; 4];
        let a = allocate_rates(&[&s, &s], 1.0, 0);
        assert_eq!(a.lengths, vec![0, 0]);
    }

    #[test]
    fn slack_budget_uses_floor_of_entropy() {
        let s = vec![1e-4; 4];
        let a = allocate_rates(&[&s], 1.0, 1000);
        let expect = (4.0 * 0.5f64 * 2f64.log2()).floor() as usize;
        assert_eq!(a.transmitted(), expect);
    }
}
