//! MMSE power allocation over parallel Gaussian channels.
//!
//! A zero-mean coefficient of variance `v` sent with power `p` over a real
//! channel with noise `n` and decoded by linear MMSE leaves error
//! `v n / (p + n)`. Minimising the sum under `sum p = P` gives
//! `p_i = max(0, s sqrt(v_i n_i) - n_i)` with `s` set by the power budget.

/// Linear MMSE coefficient for `y = a x + w`, `x ~ (0, v)`, `w ~ (0, n)`.
#[inline]
pub fn mmse_shrink(amplitude: f64, variance: f64, noise: f64) -> f64 {
    let den = amplitude * amplitude * variance + noise;
    if den <= 0.0 {
        return 0.0;
    }
    amplitude * variance / den
}

/// Residual error variance of the linear MMSE estimate.
#[inline]
pub fn mmse_error(power: f64, variance: f64, noise: f64) -> f64 {
    if power + noise <= 0.0 {
        return 0.0;
    }
    variance * noise / (power + noise)
}

/// Sum-MMSE-optimal powers for `variances` over channels with `noises`,
/// spending exactly `total_power` (or nothing if no channel is usable).
///
/// Entries with zero variance or non-finite noise receive zero power.
pub fn mmse_waterfill(variances: &[f64], noises: &[f64], total_power: f64) -> Vec<f64> {
    assert_eq!(variances.len(), noises.len());
    let mut powers = vec![0.0; variances.len()];
    if total_power <= 0.0 {
        return powers;
    }
    let usable = |i: usize| variances[i] > 0.0 && noises[i].is_finite() && noises[i] > 0.0;
    let mut order: Vec<usize> = (0..variances.len()).filter(|&i| usable(i)).collect();
    if order.is_empty() {
        return powers;
    }
    let ratio = |i: usize| (variances[i] / noises[i]).sqrt();
    // stable: ties keep the lower index first
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)));

    let mut sum_noise = 0.0;
    let mut sum_root = 0.0;
    let mut active = 0;
    let mut level = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let cand_noise = sum_noise + noises[i];
        let cand_root = sum_root + (variances[i] * noises[i]).sqrt();
        let cand_level = (total_power + cand_noise) / cand_root;
        // the k-th channel joins only if it gets positive power at the new level
        if k > 0 && ratio(i) * cand_level <= 1.0 {
            break;
        }
        sum_noise = cand_noise;
        sum_root = cand_root;
        level = cand_level;
        active = k + 1;
    }
    for &i in &order[..active] {
        powers[i] = (level * (variances[i] * noises[i]).sqrt() - noises[i]).max(0.0);
    }
    // remove rounding drift so the budget is met exactly
    let spent: f64 = powers.iter().sum();
    if spent > 0.0 {
        let fix = total_power / spent;
        for p in &mut powers {
            *p *= fix;
        }
    }
    powers
}

/// Powers minimising the distortion summed over several noise conditions
/// (one allocation that must serve every level in `noise_levels`).
///
/// Each channel `i` sees noise `noise_levels[g] * noise_scale[i]`.
pub fn robust_waterfill(variances: &[f64], noise_scale: &[f64], noise_levels: &[f64], total_power: f64) -> Vec<f64> {
    assert_eq!(variances.len(), noise_scale.len());
    let n = variances.len();
    if total_power <= 0.0 || n == 0 || noise_levels.is_empty() {
        return vec![0.0; n];
    }
    // marginal gain of power at p for channel i
    let marginal = |i: usize, p: f64| -> f64 {
        noise_levels
            .iter()
            .map(|g| {
                let nn = g * noise_scale[i];
                variances[i] * nn / ((p + nn) * (p + nn))
            })
            .sum()
    };
    let power_at = |i: usize, mu: f64| -> f64 {
        if variances[i] <= 0.0 || marginal(i, 0.0) <= mu {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, total_power);
        if marginal(i, hi) >= mu {
            return hi;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if marginal(i, mid) > mu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let spend = |mu: f64| -> f64 { (0..n).map(|i| power_at(i, mu)).sum() };
    // bracket mu in log space
    let mut lo = f64::MIN_POSITIVE.max(1e-300);
    let mut hi = (0..n).map(|i| marginal(i, 0.0)).fold(0.0, f64::max);
    if hi <= 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..80 {
        let mid = (lo.ln() * 0.5 + hi.ln() * 0.5).exp();
        if spend(mid) > total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut powers: Vec<f64> = (0..n).map(|i| power_at(i, hi)).collect();
    let spent: f64 = powers.iter().sum();
    if spent > 0.0 {
        let fix = total_power / spent;
        for p in &mut powers {
            *p *= fix;
        }
    }
    powers
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_error(v: &[f64], n: &[f64], p: &[f64]) -> f64 {
        (0..v.len()).map(|i| mmse_error(p[i], v[i], n[i])).sum()
    }

    #[test]
    fn scalar_mmse_half() {
        assert!((mmse_shrink(1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_channel_grid_oracle() {
        // gains (1, 0.1) on unit noise -> effective noises 1 and 100
        for &(v, n, budget) in &[
            ([1.0, 1.0], [1.0, 100.0], 2.0),
            ([1.0, 1.0], [1.0, 4.0], 6.0),
            ([3.0, 0.5], [0.2, 0.3], 1.5),
        ] {
            let p = mmse_waterfill(&v, &n, budget);
            assert!((p[0] + p[1] - budget).abs() < 1e-9);
            let mut best = (f64::INFINITY, 0.0);
            let steps = 200_000;
            for s in 0..=steps {
                let p0 = budget * s as f64 / steps as f64;
                let e = total_error(&v, &n, &[p0, budget - p0]);
                if e < best.0 {
                    best = (e, p0);
                }
            }
            assert!((p[0] - best.1).abs() < 1e-3, "{:?} vs {}", p, best.1);
        }
    }

    #[test]
    fn dead_channel_gets_nothing() {
        let p = mmse_waterfill(&[1.0, 1.0, 1.0], &[0.1, 1e6, 0.1], 3.0);
        assert_eq!(p[1], 0.0);
        assert!((p[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn robust_with_single_level_matches_waterfill() {
        let v = [0.5, 0.2, 0.05, 0.01, 0.001];
        let scale = [1.0; 5];
        let direct = mmse_waterfill(&v, &[0.05; 5], 2.0);
        let robust = robust_waterfill(&v, &scale, &[0.05], 2.0);
        for (a, b) in direct.iter().zip(&robust) {
            assert!((a - b).abs() < 1e-6, "{direct:?} {robust:?}");
        }
    }
}
