//! Per-block shaped reward.

/// `xi * (psnr + eta * |snr - snr_hat|)`; with `eta <= 0` the feedback
/// error is a penalty.
pub fn compute_reward(psnr_db: f64, snr_db: f64, snr_hat_db: f64, xi: f64, eta: f64) -> f64 {
    xi * (psnr_db + eta * (snr_db - snr_hat_db).abs())
}
