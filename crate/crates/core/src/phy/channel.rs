use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::rng;
use crate::{Error, Result};

/// One block's channel: impulse response, its frequency response and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    /// Diagonal of the frequency-domain channel matrix (`L_f`-point DFT of the taps).
    pub freq_response: Vec<Complex64>,
    pub noise_variance: f64,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Complex64>, n_subcarriers: usize, noise_variance: f64) -> Self {
        let freq_response = taps_to_freq(&taps, n_subcarriers);
        Self {
            taps,
            freq_response,
            noise_variance,
        }
    }

    /// Single unit tap.
    pub fn identity(n_subcarriers: usize, noise_variance: f64) -> Self {
        Self::new(vec![Complex64::new(1.0, 0.0)], n_subcarriers, noise_variance)
    }
}

/// Non-normalised DFT of zero-padded taps: `H_k = sum_t h_t exp(-j 2 pi k t / L_f)`.
fn taps_to_freq(taps: &[Complex64], n_subcarriers: usize) -> Vec<Complex64> {
    (0..n_subcarriers)
        .map(|k| {
            taps.iter()
                .enumerate()
                .map(|(t, h)| h * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n_subcarriers as f64))
                .sum()
        })
        .collect()
}

/// Block-fading process: per-tap first-order Gauss-Markov evolution.
///
/// Each tap is `sqrt(1 - s) * sqrt(pdp_t) + sqrt(s) * d_t` where `s` is the
/// fading spread and `d_t` follows
/// `d_t(m+1) = rho * d_t(m) + sqrt(1 - rho^2) * w`, `w ~ CN(0, pdp_t)`.
/// With `s = 1` this is pure Rayleigh block fading; `s = 0` freezes the taps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProcessConfig {
    pub n_taps: usize,
    pub power_delay_profile: Vec<f64>,
    pub temporal_correlation: f64,
    /// Fraction of tap energy that fades, in `[0, 1]`.
    pub fading_spread: f64,
    pub rng_seed: u64,
}

impl Default for ChannelProcessConfig {
    fn default() -> Self {
        Self {
            n_taps: 8,
            power_delay_profile: exponential_pdp(8, 3.0),
            temporal_correlation: 0.0,
            fading_spread: 1.0,
            rng_seed: 0,
        }
    }
}

impl ChannelProcessConfig {
    /// Static unit channel (no multipath, no fading).
    pub fn flat() -> Self {
        Self {
            n_taps: 1,
            power_delay_profile: vec![1.0],
            temporal_correlation: 0.0,
            fading_spread: 0.0,
            rng_seed: 0,
        }
    }

    /// Expected `|H_k|^2` per subcarrier: the faded share of tap energy is
    /// spread evenly, the fixed share shapes the profile.
    pub fn mean_gain_profile(&self, n_subcarriers: usize) -> Vec<f64> {
        let fixed: Vec<Complex64> = self
            .power_delay_profile
            .iter()
            .map(|p| Complex64::new(p.sqrt(), 0.0))
            .collect();
        let total: f64 = self.power_delay_profile.iter().sum();
        taps_to_freq(&fixed, n_subcarriers)
            .iter()
            .map(|h| (1.0 - self.fading_spread) * h.norm_sqr() + self.fading_spread * total)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_taps == 0 || self.power_delay_profile.len() != self.n_taps {
            return Err(Error::Config(format!(
                "power delay profile has {} entries for {} taps",
                self.power_delay_profile.len(),
                self.n_taps
            )));
        }
        if self.power_delay_profile.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("power delay profile entries must be >= 0".into()));
        }
        let sum: f64 = self.power_delay_profile.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("power delay profile sums to {sum}, expected 1")));
        }
        if !(0.0..1.0).contains(&self.temporal_correlation) {
            return Err(Error::Config(format!(
                "temporal correlation {} outside [0, 1)",
                self.temporal_correlation
            )));
        }
        if !(0.0..=1.0).contains(&self.fading_spread) {
            return Err(Error::Config(format!("fading spread {} outside [0, 1]", self.fading_spread)));
        }
        Ok(())
    }
}

/// Exponential power-delay profile with `decay_db` per tap, normalised to unit energy.
pub fn exponential_pdp(n_taps: usize, decay_db: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n_taps).map(|t| 10f64.powf(-decay_db * t as f64 / 10.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / sum).collect()
}

/// Parses a comma-separated list of linear tap powers. The result is
/// normalised to unit sum.
pub fn parse_pdp(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad power delay profile entry {s:?}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let sum: f64 = values.iter().sum();
    if values.is_empty() || !(sum > 0.0) || values.iter().any(|v| *v < 0.0) {
        return Err(Error::Config(format!("invalid power delay profile {text:?}")));
    }
    Ok(values.into_iter().map(|v| v / sum).collect())
}

/// Frequency correlation `R = F diag(pdp) F^H` of the channel prior, row-major `L_f x L_f`.
pub fn frequency_correlation(pdp: &[f64], n_subcarriers: usize) -> Vec<Complex64> {
    let n = n_subcarriers;
    let mut r = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        for kk in 0..n {
            let d = k as f64 - kk as f64;
            r[k * n + kk] = pdp
                .iter()
                .enumerate()
                .map(|(t, p)| Complex64::from_polar(*p, -2.0 * PI * d * t as f64 / n as f64))
                .sum();
        }
    }
    r
}

/// Linear convolution of `frame` with the channel taps, truncated to the frame
/// length, plus CN(0, sigma^2) noise per sample.
pub fn apply_channel<R: Rng + ?Sized>(
    frame: &[Complex64],
    ch: &ChannelRealization,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if frame.iter().any(|s| !s.re.is_finite() || !s.im.is_finite())
        || ch.taps.iter().any(|s| !s.re.is_finite() || !s.im.is_finite())
        || !(ch.noise_variance.is_finite() && ch.noise_variance >= 0.0)
    {
        return Err(Error::InvalidInput("non-finite channel input".into()));
    }
    let mut out = Vec::with_capacity(frame.len());
    for n in 0..frame.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, h) in ch.taps.iter().enumerate().take(n + 1) {
            acc += h * frame[n - t];
        }
        if ch.noise_variance > 0.0 {
            acc += rng::complex_gaussian(rng, ch.noise_variance);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Draws `n_blocks` consecutive channel realizations of the block-fading process.
///
/// The first block is drawn from the stationary distribution.
pub fn sample_channel_process<R: Rng + ?Sized>(
    cfg: &ChannelProcessConfig,
    n_blocks: usize,
    n_subcarriers: usize,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>> {
    cfg.validate()?;
    if n_blocks == 0 {
        return Err(Error::InvalidInput("n_blocks must be at least 1".into()));
    }
    let rho = cfg.temporal_correlation;
    let innov = (1.0 - rho * rho).sqrt();
    let diffuse_amp = cfg.fading_spread.sqrt();
    let specular: Vec<f64> = cfg
        .power_delay_profile
        .iter()
        .map(|p| ((1.0 - cfg.fading_spread) * p).sqrt())
        .collect();
    let mut diffuse: Vec<Complex64> = cfg
        .power_delay_profile
        .iter()
        .map(|p| rng::complex_gaussian(rng, *p))
        .collect();
    let mut blocks = Vec::with_capacity(n_blocks);
    for m in 0..n_blocks {
        if m > 0 {
            for (d, p) in diffuse.iter_mut().zip(&cfg.power_delay_profile) {
                *d = *d * rho + rng::complex_gaussian(rng, *p) * innov;
            }
        }
        let taps = diffuse
            .iter()
            .zip(&specular)
            .map(|(d, s)| d * diffuse_amp + s)
            .collect();
        blocks.push(ChannelRealization::new(taps, n_subcarriers, noise_variance));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_channel_passes_through() {
        let mut r = rng::stream(0);
        let frame: Vec<Complex64> = (0..50).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let out = apply_channel(&frame, &ChannelRealization::identity(64, 0.0), &mut r).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn scalar_channel_scales() {
        let mut r = rng::stream(0);
        let frame: Vec<Complex64> = (0..50).map(|i| Complex64::new(i as f64, 2.0)).collect();
        let ch = ChannelRealization::new(vec![Complex64::new(0.5, 0.0)], 64, 0.0);
        let out = apply_channel(&frame, &ch, &mut r).unwrap();
        for (a, b) in out.iter().zip(&frame) {
            assert!((a - b * 0.5).norm() < 1e-15);
        }
    }

    #[test]
    fn noise_variance_matches() {
        let mut r = rng::stream(9);
        let frame = vec![Complex64::new(0.0, 0.0); 100_000];
        let out = apply_channel(&frame, &ChannelRealization::identity(64, 0.1), &mut r).unwrap();
        let v = out.iter().map(|s| s.norm_sqr()).sum::<f64>() / out.len() as f64;
        assert!((v - 0.1).abs() < 0.002, "{v}");
    }

    #[test]
    fn freq_response_is_dft_of_taps() {
        let taps = vec![Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5), Complex64::new(0.05, 0.0)];
        let ch = ChannelRealization::new(taps.clone(), 16, 0.0);
        let mut padded = taps;
        padded.resize(16, Complex64::new(0.0, 0.0));
        let mut planner = rustfft::FftPlanner::new();
        planner.plan_fft_forward(16).process(&mut padded);
        for (a, b) in ch.freq_response.iter().zip(&padded) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn default_pdp_is_normalized_exponential() {
        let p = exponential_pdp(8, 3.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[1] / p[0] - 10f64.powf(-0.3)).abs() < 1e-12);
        ChannelProcessConfig::default().validate().unwrap();
    }

    #[test]
    fn pdp_parsing() {
        let p = parse_pdp("2, 1,1").unwrap();
        assert_eq!(p, vec![0.5, 0.25, 0.25]);
        assert!(parse_pdp("1,x").is_err());
        assert!(parse_pdp("0,0").is_err());
    }

    #[test]
    fn invalid_process_configs() {
        let mut c = ChannelProcessConfig::default();
        c.power_delay_profile.pop();
        assert!(c.validate().is_err());
        let mut c = ChannelProcessConfig::default();
        c.temporal_correlation = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frozen_limit_keeps_taps() {
        let cfg = ChannelProcessConfig {
            temporal_correlation: 1.0 - 1e-14,
            ..Default::default()
        };
        let mut r = rng::stream(2);
        let blocks = sample_channel_process(&cfg, 10, 64, 0.1, &mut r).unwrap();
        for b in &blocks[1..] {
            for (a, c) in b.taps.iter().zip(&blocks[0].taps) {
                assert!((a - c).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn flat_process_is_identity() {
        let mut r = rng::stream(2);
        let blocks = sample_channel_process(&ChannelProcessConfig::flat(), 3, 64, 0.0, &mut r).unwrap();
        for b in blocks {
            for h in b.freq_response {
                assert!((h - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_matrix_diagonal_is_unit() {
        let r = frequency_correlation(&exponential_pdp(8, 3.0), 64);
        for k in 0..64 {
            assert!((r[k * 64 + k] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        // Hermitian
        assert!((r[3 * 64 + 10] - r[10 * 64 + 3].conj()).norm() < 1e-12);
    }
}
