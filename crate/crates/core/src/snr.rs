//! Channel-quality metrics shared by the codec and the CQI subsystem.

use num_complex::Complex64;

use crate::{Error, Result};

/// EESM calibration factor used throughout the simulator.
pub const DEFAULT_BETA: f64 = 5.0;

/// Floor applied to per-subcarrier SNRs of dead subcarriers.
pub const SNR_FLOOR_DB: f64 = -60.0;

/// Whether EESM averages the dB values directly (the literal form) or
/// operates on linear SNRs and converts the result back to dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EesmDomain {
    #[default]
    Decibel,
    Linear,
}

/// Per-block channel quality.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    pub average_db: f64,
    pub subcarrier_db: Vec<f64>,
    pub effective_db: f64,
    pub beta: f64,
}

impl SnrReport {
    /// Builds the report of one block from a frequency response (estimated or true).
    pub fn new(freq_response: &[Complex64], power: f64, noise_variance: f64, beta: f64) -> Result<Self> {
        let average_db = average_snr(power, noise_variance)?;
        let subcarrier_db = subcarrier_snrs(freq_response, power, noise_variance)?;
        let effective_db = eesm_effective_snr(&subcarrier_db, beta)?;
        Ok(Self {
            average_db,
            subcarrier_db,
            effective_db,
            beta,
        })
    }
}

/// `10 log10(P / sigma^2)`.
pub fn average_snr(power: f64, noise_variance: f64) -> Result<f64> {
    if !(power > 0.0 && noise_variance > 0.0) {
        return Err(Error::Domain(format!(
            "average SNR needs positive power and noise (got {power}, {noise_variance})"
        )));
    }
    Ok(10.0 * (power / noise_variance).log10())
}

/// `20 log10(|H_k| sqrt(P) / sigma)` per subcarrier, floored at [`SNR_FLOOR_DB`].
pub fn subcarrier_snrs(freq_response: &[Complex64], power: f64, noise_variance: f64) -> Result<Vec<f64>> {
    if !(noise_variance > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {noise_variance}")));
    }
    let sigma = noise_variance.sqrt();
    Ok(freq_response
        .iter()
        .map(|h| {
            let amp = h.norm() * power.sqrt() / sigma;
            if amp > 0.0 {
                (20.0 * amp.log10()).max(SNR_FLOOR_DB)
            } else {
                SNR_FLOOR_DB
            }
        })
        .collect())
}

/// Effective SNR `-beta ln(mean_k exp(-gamma_k / beta))` with the dB values
/// fed to the exponential as written.
pub fn eesm_effective_snr(subcarrier_db: &[f64], beta: f64) -> Result<f64> {
    eesm_effective_snr_in(subcarrier_db, beta, EesmDomain::Decibel)
}

pub fn eesm_effective_snr_in(subcarrier_db: &[f64], beta: f64, domain: EesmDomain) -> Result<f64> {
    if subcarrier_db.is_empty() {
        return Err(Error::InvalidInput("EESM needs at least one subcarrier".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("EESM beta must be positive, got {beta}")));
    }
    let values: Vec<f64> = match domain {
        EesmDomain::Decibel => subcarrier_db.to_vec(),
        EesmDomain::Linear => subcarrier_db.iter().map(|d| 10f64.powf(d / 10.0)).collect(),
    };
    // shift by the minimum so the largest exponential term is exactly 1
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().map(|g| (-(g - min) / beta).exp()).sum::<f64>() / values.len() as f64;
    let eff = min - beta * mean.ln();
    // clamp rounding drift outside [min, max]
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eff = eff.clamp(min, max);
    Ok(match domain {
        EesmDomain::Decibel => eff,
        EesmDomain::Linear => 10.0 * eff.log10(),
    })
}

/// dB to linear power ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn average_snr_cases() {
        assert!((average_snr(1.0, 0.1).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(average_snr(0.3, 0.3).unwrap(), 0.0);
        assert!((average_snr(2.0, 0.5).unwrap() - 6.0206).abs() < 1e-4);
        assert!(matches!(average_snr(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(average_snr(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn subcarrier_snr_cases() {
        let one = vec![Complex64::new(1.0, 0.0); 4];
        assert!(subcarrier_snrs(&one, 1.0, 1.0).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert!(subcarrier_snrs(&one, 1.0, 0.01).unwrap().iter().all(|v| (v - 20.0).abs() < 1e-9));
        let half = vec![Complex64::new(0.0, 0.5)];
        assert!((subcarrier_snrs(&half, 1.0, 1.0).unwrap()[0] + 6.0206).abs() < 1e-4);
        let dead = vec![Complex64::new(0.0, 0.0)];
        assert_eq!(subcarrier_snrs(&dead, 1.0, 1.0).unwrap()[0], SNR_FLOOR_DB);
    }

    #[test]
    fn eesm_fixed_point_and_two_tone() {
        assert!((eesm_effective_snr(&[10.0; 4], 5.0).unwrap() - 10.0).abs() < 1e-9);
        let oracle = -5.0 * ((1.0 + (-4.0f64).exp()) / 2.0).ln();
        let v = eesm_effective_snr(&[0.0, 20.0], 5.0).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 3.3750).abs() < 1e-3);
    }

    #[test]
    fn eesm_linear_mode_fixed_point() {
        let v = eesm_effective_snr_in(&[7.0; 5], 5.0, EesmDomain::Linear).unwrap();
        assert!((v - 7.0).abs() < 1e-9);
    }

    #[test]
    fn eesm_rejects_bad_input() {
        assert!(eesm_effective_snr(&[], 5.0).is_err());
        assert!(eesm_effective_snr(&[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn eesm_bounded_and_below_mean(v in prop::collection::vec(-60.0f64..60.0, 1..80)) {
            let e = eesm_effective_snr(&v, 5.0).unwrap();
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!(e >= min - 1e-12 && e <= max + 1e-12);
            prop_assert!(e <= mean + 1e-9);
        }

        #[test]
        fn eesm_monotone_and_permutation_invariant(
            v in prop::collection::vec(-30.0f64..40.0, 2..40),
            idx in any::<prop::sample::Index>(),
            bump in 0.0f64..20.0,
        ) {
            let e = eesm_effective_snr(&v, 5.0).unwrap();
            let mut up = v.clone();
            let i = idx.index(v.len());
            up[i] += bump;
            prop_assert!(eesm_effective_snr(&up, 5.0).unwrap() >= e - 1e-12);
            let mut rev = v.clone();
            rev.reverse();
            prop_assert!((eesm_effective_snr(&rev, 5.0).unwrap() - e).abs() < 1e-9);
        }

        #[test]
        fn average_snr_shift(p in 1e-3f64..1e3, s in 1e-3f64..1e3, c in 1e-3f64..1e3) {
            let lhs = average_snr(p, s).unwrap() + 10.0 * c.log10();
            prop_assert!((lhs - average_snr(c * p, s).unwrap()).abs() < 1e-9);
        }
    }
}
