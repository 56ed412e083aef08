//! Pilot-based channel estimation (LS, LMMSE) and per-subcarrier zero-forcing.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::phy::SymbolBlock;
use crate::{Error, Result};

/// How a frequency-response estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMethod {
    Ls,
    #[default]
    Lmmse,
    /// True channel, for genie-aided experiments.
    Oracle,
}

/// Estimated diagonal of the frequency-domain channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqResponseEstimate {
    pub values: Vec<Complex64>,
    pub method: EstimationMethod,
}

impl FreqResponseEstimate {
    pub fn oracle(freq_response: &[Complex64]) -> Self {
        Self {
            values: freq_response.to_vec(),
            method: EstimationMethod::Oracle,
        }
    }
}

/// Least-squares estimate: per subcarrier, the mean over pilot symbols of
/// observation divided by reference.
pub fn ls_estimate(pilot_obs: &[Vec<Complex64>], pilot_ref: &[Complex64]) -> Result<FreqResponseEstimate> {
    if pilot_obs.is_empty() {
        return Err(Error::InvalidInput("no pilot observations".into()));
    }
    if let Some(k) = pilot_ref.iter().position(|p| p.norm_sqr() == 0.0) {
        return Err(Error::InvalidPilot(format!("zero pilot reference on subcarrier {k}")));
    }
    if pilot_obs.iter().any(|row| row.len() != pilot_ref.len()) {
        return Err(Error::InvalidInput("pilot observation width differs from reference".into()));
    }
    let np = pilot_obs.len() as f64;
    let values = (0..pilot_ref.len())
        .map(|k| pilot_obs.iter().map(|row| row[k] / pilot_ref[k]).sum::<Complex64>() / np)
        .collect();
    Ok(FreqResponseEstimate {
        values,
        method: EstimationMethod::Ls,
    })
}

/// Precomputed LMMSE smoothing matrix `W = R (R + (sigma^2 / P_pilot) I)^-1`.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    w: Option<DMatrix<Complex64>>,
}

impl LmmseFilter {
    /// `freq_corr` is row-major `L_f x L_f`, Hermitian PSD. `noise_variance`
    /// is the noise variance of the LS estimate's pilot observations.
    pub fn new(freq_corr: &[Complex64], n_subcarriers: usize, noise_variance: f64, pilot_power: f64) -> Result<Self> {
        let n = n_subcarriers;
        if freq_corr.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "correlation has {} entries, expected {}",
                freq_corr.len(),
                n * n
            )));
        }
        if !(noise_variance >= 0.0 && pilot_power > 0.0) {
            return Err(Error::Domain("noise variance must be >= 0 and pilot power > 0".into()));
        }
        if noise_variance == 0.0 {
            return Ok(Self { w: None });
        }
        let r = DMatrix::from_row_slice(n, n, freq_corr);
        let reg = Complex64::new(noise_variance / pilot_power, 0.0);
        let a = &r + DMatrix::from_diagonal_element(n, n, reg);
        let norm_a = one_norm(&a);
        let inv = a.clone().try_inverse().ok_or_else(|| Error::Estimation {
            reason: "regularised correlation matrix is singular".into(),
            condition: f64::INFINITY,
        })?;
        let condition = norm_a * one_norm(&inv);
        if !condition.is_finite() || condition > 1e14 {
            return Err(Error::Estimation {
                reason: "regularised correlation matrix is numerically singular".into(),
                condition,
            });
        }
        Ok(Self { w: Some(r * inv) })
    }

    pub fn apply(&self, ls: &FreqResponseEstimate) -> FreqResponseEstimate {
        let values = match &self.w {
            None => ls.values.clone(),
            Some(w) => {
                let n = ls.values.len();
                (0..n)
                    .map(|k| (0..n).map(|j| w[(k, j)] * ls.values[j]).sum())
                    .collect()
            }
        };
        FreqResponseEstimate {
            values,
            method: EstimationMethod::Lmmse,
        }
    }
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LMMSE smoothing of an LS estimate; see [`LmmseFilter`].
pub fn lmmse_estimate(
    ls: &FreqResponseEstimate,
    freq_corr: &[Complex64],
    noise_variance: f64,
    pilot_power: f64,
) -> Result<FreqResponseEstimate> {
    Ok(LmmseFilter::new(freq_corr, ls.values.len(), noise_variance, pilot_power)?.apply(ls))
}

/// Zero-forced data block plus the per-subcarrier erasure mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub block: SymbolBlock,
    /// `true` where the estimate magnitude fell below the floor.
    pub erased: Vec<bool>,
}

/// Default magnitude floor for zero-forcing.
pub const ZF_EPSILON: f64 = 1e-6;

/// Divides each entry by the estimated response of its subcarrier. Estimates
/// below `epsilon` in magnitude are replaced by `epsilon` with the estimate's
/// phase and the subcarrier is flagged erased.
pub fn zf_equalize(data: &SymbolBlock, est: &FreqResponseEstimate, epsilon: f64) -> Equalized {
    let mut block = data.clone();
    let erased: Vec<bool> = est.values.iter().map(|h| h.norm() < epsilon).collect();
    let divisors: Vec<Complex64> = est
        .values
        .iter()
        .zip(&erased)
        .map(|(h, e)| if *e { Complex64::from_polar(epsilon, h.arg()) } else { *h })
        .collect();
    for t in 0..block.n_rows {
        for k in 0..block.n_cols {
            let v = block.get(t, k) / divisors[k];
            *block.get_mut(t, k) = v;
        }
    }
    Equalized { block, erased }
}
