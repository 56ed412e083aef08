//! Distortion metrics and summary statistics.

use crate::{Error, Result};

/// Peak value used for PSNR of the unit-range source.
pub const PEAK_VALUE: f64 = 1.0;

/// Mean squared error.
pub fn mse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::Contract(format!(
            "mse needs equal nonempty lengths, got {} and {}",
            x.len(),
            x_hat.len()
        )));
    }
    Ok(x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// `10 log10(max^2 / mse)`; zero error gives `+inf`.
pub fn psnr(mse: f64, max_value: f64) -> Result<f64> {
    if !(mse >= 0.0) || !(max_value > 0.0) {
        return Err(Error::Domain(format!("psnr needs mse >= 0 and max > 0, got {mse}, {max_value}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

/// Sample mean and standard error of the mean (zero for fewer than two samples).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One-sided paired test that `a` is no larger than `b` on average:
/// `mean(a - b) + z * stderr(a - b) <= 0`. Exact ties pass.
pub fn paired_not_worse(a: &[f64], b: &[f64], z: f64) -> PairedComparison {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, se) = mean_stderr(&d);
    PairedComparison {
        mean_diff: mean,
        stderr: se,
        upper: mean + z * se,
    }
}

/// Outcome of [`paired_not_worse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComparison {
    pub mean_diff: f64,
    pub stderr: f64,
    /// One-sided upper confidence bound on the mean difference.
    pub upper: f64,
}

impl PairedComparison {
    pub fn holds(&self) -> bool {
        self.upper <= 0.0
    }
}

/// One-sided 95% normal quantile.
pub const Z_95: f64 = 1.6448536269514722;

/// `%g`-style formatting with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        format!("{}e{}{:02}", trim_zeros(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
