//! Gaussian stand-in for a layered latent representation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{gaussian, stream};
use crate::{Error, Result};

/// Shape of the component variance profile.
///
/// Layer `l` holds `n_components / n_layers` components with variances
/// `peak_variance * layer_ratio^l / (1 + i)^decay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub n_components: usize,
    pub n_layers: usize,
    pub peak_variance: f64,
    pub decay: f64,
    pub layer_ratio: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            n_components: 24_576,
            n_layers: 1,
            peak_variance: 0.0625,
            decay: 1.0,
            layer_ratio: 0.25,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_components == 0 || !self.n_components.is_multiple_of(self.n_layers) {
            return Err(Error::Config(format!(
                "n_components ({}) must be a positive multiple of n_layers ({})",
                self.n_components, self.n_layers
            )));
        }
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.peak_variance) || !finite_pos(self.layer_ratio) || !self.decay.is_finite() || self.decay < 0.0 {
            return Err(Error::Config("variance profile parameters must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn layer_len(&self) -> usize {
        self.n_components / self.n_layers
    }

    pub fn variances(&self) -> Vec<f64> {
        let per = self.layer_len();
        (0..self.n_components)
            .map(|j| {
                let (l, i) = (j / per, j % per);
                self.peak_variance * self.layer_ratio.powi(l as i32) / (1.0 + i as f64).powf(self.decay)
            })
            .collect()
    }
}

/// One draw of source coefficients with their prior variances.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSource {
    pub coefficients: Vec<f64>,
    pub component_variances: Vec<f64>,
    pub n_layers: usize,
    pub rng_seed: u64,
}

impl SurrogateSource {
    /// Independent zero-mean Gaussian components with the configured variances.
    pub fn sample(cfg: &SourceConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let variances = cfg.variances();
        let mut rng = stream(seed);
        let coefficients = variances.iter().map(|&v| v.sqrt() * gaussian(&mut rng)).collect();
        Ok(Self {
            coefficients,
            component_variances: variances,
            n_layers: cfg.n_layers,
            rng_seed: seed,
        })
    }

    /// Wrap externally produced coefficients; the hook for other sources.
    pub fn from_parts(coefficients: Vec<f64>, component_variances: Vec<f64>, n_layers: usize) -> Result<Self> {
        if coefficients.len() != component_variances.len() || n_layers == 0 || !coefficients.len().is_multiple_of(n_layers) {
            return Err(Error::InvalidInput("coefficient/variance lengths must match and split evenly into layers".into()));
        }
        if component_variances.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidInput("component variances must be positive and finite".into()));
        }
        Ok(Self {
            coefficients,
            component_variances,
            n_layers,
            rng_seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn layer_len(&self) -> usize {
        self.len() / self.n_layers
    }

    /// Coefficients and variances of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let per = self.layer_len();
        let r = l * per..(l + 1) * per;
        (&self.coefficients[r.clone()], &self.component_variances[r])
    }

    /// Redraw coefficients in place from `rng`, keeping the variances.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (c, &v) in self.coefficients.iter_mut().zip(&self.component_variances) {
            *c = v.sqrt() * gaussian(rng);
        }
    }
}
