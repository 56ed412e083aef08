//! CQI-to-SNR demapping through two affine maps on the one-hot index.

use crate::{Error, Result};

/// Bounds on any demapped SNR, dB.
pub const DEMAP_RANGE_DB: (f64, f64) = (-60.0, 60.0);

/// `snr = w2 . (W1 e_q + b1) + b2`, `W1` row-major `hidden x levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemapParams {
    pub levels: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient of the demapped value of one index w.r.t. every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DemapGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl DemapParams {
    pub fn zeros(levels: usize, hidden: usize) -> Self {
        Self {
            levels,
            hidden,
            w1: vec![0.0; hidden * levels],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Parameters reproducing `table` exactly (first hidden unit carries it).
    pub fn from_table(table: &[f64], hidden: usize) -> Self {
        assert!(hidden >= 1, "demap needs at least one hidden unit");
        let mut p = Self::zeros(table.len(), hidden);
        p.w1[..table.len()].copy_from_slice(table);
        p.w2[0] = 1.0;
        p
    }

    fn raw(&self, cqi: usize) -> f64 {
        let mut acc = self.b2;
        for h in 0..self.hidden {
            acc += self.w2[h] * (self.w1[h * self.levels + cqi] + self.b1[h]);
        }
        acc
    }

    /// Demapped SNR in dB, clamped to [`DEMAP_RANGE_DB`].
    pub fn snr_db(&self, cqi: usize) -> Result<f64> {
        if cqi >= self.levels {
            return Err(Error::Contract(format!("CQI {cqi} outside 0..{}", self.levels)));
        }
        Ok(self.raw(cqi).clamp(DEMAP_RANGE_DB.0, DEMAP_RANGE_DB.1))
    }

    pub fn table(&self) -> Vec<f64> {
        (0..self.levels).map(|q| self.raw(q).clamp(DEMAP_RANGE_DB.0, DEMAP_RANGE_DB.1)).collect()
    }

    /// Gradient of `snr_db(cqi)`; zero where the clamp is active.
    pub fn gradient(&self, cqi: usize) -> DemapGradient {
        let mut g = DemapGradient {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.hidden],
            b2: 0.0,
        };
        let raw = self.raw(cqi);
        if raw <= DEMAP_RANGE_DB.0 || raw >= DEMAP_RANGE_DB.1 {
            return g;
        }
        g.b2 = 1.0;
        for h in 0..self.hidden {
            g.w1[h * self.levels + cqi] = self.w2[h];
            g.b1[h] = self.w2[h];
            g.w2[h] = self.w1[h * self.levels + cqi] + self.b1[h];
        }
        g
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(std::iter::once(&mut self.b2))
    }
}

impl DemapGradient {
    pub fn zeros_like(p: &DemapParams) -> Self {
        Self {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.hidden],
            w2: vec![0.0; p.hidden],
            b2: 0.0,
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &DemapGradient, scale: f64) {
        let pairs = self
            .w1
            .iter_mut()
            .zip(&other.w1)
            .chain(self.b1.iter_mut().zip(&other.b1))
            .chain(self.w2.iter_mut().zip(&other.w2));
        for (a, b) in pairs {
            *a += scale * b;
        }
        self.b2 += scale * other.b2;
    }

    pub(crate) fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .copied()
            .chain(std::iter::once(self.b2))
    }
}

/// Adam on demap parameters.
#[derive(Debug, Clone)]
pub struct DemapAdam {
    step_size: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl DemapAdam {
    pub fn new(p: &DemapParams, step_size: f64) -> Self {
        let n = p.w1.len() + 2 * p.hidden + 1;
        Self {
            step_size,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn apply(&mut self, p: &mut DemapParams, g: &DemapGradient) -> Result<()> {
        let grads: Vec<f64> = g.values().collect();
        if grads.iter().any(|x| !x.is_finite()) {
            return Err(Error::Training("non-finite demap gradient".into()));
        }
        self.t += 1;
        let (b1, b2) = (0.9f64, 0.999f64);
        let (c1, c2) = (1.0 - b1.powi(self.t), 1.0 - b2.powi(self.t));
        for (i, w) in p.params_mut().enumerate() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grads[i] * grads[i];
            *w -= self.step_size * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-12);
        }
        Ok(())
    }
}
