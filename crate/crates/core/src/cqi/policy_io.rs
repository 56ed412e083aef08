//! Binary policy files.
//!
//! Layout, all little-endian: `b"CQI1"`, `u32` bits, `u32` subcarriers,
//! `u32` layer-size count, that many `u32` sizes, then per layer the `f64`
//! weights (row-major) followed by the `f64` biases, then `u32` demap
//! levels, `u32` demap hidden width and the `f64` demap parameters
//! `w1` (row-major), `b1`, `w2`, `b2`.

use std::fs;
use std::path::Path;

use super::demap::DemapParams;
use super::qnet::QNetwork;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CQI1";

/// A trained SNR-to-CQI network and its CQI-to-SNR demapper.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub bits: u32,
    pub n_subcarriers: usize,
    pub net: QNetwork,
    pub demap: DemapParams,
}

impl Policy {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        let put_f64s = |out: &mut Vec<u8>, vs: &[f64]| vs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        put_u32(&mut out, self.bits as usize);
        put_u32(&mut out, self.n_subcarriers);
        let sizes = self.net.sizes();
        put_u32(&mut out, sizes.len());
        for s in &sizes {
            put_u32(&mut out, *s);
        }
        for l in &self.net.layers {
            put_f64s(&mut out, &l.weights);
            put_f64s(&mut out, &l.bias);
        }
        put_u32(&mut out, self.demap.levels);
        put_u32(&mut out, self.demap.hidden);
        put_f64s(&mut out, &self.demap.w1);
        put_f64s(&mut out, &self.demap.b1);
        put_f64s(&mut out, &self.demap.w2);
        put_f64s(&mut out, &[self.demap.b2]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::InvalidInput("policy file does not start with CQI1".into()));
        }
        let bits = r.u32()? as u32;
        let n_subcarriers = r.u32()?;
        let n_sizes = r.u32()?;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::InvalidInput(format!("implausible layer count {n_sizes}")));
        }
        let sizes = (0..n_sizes).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let mut net = QNetwork::zeros(&sizes);
        for l in &mut net.layers {
            l.weights = r.f64s(l.weights.len())?;
            l.bias = r.f64s(l.bias.len())?;
        }
        let levels = r.u32()?;
        let hidden = r.u32()?;
        let mut demap = DemapParams::zeros(levels, hidden);
        demap.w1 = r.f64s(levels * hidden)?;
        demap.b1 = r.f64s(hidden)?;
        demap.w2 = r.f64s(hidden)?;
        demap.b2 = r.f64s(1)?[0];
        if r.pos != bytes.len() {
            return Err(Error::InvalidInput(format!("{} trailing bytes in policy file", bytes.len() - r.pos)));
        }
        if net.n_actions() != 1 << bits || levels != 1 << bits || net.n_inputs() != n_subcarriers + 1 {
            return Err(Error::InvalidInput("policy dimensions disagree with its header".into()));
        }
        Ok(Self {
            bits,
            n_subcarriers,
            net,
            demap,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::InvalidInput("policy file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| Error::InvalidInput("size overflow".into()))?)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
