//! Trained model bundle and its on-disk format.
//!
//! File layout: magic `HPNM`, version `u8`, `u32` little-endian length of a
//! JSON header, the header, then every network buffer as little-endian
//! `f32` in [`Network::state_slices`] order. The header lists buffer lengths
//! so a reader can check the payload before using it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EpochLoss, FitConfig, Network, NetworkSpec};
use crate::pipeline::{Normalization, Provenance};

pub const MODEL_MAGIC: &[u8; 4] = b"HPNM";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub network: Network<f32>,
    pub normalization: Normalization,
    pub provenance: Provenance,
    pub fit: FitConfig,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    normalization: Normalization,
    provenance: Provenance,
    fit: FitConfig,
    history: Vec<EpochLoss>,
    best_epoch: usize,
    buffers: Vec<usize>,
}

impl NetworkModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let slices = self.network.state_slices();
        let header = Header {
            spec: self.network.spec().clone(),
            normalization: self.normalization.clone(),
            provenance: self.provenance.clone(),
            fit: self.fit.clone(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
            buffers: slices.iter().map(|s| s.len()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("model header too large".into()))?;
        let payload: usize = slices.iter().map(|s| s.len() * 4).sum();
        let mut out = Vec::with_capacity(9 + json.len() + payload);
        out.extend(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.extend(len.to_le_bytes());
        out.extend(json);
        for s in slices {
            for v in s {
                out.extend(v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        if bytes[4] != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", bytes[4])));
        }
        let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let json = bytes
            .get(9..9 + len)
            .ok_or_else(|| Error::Format("model header truncated".into()))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Format(format!("model header: {e}")))?;
        let mut network = Network::<f32>::zeros(header.spec)?;
        let mut at = 9 + len;
        {
            let mut slices = network.state_slices_mut();
            if slices.len() != header.buffers.len()
                || slices.iter().zip(&header.buffers).any(|(s, &n)| s.len() != n)
            {
                return Err(Error::Format("model buffer layout does not match its architecture".into()));
            }
            for s in slices.iter_mut() {
                let raw = bytes
                    .get(at..at + s.len() * 4)
                    .ok_or_else(|| Error::Format("model parameters truncated".into()))?;
                for (dst, chunk) in s.iter_mut().zip(raw.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
                at += s.len() * 4;
            }
        }
        if at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after model", bytes.len() - at)));
        }
        if header.normalization.feature_count() + header.normalization.h_dims() != network.input_width() {
            return Err(Error::Format("model normalization does not match its input width".into()));
        }
        Ok(Self {
            network,
            normalization: header.normalization,
            provenance: header.provenance,
            fit: header.fit,
            history: header.history,
            best_epoch: header.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
