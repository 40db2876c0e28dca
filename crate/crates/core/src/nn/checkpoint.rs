//! Binary model files: `MFNN`, format version (u32), manifest length (u64)
//! and JSON manifest, then little-endian f64 parameters in layer order,
//! followed by the optimizer moments when present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::{Architecture, Network};
use super::regress::Normalizer;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub optimizer: Option<Adam>,
    pub normalizer: Option<Normalizer>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    architecture: Architecture,
    param_sizes: Vec<usize>,
    optimizer: Option<Adam>,
    moments: bool,
    normalizer: Option<Normalizer>,
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            optimizer: None,
            normalizer: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.network.params();
        let moments = self.optimizer.as_ref().is_some_and(|o| !o.m.is_empty());
        let manifest = Manifest {
            architecture: self.network.architecture(),
            param_sizes: params.iter().map(|p| p.len()).collect(),
            optimizer: self.optimizer.clone(),
            moments,
            normalizer: self.normalizer,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.network.num_params() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f64]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        for p in &params {
            put(p);
        }
        if moments {
            let opt = self.optimizer.as_ref().unwrap();
            for m in opt.m.iter().chain(&opt.v) {
                put(m);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Format("checkpoint is truncated".into());
        if bytes.len() < 16 {
            return Err(truncated());
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = bytes.get(16..16usize.checked_add(len).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let manifest: Manifest = serde_json::from_slice(json)?;
        let mut rest = &bytes[16 + len..];
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let nb = n.checked_mul(8).ok_or_else(truncated)?;
            if rest.len() < nb {
                return Err(truncated());
            }
            let (head, tail) = rest.split_at(nb);
            rest = tail;
            Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let flat: Vec<Vec<f64>> = manifest.param_sizes.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        let mut optimizer = manifest.optimizer;
        if manifest.moments {
            let opt = optimizer
                .as_mut()
                .ok_or_else(|| Error::Format("moments stored without optimizer settings".into()))?;
            opt.m = manifest.param_sizes.iter().map(|&n| take(n)).collect::<Result<_>>()?;
            opt.v = manifest.param_sizes.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        }
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint data", rest.len())));
        }
        let mut groups = flat.into_iter();
        let mut per_layer = Vec::with_capacity(manifest.architecture.layers.len());
        for spec in &manifest.architecture.layers {
            let k = spec.param_shapes().len();
            let g: Vec<Vec<f64>> = groups.by_ref().take(k).collect();
            if g.len() != k {
                return Err(Error::Format("fewer parameter groups than the architecture needs".into()));
            }
            per_layer.push(g);
        }
        if groups.next().is_some() {
            return Err(Error::Format("more parameter groups than the architecture needs".into()));
        }
        let network = Network::from_parts(&manifest.architecture, per_layer)?;
        Ok(Self {
            network,
            optimizer,
            normalizer: manifest.normalizer,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
