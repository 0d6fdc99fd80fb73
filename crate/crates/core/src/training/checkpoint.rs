//! Checkpoint files.
//!
//! Layout: the magic line `DFNET-CKPT`, one line of JSON header, then the raw
//! little-endian f32 payload. The header lists every tensor (name, group,
//! shape) in payload order: all parameters, then the Adam first moments,
//! then the second moments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::folds::FoldSpec;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Network, NetworkConfig};
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_MAGIC: &str = "DFNET-CKPT";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f32-le";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    AdamM,
    AdamV,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: Group,
    shape: [usize; 4],
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    network: NetworkConfig,
    train: TrainConfig,
    fold: Option<FoldSpec>,
    step: u64,
    tensors: Vec<TensorEntry>,
    payload_bytes: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub adam: AdamState<f32>,
    pub train: TrainConfig,
    pub fold: Option<FoldSpec>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

impl Checkpoint {
    /// Checkpoint with zeroed optimizer moments.
    pub fn fresh(network: Network<f32>, train: TrainConfig, fold: Option<FoldSpec>) -> Self {
        let adam = {
            let params: Vec<&Tensor<f32>> = network.params().entries().iter().map(|p| &p.value).collect();
            AdamState::zeros_like(&params)
        };
        Self {
            network,
            adam,
            train,
            fold,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries = self.network.params().entries();
        if self.adam.m.len() != entries.len() || self.adam.v.len() != entries.len() {
            return Err(Error::LengthMismatch {
                expected: entries.len(),
                found: self.adam.m.len(),
            });
        }
        let mut tensors = Vec::with_capacity(entries.len() * 3);
        let mut blocks: Vec<&Tensor<f32>> = Vec::with_capacity(entries.len() * 3);
        for (group, list) in [
            (Group::Param, entries.iter().map(|p| &p.value).collect::<Vec<_>>()),
            (Group::AdamM, self.adam.m.iter().collect()),
            (Group::AdamV, self.adam.v.iter().collect()),
        ] {
            for (entry, t) in entries.iter().zip(list) {
                tensors.push(TensorEntry {
                    name: entry.name.clone(),
                    group,
                    shape: t.shape().as_array(),
                });
                blocks.push(t);
            }
        }
        let payload_bytes = blocks.iter().map(|t| t.len() * 4).sum::<usize>();
        let header = Header {
            format_version: FORMAT_VERSION,
            dtype: DTYPE.into(),
            network: self.network.config().clone(),
            train: self.train.clone(),
            fold: self.fold.clone(),
            step: self.adam.step,
            tensors,
            payload_bytes: payload_bytes as u64,
        };
        let mut out = format!("{CHECKPOINT_MAGIC}\n{}\n", serde_json::to_string(&header)?).into_bytes();
        out.reserve(payload_bytes);
        for t in blocks {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut lines = bytes.splitn(3, |&b| b == b'\n');
        let magic = lines.next().unwrap_or_default();
        if magic != CHECKPOINT_MAGIC.as_bytes() {
            return Err(corrupt("missing checkpoint magic"));
        }
        let header_line = lines.next().ok_or_else(|| corrupt("missing header"))?;
        let payload = lines.next().ok_or_else(|| corrupt("truncated after header"))?;
        let probe: VersionProbe = serde_json::from_slice(header_line).map_err(|e| corrupt(format!("header: {e}")))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                expected: FORMAT_VERSION,
                found: probe.format_version,
            });
        }
        let header: Header = serde_json::from_slice(header_line).map_err(|e| corrupt(format!("header: {e}")))?;
        if header.dtype != DTYPE {
            return Err(corrupt(format!("unsupported dtype {}", header.dtype)));
        }
        if payload.len() as u64 != header.payload_bytes {
            return Err(corrupt(format!(
                "payload holds {} bytes, header declares {}",
                payload.len(),
                header.payload_bytes
            )));
        }

        let mut offset = 0;
        let mut params = ParamStore::new();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for entry in &header.tensors {
            let shape = Shape::from_array(entry.shape);
            let end = offset + shape.numel() * 4;
            let raw = payload
                .get(offset..end)
                .ok_or_else(|| corrupt(format!("tensor {} runs past the payload", entry.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::from_vec(shape, data)?;
            offset = end;
            match entry.group {
                Group::Param => {
                    params.push(entry.name.clone(), t);
                }
                Group::AdamM => m.push(t),
                Group::AdamV => v.push(t),
            }
        }
        if offset != payload.len() {
            return Err(corrupt("payload longer than declared tensors"));
        }
        let network = Network::from_params(header.network, params)?;
        let moments_match = |list: &[Tensor<f32>]| {
            list.len() == network.params().len()
                && list.iter().zip(network.params().entries()).all(|(t, p)| t.shape() == p.value.shape())
        };
        if !moments_match(&m) || !moments_match(&v) {
            return Err(corrupt("optimizer moments do not match the parameters"));
        }
        Ok(Self {
            network,
            adam: AdamState { step: header.step, m, v },
            train: header.train,
            fold: header.fold,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkConfig;

    fn tiny() -> Checkpoint {
        let config = NetworkConfig::scaled(&[4, 6], 8);
        let network = Network::new(config, 3).unwrap();
        Checkpoint::fresh(network, TrainConfig::default(), None)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = tiny();
        let a = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&a).unwrap();
        assert_eq!(back.network.param_count(), ck.network.param_count());
        for (x, y) in back.network.params().entries().iter().zip(ck.network.params().entries()) {
            assert_eq!(x.name, y.name);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.value), bits(&y.value));
        }
        assert_eq!(back.to_bytes().unwrap(), a);
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = tiny().to_bytes().unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 5] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::CorruptCheckpoint(_))
            ));
        }
    }

    #[test]
    fn version_is_enforced() {
        let bytes = tiny().to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":99", 1);
        assert!(matches!(
            Checkpoint::from_bytes(bumped.as_bytes()),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));
    }
}
