//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `ARCCKPT1`, a little-endian `u32` length, that
//! many bytes of JSON metadata, then every tensor listed in the metadata as
//! little-endian `f32` values in listed order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use super::tensor::Real;
use super::NnError;

pub const MAGIC: &[u8; 8] = b"ARCCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub kind: String,
    pub output_shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub layers: Vec<LayerEntry>,
    pub tensors: Vec<TensorEntry>,
    pub epoch: u32,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arrays: Vec<Vec<f32>>,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Snapshot of a network; non-finite metrics are dropped.
    pub fn from_network<T: Real>(
        net: &Network<T>,
        epoch: u32,
        seed: u64,
        metrics: BTreeMap<String, f64>,
    ) -> Result<Self, NnError> {
        let layers = net
            .layers()
            .iter()
            .zip(net.shapes()?)
            .map(|(l, s)| LayerEntry {
                kind: l.kind().to_string(),
                output_shape: s,
            })
            .collect();
        let mut tensors = Vec::new();
        let mut arrays = Vec::new();
        for (name, shape, data) in net.state() {
            tensors.push(TensorEntry { name, shape });
            arrays.push(data.iter().map(|v| v.as_f64() as f32).collect());
        }
        Ok(Self {
            meta: CheckpointMeta {
                format_version: FORMAT_VERSION,
                spec: net.spec().clone(),
                layers,
                tensors,
                epoch,
                seed,
                metrics: metrics.into_iter().filter(|(_, v)| v.is_finite()).collect(),
            },
            arrays,
        })
    }

    /// Rebuilds the network, checking every tensor name and shape.
    pub fn to_network<T: Real>(&self) -> Result<Network<T>, NnError> {
        let mut net = Network::<T>::untrained(self.meta.spec.clone())?;
        let expected: Vec<TensorEntry> = net
            .state()
            .into_iter()
            .map(|(name, shape, _)| TensorEntry { name, shape })
            .collect();
        if expected != self.meta.tensors {
            return Err(bad("tensor list does not match the declared architecture"));
        }
        for (dst, src) in net.state_mut().into_iter().zip(&self.arrays) {
            if dst.len() != src.len() {
                return Err(bad("tensor length does not match its shape"));
            }
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = T::of(s as f64);
            }
        }
        Ok(net)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let json = serde_json::to_vec(&self.meta).map_err(|e| bad(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| bad("metadata too large"))?;
        w.write_all(MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for a in &self.arrays {
            let mut buf = Vec::with_capacity(a.len() * 4);
            for v in a {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let meta: CheckpointMeta = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", meta.format_version)));
        }
        let mut arrays = Vec::with_capacity(meta.tensors.len());
        for t in &meta.tensors {
            let n: usize = t.shape.iter().product();
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            arrays.push(
                buf.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            );
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Self { meta, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let net: Network<f32> = Network::seeded(NetworkSpec::downsized(), 4).unwrap();
        let metrics = BTreeMap::from([("val_acc".to_string(), 0.5), ("val_loss".to_string(), 1.25)]);
        Checkpoint::from_network(&net, 3, 4, metrics).unwrap()
    }

    #[test]
    fn load_save_is_byte_identical() {
        let bytes = sample().to_bytes().unwrap();
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(&bytes[..8], MAGIC);
    }

    #[test]
    fn network_round_trip() {
        let ck = sample();
        let net: Network<f32> = ck.to_network().unwrap();
        let again = Checkpoint::from_network(&net, 3, 4, ck.meta.metrics.clone()).unwrap();
        assert_eq!(again, ck);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(&extra[..]).is_err());
        let mut wrong = bytes;
        wrong[0] = b'X';
        assert!(Checkpoint::read_from(&wrong[..]).is_err());

        let mut ck = sample();
        ck.meta.tensors.swap(0, 1);
        assert!(ck.to_network::<f32>().is_err());
    }

    #[test]
    fn non_finite_metrics_are_dropped() {
        let net: Network<f32> = Network::seeded(NetworkSpec::downsized(), 4).unwrap();
        let metrics = BTreeMap::from([("a".to_string(), f64::NAN), ("b".to_string(), 2.0)]);
        let ck = Checkpoint::from_network(&net, 0, 0, metrics).unwrap();
        assert_eq!(ck.meta.metrics.len(), 1);
        assert!(Checkpoint::read_from(&ck.to_bytes().unwrap()[..]).is_ok());
    }
}
