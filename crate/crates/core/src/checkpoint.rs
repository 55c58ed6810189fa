//! Binary checkpoints: `HENCKPT1`, a little-endian u64 header length, a JSON
//! header, then every tensor as little-endian f64 in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HENCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: serde_json::Value,
    entries: Vec<Entry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Free-form run state (epoch, history, ...).
    pub meta: serde_json::Value,
    pub tensors: Vec<(Entry, Tensor)>,
}

impl Checkpoint {
    /// Every store entry plus `extra` tensors (kind Buffer) under their own names.
    pub fn capture(config: &ModelConfig, store: &ParamStore, extra: Vec<(String, Tensor)>, meta: serde_json::Value) -> Self {
        let mut tensors: Vec<(Entry, Tensor)> = store
            .iter()
            .map(|(_, p)| {
                (
                    Entry {
                        name: p.name.clone(),
                        kind: p.kind,
                        shape: p.value.shape().to_vec(),
                    },
                    p.value.detach(),
                )
            })
            .collect();
        for (name, t) in extra {
            tensors.push((
                Entry {
                    name,
                    kind: ParamKind::Buffer,
                    shape: t.shape().to_vec(),
                },
                t.detach(),
            ));
        }
        Checkpoint {
            config: config.clone(),
            meta,
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(e, _)| e.name == name).map(|(_, t)| t)
    }

    /// Copies every store entry from the checkpoint; names and shapes must match.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = self
                .get(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {name}")))?;
            store.set(id, t.clone())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            meta: self.meta.clone(),
            entries: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.tensors.iter().map(|t| t.1.numel()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        bytes.read_exact(&mut len).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if bytes.len() < len {
            return Err(Error::Format("truncated checkpoint header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[..len])?;
        bytes = &bytes[len..];
        let mut tensors = Vec::with_capacity(header.entries.len());
        for e in header.entries {
            let n: usize = e.shape.iter().product();
            if bytes.len() < 8 * n {
                return Err(Error::Format(format!("truncated data for {}", e.name)));
            }
            let data = bytes[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            bytes = &bytes[8 * n..];
            let t = Tensor::from_vec(&e.shape, data)?;
            tensors.push((e, t));
        }
        if !bytes.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len())));
        }
        Ok(Checkpoint {
            config: header.config,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)?.write_all(&self.to_bytes()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_roundtrip() {
        let mut store = ParamStore::new();
        store.add("a.w", ParamKind::Trainable, Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap());
        store.add("a.rm", ParamKind::Buffer, Tensor::zeros(&[1]));
        let ck = Checkpoint::capture(
            &ModelConfig::desk(2),
            &store,
            vec![("optim.a.w".into(), Tensor::ones(&[2]))],
            serde_json::json!({"epoch": 3}),
        );
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.meta["epoch"], 3);
        assert_eq!(back.get("a.w").unwrap().to_vec(), vec![1.5, -2.0]);
        assert_eq!(back.get("optim.a.w").unwrap().to_vec(), vec![1.0, 1.0]);
        let mut other = store.clone();
        other.set(other.lookup("a.w").unwrap(), Tensor::zeros(&[2])).unwrap();
        back.restore(&mut other).unwrap();
        assert_eq!(other.get(other.lookup("a.w").unwrap()).to_vec(), vec![1.5, -2.0]);
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
    }
}
