//! Checkpoint files.
//!
//! Layout: the magic `MASKPAR\0`, a little-endian `u32` format version, a
//! `u64` header length, a JSON header, then raw little-endian `f32` data:
//! every parameter tensor in header order, followed by the Adam first and
//! second moments of each trainable tensor when optimizer state is stored.
//! Values are stored bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use maskpar_core::model::{ParamKind, ParamStore};
use maskpar_core::optim::AdamState;
use maskpar_core::train::{ResumeState, TrainConfig};
use maskpar_core::{Model, ModelConfig, TaskPolicy, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MASKPAR\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub train: Option<TrainConfig>,
    /// Present when training can be resumed from this file.
    pub resume: Option<ResumeState>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: ParamKind,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    policy: TaskPolicy,
    train: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
    /// `(optimizer step, epochs done)` when moments follow the parameters.
    resume: Option<(u64, usize)>,
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), reason: reason.into() }
}

fn put(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let params = ck.model.params();
    let header = Header {
        model: ck.model.config().clone(),
        policy: ck.model.policy().clone(),
        train: ck.train.clone(),
        tensors: params
            .entries()
            .iter()
            .map(|p| TensorEntry { name: p.name.clone(), kind: p.kind, shape: p.tensor.shape().to_vec() })
            .collect(),
        resume: ck.resume.as_ref().map(|r| (r.optimizer.step, r.epochs_done)),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params.entries() {
        put(&mut out, p.tensor.values());
    }
    if let Some(r) = &ck.resume {
        for (m, v) in r.optimizer.m.iter().zip(&r.optimizer.v) {
            put(&mut out, m);
            put(&mut out, v);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(bad(self.path, "file is truncated"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| bad(self.path, "tensor too large"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut c = Cursor { bytes, path };
    if c.take(8)? != MAGIC {
        return Err(bad(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(path, format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let len = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let header: Header =
        serde_json::from_slice(c.take(len as usize)?).map_err(|e| bad(path, format!("header: {e}")))?;
    let mut params = ParamStore::new();
    for t in &header.tensors {
        let values = c.floats(t.shape.iter().product())?;
        params.insert(&t.name, t.kind, Tensor::new(t.shape.clone(), values)?)?;
    }
    let resume = match header.resume {
        Some((step, epochs_done)) => {
            let (mut m, mut v) = (Vec::new(), Vec::new());
            for p in params.entries() {
                let n = if p.kind.trainable() { p.tensor.len() } else { 0 };
                m.push(c.floats(n)?);
                v.push(c.floats(n)?);
            }
            Some(ResumeState { epochs_done, optimizer: AdamState { step, m, v } })
        }
        None => None,
    };
    if !c.bytes.is_empty() {
        return Err(bad(path, format!("{} trailing bytes", c.bytes.len())));
    }
    let model = Model::from_params(header.model, header.policy, params)?;
    Ok(Checkpoint { model, train: header.train, resume })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(ck)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use maskpar_core::data::synthetic_policy;

    fn model() -> Model<f32> {
        Model::new(ModelConfig::desk_light(), synthetic_policy(), 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = model();
        // odd values survive
        m.params_mut().entries_mut()[0].tensor.values_mut()[0] = f32::from_bits(0x0000_0001);
        let state = AdamState::new(m.params());
        let ck = Checkpoint {
            model: m,
            train: Some(TrainConfig::default()),
            resume: Some(ResumeState { epochs_done: 4, optimizer: AdamState { step: 17, ..state } }),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        save(&p, &ck).unwrap();
        assert_eq!(load(&p).unwrap(), ck);
        let bare = Checkpoint { resume: None, train: None, ..ck };
        assert_eq!(from_bytes(&to_bytes(&bare), &p).unwrap(), bare);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ck = Checkpoint { model: model(), train: None, resume: None };
        let bytes = to_bytes(&ck);
        let p = Path::new("x");
        assert!(from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra, p).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(from_bytes(&wrong, p).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(from_bytes(&version, p), Err(Error::Checkpoint { .. })));
    }
}
