//! Binary training checkpoints: magic, version, dtype tag, a JSON header
//! with configuration and counters, then length-prefixed little-endian
//! arrays (parameters, Adam moments, best parameters).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::learned::{Learned, LearnedSpec};
use super::optim::OptimizerState;
use super::trainer::{Best, Trainer};
use crate::autodiff::{DType, Real};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PDYNCKP1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: LearnedSpec,
    pub train: TrainConfig,
    pub iteration: u64,
    pub epoch: usize,
    pub bad_epochs: usize,
    pub opt_step: u64,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
    rng: RngState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub params: Vec<T>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Empty when no validation has run yet.
    pub best_params: Vec<T>,
}

fn put_array<U: Real>(out: &mut Vec<u8>, xs: &[U]) {
    out.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for &x in xs {
        x.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn array<U: Real>(&mut self) -> Result<Vec<U>> {
        let n = self.u64()? as usize;
        let size = U::DTYPE.size();
        let raw = self.take(n.checked_mul(size).ok_or_else(|| Error::format(self.path, "array length overflow"))?)?;
        Ok(raw.chunks_exact(size).map(U::read_le).collect())
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn from_trainer(t: &Trainer<T>) -> Self {
        let header = CheckpointHeader {
            spec: t.model.spec(),
            train: t.config.clone(),
            iteration: t.iteration,
            epoch: t.epoch,
            bad_epochs: t.bad_epochs,
            opt_step: t.opt.step,
            best_val: t.best.as_ref().map(|b| b.val_loss),
            best_epoch: t.best.as_ref().map(|b| b.epoch),
            rng: RngState {
                seed: hex::encode(t.rng.get_seed()),
                stream: t.rng.get_stream(),
                word_pos: t.rng.get_word_pos().to_string(),
            },
        };
        Self {
            header,
            params: t.model.flat_params(),
            m: t.opt.m.clone(),
            v: t.opt.v.clone(),
            best_params: t.best.as_ref().map(|b| b.params.clone()).unwrap_or_default(),
        }
    }

    /// Restores the trainer. `expected`, when given, must equal the
    /// checkpoint's model configuration.
    pub fn into_trainer(self, expected: Option<&ModelConfig>) -> Result<Trainer<T>> {
        let h = self.header;
        if let Some(cfg) = expected {
            if cfg != &h.spec.config {
                return Err(Error::CheckpointMismatch(format!(
                    "model configuration differs: checkpoint {:?}, requested {cfg:?}",
                    h.spec.config
                )));
            }
        }
        let mut model = Learned::<T>::new(&h.spec, 0)?;
        model.set_flat_params(&self.params).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        if self.m.len() != self.params.len() || self.v.len() != self.params.len() {
            return Err(Error::CheckpointMismatch("optimizer moments do not match the parameters".into()));
        }
        let opt = OptimizerState { m: self.m, v: self.v, step: h.opt_step };
        let bad = |what: &str| Error::CheckpointMismatch(format!("bad rng {what}"));
        let seed: [u8; 32] = hex::decode(&h.rng.seed).ok().and_then(|v| v.try_into().ok()).ok_or_else(|| bad("seed"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(h.rng.stream);
        rng.set_word_pos(h.rng.word_pos.parse().map_err(|_| bad("position"))?);
        let best = match (h.best_val, h.best_epoch) {
            (Some(val_loss), Some(epoch)) => Some(Best { val_loss, epoch, params: self.best_params }),
            _ => None,
        };
        Trainer::assemble(h.train, model, opt, rng, h.iteration, h.epoch, best, h.bad_epochs)
    }

    /// Model with the best validation parameters, or the current ones.
    pub fn model(&self) -> Result<Learned<T>> {
        let mut m = Learned::<T>::new(&self.header.spec, 0)?;
        let p = if self.best_params.is_empty() { &self.params } else { &self.best_params };
        m.set_flat_params(p)?;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&T::DTYPE.tag().to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        put_array(&mut out, &self.params);
        put_array(&mut out, &self.m);
        put_array(&mut out, &self.v);
        put_array(&mut out, &self.best_params);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let dtype = checkpoint_dtype(bytes, path)?;
        if dtype != T::DTYPE {
            return Err(Error::CheckpointMismatch(format!("checkpoint stores {dtype:?}, requested {:?}", T::DTYPE)));
        }
        let mut r = Reader { bytes, pos: 16, path };
        let n = r.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(n)?)?;
        let params = r.array()?;
        let m = r.array()?;
        let v = r.array()?;
        let best_params = r.array()?;
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after checkpoint payload"));
        }
        Ok(Self { header, params, m, v, best_params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, path)
    }
}

/// Storage precision recorded in a checkpoint's prefix.
pub fn checkpoint_dtype(bytes: &[u8], path: &Path) -> Result<DType> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let tag = r.u32()?;
    DType::from_tag(tag).ok_or_else(|| Error::format(path, format!("unknown dtype tag {tag}")))
}
