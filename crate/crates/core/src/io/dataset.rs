//! Dataset container: `PDYN0001` magic, little-endian header (version, nx,
//! ny, channels, frames, dtype tag, frame_dt), length-prefixed channel
//! names, then frames back to back. A JSON sidecar next to it carries the
//! metadata and the SHA-256 of the binary file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::DType;
use crate::error::{Error, Result};
use crate::fields::StateField;
use crate::simulators::{generate_into, Dataset, DatasetMeta, FrameSink, SimConfig, Split};

pub const MAGIC: &[u8; 8] = b"PDYN0001";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub meta: DatasetMeta,
    pub dtype: DType,
    pub frames: usize,
    /// Hex SHA-256 of the binary file.
    pub sha256: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn header(meta: &DatasetMeta, frames: usize, dtype: DType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let u32_of = |v: usize| u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit the header")));
    for v in [VERSION, u32_of(meta.nx)?, u32_of(meta.ny)?, u32_of(meta.channels.len())?, u32_of(frames)?, dtype.tag()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&meta.frame_dt.to_le_bytes());
    for name in &meta.channels {
        out.extend_from_slice(&u32_of(name.len())?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    Ok(out)
}

fn encode(values: &[f64], dtype: DType, out: &mut Vec<u8>) {
    match dtype {
        DType::F32 => values.iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        DType::F64 => values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
}

/// Streams frames to disk as they are generated.
pub struct DatasetWriter {
    path: PathBuf,
    out: BufWriter<File>,
    hash: Sha256,
    meta: DatasetMeta,
    dtype: DType,
    expected: usize,
    written: usize,
    buf: Vec<u8>,
}

impl DatasetWriter {
    pub fn create(path: &Path, meta: DatasetMeta, frames: usize, dtype: DType) -> Result<Self> {
        let head = header(&meta, frames, dtype)?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&head)?;
        let mut hash = Sha256::new();
        hash.update(&head);
        Ok(Self { path: path.to_owned(), out, hash, meta, dtype, expected: frames, written: 0, buf: Vec::new() })
    }

    pub fn push_flat(&mut self, values: &[f64]) -> Result<()> {
        let per = self.meta.channels.len() * self.meta.nx * self.meta.ny;
        if values.len() != per || self.written == self.expected {
            return Err(Error::Shape(format!("unexpected frame {} of {} values", self.written, values.len())));
        }
        self.buf.clear();
        encode(values, self.dtype, &mut self.buf);
        self.out.write_all(&self.buf)?;
        self.hash.update(&self.buf);
        self.written += 1;
        Ok(())
    }

    /// Flushes the binary and writes the sidecar.
    pub fn finish(mut self) -> Result<Sidecar> {
        if self.written != self.expected {
            return Err(Error::Shape(format!("wrote {} of {} frames", self.written, self.expected)));
        }
        self.out.flush()?;
        let sidecar = Sidecar {
            meta: self.meta,
            dtype: self.dtype,
            frames: self.written,
            sha256: hex::encode(self.hash.finalize()),
        };
        std::fs::write(sidecar_path(&self.path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok(sidecar)
    }
}

impl FrameSink for DatasetWriter {
    fn push(&mut self, _time: f64, frame: &StateField) -> Result<()> {
        self.push_flat(&frame.to_flat())
    }
}

pub fn write_dataset(path: &Path, data: &Dataset, dtype: DType) -> Result<Sidecar> {
    let mut w = DatasetWriter::create(path, data.meta.clone(), data.len(), dtype)?;
    for k in 0..data.len() {
        w.push_flat(data.raw(k))?;
    }
    w.finish()
}

/// Runs the generator straight into a file.
pub fn generate_to_file(cfg: &SimConfig, split: Split, path: &Path, dtype: DType) -> Result<Sidecar> {
    let meta = crate::simulators::dataset_meta(cfg, split)?;
    let mut w = DatasetWriter::create(path, meta, split.total(), dtype)?;
    generate_into(cfg, split, &mut w)?;
    w.finish()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, "file ends inside the header"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Reads a dataset and its sidecar, checking the hash and the header
/// against the payload length.
pub fn read_dataset(path: &Path) -> Result<(Dataset, Sidecar)> {
    let bytes = std::fs::read(path)?;
    let side_path = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(&side_path)?)
        .map_err(|e| Error::format(&side_path, e.to_string()))?;
    let mut c = Cursor { bytes: &bytes, pos: 0, path };
    if c.take(8)? != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let (nx, ny, nc, frames, tag) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    let dtype = DType::from_tag(tag as u32).ok_or_else(|| Error::format(path, format!("unknown dtype tag {tag}")))?;
    let frame_dt = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let mut channels = Vec::with_capacity(nc);
    for _ in 0..nc {
        let n = c.u32()?;
        let name = std::str::from_utf8(c.take(n)?).map_err(|_| Error::format(path, "channel name is not UTF-8"))?;
        channels.push(name.to_owned());
    }
    let per = nc * nx * ny;
    let payload = &bytes[c.pos..];
    if payload.len() != frames * per * dtype.size() {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, header implies {}", payload.len(), frames * per * dtype.size()),
        ));
    }
    if hex::encode(Sha256::digest(&bytes)) != sidecar.sha256 {
        return Err(Error::format(path, "content hash does not match the sidecar"));
    }
    let m = &sidecar.meta;
    if (m.nx, m.ny) != (nx, ny) || m.channels != channels || m.frame_dt != frame_dt || sidecar.frames != frames {
        return Err(Error::format(path, "header disagrees with the sidecar"));
    }
    let values: Vec<f64> = match dtype {
        DType::F32 => payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4")) as f64).collect(),
        DType::F64 => payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8"))).collect(),
    };
    let frames = if per == 0 { vec![] } else { values.chunks(per).map(<[f64]>::to_vec).collect() };
    Ok((Dataset::new(sidecar.meta.clone(), frames)?, sidecar))
}
