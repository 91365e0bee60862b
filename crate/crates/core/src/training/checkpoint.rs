//! Binary checkpoint container.
//!
//! Layout: magic, format version, length-prefixed JSON metadata, tensor
//! count, then per tensor its name, shape and little-endian f64 payload,
//! closed by a SHA-256 digest of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hydrodata::{Normalizer, WindowConfig};
use crate::models::{ArchConfig, ModelBundle, Parameters};

const MAGIC: &[u8; 8] = b"FDANCKPT";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Adapt,
    Fewshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: ArchConfig,
    pub station_count: usize,
    pub window: WindowConfig,
    pub normalizer: Option<Normalizer>,
    pub stage: Stage,
    pub seed: u64,
    pub version: String,
}

impl CheckpointMeta {
    pub fn new(
        arch: &ArchConfig,
        station_count: usize,
        window: WindowConfig,
        normalizer: Option<Normalizer>,
        stage: Stage,
        seed: u64,
    ) -> Self {
        Self {
            arch: arch.clone(),
            station_count,
            window,
            normalizer,
            stage,
            seed,
            version: concat!("v", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    /// Fails unless this checkpoint was built for the given shapes.
    pub fn expect(&self, arch: &ArchConfig, station_count: usize, window_length: usize) -> Result<()> {
        let mismatch = |field: &str, expected: String, found: String| Error::ArchitectureMismatch {
            field: field.into(),
            expected,
            found,
        };
        if self.station_count != station_count {
            return Err(mismatch(
                "station_count",
                station_count.to_string(),
                self.station_count.to_string(),
            ));
        }
        if self.window.window_length != window_length {
            return Err(mismatch(
                "window_length",
                window_length.to_string(),
                self.window.window_length.to_string(),
            ));
        }
        if &self.arch != arch {
            let expected = serde_json::to_string(arch).expect("arch serializes");
            let found = serde_json::to_string(&self.arch).expect("arch serializes");
            return Err(mismatch("arch", expected, found));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub bundle: ModelBundle,
}

fn bundle_tensors(bundle: &ModelBundle) -> Vec<(String, ndarray::ArrayViewD<'_, f64>)> {
    let mut all = bundle.encoder.tensors();
    all.extend(bundle.head.tensors());
    all.extend(bundle.critic.tensors());
    all
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&ckpt.meta).expect("metadata serializes");
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    let tensors = bundle_tensors(&ckpt.bundle);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &dim in t.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        out.push(DTYPE_F64);
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt);
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                location: format!("byte {} ({field})", self.pos),
                reason: "file ends early".into(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, field)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Parse {
            location: field.into(),
            reason: format!("length {v} out of range"),
        })
    }
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + DIGEST_LEN {
        return Err(Error::Parse {
            location: "byte 0".into(),
            reason: format!("{} bytes is too short for a checkpoint", bytes.len()),
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(bad("magic", "not a checkpoint file"));
    }
    let version = r.u32("format_version")?;
    if version != FORMAT_VERSION {
        return Err(bad(
            "format_version",
            format!("expected {FORMAT_VERSION}, found {version}"),
        ));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Parse {
            location: "digest".into(),
            reason: "content digest mismatch (truncated or corrupt file)".into(),
        });
    }
    let meta_len = r.u64("metadata length")?;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len, "metadata")?).map_err(|e| Error::Parse {
        location: "metadata".into(),
        reason: e.to_string(),
    })?;
    meta.arch.validate()?;

    let mut encoder = meta.arch.new_encoder(meta.station_count);
    let mut head = meta.arch.new_head();
    let mut critic = meta.arch.new_critic(meta.window.window_length);
    let expected: Vec<(String, Vec<usize>)> = encoder
        .tensors()
        .into_iter()
        .chain(head.tensors())
        .chain(critic.tensors())
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(bad(
            "tensor count",
            format!("expected {}, found {count}", expected.len()),
        ));
    }
    let mut targets = encoder.tensors_mut();
    targets.extend(head.tensors_mut());
    targets.extend(critic.tensors_mut());
    for ((name, shape), target) in expected.iter().zip(targets.iter_mut()) {
        let len = r.u32(name)? as usize;
        let found = std::str::from_utf8(r.take(len, name)?).map_err(|_| bad(name, "name is not UTF-8"))?;
        if found != name {
            return Err(bad(name, format!("found tensor `{found}` in its place")));
        }
        let ndim = r.u32(name)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u64(name)?);
        }
        if &dims != shape {
            return Err(bad(
                name,
                format!("shape {dims:?} does not match architecture shape {shape:?}"),
            ));
        }
        if r.take(1, name)?[0] != DTYPE_F64 {
            return Err(bad(name, "unsupported dtype"));
        }
        let payload = r.take(8 * target.len(), name)?;
        for (v, chunk) in target.iter_mut().zip(payload.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    drop(targets);
    if r.pos != body.len() {
        return Err(Error::Parse {
            location: format!("byte {}", r.pos),
            reason: "trailing bytes after the last tensor".into(),
        });
    }
    let bundle = ModelBundle {
        arch: meta.arch.clone(),
        station_count: meta.station_count,
        window_length: meta.window.window_length,
        encoder,
        head,
        critic,
    };
    Ok(Checkpoint { meta, bundle })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
