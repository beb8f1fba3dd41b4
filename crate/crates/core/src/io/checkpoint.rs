//! Binary checkpoints: `FGCK` magic, version, a JSON header describing the
//! architecture, config and blob layout, raw little-endian `f64` blobs, and
//! a trailing SHA-256 digest over everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Architecture, Dense, ModelParams};
use crate::tensor::Tensor;
use crate::training::ExperimentConfig;

const MAGIC: &[u8; 4] = b"FGCK";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Momentum buffers, when saved from a training run.
    pub velocity: Option<ModelParams>,
    pub config: ExperimentConfig,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct BlobInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    channels: usize,
    input_size: usize,
    seed: u64,
    config: ExperimentConfig,
    blobs: Vec<BlobInfo>,
}

impl Checkpoint {
    /// `(C, side)` of the images the model consumes.
    pub fn input_geometry(&self) -> (usize, usize) {
        (self.config.channels, self.config.train_size)
    }

    pub fn classes(&self) -> usize {
        self.params.classes()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut named: Vec<(String, &Tensor)> = self.params.tensors();
        if let Some(v) = &self.velocity {
            named.extend(v.tensors().into_iter().map(|(n, t)| (format!("velocity.{n}"), t)));
        }
        let header = Header {
            architecture: self.params.architecture(),
            channels: self.config.channels,
            input_size: self.config.train_size,
            seed: self.seed,
            config: self.config.clone(),
            blobs: named.iter().map(|(n, t)| BlobInfo { name: n.clone(), shape: t.shape().to_vec() }).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Hex SHA-256 of the serialized checkpoint body.
    pub fn digest(&self) -> String {
        let bytes = self.to_bytes();
        bytes[bytes.len() - DIGEST_LEN..].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: &str| Error::CorruptFile { path: path.to_path_buf(), reason: reason.to_string() };
        if bytes.len() < 12 + DIGEST_LEN || &bytes[..4] != MAGIC {
            return Err(corrupt("missing FGCK header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("digest mismatch"));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let hlen = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(body.get(12..12 + hlen).ok_or_else(|| corrupt("short header"))?)
            .map_err(|e| corrupt(&format!("header: {e}")))?;
        header.architecture.validate()?;

        let mut cursor = 12 + hlen;
        let mut blobs = std::collections::BTreeMap::new();
        for info in &header.blobs {
            let n: usize = info.shape.iter().product();
            let raw = body.get(cursor..cursor + 8 * n).ok_or_else(|| corrupt("truncated blob"))?;
            cursor += 8 * n;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            let t = Tensor::new(info.shape.clone(), data).map_err(|e| corrupt(&e.to_string()))?;
            blobs.insert(info.name.clone(), t);
        }
        if cursor != body.len() {
            return Err(corrupt("trailing bytes after blobs"));
        }

        let arch = &header.architecture;
        let params = assemble(arch, &mut blobs, "").ok_or_else(|| corrupt("parameter blobs do not match architecture"))?;
        let velocity = if blobs.contains_key("velocity.head.class_weights") {
            Some(assemble(arch, &mut blobs, "velocity.").ok_or_else(|| corrupt("velocity blobs do not match architecture"))?)
        } else {
            None
        };
        if header.channels * header.input_size * header.input_size != params.input_dim() {
            return Err(corrupt("input geometry does not match first layer"));
        }
        Ok(Checkpoint { params, velocity, config: header.config, seed: header.seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_file(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&super::read_bytes(path)?, path)
    }
}

fn assemble(
    arch: &Architecture,
    blobs: &mut std::collections::BTreeMap<String, Tensor>,
    prefix: &str,
) -> Option<ModelParams> {
    let mut layers = Vec::new();
    for (i, w) in arch.widths.windows(2).enumerate() {
        let weight = blobs.remove(&format!("{prefix}layer{i}.weight"))?;
        let bias = blobs.remove(&format!("{prefix}layer{i}.bias"))?;
        if weight.shape() != [w[1], w[0]] || bias.shape() != [w[1]] {
            return None;
        }
        layers.push(Dense { weight, bias });
    }
    let class_weights = blobs.remove(&format!("{prefix}head.class_weights"))?;
    if class_weights.shape() != [arch.classes, arch.embedding_dim()] {
        return None;
    }
    Some(ModelParams { layers, class_weights })
}
