//! Versioned on-disk network snapshots.
//!
//! The trailing SHA-256 digest is computed with the `created_at` bytes
//! zeroed, so two checkpoints holding identical parameters and metadata get
//! the same content digest no matter when they were written.

use super::{Layer, Network, ACTION_DIM};
use crate::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use std::io::{Cursor, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SOEC";
const VERSION: u32 = 1;
const MAX_DIMS: usize = 64;
const MAX_DIM: usize = 1 << 20;

/// Identifies the nonlinearity family a checkpoint's parameters assume.
pub const ACTIVATION_TAG: &str = "tanh+squash";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the layer dimensions and activation tag. Two networks are
/// parameter-compatible (swappable in a schedule) iff their hashes match.
pub fn arch_hash(layer_dims: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update(ACTIVATION_TAG.as_bytes());
    for d in layer_dims {
        h.update([0x1f]);
        h.update((*d as u64).to_le_bytes());
    }
    hex(&h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    /// Training-run seed the parameters descend from.
    pub seed: u64,
    /// Number of completed epochs (1-based; 0 means untrained).
    pub epoch: u32,
    pub arch_hash: String,
    pub train_loss: f64,
    /// Unix seconds at save time. Excluded from the content digest.
    pub created_at: u64,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn digest_zeroing_created_at(body: &[u8], created_at_offset: usize) -> [u8; 32] {
    let mut scratch = body.to_vec();
    scratch[created_at_offset..created_at_offset + 8].fill(0);
    Sha256::digest(&scratch).into()
}

impl Checkpoint {
    pub fn new(network: Network, seed: u64, epoch: u32, train_loss: f64) -> Result<Self> {
        if !train_loss.is_finite() {
            return Err(Error::non_finite("checkpoint loss", format!("{train_loss}")));
        }
        if !network.params_finite() {
            return Err(Error::non_finite("checkpoint parameters", "non-finite weight"));
        }
        let arch = arch_hash(&network.layer_dims);
        Ok(Checkpoint {
            network,
            seed,
            epoch,
            arch_hash: arch,
            train_loss,
            created_at: now_unix(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dims = &self.network.layer_dims;
        let mut buf = Vec::new();
        buf.write_all(MAGIC)?;
        buf.write_u32::<LittleEndian>(VERSION)?;
        buf.write_u32::<LittleEndian>(dims.len() as u32)?;
        for d in dims {
            buf.write_u32::<LittleEndian>(*d as u32)?;
        }
        let tag = ACTIVATION_TAG.as_bytes();
        buf.write_u32::<LittleEndian>(tag.len() as u32)?;
        buf.write_all(tag)?;
        buf.write_u64::<LittleEndian>(self.seed)?;
        buf.write_u32::<LittleEndian>(self.epoch)?;
        buf.write_f64::<LittleEndian>(self.train_loss)?;
        let created_at_offset = buf.len();
        buf.write_u64::<LittleEndian>(self.created_at)?;
        for layer in &self.network.layers {
            for v in &layer.w {
                buf.write_f64::<LittleEndian>(*v)?;
            }
            for v in &layer.b {
                buf.write_f64::<LittleEndian>(*v)?;
            }
        }
        let digest = digest_zeroing_created_at(&buf, created_at_offset);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    /// Hex digest of everything except `created_at`; stable across re-saves
    /// of the same parameters.
    pub fn content_digest(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        Ok(hex(&bytes[bytes.len() - 32..]))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 32 {
            return Err(Error::Format("checkpoint file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut c = Cursor::new(body);
        let mut magic = [0u8; 4];
        c.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = c.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let ndims = c.read_u32::<LittleEndian>()? as usize;
        if !(2..=MAX_DIMS).contains(&ndims) {
            return Err(Error::Format(format!("implausible layer count {ndims}")));
        }
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            let d = c.read_u32::<LittleEndian>()? as usize;
            if d == 0 || d > MAX_DIM {
                return Err(Error::Format(format!("implausible layer width {d}")));
            }
            dims.push(d);
        }
        if *dims.last().unwrap() != ACTION_DIM {
            return Err(Error::Format(format!(
                "checkpoint output dim {} is not {ACTION_DIM}",
                dims.last().unwrap()
            )));
        }
        let tag_len = c.read_u32::<LittleEndian>()? as usize;
        if tag_len > 256 {
            return Err(Error::Format("implausible activation tag length".into()));
        }
        let mut tag = vec![0u8; tag_len];
        c.read_exact(&mut tag)?;
        if tag != ACTIVATION_TAG.as_bytes() {
            return Err(Error::Format("activation tag mismatch".into()));
        }
        let seed = c.read_u64::<LittleEndian>()?;
        let epoch = c.read_u32::<LittleEndian>()?;
        let train_loss = c.read_f64::<LittleEndian>()?;
        let created_at_offset = c.position() as usize;
        let created_at = c.read_u64::<LittleEndian>()?;

        let expect = digest_zeroing_created_at(body, created_at_offset);
        if digest != expect {
            return Err(Error::Format("checkpoint digest mismatch".into()));
        }

        let mut layers = Vec::with_capacity(ndims - 1);
        for w in dims.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let mut weights = vec![0.0; rows * cols];
            for v in &mut weights {
                *v = c.read_f64::<LittleEndian>()?;
            }
            let mut biases = vec![0.0; rows];
            for v in &mut biases {
                *v = c.read_f64::<LittleEndian>()?;
            }
            layers.push(Layer {
                w: weights,
                b: biases,
                rows,
                cols,
            });
        }
        if c.position() != body.len() as u64 {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        let arch = arch_hash(&dims);
        Ok(Checkpoint {
            network: Network {
                layer_dims: dims,
                layers,
            },
            seed,
            epoch,
            arch_hash: arch,
            train_loss,
            created_at,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}
