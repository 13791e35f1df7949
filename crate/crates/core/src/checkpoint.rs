//! Parameter checkpoints: a JSON header followed by raw little-endian f64
//! arrays.
//!
//! Layout: the 8-byte magic `IFNOCKPT`, the header length as a little-endian
//! `u64`, the UTF-8 JSON header, then every block of [`IfnoParams::named_blocks`]
//! in header order. Complex weights are stored as interleaved `(re, im)`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ifno::{IfnoConfig, IfnoParams, SubNetParams};
use crate::spectral::ModeSet;

pub const MAGIC: &[u8; 8] = b"IFNOCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub grid: GridSpec,
    pub config: IfnoConfig,
    pub layers: usize,
    pub dt: f64,
    pub seed: u64,
    /// `(name, length)` of each array, in storage order
    pub blocks: Vec<(String, usize)>,
}

pub fn write_checkpoint<W: Write>(params: &IfnoParams, mut w: W) -> Result<()> {
    let blocks = params.named_blocks();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        grid: params.grid,
        config: params.config,
        layers: params.layers(),
        dt: params.dt,
        seed: params.seed,
        blocks: blocks.iter().map(|(n, b)| (n.clone(), b.len())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * params.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, b) in &blocks {
        for v in b.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<IfnoParams> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<checkpoint>", e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<IfnoParams> {
    let bad = |m: &str| Error::Data(format!("malformed checkpoint: {m}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body])?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {}", header.format_version)));
    }
    if header.layers != header.config.layers {
        return Err(bad("layer count disagrees with config"));
    }
    header.config.validate()?;
    let modes = ModeSet::new(header.grid.nx, header.grid.ny, header.config.k1, header.config.k2)?;
    let sub = SubNetParams::zeros(header.config.width, header.config.proj_width, modes);
    let mut params = IfnoParams {
        sub_x: sub.clone(),
        sub_y: sub,
        grid: header.grid,
        config: header.config,
        dt: header.dt,
        seed: header.seed,
    };
    let expected: Vec<(String, usize)> = params
        .named_blocks()
        .iter()
        .map(|(n, b)| (n.clone(), b.len()))
        .collect();
    if expected != header.blocks {
        return Err(bad("block table does not match the declared dimensions"));
    }
    let total: usize = expected.iter().map(|(_, l)| l).sum();
    if bytes.len() != body + 8 * total {
        return Err(bad(&format!("expected {} payload bytes, found {}", 8 * total, bytes.len() - body)));
    }
    let mut words = bytes[body..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            *v = words.next().unwrap();
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &IfnoParams, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(params, &mut w).map_err(|e| relabel(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<IfnoParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifno::init_params;

    fn params() -> IfnoParams {
        let cfg = IfnoConfig {
            width: 3,
            proj_width: 5,
            k1: 2,
            k2: 3,
            layers: 4,
            ..IfnoConfig::default()
        };
        init_params(&cfg, GridSpec::new(7, 6, [5.5, 5.5]).unwrap(), 17).unwrap()
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        let p = params();
        let mut a = Vec::new();
        write_checkpoint(&p, &mut a).unwrap();
        let q = read_checkpoint(a.as_slice()).unwrap();
        assert_eq!(p, q);
        let mut b = Vec::new();
        write_checkpoint(&q, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let p = params();
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut a = Vec::new();
        write_checkpoint(&params(), &mut a).unwrap();
        assert!(read_checkpoint(&a[..a.len() - 8]).is_err());
        let mut wrong = a.clone();
        wrong[0] = b'X';
        assert!(read_checkpoint(wrong.as_slice()).is_err());
        assert!(read_checkpoint(&a[..12]).is_err());
    }
}
