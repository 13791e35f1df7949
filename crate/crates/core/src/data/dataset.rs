//! On-disk dataset: `manifest.json` with metadata plus `samples.bin` holding
//! little-endian f64 values, sample after sample. Each sample stores its
//! boundary loading as interleaved `(ux, uy)` pairs in ring order, followed
//! by the field channel-major.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::ProtocolSpec;
use super::synthetic::SyntheticConfig;
use crate::error::{Error, Result};
use crate::grid::{BoundaryLoading, GridField, GridSpec, Provenance, Sample, StressStretchRecord};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub samples: Vec<Sample>,
    pub protocols: Vec<ProtocolSpec>,
    pub seed: Option<u64>,
    /// Empirical continuity constant of the generating operator, if known.
    pub lipschitz: Option<f64>,
    pub generator: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub protocol_id: u8,
    pub frame_index: usize,
    pub cycle: usize,
    pub provenance: Provenance,
    pub record: Option<StressStretchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub grid: GridSpec,
    pub protocols: Vec<ProtocolSpec>,
    pub seed: Option<u64>,
    pub total: usize,
    pub per_protocol: BTreeMap<u8, usize>,
    pub lipschitz: Option<f64>,
    pub generator: Option<SyntheticConfig>,
    pub samples: Vec<SampleMeta>,
}

impl Dataset {
    pub fn new(grid: GridSpec, samples: Vec<Sample>) -> Result<Self> {
        let ds = Self {
            grid,
            samples,
            protocols: super::protocol::protocol_table(),
            seed: None,
            lipschitz: None,
            generator: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if *s.field.grid() != self.grid || s.field.channels() != 2 {
                return Err(Error::Data(format!("sample {k} is not a two-channel field on the dataset grid")));
            }
            if s.boundary.dims() != (self.grid.nx, self.grid.ny) {
                return Err(Error::Data(format!("sample {k} boundary does not match the dataset grid")));
            }
        }
        Ok(())
    }

    pub fn per_protocol(&self) -> BTreeMap<u8, usize> {
        let mut m = BTreeMap::new();
        for s in &self.samples {
            *m.entry(s.protocol_id).or_insert(0) += 1;
        }
        m
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: DATASET_FORMAT_VERSION,
            grid: self.grid,
            protocols: self.protocols.clone(),
            seed: self.seed,
            total: self.samples.len(),
            per_protocol: self.per_protocol(),
            lipschitz: self.lipschitz,
            generator: self.generator.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleMeta {
                    protocol_id: s.protocol_id,
                    frame_index: s.frame_index,
                    cycle: s.cycle,
                    provenance: s.provenance,
                    record: s.record,
                })
                .collect(),
        }
    }

    fn values_per_sample(grid: &GridSpec) -> usize {
        2 * grid.num_boundary() + 2 * grid.num_nodes()
    }

    pub fn samples_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * Self::values_per_sample(&self.grid) * 8);
        for s in &self.samples {
            for v in s.boundary.values().iter().flatten().chain(s.field.values()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_parts(manifest: Manifest, bytes: &[u8]) -> Result<Self> {
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported dataset format version {} (expected {DATASET_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let grid = GridSpec::new(manifest.grid.nx, manifest.grid.ny, manifest.grid.extent)
            .map_err(|e| Error::Data(format!("invalid grid in manifest: {e}")))?;
        if manifest.total != manifest.samples.len() {
            return Err(Error::Data(format!(
                "manifest lists {} samples but reports a total of {}",
                manifest.samples.len(),
                manifest.total
            )));
        }
        let per = Self::values_per_sample(&grid);
        let expected = manifest.total * per * 8;
        if bytes.len() != expected {
            return Err(Error::Data(format!("{SAMPLES_FILE} holds {} bytes, expected {expected}", bytes.len())));
        }
        let nb = grid.num_boundary();
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in sample {}", k / per)));
        }
        let mut samples = Vec::with_capacity(manifest.total);
        for (meta, chunk) in manifest.samples.iter().zip(values.chunks_exact(per)) {
            let boundary = chunk[..2 * nb].chunks_exact(2).map(|p| [p[0], p[1]]).collect();
            samples.push(Sample {
                boundary: BoundaryLoading::new(grid.nx, grid.ny, boundary)?,
                field: GridField::from_values(grid, 2, chunk[2 * nb..].to_vec())?,
                protocol_id: meta.protocol_id,
                frame_index: meta.frame_index,
                cycle: meta.cycle,
                provenance: meta.provenance,
                record: meta.record,
            });
        }
        let ds = Self {
            grid,
            samples,
            protocols: manifest.protocols,
            seed: manifest.seed,
            lipschitz: manifest.lipschitz,
            generator: manifest.generator,
        };
        if ds.per_protocol() != manifest.per_protocol {
            return Err(Error::Data("per-protocol counts disagree with the sample list".into()));
        }
        Ok(ds)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, manifest + "\n").map_err(|e| Error::io(&mpath, e))?;
        let spath = dir.join(SAMPLES_FILE);
        fs::write(&spath, self.samples_bytes()).map_err(|e| Error::io(&spath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", mpath.display())))?;
        let spath = dir.join(SAMPLES_FILE);
        let bytes = fs::read(&spath).map_err(|e| Error::io(&spath, e))?;
        Self::from_parts(manifest, &bytes)
    }

    /// One row per sample and node, for inspection in other tools.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sample", "protocol_id", "frame_index", "cycle", "i", "j", "x", "y", "ux", "uy"])?;
        for (k, s) in self.samples.iter().enumerate() {
            for i in 0..self.grid.nx {
                for j in 0..self.grid.ny {
                    let [x, y] = self.grid.coord(i, j);
                    out.write_record([
                        k.to_string(),
                        s.protocol_id.to_string(),
                        s.frame_index.to_string(),
                        s.cycle.to_string(),
                        i.to_string(),
                        j.to_string(),
                        x.to_string(),
                        y.to_string(),
                        s.field.get(0, i, j).to_string(),
                        s.field.get(1, i, j).to_string(),
                    ])?;
                }
            }
        }
        out.flush().map_err(|e| Error::io(Path::new("<csv>"), e))
    }
}
