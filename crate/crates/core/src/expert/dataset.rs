//! Demonstration collection and the on-disk dataset format.

use super::features::{featurize, FeatureVector, FEATURE_LEN};
use super::{ExpertParams, ExpertPolicy};
use crate::env::{plan_tick_worlds, rollout, Action, Mode, Scenario, Termination};
use crate::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Cursor, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub features: FeatureVector,
    pub target: Action,
}

/// Per-feature normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at 1e-6.
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormStats {
    pub fn from_rows(rows: &[Demonstration]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("normalization", "no rows"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; FEATURE_LEN];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.features.0.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; FEATURE_LEN];
        for r in rows {
            for i in 0..FEATURE_LEN {
                let d = r.features.0[i] - mean[i];
                var[i] += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(NormStats { mean, std })
    }

    pub fn normalize(&self, f: &FeatureVector) -> Vec<f64> {
        f.0.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Demonstrations plus their provenance and normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Demonstration>,
    pub scenario_ids: Vec<String>,
    pub collection_seed: u64,
    pub stats: NormStats,
}

/// Outcome of a collection pass: the dataset plus any scenarios the expert
/// failed to complete (excluded from the data).
#[derive(Debug)]
pub struct CollectReport {
    pub dataset: Dataset,
    pub excluded: Vec<(String, Termination)>,
}

/// Roll the expert through every scenario in non-reactive mode and record
/// `(features, executed action)` at each plan tick. Scenarios the expert
/// does not complete are excluded and reported.
pub fn collect(
    scenarios: &[Scenario],
    params: &ExpertParams,
    collection_seed: u64,
) -> Result<CollectReport> {
    if scenarios.is_empty() {
        return Err(Error::invalid("collect", "no scenarios"));
    }
    let expert = ExpertPolicy { params: *params };
    let per_scenario: Vec<(String, std::result::Result<Vec<Demonstration>, Termination>)> =
        scenarios
            .par_iter()
            .map(|scenario| {
                let log = rollout(&expert, scenario, Mode::NonReactive);
                if log.termination != Termination::Completed {
                    return (scenario.id.clone(), Err(log.termination));
                }
                let per_plan = scenario.steps_per_plan();
                let rows = plan_tick_worlds(scenario, &log)
                    .iter()
                    .map(|w| {
                        let view = w.view(&scenario.route, &scenario.params);
                        let step = w.tick as usize * per_plan;
                        Demonstration {
                            features: featurize(&view),
                            target: log.records[step].action,
                        }
                    })
                    .collect();
                (scenario.id.clone(), Ok(rows))
            })
            .collect();

    let mut rows = Vec::new();
    let mut ids = Vec::new();
    let mut excluded = Vec::new();
    for (id, outcome) in per_scenario {
        match outcome {
            Ok(mut r) => {
                rows.append(&mut r);
                ids.push(id);
            }
            Err(t) => excluded.push((id, t)),
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("collect", "expert completed no scenarios"));
    }
    let stats = NormStats::from_rows(&rows)?;
    Ok(CollectReport {
        dataset: Dataset {
            rows,
            scenario_ids: ids,
            collection_seed,
            stats,
        },
        excluded,
    })
}

const MAGIC: &[u8; 4] = b"SOED";
const VERSION: u32 = 1;
const ACTION_DIM: usize = 2;

impl Dataset {
    /// Serialize to the versioned binary format with a trailing SHA-256
    /// integrity digest.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.write_all(MAGIC)?;
        buf.write_u32::<LittleEndian>(VERSION)?;
        buf.write_u32::<LittleEndian>(FEATURE_LEN as u32)?;
        buf.write_u32::<LittleEndian>(ACTION_DIM as u32)?;
        buf.write_u64::<LittleEndian>(self.rows.len() as u64)?;
        buf.write_u64::<LittleEndian>(self.collection_seed)?;
        buf.write_u32::<LittleEndian>(self.scenario_ids.len() as u32)?;
        for id in &self.scenario_ids {
            let b = id.as_bytes();
            buf.write_u32::<LittleEndian>(b.len() as u32)?;
            buf.write_all(b)?;
        }
        for m in &self.stats.mean {
            buf.write_f64::<LittleEndian>(*m)?;
        }
        for s in &self.stats.std {
            buf.write_f64::<LittleEndian>(*s)?;
        }
        for r in &self.rows {
            for v in r.features.0 {
                buf.write_f64::<LittleEndian>(v)?;
            }
            buf.write_f64::<LittleEndian>(r.target.accel)?;
            buf.write_f64::<LittleEndian>(r.target.steer)?;
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 {
            return Err(Error::Format("dataset file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let expect = Sha256::digest(body);
        if digest != expect.as_slice() {
            return Err(Error::Format("dataset digest mismatch".into()));
        }
        let mut c = Cursor::new(body);
        let mut magic = [0u8; 4];
        c.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let version = c.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let flen = c.read_u32::<LittleEndian>()? as usize;
        if flen != FEATURE_LEN {
            return Err(Error::Format(format!(
                "dataset feature length {flen} does not match {FEATURE_LEN}"
            )));
        }
        let adim = c.read_u32::<LittleEndian>()? as usize;
        if adim != ACTION_DIM {
            return Err(Error::Format(format!("unsupported action dim {adim}")));
        }
        let row_count = c.read_u64::<LittleEndian>()? as usize;
        let collection_seed = c.read_u64::<LittleEndian>()?;
        let id_count = c.read_u32::<LittleEndian>()? as usize;
        let mut scenario_ids = Vec::with_capacity(id_count);
        for _ in 0..id_count {
            let len = c.read_u32::<LittleEndian>()? as usize;
            let mut b = vec![0u8; len];
            c.read_exact(&mut b)?;
            scenario_ids.push(
                String::from_utf8(b).map_err(|_| Error::Format("bad id encoding".into()))?,
            );
        }
        let mut mean = vec![0.0; FEATURE_LEN];
        let mut std = vec![0.0; FEATURE_LEN];
        for m in &mut mean {
            *m = c.read_f64::<LittleEndian>()?;
        }
        for s in &mut std {
            *s = c.read_f64::<LittleEndian>()?;
        }
        let mut rows = Vec::with_capacity(row_count);
        for _ in 0..row_count {
            let mut f = [0.0; FEATURE_LEN];
            for v in &mut f {
                *v = c.read_f64::<LittleEndian>()?;
            }
            let accel = c.read_f64::<LittleEndian>()?;
            let steer = c.read_f64::<LittleEndian>()?;
            rows.push(Demonstration {
                features: FeatureVector(f),
                target: Action::new(accel, steer),
            });
        }
        if c.position() != body.len() as u64 {
            return Err(Error::Format("trailing bytes in dataset".into()));
        }
        Ok(Dataset {
            rows,
            scenario_ids,
            collection_seed,
            stats: NormStats { mean, std },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }
}
