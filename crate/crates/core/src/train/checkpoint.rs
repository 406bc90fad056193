//! Checkpoint directories.
//!
//! ```text
//! manifest.json          configuration, fingerprint, progress, tensor index
//! tensors/<name>.bin     little-endian f32, row-major
//! optimizer/<name>.m.bin first moments, same layout
//! optimizer/<name>.v.bin second moments
//! loss_curve.csv         step,train_loss,val_loss
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::trainer::{CurvePoint, TrainState};
use crate::error::{Error, Result};
use crate::item_table::{CompressedItemTable, TableManifest};
use crate::model::{Adapters, Model, ModelConfig, ParamGroup, Trainable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraManifest {
    pub rank: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub fingerprint: String,
    pub seed: u64,
    pub epoch: usize,
    pub step: usize,
    pub best_val_loss: Option<f64>,
    pub model: ModelConfig,
    pub item_table: TableManifest,
    pub lora: Option<LoraManifest>,
    pub trainable: Vec<ParamGroup>,
    pub optimizer: Adam,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

/// A training state plus the identity of the run that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainState,
    pub fingerprint: String,
    pub seed: u64,
    pub best_val_loss: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

const ALL_GROUPS: [ParamGroup; 9] = [
    ParamGroup::BaseEmbed,
    ParamGroup::ItemTable,
    ParamGroup::Position,
    ParamGroup::Attention,
    ParamGroup::FeedForward,
    ParamGroup::Norm,
    ParamGroup::HeadBase,
    ParamGroup::HeadItem,
    ParamGroup::Lora,
];

fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, out: &mut [f32]) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != out.len() * 4 {
        return Err(Error::Shape(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            out.len() * 4
        )));
    }
    for (o, c) in out.iter_mut().zip(bytes.chunks_exact(4)) {
        *o = f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
    }
    Ok(())
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("step,train_loss,val_loss\n");
    for p in curve {
        let val = p.val_loss.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{}\n", p.step, p.train_loss, val));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad(n + 1, format!("expected 3 columns, got {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(n + 1, e.to_string()));
            Ok(CurvePoint {
                step: cols[0].parse().map_err(|e: std::num::ParseIntError| bad(n + 1, e.to_string()))?,
                train_loss: num(cols[1])?,
                val_loss: if cols[2].is_empty() { None } else { Some(num(cols[2])?) },
            })
        })
        .collect()
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let st = &self.state;
        for sub in ["tensors", "optimizer"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut tensors = st.model.params.tensors();
        if let Some(a) = &st.adapters {
            tensors.extend(a.tensors());
        }
        let mut entries = Vec::with_capacity(tensors.len());
        for (i, t) in tensors.iter().enumerate() {
            write_f32(&dir.join("tensors").join(format!("{}.bin", t.name)), t.data)?;
            write_f32(&dir.join("optimizer").join(format!("{}.m.bin", t.name)), &st.optimizer.m[i])?;
            write_f32(&dir.join("optimizer").join(format!("{}.v.bin", t.name)), &st.optimizer.v[i])?;
            entries.push(TensorEntry {
                name: t.name.clone(),
                group: t.group,
                shape: t.shape.clone(),
            });
        }
        let manifest = CheckpointManifest {
            fingerprint: self.fingerprint.clone(),
            seed: self.seed,
            epoch: st.epoch,
            step: st.step,
            best_val_loss: self.best_val_loss,
            model: st.model.config.clone(),
            item_table: st.model.params.items.manifest(),
            lora: st.adapters.as_ref().map(|a| LoraManifest {
                rank: a.rank,
                alpha: a.alpha,
            }),
            trainable: ALL_GROUPS.into_iter().filter(|g| st.trainable.contains(*g)).collect(),
            optimizer: st.optimizer.clone(),
            tensors: entries,
            metrics: self.metrics.clone(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        write_curve_csv(&dir.join("loss_curve.csv"), &st.curve)
    }

    pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Self::read_manifest(dir)?;
        let mut model = Model::<f32>::new(m.model.clone(), 0, 0)?;
        let (rows, dim) = (m.item_table.rows, m.item_table.dim);
        model.params.items =
            CompressedItemTable::from_manifest(&m.item_table, ndarray::Array2::zeros((rows, dim)))?;
        let mut adapters = match &m.lora {
            Some(l) => Some(Adapters::<f32>::new(
                m.model.layers,
                m.model.dim,
                l.rank,
                l.alpha,
                &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
            )?),
            None => None,
        };
        let mut optimizer = m.optimizer.clone();
        {
            let mut tensors = model.params.tensors_mut();
            if let Some(a) = adapters.as_mut() {
                tensors.extend(a.tensors_mut());
            }
            if tensors.len() != m.tensors.len() {
                return Err(Error::Mismatch(format!(
                    "manifest lists {} tensors, configuration implies {}",
                    m.tensors.len(),
                    tensors.len()
                )));
            }
            optimizer.m.clear();
            optimizer.v.clear();
            for (t, e) in tensors.iter_mut().zip(&m.tensors) {
                if t.name != e.name || t.shape != e.shape {
                    return Err(Error::Mismatch(format!(
                        "tensor {} {:?} does not match manifest entry {} {:?}",
                        t.name, t.shape, e.name, e.shape
                    )));
                }
                read_f32(&dir.join("tensors").join(format!("{}.bin", e.name)), t.data)?;
                let mut mv = vec![0.0; t.data.len()];
                read_f32(&dir.join("optimizer").join(format!("{}.m.bin", e.name)), &mut mv)?;
                optimizer.m.push(mv);
                let mut vv = vec![0.0; t.data.len()];
                read_f32(&dir.join("optimizer").join(format!("{}.v.bin", e.name)), &mut vv)?;
                optimizer.v.push(vv);
            }
        }
        let trainable = m
            .trainable
            .iter()
            .fold(Trainable::none(), |t, &g| t.with(g, true));
        let curve = read_curve_csv(&dir.join("loss_curve.csv"))?;
        Ok(Checkpoint {
            state: TrainState {
                model,
                adapters,
                optimizer,
                trainable,
                step: m.step,
                epoch: m.epoch,
                curve,
            },
            fingerprint: m.fingerprint,
            seed: m.seed,
            best_val_loss: m.best_val_loss,
            metrics: m.metrics,
        })
    }
}
