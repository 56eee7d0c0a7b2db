//! Clip records on disk: frame tensors in an `LXPF` container, per-record
//! metadata in its manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{read_container, write_container, DType, Tensor, TensorData};
use super::envs::Split;
use super::record::{ClipRecord, ClipSource};
use crate::error::{Error, Result};
use crate::image::{Image, RadianceMap};
use crate::studio::{AffineFlow, OlatStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    pub source: ClipSource,
    pub group: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub ref_pool: Vec<usize>,
    pub flows: Option<Vec<AffineFlow>>,
    pub has_env: bool,
    pub has_masks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: String,
    pub rig_id: String,
    pub split: Option<Split>,
    pub records: Vec<RecordMeta>,
}

pub const DATASET_KIND: &str = "clip-dataset";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rig_id: String,
    pub split: Option<Split>,
    pub records: Vec<ClipRecord>,
}

impl Dataset {
    pub fn get(&self, id: &str) -> Option<&ClipRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records whose ids are in the given split half (all records when no split is stored).
    pub fn subset(&self, train: bool) -> Vec<&ClipRecord> {
        match &self.split {
            None => self.records.iter().collect(),
            Some(s) => {
                let ids = if train { &s.train } else { &s.test };
                self.records.iter().filter(|r| ids.contains(&r.id)).collect()
            }
        }
    }
}

fn frames_tensor(name: String, frames: &[Image], dtype: DType) -> Result<Tensor> {
    let (w, h) = frames[0].dims();
    let values: Vec<f32> = frames.iter().flat_map(|f| f.to_flat()).collect();
    Tensor::from_f32(name, vec![frames.len(), h, w, 3], values, dtype)
}

fn frames_from(t: &Tensor, frames: usize, w: usize, h: usize) -> Result<Vec<Image>> {
    if t.shape != [frames, h, w, 3] {
        return Err(Error::Shape(format!("tensor {} has shape {:?}", t.name, t.shape)));
    }
    let values = t.data.to_f32();
    values
        .chunks_exact(w * h * 3)
        .map(|c| Image::from_flat(w, h, c))
        .collect()
}

/// Writes records to `path` (+ `path.json`). `dtype` applies to the lit and
/// albedo frames; environment maps are always stored as f32.
pub fn write_dataset(path: &Path, dataset: &Dataset, dtype: DType) -> Result<()> {
    if dtype == DType::F64 {
        return Err(Error::InvalidArgument("frames are stored as f32 or f16".into()));
    }
    let mut tensors = Vec::new();
    let mut metas = Vec::with_capacity(dataset.records.len());
    for r in &dataset.records {
        r.validate()?;
        let (w, h) = r.dims();
        tensors.push(frames_tensor(format!("{}/lit", r.id), &r.lit, dtype)?);
        tensors.push(frames_tensor(format!("{}/albedo", r.id), &r.albedo, dtype)?);
        if let Some(env) = &r.env {
            let (ew, eh) = env.dims();
            tensors.push(Tensor::new(
                format!("{}/env", r.id),
                vec![eh, ew, 3],
                TensorData::F32(env.image().to_flat()),
            )?);
        }
        if let Some(masks) = &r.masks {
            let values = masks.iter().flatten().map(|&m| if m { 1.0 } else { 0.0 }).collect();
            tensors.push(Tensor::from_f32(format!("{}/mask", r.id), vec![r.frames(), h, w], values, DType::F16)?);
        }
        metas.push(RecordMeta {
            id: r.id.clone(),
            source: r.source,
            group: r.group.clone(),
            frames: r.frames(),
            width: w,
            height: h,
            ref_pool: r.ref_pool.clone(),
            flows: r.flows.clone(),
            has_env: r.env.is_some(),
            has_masks: r.masks.is_some(),
        });
    }
    let meta = DatasetMeta {
        kind: DATASET_KIND.into(),
        rig_id: dataset.rig_id.clone(),
        split: dataset.split.clone(),
        records: metas,
    };
    write_container(path, &tensors, serde_json::to_value(&meta)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (manifest, tensors) = read_container(path)?;
    let meta: DatasetMeta = serde_json::from_value(manifest.meta)?;
    if meta.kind != DATASET_KIND {
        return Err(Error::InvalidArgument(format!(
            "{} holds a {}, not a dataset",
            path.display(),
            meta.kind
        )));
    }
    let find = |name: String| -> Result<&Tensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing tensor {name}")))
    };
    let mut records = Vec::with_capacity(meta.records.len());
    for m in meta.records {
        let (f, w, h) = (m.frames, m.width, m.height);
        let lit = frames_from(find(format!("{}/lit", m.id))?, f, w, h)?;
        let albedo = frames_from(find(format!("{}/albedo", m.id))?, f, w, h)?;
        let env = if m.has_env {
            let t = find(format!("{}/env", m.id))?;
            let [eh, ew, 3] = t.shape[..] else {
                return Err(Error::Shape(format!("env tensor {} has shape {:?}", t.name, t.shape)));
            };
            Some(RadianceMap::try_from(Image::from_flat(ew, eh, &t.data.to_f32())?)?)
        } else {
            None
        };
        let masks = if m.has_masks {
            let t = find(format!("{}/mask", m.id))?;
            if t.shape != [f, h, w] {
                return Err(Error::Shape(format!("mask tensor {} has shape {:?}", t.name, t.shape)));
            }
            let v = t.data.to_f32();
            Some(v.chunks_exact(w * h).map(|c| c.iter().map(|&x| x >= 0.5).collect()).collect())
        } else {
            None
        };
        let record = ClipRecord {
            id: m.id,
            source: m.source,
            group: m.group,
            lit,
            albedo,
            env,
            ref_pool: m.ref_pool,
            flows: m.flows,
            masks,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(Dataset {
        rig_id: meta.rig_id,
        split: meta.split,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub kind: String,
    pub scene_id: String,
    pub rig_id: String,
    pub frame: u32,
    pub cell_solid_angle: Vec<f64>,
    pub pan: [f64; 2],
    pub zoom: f64,
}

pub const STACKS_KIND: &str = "olat-stacks";

/// Several OLAT stacks in one container: per stack `i`, tensors
/// `{i}/olat` `[N, H, W, 3]`, `{i}/albedo` `[H, W, 3]` and `{i}/mask` `[H, W]`.
pub fn write_stacks(path: &Path, stacks: &[OlatStack], dtype: DType) -> Result<()> {
    if dtype == DType::F64 {
        return Err(Error::InvalidArgument("renders are stored as f32 or f16".into()));
    }
    let mut tensors = Vec::with_capacity(3 * stacks.len());
    let mut metas = Vec::with_capacity(stacks.len());
    for (i, s) in stacks.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::InvalidArgument(format!("stack {} has no images", s.scene_id)));
        }
        let (w, h) = s.dims();
        tensors.push(frames_tensor(format!("{i}/olat"), &s.images, dtype)?);
        tensors.push(Tensor::new(format!("{i}/albedo"), vec![h, w, 3], TensorData::F32(s.albedo.to_flat()))?);
        let mask = s.hit_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        tensors.push(Tensor::from_f32(format!("{i}/mask"), vec![h, w], mask, DType::F16)?);
        metas.push(StackMeta {
            kind: STACKS_KIND.into(),
            scene_id: s.scene_id.clone(),
            rig_id: s.rig_id.clone(),
            frame: s.frame,
            cell_solid_angle: s.cell_solid_angle.clone(),
            pan: s.pan,
            zoom: s.zoom,
        });
    }
    write_container(path, &tensors, serde_json::json!({ "kind": STACKS_KIND, "stacks": metas }))?;
    Ok(())
}

pub fn read_stacks(path: &Path) -> Result<Vec<OlatStack>> {
    let (manifest, tensors) = read_container(path)?;
    if manifest.meta.get("kind").and_then(|k| k.as_str()) != Some(STACKS_KIND) {
        return Err(Error::InvalidArgument(format!("{} does not hold OLAT stacks", path.display())));
    }
    let metas: Vec<StackMeta> = serde_json::from_value(manifest.meta["stacks"].clone())?;
    let find = |name: String| -> Result<&Tensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing tensor {name}")))
    };
    metas
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let olat = find(format!("{i}/olat"))?;
            let [n, h, w, 3] = olat.shape[..] else {
                return Err(Error::Shape(format!("tensor {} has shape {:?}", olat.name, olat.shape)));
            };
            if n != m.cell_solid_angle.len() {
                return Err(Error::Shape(format!("{n} images for {} lights", m.cell_solid_angle.len())));
            }
            let albedo = find(format!("{i}/albedo"))?;
            if albedo.shape != [h, w, 3] {
                return Err(Error::Shape(format!("tensor {} has shape {:?}", albedo.name, albedo.shape)));
            }
            let mask = find(format!("{i}/mask"))?;
            if mask.shape != [h, w] {
                return Err(Error::Shape(format!("tensor {} has shape {:?}", mask.name, mask.shape)));
            }
            Ok(OlatStack {
                scene_id: m.scene_id,
                rig_id: m.rig_id,
                frame: m.frame,
                images: frames_from(olat, n, w, h)?,
                cell_solid_angle: m.cell_solid_angle,
                albedo: Image::from_flat(w, h, &albedo.data.to_f32())?,
                hit_mask: mask.data.to_f32().iter().map(|&x| x >= 0.5).collect(),
                pan: m.pan,
                zoom: m.zoom,
            })
        })
        .collect()
}
