//! Checkpoint directories: one AGRT file per tensor plus `index.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::io::{read_json, read_tensor, write_json, write_tensor};
use crate::model::{Model, Nets};
use crate::nn::{NetSpec, Param, ParamSet};
use crate::pen::FineGrid;
use crate::scalar::Scalar;
use crate::synth::SkeletonSpec;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub file: String,
    pub shape: Vec<usize>,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetEntry {
    pub spec: NetSpec,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointIndex {
    pub version: u32,
    pub epoch: usize,
    pub model: ModelConfig,
    pub skeleton: SkeletonSpec,
    pub coarse_grid: GridSpec,
    pub fine_grid: FineGrid,
    pub nets: BTreeMap<String, NetEntry>,
    pub tensors: BTreeMap<String, TensorEntry>,
}

const NET_NAMES: [&str; 3] = ["de", "ren", "pen"];
const ROLES: [&str; 3] = ["", ".adam_m", ".adam_v"];

fn parts<T>(model: &Model<T>) -> [(&NetSpec, &ParamSet<T>); 3] {
    [
        (&model.nets.de, &model.de),
        (&model.nets.ren, &model.ren),
        (&model.nets.pen, &model.pen),
    ]
}

/// Writes parameters, Adam moments and step counters of every network.
pub fn save_checkpoint<T: Scalar>(dir: &Path, model: &Model<T>, epoch: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut nets = BTreeMap::new();
    let mut tensors = BTreeMap::new();
    for (net_name, (spec, params)) in NET_NAMES.iter().zip(parts(model)) {
        nets.insert(
            net_name.to_string(),
            NetEntry {
                spec: spec.clone(),
                step: params.step(),
            },
        );
        for p in params.params() {
            for (role, t) in ROLES.iter().zip([&p.value, &p.m, &p.v]) {
                let name = format!("{net_name}.{}{role}", p.name);
                let file = format!("{name}.agrt");
                write_tensor(&dir.join(&file), t)?;
                tensors.insert(
                    name,
                    TensorEntry {
                        file,
                        shape: t.dims().to_vec(),
                        layer: p.layer,
                    },
                );
            }
        }
    }
    let index = CheckpointIndex {
        version: CHECKPOINT_VERSION,
        epoch,
        model: model.config.clone(),
        skeleton: model.skeleton.clone(),
        coarse_grid: model.coarse_grid,
        fine_grid: model.fine_grid,
        nets,
        tensors,
    };
    write_json(&dir.join("index.json"), &index)
}

/// Loads a checkpoint, returning the model and the epoch it was saved after.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(Model<T>, usize)> {
    let index_path = dir.join("index.json");
    let index: CheckpointIndex = read_json(&index_path)?;
    if index.version != CHECKPOINT_VERSION {
        return Err(Error::format(&index_path, format!("unsupported checkpoint version {}", index.version)));
    }
    index.skeleton.validate()?;
    let mut sets = Vec::new();
    let mut specs = Vec::new();
    for net_name in NET_NAMES {
        let entry = index
            .nets
            .get(net_name)
            .ok_or_else(|| Error::format(&index_path, format!("missing network `{net_name}`")))?;
        let spec = NetSpec::new(entry.spec.input_shape().to_vec(), entry.spec.layers().to_vec())?;
        let mut params = Vec::new();
        for (pname, layer, shape) in spec.param_layout() {
            let mut loaded = Vec::new();
            for role in ROLES {
                let name = format!("{net_name}.{pname}{role}");
                let te = index
                    .tensors
                    .get(&name)
                    .ok_or_else(|| Error::format(&index_path, format!("missing tensor `{name}`")))?;
                let path = dir.join(&te.file);
                let t = read_tensor::<T>(&path)?;
                if t.dims() != shape.as_slice() || te.shape != shape || te.layer != layer {
                    return Err(Error::format(&path, format!("tensor `{name}` disagrees with network layout")));
                }
                loaded.push(t);
            }
            let v = loaded.pop().unwrap();
            let m = loaded.pop().unwrap();
            let value = loaded.pop().unwrap();
            let mut p = Param::new(pname, layer, value);
            p.m = m;
            p.v = v;
            params.push(p);
        }
        sets.push(ParamSet::from_params(params, entry.step));
        specs.push(spec);
    }
    let pen = sets.pop().unwrap();
    let ren = sets.pop().unwrap();
    let de = sets.pop().unwrap();
    let pen_spec = specs.pop().unwrap();
    let ren_spec = specs.pop().unwrap();
    let de_spec = specs.pop().unwrap();
    let model = Model {
        config: index.model,
        skeleton: index.skeleton,
        coarse_grid: index.coarse_grid,
        fine_grid: index.fine_grid,
        nets: Nets {
            de: de_spec,
            ren: ren_spec,
            pen: pen_spec,
        },
        de,
        ren,
        pen,
    };
    Ok((model, index.epoch))
}
