//! Dataset directories: `manifest.json`, `cameras.json` and per-sample tensors plus
//! annotation JSON under `samples/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::render::RenderParams;
use super::skeleton::{Pose3D, SkeletonSpec};
use super::AgrSample;
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::io::{read_json, read_tensor, write_json, write_tensor};
use crate::scalar::Scalar;

pub const DATASET_VERSION: u32 = 1;

/// Caller-supplied provenance recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub skeleton: SkeletonSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub people: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub dtype: String,
    pub count: usize,
    pub total_people: usize,
    pub info: DatasetInfo,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f32> {
    pub manifest: Manifest,
    pub samples: Vec<AgrSample<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Annotation {
    depth_targets: Vec<f64>,
    root_pixels: Vec<[usize; 2]>,
    gt_boxes: Vec<[f64; 4]>,
    gt_poses: Vec<Pose3D>,
    render: RenderParams,
}

fn sample_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    let base = dir.join("samples");
    (
        base.join(format!("{id}.heatmaps.agrt")),
        base.join(format!("{id}.box.agrt")),
        base.join(format!("{id}.json")),
    )
}

fn dtype_name<T: Scalar>() -> String {
    format!("{:?}", T::DTYPE).to_lowercase()
}

pub fn write_dataset<T: Scalar>(dir: &Path, info: &DatasetInfo, samples: &[AgrSample<T>]) -> Result<Manifest> {
    fs::create_dir_all(dir.join("samples")).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    let mut cameras = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.joints() != info.skeleton.joint_count() {
            return Err(Error::Shape(format!(
                "sample {i} has {} heatmap channels, skeleton has {} joints",
                s.joints(),
                info.skeleton.joint_count()
            )));
        }
        let id = format!("{i:05}");
        let (hm, bx, ann) = sample_paths(dir, &id);
        write_tensor(&hm, &s.heatmaps)?;
        write_tensor(&bx, &s.box_map)?;
        write_json(
            &ann,
            &Annotation {
                depth_targets: s.depth_targets.clone(),
                root_pixels: s.root_pixels.clone(),
                gt_boxes: s.gt_boxes.clone(),
                gt_poses: s.gt_poses.clone(),
                render: s.render,
            },
        )?;
        cameras.push(s.camera);
        entries.push(SampleEntry { id, people: s.people() });
    }
    let manifest = Manifest {
        version: DATASET_VERSION,
        dtype: dtype_name::<T>(),
        count: samples.len(),
        total_people: samples.iter().map(|s| s.people()).sum(),
        info: info.clone(),
        samples: entries,
    };
    write_json(&dir.join("cameras.json"), &cameras)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let m: Manifest = read_json(&path)?;
    if m.version != DATASET_VERSION {
        return Err(Error::format(&path, format!("unsupported dataset version {}", m.version)));
    }
    if m.count != m.samples.len() {
        return Err(Error::format(
            &path,
            format!("count {} disagrees with {} sample entries", m.count, m.samples.len()),
        ));
    }
    m.info.skeleton.validate()?;
    Ok(m)
}

pub fn read_dataset<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    let manifest = read_manifest(dir)?;
    let cam_path = dir.join("cameras.json");
    let cameras: Vec<CameraModel> = read_json(&cam_path)?;
    if cameras.len() != manifest.count {
        return Err(Error::format(&cam_path, "camera count disagrees with manifest"));
    }
    let n = manifest.info.skeleton.joint_count();
    let mut samples = Vec::with_capacity(manifest.count);
    for (entry, cam) in manifest.samples.iter().zip(cameras) {
        cam.validate()?;
        let (hm, bx, ann_path) = sample_paths(dir, &entry.id);
        let heatmaps = read_tensor::<T>(&hm)?;
        let box_map = read_tensor::<T>(&bx)?;
        if heatmaps.rank() != 3 || heatmaps.dims() != [n, cam.image_h, cam.image_w] {
            return Err(Error::format(&hm, format!("heatmap dims {:?} do not match camera and skeleton", heatmaps.dims())));
        }
        if box_map.dims() != [4, cam.image_h, cam.image_w] {
            return Err(Error::format(&bx, format!("box map dims {:?} do not match camera", box_map.dims())));
        }
        let ann: Annotation = read_json(&ann_path)?;
        let p = ann.gt_poses.len();
        if p != entry.people
            || ann.depth_targets.len() != p
            || ann.root_pixels.len() != p
            || ann.gt_boxes.len() != p
            || ann.gt_poses.iter().any(|q| q.joints.len() != n)
        {
            return Err(Error::format(&ann_path, "annotation lengths disagree with manifest or skeleton"));
        }
        samples.push(AgrSample {
            heatmaps,
            box_map,
            depth_targets: ann.depth_targets,
            root_pixels: ann.root_pixels,
            gt_boxes: ann.gt_boxes,
            gt_poses: ann.gt_poses,
            camera: cam,
            render: ann.render,
        });
    }
    Ok(Dataset { manifest, samples })
}
