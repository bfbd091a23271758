//! Joint training of the depth, root and pose networks, and full-scene inference.

mod checkpoint;
mod infer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointIndex, NetEntry, TensorEntry};
pub use infer::{evaluate, predict_scene, ScenePredictions};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Projection, RunConfig};
use crate::error::{Error, Result};
use crate::geometry;
use crate::model::Model;
use crate::nn::{adam_step, backward, forward_tape, AdamConfig};
use crate::pen::{build_person_volume, inside_mask, integral_backward, integral_indices, loss_pen_grad, pen_input};
use crate::ren::{
    build_naive_volume, build_root_volume, detect_persons_2d, gt_detections, loss_depth_grad, loss_ren_grad,
};
use crate::synth::{gt_root_heatmap3d, AgrSample};
use crate::tensor::Tensor;
use crate::volume::VoxelVolume;

/// Mean per-scene losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub total: f64,
    pub depth: f64,
    pub ren: f64,
    pub pen: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SceneLosses {
    depth: f64,
    ren: f64,
    pen: f64,
}

fn scale_in_place(t: &mut Tensor<f32>, s: f64) {
    let s = s as f32;
    t.data_mut().iter_mut().for_each(|x| *x *= s);
}

/// Coarse input volume for a scene under the configured projection.
pub fn root_volume(
    model: &Model<f32>,
    sample: &AgrSample<f32>,
    detections: &[crate::ren::PersonDetection],
) -> Result<VoxelVolume<f32>> {
    match model.config.projection {
        Projection::Gated => build_root_volume(
            &sample.heatmaps,
            detections,
            &model.coarse_grid,
            &sample.camera,
            model.config.gate_sigma,
        ),
        Projection::Naive => build_naive_volume(&sample.heatmaps, &model.coarse_grid, &sample.camera),
    }
}

/// Forward and backward for one scene, accumulating gradients scaled by `scale`.
fn scene_step<R: Rng>(cfg: &RunConfig, model: &mut Model<f32>, sample: &AgrSample<f32>, scale: f64, rng: &mut R) -> Result<SceneLosses> {
    let t = &cfg.train;
    let root = model.skeleton.root;
    let mut out = SceneLosses::default();

    let range = model.config.depth_range;
    let de_tape = forward_tape(&model.nets.de, &model.de, &model.de_input(sample))?;
    let s = de_tape.output().unwrap();
    let depth_map = s.map(|x| range.to_mm(x as f64) as f32);
    if t.w_depth > 0.0 {
        let (l, mut g) = loss_depth_grad(&depth_map, &sample.root_pixels, &sample.depth_targets)?;
        out.depth = l;
        scale_in_place(&mut g, range.span() * t.w_depth * scale);
        backward(&model.nets.de, &mut model.de, &de_tape, &g, false)?;
    }

    if t.w_ren > 0.0 {
        let detections = if t.teacher_forcing {
            gt_detections(sample, root)?
        } else {
            detect_persons_2d(&sample.heatmaps, root, &sample.box_map, &depth_map, &cfg.eval.detect)?
        };
        let vol = root_volume(model, sample, &detections)?;
        let (target, _) = gt_root_heatmap3d::<f32>(&sample.gt_poses, &model.skeleton, &model.coarse_grid, model.config.ren_target_sigma_vox)?;
        let tape = forward_tape(&model.nets.ren, &model.ren, &vol.data)?;
        let pred = VoxelVolume::new(model.coarse_grid, tape.output().unwrap().clone())?;
        let (l, mut g) = loss_ren_grad(&pred, &target)?;
        out.ren = l;
        scale_in_place(&mut g, t.w_ren * scale);
        backward(&model.nets.ren, &mut model.ren, &tape, &g, false)?;
    }

    if model.config.use_pen && t.w_pen > 0.0 && !sample.gt_poses.is_empty() {
        let mut people: Vec<usize> = (0..sample.gt_poses.len()).collect();
        people.shuffle(rng);
        if t.pen_max_people > 0 {
            people.truncate(t.pen_max_people);
        }
        let share = 1.0 / people.len() as f64;
        for p in people {
            let gt = &sample.gt_poses[p];
            let j = t.pen_center_jitter_mm;
            let offset = [0, 1, 2].map(|_| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 });
            let center = geometry::add(gt.joints[root], offset);
            let vol = build_person_volume(&sample.heatmaps, &sample.camera, center, &model.fine_grid)?;
            let input = pen_input(&vol, model.config.pen_center_channel);
            let tape = forward_tape(&model.nets.pen, &model.pen, &input)?;
            let h = VoxelVolume::new(vol.grid, tape.output().unwrap().clone())?;
            let idx = integral_indices(&h)?;
            let gt_idx: Vec<[f64; 3]> = gt.joints.iter().map(|&q| vol.grid.world_to_index(q)).collect();
            let mask = inside_mask(&vol.grid, gt);
            let (l, d_idx) = loss_pen_grad(&idx, &gt_idx, &mask, &vol.grid, t.pen_loss_units)?;
            out.pen += share * l;
            let mut g = integral_backward(&h, &idx, &d_idx);
            scale_in_place(&mut g, t.w_pen * share * scale);
            backward(&model.nets.pen, &mut model.pen, &tape, &g, false)?;
        }
    }
    Ok(out)
}

/// Where training writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoints: PathBuf,
    pub losses_csv: PathBuf,
}

impl TrainOutput {
    pub fn under(run_dir: &Path) -> Self {
        TrainOutput {
            checkpoints: run_dir.join("checkpoints"),
            losses_csv: run_dir.join("reports").join("losses.csv"),
        }
    }

    pub fn epoch_dir(&self, epoch: usize) -> PathBuf {
        self.checkpoints.join(format!("epoch_{epoch:03}"))
    }
}

pub fn write_losses_csv(path: &Path, rows: &[EpochLosses]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(["epoch", "total", "depth", "ren", "pen"]).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_losses_csv(path: &Path) -> Result<Vec<EpochLosses>> {
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Trains epochs `start_epoch + 1 ..= cfg.train.epochs`. Each epoch shuffles the scenes
/// with a generator derived from `(shuffle_seed, epoch)`, so resuming from a checkpoint
/// reproduces an uninterrupted run. When `output` is given, a checkpoint is written
/// after every epoch (and for the initial state when starting from scratch) and the loss
/// log is rewritten with `previous` rows followed by the new ones.
pub fn train(
    cfg: &RunConfig,
    model: &mut Model<f32>,
    data: &[AgrSample<f32>],
    start_epoch: usize,
    output: Option<&TrainOutput>,
    previous: &[EpochLosses],
) -> Result<Vec<EpochLosses>> {
    let t = &cfg.train;
    let adam = AdamConfig {
        lr: t.lr,
        beta1: t.beta1,
        beta2: t.beta2,
        eps: t.eps,
    };
    let mut log: Vec<EpochLosses> = previous.iter().copied().filter(|r| r.epoch <= start_epoch).collect();
    if let Some(out) = output {
        if start_epoch == 0 {
            save_checkpoint(&out.epoch_dir(0), model, 0)?;
        }
        write_losses_csv(&out.losses_csv, &log)?;
    }
    let mut fresh = Vec::new();
    for epoch in start_epoch + 1..=t.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(t.shuffle_seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut sum = SceneLosses::default();
        for (b, batch) in order.chunks(t.batch).enumerate() {
            model.de.zero_grad();
            model.ren.zero_grad();
            model.pen.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let l = scene_step(cfg, model, &data[i], scale, &mut rng)?;
                if !(l.depth.is_finite() && l.ren.is_finite() && l.pen.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, batch {b}, scene {i}: {l:?}"
                    )));
                }
                sum.depth += l.depth;
                sum.ren += l.ren;
                sum.pen += l.pen;
            }
            let step = |p: &mut crate::nn::ParamSet<f32>, name: &str| {
                adam_step(p, &adam).map_err(|e| Error::Numerical(format!("epoch {epoch}, batch {b}, {name}: {e}")))
            };
            if t.w_depth > 0.0 {
                step(&mut model.de, "depth network")?;
            }
            if t.w_ren > 0.0 {
                step(&mut model.ren, "root network")?;
            }
            if model.config.use_pen && t.w_pen > 0.0 {
                step(&mut model.pen, "pose network")?;
            }
        }
        let n = data.len().max(1) as f64;
        let (depth, ren, pen) = (sum.depth / n, sum.ren / n, sum.pen / n);
        let row = EpochLosses {
            epoch,
            total: t.w_depth * depth + t.w_ren * ren + t.w_pen * pen,
            depth,
            ren,
            pen,
        };
        log::info!(
            "epoch {epoch}: total {:.4} depth {:.2} ren {:.4} pen {:.4} ({:.1}s)",
            row.total,
            depth,
            ren,
            pen,
            started.elapsed().as_secs_f64()
        );
        log.push(row);
        fresh.push(row);
        if let Some(out) = output {
            save_checkpoint(&out.epoch_dir(epoch), model, epoch)?;
            write_losses_csv(&out.losses_csv, &log)?;
        }
    }
    Ok(fresh)
}
