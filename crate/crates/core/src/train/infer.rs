//! Full-scene inference and evaluation over a held-out set.

use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::{MetricsAccumulator, MetricsReport, PersonPrediction};
use crate::model::Model;
use crate::nn::forward;
use crate::pen::estimate_person;
use crate::ren::{detect_persons_2d, estimate_depth_map, nms_3d, NmsParams, PersonDetection};
use crate::synth::AgrSample;
use crate::volume::VoxelVolume;

/// Intermediate and final outputs for one scene.
#[derive(Debug, Clone)]
pub struct ScenePredictions {
    pub detections: Vec<PersonDetection>,
    pub people: Vec<PersonPrediction>,
}

/// Depth map, 2D detection, root volume, 3D NMS and pose estimation for one scene.
pub fn predict_scene(cfg: &RunConfig, model: &Model<f32>, sample: &AgrSample<f32>) -> Result<ScenePredictions> {
    let root = model.skeleton.root;
    if cfg.eval.gt_oracle {
        let people = sample
            .gt_poses
            .iter()
            .map(|p| PersonPrediction {
                confidence: 1.0,
                root_xyz_mm: p.joints[root],
                coarse_root_xyz_mm: p.joints[root],
                joints_mm: Some(p.joints.clone()),
            })
            .collect();
        return Ok(ScenePredictions {
            detections: Vec::new(),
            people,
        });
    }
    let depth_map = estimate_depth_map(&model.nets.de, &model.de, &model.de_input(sample), &model.config.depth_range)?;
    let detections = detect_persons_2d(&sample.heatmaps, root, &sample.box_map, &depth_map, &cfg.eval.detect)?;
    let vol = super::root_volume(model, sample, &detections)?;
    let out = forward(&model.nets.ren, &model.ren, &vol.data)?;
    let h = VoxelVolume::new(model.coarse_grid, out)?;
    let nms = if cfg.eval.oracle_count {
        NmsParams {
            threshold: 0.0,
            max_people: sample.people(),
            ..cfg.eval.nms
        }
    } else {
        cfg.eval.nms
    };
    let candidates = nms_3d(&h, &nms)?;
    let mut people = Vec::with_capacity(candidates.len());
    for c in candidates {
        let p = if model.config.use_pen {
            let (pose, refined) = estimate_person(
                &model.nets.pen,
                &model.pen,
                &sample.heatmaps,
                &sample.camera,
                c.world,
                &model.fine_grid,
                root,
                model.config.pen_center_channel,
            )?;
            PersonPrediction {
                confidence: c.confidence,
                root_xyz_mm: refined,
                coarse_root_xyz_mm: c.world,
                joints_mm: Some(pose.joints),
            }
        } else {
            PersonPrediction {
                confidence: c.confidence,
                root_xyz_mm: c.world,
                coarse_root_xyz_mm: c.world,
                joints_mm: None,
            }
        };
        people.push(p);
    }
    Ok(ScenePredictions { detections, people })
}

/// Pooled metrics over `data`. The reference baseline uses the midpoint of the depth range.
pub fn evaluate(cfg: &RunConfig, model: &Model<f32>, data: &[AgrSample<f32>]) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::default();
    let baseline = model.config.depth_range.midpoint();
    for s in data {
        let pred = predict_scene(cfg, model, s)?;
        acc.add_scene(&model.skeleton, &s.camera, &s.gt_poses, &pred.people, &cfg.eval.metrics, baseline)?;
    }
    Ok(acc.report())
}
