//! Run configuration with the desk-scale defaults and a full-size alternate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricParams;
use crate::geometry::GridSpec;
use crate::pen::{FineGrid, PenLossUnits};
use crate::protocol::AblateConfig;
use crate::ren::{DepthRange, DetectParams, NmsParams, DEFAULT_GATE_SIGMA};
use crate::synth::{CameraRanges, SynthConfig};

/// How heatmaps are lifted into the coarse root volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Restricted to detection boxes and weighted by a Gaussian in root depth.
    #[default]
    Gated,
    /// Every voxel on a ray receives the heatmap value.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub de_hidden: Vec<usize>,
    pub de_kernel: usize,
    /// Feed the box map (scaled by 1/image height) to the depth network with the heatmaps.
    pub de_box_input: bool,
    pub ren_hidden: Vec<usize>,
    pub ren_kernel: usize,
    pub pen_hidden: Vec<usize>,
    pub pen_kernel: usize,
    /// Append the squared distance to the cube center as an extra pose network input.
    pub pen_center_channel: bool,
    pub depth_range: DepthRange,
    pub gate_sigma: f64,
    /// Width of the ground-truth root heatmap, coarse voxels.
    pub ren_target_sigma_vox: f64,
    /// Initial bias of the root network's output layer, a logit prior for sparse targets.
    pub ren_head_bias: f64,
    pub projection: Projection,
    /// Run the pose network; without it the coarse root is final and no poses are emitted.
    pub use_pen: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            de_hidden: vec![16, 16],
            de_kernel: 3,
            de_box_input: false,
            ren_hidden: vec![8, 8],
            ren_kernel: 3,
            pen_hidden: vec![8, 8],
            pen_kernel: 3,
            pen_center_channel: false,
            depth_range: DepthRange {
                min: 1000.0,
                max: 10000.0,
            },
            gate_sigma: DEFAULT_GATE_SIGMA,
            ren_target_sigma_vox: 1.0,
            ren_head_bias: -4.6,
            projection: Projection::Gated,
            use_pen: true,
            init_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub epochs: usize,
    pub w_depth: f64,
    pub w_ren: f64,
    pub w_pen: f64,
    /// Gate the training volume with ground-truth boxes and depth targets instead of
    /// the current depth network's detections.
    pub teacher_forcing: bool,
    /// People per scene used for the pose loss (0 uses everyone).
    pub pen_max_people: usize,
    /// Half-width of the uniform offset applied to the fine-grid center during training, mm.
    pub pen_center_jitter_mm: f64,
    pub pen_loss_units: PenLossUnits,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 24,
            epochs: 20,
            w_depth: 1.0,
            w_ren: 1.0,
            w_pen: 1.0,
            teacher_forcing: true,
            pen_max_people: 0,
            pen_center_jitter_mm: 0.0,
            pen_loss_units: PenLossUnits::Voxel,
            shuffle_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub test_count: usize,
    pub test_seed: u64,
    pub detect: DetectParams,
    pub nms: NmsParams,
    pub metrics: MetricParams,
    /// Replace every prediction with the ground truth.
    pub gt_oracle: bool,
    /// Keep exactly as many root candidates as there are people, regardless of threshold.
    pub oracle_count: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            test_count: 50,
            test_seed: 1_000_003,
            detect: DetectParams::default(),
            nms: NmsParams::default(),
            metrics: MetricParams::default(),
            gt_oracle: false,
            oracle_count: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub coarse_grid: GridSpec,
    pub fine_grid: FineGrid,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::desk()
    }
}

impl RunConfig {
    /// Desk-scale profile: 64x120 heatmaps, 40x40x12 coarse grid at 150 mm, 32^3 fine grid
    /// over 2 m, 200 training and 50 test scenes, up to 3 people, 20 epochs. The optimizer
    /// schedule is scaled up for the small step budget.
    pub fn desk() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            coarse_grid: GridSpec {
                origin: [-3000.0, -3000.0, 0.0],
                voxel_size: [150.0; 3],
                dims: [40, 40, 12],
            },
            fine_grid: FineGrid {
                extent: 2000.0,
                dims: 32,
            },
            model: ModelConfig {
                de_box_input: true,
                pen_center_channel: true,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                lr: 1e-3,
                batch: 4,
                pen_max_people: 1,
                pen_center_jitter_mm: 300.0,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
        }
    }

    /// Full-size profile: 128x240 heatmaps, 80x80x24 coarse grid, 64^3 fine grid.
    pub fn full() -> Self {
        let mut c = RunConfig::desk();
        c.synth.image_w = 240;
        c.synth.image_h = 128;
        c.synth.camera = CameraRanges {
            f: [160.0, 160.0],
            ..c.synth.camera
        };
        c.synth.render.sigma_2d = 3.0;
        c.synth.render.pad_px = 4.0;
        c.coarse_grid = GridSpec {
            origin: [-3000.0, -3000.0, 0.0],
            voxel_size: [75.0; 3],
            dims: [80, 80, 24],
        };
        c.fine_grid = FineGrid {
            extent: 2000.0,
            dims: 64,
        };
        c.model.ren_target_sigma_vox = 2.0;
        c.model.de_box_input = false;
        c.train = TrainConfig::default();
        c
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(RunConfig::desk()),
            "full" => Ok(RunConfig::full()),
            other => Err(Error::Config {
                path: "profile".into(),
                msg: format!("unknown profile {other:?} (expected desk or full)"),
            }),
        }
    }

    /// Synthesis settings for the held-out set.
    pub fn test_synth(&self) -> SynthConfig {
        SynthConfig {
            count: self.eval.test_count,
            seed: self.eval.test_seed,
            ..self.synth.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |path: &str, e: Error| Error::Config {
            path: path.into(),
            msg: e.to_string(),
        };
        let bad = |path: &str, msg: String| Err(Error::Config { path: path.into(), msg });
        self.synth.validate().map_err(|e| cfg("synth", e))?;
        self.coarse_grid.validate().map_err(|e| cfg("coarse_grid", e))?;
        self.model.depth_range.validate().map_err(|e| cfg("model.depth_range", e))?;
        if self.fine_grid.dims == 0 || !(self.fine_grid.extent > 0.0) {
            return bad("fine_grid", "fine grid needs positive extent and dims".into());
        }
        let m = &self.model;
        for (path, k) in [("model.de_kernel", m.de_kernel), ("model.ren_kernel", m.ren_kernel), ("model.pen_kernel", m.pen_kernel)] {
            if k % 2 == 0 {
                return bad(path, format!("kernel {k} must be odd to preserve spatial size"));
            }
        }
        if !(m.gate_sigma > 0.0) {
            return bad("model.gate_sigma", "must be positive".into());
        }
        if !m.ren_head_bias.is_finite() {
            return bad("model.ren_head_bias", "must be finite".into());
        }
        if !(m.ren_target_sigma_vox > 0.0) {
            return bad("model.ren_target_sigma_vox", "must be positive".into());
        }
        let t = &self.train;
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            return bad("train.lr", format!("learning rate {} must be finite and >= 0", t.lr));
        }
        for (path, b) in [("train.beta1", t.beta1), ("train.beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(path, format!("{b} must lie in [0, 1)"));
            }
        }
        if !(t.eps > 0.0) {
            return bad("train.eps", "must be positive".into());
        }
        if t.batch == 0 {
            return bad("train.batch", "must be at least 1".into());
        }
        for (path, w) in [("train.w_depth", t.w_depth), ("train.w_ren", t.w_ren), ("train.w_pen", t.w_pen)] {
            if !(w >= 0.0) {
                return bad(path, format!("loss weight {w} must be >= 0"));
            }
        }
        if !(t.pen_center_jitter_mm >= 0.0) {
            return bad("train.pen_center_jitter_mm", "must be >= 0".into());
        }
        let e = &self.eval.metrics;
        if !(e.match_max_dist > 0.0 && e.pck_abs_mm > 0.0 && e.pck_root_mm > 0.0) {
            return bad("eval.metrics", "distances and thresholds must be positive".into());
        }
        if self.eval.nms.radius_vox == 0 {
            return bad("eval.nms.radius_vox", "must be at least 1".into());
        }
        self.ablate.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_round_trip() {
        for c in [RunConfig::desk(), RunConfig::full()] {
            c.validate().unwrap();
            let text = serde_json::to_string(&c).unwrap();
            let back: RunConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn unknown_keys_are_rejected_and_missing_keys_default() {
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"learning_rate": 1.0}}"#);
        assert!(err.is_err());
        let c: RunConfig = serde_json::from_str(r#"{"train": {"lr": 0.5}}"#).unwrap();
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.synth, SynthConfig::default());
    }
}
