//! The three trainable networks and how scene data is fed to them.

use crate::config::{ModelConfig, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::nn::{Layer, NetSpec, ParamSet};
use crate::pen::FineGrid;
use crate::scalar::Scalar;
use crate::synth::{AgrSample, SkeletonSpec};
use crate::tensor::Tensor;

/// Network shapes for a given skeleton, image size and grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Nets {
    pub de: NetSpec,
    pub ren: NetSpec,
    pub pen: NetSpec,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl Nets {
    pub fn build(
        cfg: &ModelConfig,
        joints: usize,
        image_w: usize,
        image_h: usize,
        coarse: &GridSpec,
        fine: &FineGrid,
    ) -> Result<Self> {
        let de_in = joints + if cfg.de_box_input { 4 } else { 0 };
        let de = NetSpec::conv_stack(
            2,
            &[image_h, image_w],
            &widths(de_in, &cfg.de_hidden, 1),
            cfg.de_kernel,
            Some(Layer::Sigmoid),
        )?;
        let ren = NetSpec::conv_stack(
            3,
            &coarse.dims,
            &widths(joints, &cfg.ren_hidden, 1),
            cfg.ren_kernel,
            Some(Layer::Sigmoid),
        )?;
        let pen = NetSpec::conv_stack(
            3,
            &[fine.dims; 3],
            &widths(joints + usize::from(cfg.pen_center_channel), &cfg.pen_hidden, joints),
            cfg.pen_kernel,
            Some(Layer::SpatialSoftmax),
        )?;
        Ok(Nets { de, ren, pen })
    }
}

/// Networks with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub skeleton: SkeletonSpec,
    pub coarse_grid: GridSpec,
    pub fine_grid: FineGrid,
    pub nets: Nets,
    pub de: ParamSet<T>,
    pub ren: ParamSet<T>,
    pub pen: ParamSet<T>,
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized model for a run configuration; each network draws from its
    /// own seed.
    pub fn init(run: &RunConfig) -> Result<Self> {
        let config = &run.model;
        let skeleton = run.synth.skeleton();
        let nets = Nets::build(
            config,
            skeleton.joint_count(),
            run.synth.image_w,
            run.synth.image_h,
            &run.coarse_grid,
            &run.fine_grid,
        )?;
        let s = config.init_seed;
        let mut ren = ParamSet::init(&nets.ren, s.wrapping_add(1));
        let head = ren
            .params_mut()
            .iter_mut()
            .rev()
            .find(|p| p.name.ends_with("bias"))
            .ok_or_else(|| Error::InvalidArgument("root network has no bias".into()))?;
        head.value = head.value.map(|_| T::from_f64_lossy(config.ren_head_bias));
        Ok(Model {
            de: ParamSet::init(&nets.de, s),
            ren,
            pen: ParamSet::init(&nets.pen, s.wrapping_add(2)),
            config: config.clone(),
            skeleton,
            coarse_grid: run.coarse_grid,
            fine_grid: run.fine_grid,
            nets,
        })
    }

    /// Input tensor of the depth network for a sample.
    pub fn de_input(&self, sample: &AgrSample<T>) -> Tensor<T> {
        de_input(&self.config, sample)
    }
}

pub fn de_input<T: Scalar>(cfg: &ModelConfig, sample: &AgrSample<T>) -> Tensor<T> {
    if !cfg.de_box_input {
        return sample.heatmaps.clone();
    }
    let (w, h) = sample.image_size();
    let n = sample.joints();
    let inv = T::from_f64_lossy(1.0 / h as f64);
    let mut data = Vec::with_capacity((n + 4) * w * h);
    data.extend_from_slice(sample.heatmaps.data());
    data.extend(sample.box_map.data().iter().map(|&x| x * inv));
    Tensor::new(vec![n + 4, h, w], data).expect("channel concatenation preserves length")
}
