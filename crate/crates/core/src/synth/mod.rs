//! Synthetic AGR scenes: poses, cameras, rendering, corruption and dataset storage.

mod dataset;
mod loss;
mod noise;
mod render;
mod scene;
mod skeleton;

pub use dataset::{read_dataset, read_manifest, write_dataset, Dataset, DatasetInfo, Manifest, SampleEntry};
pub use loss::{loss_2d, loss_2d_grad};
pub use noise::{corrupt_agr, NoiseConfig};
pub use render::{
    gt_root_heatmap3d, project_joints, render_box_and_depth, render_heatmaps, render_heatmaps_n, root_pixel,
    BoxDepth, RenderParams,
};
pub use scene::{generate_sample, render_sample, place_people, sample_camera, Bounds, CameraRanges, SynthConfig};
pub use skeleton::{sample_pose, Pose3D, SkeletonSpec};

use crate::geometry::CameraModel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One rendered scene: the AGR maps plus the annotations they were rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct AgrSample<T = f32> {
    /// `[N, H, W]` joint heatmaps in `[0, 1]`.
    pub heatmaps: Tensor<T>,
    /// `[4, H, W]` left/top/right/bottom box distances, written around root pixels.
    pub box_map: Tensor<T>,
    /// Root depth per person, mm.
    pub depth_targets: Vec<f64>,
    /// Ground-truth root pixel `[u, v]` per person.
    pub root_pixels: Vec<[usize; 2]>,
    /// Uncorrupted box distances per person.
    pub gt_boxes: Vec<[f64; 4]>,
    pub gt_poses: Vec<Pose3D>,
    pub camera: CameraModel,
    pub render: RenderParams,
}

impl<T: Scalar> AgrSample<T> {
    pub fn people(&self) -> usize {
        self.gt_poses.len()
    }

    pub fn joints(&self) -> usize {
        self.heatmaps.dims()[0]
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.heatmaps.dims()[2], self.heatmaps.dims()[1])
    }

    pub fn cast<U: Scalar>(&self) -> AgrSample<U> {
        AgrSample {
            heatmaps: self.heatmaps.cast(),
            box_map: self.box_map.cast(),
            depth_targets: self.depth_targets.clone(),
            root_pixels: self.root_pixels.clone(),
            gt_boxes: self.gt_boxes.clone(),
            gt_poses: self.gt_poses.clone(),
            camera: self.camera,
            render: self.render,
        }
    }
}
