//! Ground-truth rendering of heatmaps, box embeddings, root depths and 3D root heatmaps.

use serde::{Deserialize, Serialize};

use super::skeleton::{Pose3D, SkeletonSpec};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, GridSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::volume::VoxelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderParams {
    /// Gaussian width of joint heatmaps in pixels.
    pub sigma_2d: f64,
    /// Padding added around projected joints to form the person box, in pixels.
    pub pad_px: f64,
    /// Box embeddings are written in a square of this radius around each root pixel.
    pub box_fill_radius: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            sigma_2d: 1.5,
            pad_px: 2.0,
            box_fill_radius: 1,
        }
    }
}

/// Projected joint positions, `None` for joints behind the camera.
pub fn project_joints(pose: &Pose3D, cam: &CameraModel) -> Vec<Option<(f64, f64)>> {
    pose.joints
        .iter()
        .map(|&p| cam.project(p).ok().map(|q| (q.u, q.v)))
        .collect()
}

/// Splats `amplitude * exp(-d^2 / (2 sigma^2))` into `channel` with max combination.
pub(crate) fn splat_max<T: Scalar>(channel: &mut [T], w: usize, h: usize, u: f64, v: f64, sigma: f64, amplitude: f64) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    for row in 0..h {
        let dy = row as f64 - v;
        for col in 0..w {
            let dx = col as f64 - u;
            let val = (amplitude * (-(dx * dx + dy * dy) * inv).exp()).clamp(0.0, 1.0);
            let val = T::from_f64_lossy(val);
            let cell = &mut channel[row * w + col];
            if val > *cell {
                *cell = val;
            }
        }
    }
}

/// Per-joint Gaussian heatmaps `[N, H, W]`, max-combined over people. Joints that project
/// off the image or lie behind the camera contribute nothing.
pub fn render_heatmaps<T: Scalar>(poses: &[Pose3D], cam: &CameraModel, w: usize, h: usize, sigma_2d: f64) -> Result<Tensor<T>> {
    if !(sigma_2d > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_2d {sigma_2d} must be positive")));
    }
    let n = poses.first().map_or(0, |p| p.joints.len());
    if n == 0 {
        return Err(Error::InvalidArgument("cannot infer joint count from an empty scene".into()));
    }
    render_heatmaps_n(poses, cam, n, w, h, sigma_2d)
}

/// As [`render_heatmaps`] with an explicit joint count (allows empty scenes).
pub fn render_heatmaps_n<T: Scalar>(
    poses: &[Pose3D],
    cam: &CameraModel,
    joints: usize,
    w: usize,
    h: usize,
    sigma_2d: f64,
) -> Result<Tensor<T>> {
    let mut maps = Tensor::zeros(&[joints, h, w]);
    for pose in poses {
        if pose.joints.len() != joints {
            return Err(Error::Shape("poses disagree on joint count".into()));
        }
        for (k, proj) in project_joints(pose, cam).into_iter().enumerate() {
            if let Some((u, v)) = proj {
                if cam.in_image(u, v) {
                    splat_max(maps.channel_mut(k), w, h, u, v, sigma_2d, 1.0);
                }
            }
        }
    }
    Ok(maps)
}

/// Box embeddings and root depths for every person.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDepth<T> {
    /// `[4, H, W]`: distances from the root to the left, top, right and bottom box edges.
    pub box_map: Tensor<T>,
    /// Integer root pixel `[u, v]` per person.
    pub root_pixels: Vec<[usize; 2]>,
    /// Camera-frame root depth per person, mm.
    pub depths: Vec<f64>,
    /// Box distances `[left, top, right, bottom]` per person.
    pub boxes: Vec<[f64; 4]>,
}

pub fn root_pixel(u: f64, v: f64) -> [usize; 2] {
    [u.round() as usize, v.round() as usize]
}

/// Person boxes from projected joints (padded by `pad_px`), box embeddings written around
/// each root pixel, and root depths. Roots must project inside the image.
pub fn render_box_and_depth<T: Scalar>(
    poses: &[Pose3D],
    skel: &SkeletonSpec,
    cam: &CameraModel,
    params: &RenderParams,
) -> Result<BoxDepth<T>> {
    let (w, h) = (cam.image_w, cam.image_h);
    let mut out = BoxDepth {
        box_map: Tensor::zeros(&[4, 1, 1]),
        root_pixels: Vec::new(),
        depths: Vec::new(),
        boxes: Vec::new(),
    };
    for pose in poses {
        let root = cam.project(pose.root(skel))?;
        if !cam.in_image(root.u, root.v) {
            return Err(Error::InvalidArgument(format!(
                "root projects off-image at ({:.2}, {:.2})",
                root.u, root.v
            )));
        }
        let (mut lo_u, mut lo_v, mut hi_u, mut hi_v) = (root.u, root.v, root.u, root.v);
        for (u, v) in project_joints(pose, cam).into_iter().flatten() {
            lo_u = lo_u.min(u);
            lo_v = lo_v.min(v);
            hi_u = hi_u.max(u);
            hi_v = hi_v.max(v);
        }
        let pad = params.pad_px;
        out.boxes.push([
            root.u - (lo_u - pad),
            root.v - (lo_v - pad),
            (hi_u + pad) - root.u,
            (hi_v + pad) - root.v,
        ]);
        out.root_pixels.push(root_pixel(root.u, root.v));
        out.depths.push(root.depth);
    }
    out.box_map = write_box_map(w, h, &out.root_pixels, &out.boxes, &out.depths, params.box_fill_radius);
    Ok(out)
}

/// Box map with each person's distances written in a square of `radius` around its root
/// pixel. Far people are written first so nearer ones win shared pixels; exact root pixels
/// are written last.
pub(crate) fn write_box_map<T: Scalar>(
    w: usize,
    h: usize,
    root_pixels: &[[usize; 2]],
    boxes: &[[f64; 4]],
    depths: &[f64],
    radius: usize,
) -> Tensor<T> {
    let mut map = Tensor::zeros(&[4, h, w]);
    let mut order: Vec<usize> = (0..root_pixels.len()).collect();
    order.sort_by(|&a, &b| depths[b].total_cmp(&depths[a]));
    let r = radius as isize;
    for pass in 0..2 {
        for &p in &order {
            let [pu, pv] = root_pixels[p];
            let rad = if pass == 0 { r } else { 0 };
            for dv in -rad..=rad {
                for du in -rad..=rad {
                    let (u, v) = (pu as isize + du, pv as isize + dv);
                    if u < 0 || v < 0 || u >= w as isize || v >= h as isize {
                        continue;
                    }
                    for c in 0..4 {
                        map.channel_mut(c)[v as usize * w + u as usize] = T::from_f64_lossy(boxes[p][c]);
                    }
                }
            }
        }
    }
    map
}

/// Max-combined isotropic Gaussians in voxel-index space centered at every root, truncated
/// at `3 sigma_vox`. Returns the `[1, X, Y, Z]` volume and how many roots fell outside
/// the grid (those are skipped).
pub fn gt_root_heatmap3d<T: Scalar>(
    poses: &[Pose3D],
    skel: &SkeletonSpec,
    grid: &GridSpec,
    sigma_vox: f64,
) -> Result<(VoxelVolume<T>, usize)> {
    if !(sigma_vox > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_vox {sigma_vox} must be positive")));
    }
    let mut vol = VoxelVolume::zeros(*grid, 1);
    let mut skipped = 0;
    let cutoff = 3.0 * sigma_vox;
    let inv = 1.0 / (2.0 * sigma_vox * sigma_vox);
    for pose in poses {
        let root = pose.root(skel);
        if grid.world_to_voxel(root).is_none() {
            skipped += 1;
            continue;
        }
        let c = grid.world_to_index(root);
        let lo = c.map(|x| (x - cutoff).ceil().max(0.0) as usize);
        let hi = [0, 1, 2].map(|a| ((c[a] + cutoff).floor() as isize).min(grid.dims[a] as isize - 1));
        for i in lo[0] as isize..=hi[0] {
            for j in lo[1] as isize..=hi[1] {
                for k in lo[2] as isize..=hi[2] {
                    let d = [i as f64 - c[0], j as f64 - c[1], k as f64 - c[2]];
                    let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                    if d2 > cutoff * cutoff {
                        continue;
                    }
                    let val = T::from_f64_lossy((-d2 * inv).exp());
                    let idx = [i as usize, j as usize, k as usize];
                    if val > vol.get(0, idx) {
                        vol.set(0, idx, val);
                    }
                }
            }
        }
    }
    Ok((vol, skipped))
}
