//! Per-person pose estimation on a fine grid around each root candidate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, GridSpec, Point3};
use crate::nn::{forward, NetSpec, ParamSet};
use crate::ren::build_naive_volume;
use crate::scalar::Scalar;
use crate::synth::Pose3D;
use crate::tensor::Tensor;
use crate::volume::VoxelVolume;

/// Cube edge and voxels per axis of the per-person grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineGrid {
    pub extent: f64,
    pub dims: usize,
}

impl Default for FineGrid {
    fn default() -> Self {
        FineGrid {
            extent: 2000.0,
            dims: 64,
        }
    }
}

impl FineGrid {
    pub fn around(&self, center: Point3) -> Result<GridSpec> {
        GridSpec::centered_cube(center, self.extent, self.dims)
    }

    pub fn voxel_size(&self) -> f64 {
        self.extent / self.dims as f64
    }
}

/// Which units the pose L1 loss is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenLossUnits {
    #[default]
    Voxel,
    Millimeter,
}

/// Ungated projection of all heatmap channels over the fine grid centered at `root`.
pub fn build_person_volume<T: Scalar>(
    heatmaps: &Tensor<T>,
    cam: &CameraModel,
    root: Point3,
    fine: &FineGrid,
) -> Result<VoxelVolume<T>> {
    build_naive_volume(heatmaps, &fine.around(root)?, cam)
}

/// Pose network input: the volume's channels, optionally followed by the squared
/// distance of each voxel to the grid center in units of the half extent.
pub fn pen_input<T: Scalar>(vol: &VoxelVolume<T>, center_channel: bool) -> Tensor<T> {
    if !center_channel {
        return vol.data.clone();
    }
    let [x, y, z] = vol.grid.dims;
    let c = vol.channels();
    let axis = |n: usize| -> Vec<f64> {
        let h = n as f64 / 2.0;
        (0..n).map(|i| ((i as f64 + 0.5 - h) / h).powi(2)).collect()
    };
    let (ax, ay, az) = (axis(x), axis(y), axis(z));
    let mut data = Vec::with_capacity((c + 1) * x * y * z);
    data.extend_from_slice(vol.data.data());
    for &dx in &ax {
        for &dy in &ay {
            data.extend(az.iter().map(|&dz| T::from_f64_lossy(dx + dy + dz)));
        }
    }
    Tensor::new(vec![c + 1, x, y, z], data).expect("channel concatenation preserves length")
}

/// Expected voxel index per channel, `sum idx * H / sum H`, in `[N][3]`.
pub fn integral_indices<T: Scalar>(h: &VoxelVolume<T>) -> Result<Vec<[f64; 3]>> {
    let grid = &h.grid;
    let [_, ny, nz] = grid.dims;
    let mut out = Vec::with_capacity(h.channels());
    for c in 0..h.channels() {
        let ch = h.data.channel(c);
        let mut acc = [0.0f64; 3];
        let mut total = 0.0f64;
        for (l, &x) in ch.iter().enumerate() {
            let m = x.as_f64();
            if m == 0.0 {
                continue;
            }
            let (i, j, k) = (l / (ny * nz), (l / nz) % ny, l % nz);
            acc[0] += m * i as f64;
            acc[1] += m * j as f64;
            acc[2] += m * k as f64;
            total += m;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!("channel {c} has no mass to decode (sum {total})")));
        }
        out.push(acc.map(|a| a / total));
    }
    Ok(out)
}

/// Integral decoding: expected voxel index per joint mapped to world millimeters.
pub fn integral_decode<T: Scalar>(h: &VoxelVolume<T>) -> Result<Pose3D> {
    let idx = integral_indices(h)?;
    Ok(Pose3D {
        joints: idx.iter().map(|&j| h.grid.index_to_world(j)).collect(),
    })
}

/// Gradient of a function of the decoded indices with respect to the heatmap, given
/// `d loss / d J` per joint. Accounts for the normalization by the channel sum.
pub fn integral_backward<T: Scalar>(h: &VoxelVolume<T>, indices: &[[f64; 3]], d_indices: &[[f64; 3]]) -> Tensor<T> {
    let [_, ny, nz] = h.grid.dims;
    let mut grad: Tensor<T> = Tensor::zeros(h.data.dims());
    for c in 0..h.channels() {
        let total: f64 = h.data.channel(c).iter().map(|x| x.as_f64()).sum();
        let (j, dj) = (indices[c], d_indices[c]);
        let g = grad.channel_mut(c);
        for (l, out) in g.iter_mut().enumerate() {
            let (i, jj, k) = ((l / (ny * nz)) as f64, ((l / nz) % ny) as f64, (l % nz) as f64);
            let v = dj[0] * (i - j[0]) + dj[1] * (jj - j[1]) + dj[2] * (k - j[2]);
            *out = T::from_f64_lossy(v / total);
        }
    }
    grad
}

/// Joints whose ground truth lies inside the cube (continuous index within
/// `[-0.5, dims - 0.5]` on every axis).
pub fn inside_mask(grid: &GridSpec, gt: &Pose3D) -> Vec<bool> {
    gt.joints
        .iter()
        .map(|&p| {
            let idx = grid.world_to_index(p);
            (0..3).all(|a| idx[a] >= -0.5 && idx[a] <= grid.dims[a] as f64 - 0.5)
        })
        .collect()
}

/// `(1/N) sum_k mask_k |J_k - gt_k|_1` over voxel indices, optionally scaled to mm.
/// Returns the loss and `d loss / d J`.
pub fn loss_pen_grad(
    decoded: &[[f64; 3]],
    gt: &[[f64; 3]],
    mask: &[bool],
    grid: &GridSpec,
    units: PenLossUnits,
) -> Result<(f64, Vec<[f64; 3]>)> {
    if decoded.len() != gt.len() || mask.len() != gt.len() || gt.is_empty() {
        return Err(Error::Shape(format!(
            "pose loss needs matching skeletons ({} decoded, {} gt, {} mask)",
            decoded.len(),
            gt.len(),
            mask.len()
        )));
    }
    let n = gt.len() as f64;
    let scale = match units {
        PenLossUnits::Voxel => [1.0; 3],
        PenLossUnits::Millimeter => grid.voxel_size,
    };
    let mut loss = 0.0;
    let mut grad = vec![[0.0; 3]; gt.len()];
    for k in 0..gt.len() {
        if !mask[k] {
            continue;
        }
        for a in 0..3 {
            let d = decoded[k][a] - gt[k][a];
            loss += scale[a] * d.abs() / n;
            grad[k][a] = if d > 0.0 {
                scale[a] / n
            } else if d < 0.0 {
                -scale[a] / n
            } else {
                0.0
            };
        }
    }
    Ok((loss, grad))
}

/// Loss between two poses expressed on `grid`, masking ground-truth joints outside it.
pub fn loss_pen(decoded: &Pose3D, gt: &Pose3D, grid: &GridSpec, units: PenLossUnits) -> Result<f64> {
    let d: Vec<_> = decoded.joints.iter().map(|&p| grid.world_to_index(p)).collect();
    let g: Vec<_> = gt.joints.iter().map(|&p| grid.world_to_index(p)).collect();
    loss_pen_grad(&d, &g, &inside_mask(grid, gt), grid, units).map(|(l, _)| l)
}

/// Full pose for one root candidate. The decoded root joint is the refined root.
pub fn estimate_person<T: Scalar>(
    pen_net: &NetSpec,
    params: &ParamSet<T>,
    heatmaps: &Tensor<T>,
    cam: &CameraModel,
    root_candidate: Point3,
    fine: &FineGrid,
    root_joint: usize,
    center_channel: bool,
) -> Result<(Pose3D, Point3)> {
    let vol = build_person_volume(heatmaps, cam, root_candidate, fine)?;
    let out = forward(pen_net, params, &pen_input(&vol, center_channel))?;
    let pose = integral_decode(&VoxelVolume::new(vol.grid, out)?)?;
    let root = *pose
        .joints
        .get(root_joint)
        .ok_or_else(|| Error::Shape(format!("root joint {root_joint} outside decoded pose")))?;
    Ok((pose, root))
}
