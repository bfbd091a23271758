use super::detect::PersonDetection;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, GridSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::volume::VoxelVolume;

/// Width of the depth gate in mm.
pub const DEFAULT_GATE_SIGMA: f64 = 200.0;

pub fn depth_gate(z: f64, depth: f64, sigma: f64) -> f64 {
    let dz = z - depth;
    (-(dz * dz) / (2.0 * sigma * sigma)).exp()
}

/// Bilinear sample of a row-major `w x h` map at continuous pixel coordinates inside
/// `[0, w - 1] x [0, h - 1]`.
pub fn bilinear<T: Scalar>(map: &[T], w: usize, h: usize, u: f64, v: f64) -> f64 {
    let u0 = (u.floor() as usize).min(w - 1);
    let v0 = (v.floor() as usize).min(h - 1);
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    let a = u - u0 as f64;
    let b = v - v0 as f64;
    let at = |x: usize, y: usize| map[y * w + x].as_f64();
    (1.0 - a) * (1.0 - b) * at(u0, v0) + a * (1.0 - b) * at(u1, v0) + (1.0 - a) * b * at(u0, v1) + a * b * at(u1, v1)
}

fn check_heatmaps<T: Scalar>(heatmaps: &Tensor<T>, cam: &CameraModel) -> Result<()> {
    if heatmaps.rank() != 3 || heatmaps.dims()[1] != cam.image_h || heatmaps.dims()[2] != cam.image_w {
        return Err(Error::Shape(format!(
            "heatmaps {:?} do not match a {}x{} camera",
            heatmaps.dims(),
            cam.image_w,
            cam.image_h
        )));
    }
    Ok(())
}

/// Projects every voxel center, samples each heatmap channel bilinearly and scales by
/// `gate(u, v, z)`. Voxels behind the camera or off the image stay 0.
fn project_volume<T: Scalar>(
    heatmaps: &Tensor<T>,
    grid: &GridSpec,
    cam: &CameraModel,
    gate: impl Fn(f64, f64, f64) -> f64,
) -> Result<VoxelVolume<T>> {
    check_heatmaps(heatmaps, cam)?;
    grid.validate()?;
    let n = heatmaps.dims()[0];
    let (w, h) = (cam.image_w, cam.image_h);
    let mut vol = VoxelVolume::zeros(*grid, n);
    let len = grid.len();
    for l in 0..len {
        let idx = grid.unlinear(l);
        let Ok(p) = cam.project(grid.voxel_center(idx)?) else {
            continue;
        };
        if !cam.in_image(p.u, p.v) {
            continue;
        }
        let g = gate(p.u, p.v, p.depth);
        if g == 0.0 {
            continue;
        }
        for c in 0..n {
            let val = bilinear(heatmaps.channel(c), w, h, p.u, p.v) * g;
            vol.data.data_mut()[c * len + l] = T::from_f64_lossy(val);
        }
    }
    Ok(vol)
}

/// Depth-gated volume: a voxel projecting into one or more detection boxes gets the
/// heatmap value times the largest depth gate among those boxes; other voxels get 0.
pub fn build_root_volume<T: Scalar>(
    heatmaps: &Tensor<T>,
    detections: &[PersonDetection],
    grid: &GridSpec,
    cam: &CameraModel,
    sigma: f64,
) -> Result<VoxelVolume<T>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("gate sigma {sigma} must be positive")));
    }
    project_volume(heatmaps, grid, cam, |u, v, z| {
        let mut best = 0.0f64;
        for d in detections {
            if d.contains(u, v) {
                best = best.max(depth_gate(z, d.depth, sigma));
            }
        }
        best
    })
}

/// Ungated projection of every heatmap channel along camera rays.
pub fn build_naive_volume<T: Scalar>(heatmaps: &Tensor<T>, grid: &GridSpec, cam: &CameraModel) -> Result<VoxelVolume<T>> {
    project_volume(heatmaps, grid, cam, |_, _, _| 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_spot_values() {
        assert_eq!(depth_gate(3000.0, 3000.0, DEFAULT_GATE_SIGMA), 1.0);
        let e = (-0.5f64).exp();
        assert!((depth_gate(3200.0, 3000.0, DEFAULT_GATE_SIGMA) - e).abs() < 1e-12);
        assert!((depth_gate(2800.0, 3000.0, DEFAULT_GATE_SIGMA) - e).abs() < 1e-12);
    }

    #[test]
    fn bilinear_interpolates_and_hits_corners() {
        let map = [0.0f64, 1.0, 2.0, 3.0];
        assert_eq!(bilinear(&map, 2, 2, 0.0, 0.0), 0.0);
        assert_eq!(bilinear(&map, 2, 2, 1.0, 1.0), 3.0);
        assert_eq!(bilinear(&map, 2, 2, 0.5, 0.5), 1.5);
        assert_eq!(bilinear(&map, 2, 2, 1.0, 0.0), 1.0);
    }
}
