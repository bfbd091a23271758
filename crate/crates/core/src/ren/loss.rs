use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::volume::VoxelVolume;

/// `sum_p |D(root_p) - target_p|` over a `[H, W]` or `[1, H, W]` depth map.
pub fn loss_depth<T: Scalar>(depth_map: &Tensor<T>, roots: &[[usize; 2]], targets: &[f64]) -> Result<f64> {
    loss_depth_grad(depth_map, roots, targets).map(|(l, _)| l)
}

/// Loss with its gradient with respect to the depth map (subgradient 0 at a tie).
pub fn loss_depth_grad<T: Scalar>(depth_map: &Tensor<T>, roots: &[[usize; 2]], targets: &[f64]) -> Result<(f64, Tensor<T>)> {
    let dims = depth_map.dims();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    if depth_map.len() != h * w || roots.len() != targets.len() {
        return Err(Error::Shape(format!(
            "depth map {:?} with {} roots and {} targets",
            dims,
            roots.len(),
            targets.len()
        )));
    }
    let mut grad: Tensor<T> = Tensor::zeros(dims);
    let mut loss = 0.0;
    for (&[u, v], &t) in roots.iter().zip(targets) {
        if u >= w || v >= h {
            return Err(Error::OutOfRange {
                index: vec![u, v],
                dims: vec![w, h],
            });
        }
        let i = v * w + u;
        let d = depth_map.data()[i].as_f64() - t;
        loss += d.abs();
        let s = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        let g = grad.data()[i].as_f64() + s;
        grad.data_mut()[i] = T::from_f64_lossy(g);
    }
    Ok((loss, grad))
}

pub fn loss_ren<T: Scalar>(h: &VoxelVolume<T>, h_gt: &VoxelVolume<T>) -> Result<f64> {
    loss_ren_grad(h, h_gt).map(|(l, _)| l)
}

/// Sum of squared differences and its gradient `2 (h - h_gt)`.
pub fn loss_ren_grad<T: Scalar>(h: &VoxelVolume<T>, h_gt: &VoxelVolume<T>) -> Result<(f64, Tensor<T>)> {
    if h.grid != h_gt.grid || h.data.dims() != h_gt.data.dims() {
        return Err(Error::Shape("root heatmaps live on different grids".into()));
    }
    let mut grad: Tensor<T> = Tensor::zeros(h.data.dims());
    let mut loss = 0.0;
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(h.data.data()).zip(h_gt.data.data()) {
        let d = a.as_f64() - b.as_f64();
        loss += d * d;
        *g = T::from_f64_lossy(2.0 * d);
    }
    Ok((loss, grad))
}
