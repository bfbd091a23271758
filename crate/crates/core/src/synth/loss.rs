//! AGR supervision: heatmap sum of squares plus box L1 at ground-truth root pixels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check(h: &Tensor<impl Scalar>, h_gt: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>, b_gt: &Tensor<impl Scalar>) -> Result<()> {
    if h.dims() != h_gt.dims() || b.dims() != b_gt.dims() {
        return Err(Error::Shape(format!(
            "loss_2d shapes disagree: H {:?} vs {:?}, B {:?} vs {:?}",
            h.dims(),
            h_gt.dims(),
            b.dims(),
            b_gt.dims()
        )));
    }
    if b.rank() != 3 || b.dims()[0] != 4 {
        return Err(Error::Shape(format!("box map must be [4, H, W], got {:?}", b.dims())));
    }
    Ok(())
}

pub fn loss_2d<T: Scalar>(
    h: &Tensor<T>,
    h_gt: &Tensor<T>,
    b: &Tensor<T>,
    b_gt: &Tensor<T>,
    roots: &[[usize; 2]],
    lambda_bbox: f64,
) -> Result<f64> {
    loss_2d_grad(h, h_gt, b, b_gt, roots, lambda_bbox).map(|(l, _, _)| l)
}

/// Loss with its gradients with respect to `h` and `b`. The L1 subgradient at zero is 0.
pub fn loss_2d_grad<T: Scalar>(
    h: &Tensor<T>,
    h_gt: &Tensor<T>,
    b: &Tensor<T>,
    b_gt: &Tensor<T>,
    roots: &[[usize; 2]],
    lambda_bbox: f64,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    check(h, h_gt, b, b_gt)?;
    let (bh, bw) = (b.dims()[1], b.dims()[2]);
    let mut loss = 0.0;
    let mut dh: Tensor<T> = Tensor::zeros(h.dims());
    for ((g, &x), &y) in dh.data_mut().iter_mut().zip(h.data()).zip(h_gt.data()) {
        let d = x.as_f64() - y.as_f64();
        loss += d * d;
        *g = T::from_f64_lossy(2.0 * d);
    }
    let mut db: Tensor<T> = Tensor::zeros(b.dims());
    for &[u, v] in roots {
        if u >= bw || v >= bh {
            return Err(Error::OutOfRange {
                index: vec![u, v],
                dims: vec![bw, bh],
            });
        }
        for c in 0..4 {
            let i = (c * bh + v) * bw + u;
            let d = b.data()[i].as_f64() - b_gt.data()[i].as_f64();
            loss += lambda_bbox * d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            let g = db.data()[i].as_f64() + lambda_bbox * s;
            db.data_mut()[i] = T::from_f64_lossy(g);
        }
    }
    Ok((loss, dh, db))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let h: Tensor<f64> = Tensor::zeros(&[2, 3, 4]);
        let b: Tensor<f64> = Tensor::full(&[4, 3, 4], 5.0);
        assert_eq!(loss_2d(&h, &h, &b, &b, &[[1, 2]], 0.1).unwrap(), 0.0);
        let mut h2 = h.clone();
        h2.set(&[1, 2, 3], 0.5).unwrap();
        assert_eq!(loss_2d(&h2, &h, &b, &b, &[[1, 2]], 0.1).unwrap(), 0.25);
        let mut b2 = b.clone();
        for (c, off) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            b2.set(&[c, 2, 1], 5.0 + off).unwrap();
        }
        assert!((loss_2d(&h, &h, &b2, &b, &[[1, 2]], 0.1).unwrap() - 1.0).abs() < 1e-12);
        // Box errors away from root pixels are not supervised.
        assert_eq!(loss_2d(&h, &h, &b2, &b, &[[0, 0]], 0.1).unwrap(), 0.0);
        assert!(loss_2d(&h, &h, &b, &b, &[[4, 0]], 0.1).is_err());
    }
}
