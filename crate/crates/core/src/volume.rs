use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Dense multi-channel field over a voxel grid, stored channel-first as `[C, X, Y, Z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume<T> {
    pub grid: GridSpec,
    pub data: Tensor<T>,
}

impl<T: Scalar> VoxelVolume<T> {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        let d = grid.dims;
        VoxelVolume {
            grid,
            data: Tensor::zeros(&[channels, d[0], d[1], d[2]]),
        }
    }

    pub fn new(grid: GridSpec, data: Tensor<T>) -> Result<Self> {
        let d = grid.dims;
        if data.rank() != 4 || data.dims()[1..] != d[..] {
            return Err(Error::Shape(format!(
                "volume data {:?} does not match grid dims {:?}",
                data.dims(),
                d
            )));
        }
        Ok(VoxelVolume { grid, data })
    }

    pub fn channels(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn get(&self, c: usize, idx: [usize; 3]) -> T {
        self.data.channel(c)[self.grid.linear(idx)]
    }

    pub fn set(&mut self, c: usize, idx: [usize; 3], v: T) {
        let l = self.grid.linear(idx);
        self.data.channel_mut(c)[l] = v;
    }

    /// Index of the largest value in channel `c`, first occurrence on ties.
    pub fn argmax(&self, c: usize) -> [usize; 3] {
        let ch = self.data.channel(c);
        let mut best = 0;
        for (i, &v) in ch.iter().enumerate() {
            if v > ch[best] {
                best = i;
            }
        }
        self.grid.unlinear(best)
    }
}
