use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, NetSpec, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Affine map from the depth network's `[0, 1]` output to millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max > self.min) {
            return Err(Error::InvalidArgument(format!(
                "depth range [{}, {}] must satisfy 0 < min < max",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn to_mm(&self, s: f64) -> f64 {
        self.min + self.span() * s
    }
}

/// Dense root depth map `[1, H, W]` in mm from the depth network's sigmoid output.
pub fn estimate_depth_map<T: Scalar>(
    de_net: &NetSpec,
    params: &ParamSet<T>,
    input: &Tensor<T>,
    range: &DepthRange,
) -> Result<Tensor<T>> {
    range.validate()?;
    let s = forward(de_net, params, input)?;
    Ok(s.map(|x| T::from_f64_lossy(range.to_mm(x.as_f64()))))
}
