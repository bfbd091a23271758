use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scalar::Scalar;
use crate::volume::VoxelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootCandidate {
    pub index: [usize; 3],
    pub world: Point3,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsParams {
    pub radius_vox: usize,
    pub threshold: f64,
    pub max_people: usize,
}

impl Default for NmsParams {
    fn default() -> Self {
        NmsParams {
            radius_vox: 1,
            threshold: 0.3,
            max_people: 10,
        }
    }
}

/// Voxels at or above the threshold that strictly exceed all 26 neighbors, accepted
/// greedily by descending confidence (ties by linear index) unless within the Chebyshev
/// radius of an accepted candidate.
pub fn nms_3d<T: Scalar>(h: &VoxelVolume<T>, params: &NmsParams) -> Result<Vec<RootCandidate>> {
    if params.radius_vox < 1 {
        return Err(Error::InvalidArgument("nms radius must be at least 1 voxel".into()));
    }
    if h.channels() != 1 {
        return Err(Error::Shape(format!("nms expects one channel, got {}", h.channels())));
    }
    let grid = &h.grid;
    let [nx, ny, nz] = grid.dims;
    let data = h.data.data();
    let mut peaks: Vec<(f64, usize)> = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let l = grid.linear([i, j, k]);
                let val = data[l].as_f64();
                if !(val >= params.threshold) {
                    continue;
                }
                let mut strict = true;
                'scan: for a in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
                    for b in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
                        for c in k.saturating_sub(1)..=(k + 1).min(nz - 1) {
                            if (a, b, c) != (i, j, k) && data[grid.linear([a, b, c])].as_f64() >= val {
                                strict = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if strict {
                    peaks.push((val, l));
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let r = params.radius_vox;
    let mut out: Vec<RootCandidate> = Vec::new();
    for (val, l) in peaks {
        if out.len() >= params.max_people {
            break;
        }
        let idx = grid.unlinear(l);
        if out
            .iter()
            .any(|c| (0..3).all(|a| c.index[a].abs_diff(idx[a]) <= r))
        {
            continue;
        }
        out.push(RootCandidate {
            index: idx,
            world: grid.voxel_center(idx)?,
            confidence: val,
        });
    }
    Ok(out)
}
