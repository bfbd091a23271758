use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::synth::AgrSample;
use crate::tensor::Tensor;

/// A person found in the AGR: root pixel, box distances from the root
/// (left, top, right, bottom), root depth and confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonDetection {
    pub root_uv: [f64; 2],
    pub box_ltrb: [f64; 4],
    pub depth: f64,
    pub confidence: f64,
}

/// Box distances are floored at this many pixels so every box has positive extent.
const MIN_BOX_PX: f64 = 0.5;

impl PersonDetection {
    /// Absolute box `[u_min, v_min, u_max, v_max]`.
    pub fn abs_box(&self) -> [f64; 4] {
        let [u, v] = self.root_uv;
        let [l, t, r, b] = self.box_ltrb;
        [u - l, v - t, u + r, v + b]
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        let [u0, v0, u1, v1] = self.abs_box();
        u >= u0 && u <= u1 && v >= v0 && v <= v1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectParams {
    pub peak_threshold: f64,
    pub nms_radius_px: usize,
    pub max_people: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            peak_threshold: 0.3,
            nms_radius_px: 2,
            max_people: 10,
        }
    }
}

/// Peaks of the root heatmap channel: pixels at or above the threshold that are not
/// exceeded by any 8-neighbor, accepted in descending value order (ties by raster order)
/// unless within the Chebyshev radius of an accepted peak. Box and depth are read at the
/// peak pixel of `box_map` (`[4, H, W]`) and `depth_map` (`[H, W]` or `[1, H, W]`, mm).
pub fn detect_persons_2d<T: Scalar>(
    heatmaps: &Tensor<T>,
    root_channel: usize,
    box_map: &Tensor<T>,
    depth_map: &Tensor<T>,
    params: &DetectParams,
) -> Result<Vec<PersonDetection>> {
    if heatmaps.rank() != 3 || root_channel >= heatmaps.dims()[0] {
        return Err(Error::Shape(format!(
            "heatmaps {:?} have no root channel {root_channel}",
            heatmaps.dims()
        )));
    }
    let (h, w) = (heatmaps.dims()[1], heatmaps.dims()[2]);
    if box_map.dims() != [4, h, w] || depth_map.len() != h * w {
        return Err(Error::Shape(format!(
            "box map {:?} / depth map {:?} do not match heatmaps {:?}",
            box_map.dims(),
            depth_map.dims(),
            heatmaps.dims()
        )));
    }
    let root = heatmaps.channel(root_channel);
    let mut peaks: Vec<(f64, usize)> = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let val = root[v * w + u].as_f64();
            if !(val >= params.peak_threshold) || val <= 0.0 {
                continue;
            }
            let mut is_peak = true;
            for nv in v.saturating_sub(1)..=(v + 1).min(h - 1) {
                for nu in u.saturating_sub(1)..=(u + 1).min(w - 1) {
                    if root[nv * w + nu].as_f64() > val {
                        is_peak = false;
                    }
                }
            }
            if is_peak {
                peaks.push((val, v * w + u));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let r = params.nms_radius_px;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();
    for (val, l) in peaks {
        if out.len() >= params.max_people {
            break;
        }
        let (u, v) = (l % w, l / w);
        if kept.iter().any(|&(ku, kv)| ku.abs_diff(u) <= r && kv.abs_diff(v) <= r) {
            continue;
        }
        kept.push((u, v));
        let b = [0, 1, 2, 3].map(|c| box_map.channel(c)[l].as_f64().max(MIN_BOX_PX));
        out.push(PersonDetection {
            root_uv: [u as f64, v as f64],
            box_ltrb: b,
            depth: depth_map.data()[l].as_f64(),
            confidence: val.min(1.0),
        });
    }
    Ok(out)
}

/// Detections built from a sample's annotations: exact root projections, clean boxes and
/// the sample's depth targets.
pub fn gt_detections<T: Scalar>(sample: &AgrSample<T>, root: usize) -> Result<Vec<PersonDetection>> {
    sample
        .gt_poses
        .iter()
        .enumerate()
        .map(|(p, pose)| {
            let q = sample.camera.project(pose.joints[root])?;
            Ok(PersonDetection {
                root_uv: [q.u, q.v],
                box_ltrb: sample.gt_boxes[p],
                depth: sample.depth_targets[p],
                confidence: 1.0,
            })
        })
        .collect()
}
