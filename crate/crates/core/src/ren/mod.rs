//! Root estimation: depth map, 2D detection, depth-gated coarse volume, 3D NMS and the
//! associated losses.

mod depth;
mod detect;
mod loss;
mod nms;
mod project;

pub use depth::{estimate_depth_map, DepthRange};
pub use detect::{detect_persons_2d, gt_detections, DetectParams, PersonDetection};
pub use loss::{loss_depth, loss_depth_grad, loss_ren, loss_ren_grad};
pub use nms::{nms_3d, NmsParams, RootCandidate};
pub use project::{bilinear, build_naive_volume, build_root_volume, depth_gate, DEFAULT_GATE_SIGMA};
