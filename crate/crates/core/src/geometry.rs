//! Pinhole cameras, voxel grids and the box-size depth relation.
//!
//! World frame is z-up with the ground plane at z = 0, in millimeters. Camera frame is
//! x right, y down, z forward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

fn normalize(a: Point3) -> Point3 {
    scale(a, 1.0 / norm(a))
}

/// Pinhole intrinsics plus a world-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    #[serde(rename = "R")]
    pub r: [f64; 9],
    /// Translation in mm: `p_cam = R p_world + t`.
    pub t: [f64; 3],
    #[serde(rename = "w")]
    pub image_w: usize,
    #[serde(rename = "h")]
    pub image_h: usize,
}

/// Pixel coordinates plus camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        r: [f64; 9],
        t: [f64; 3],
        image_w: usize,
        image_h: usize,
    ) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            r,
            t,
            image_w,
            image_h,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        let r = &self.r;
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let rtr: f64 = (0..3).map(|k| r[k * 3 + i] * r[k * 3 + j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((rtr - id).abs());
            }
        }
        let det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
            + r[2] * (r[3] * r[7] - r[4] * r[6]);
        if worst >= 1e-9 || (det - 1.0).abs() >= 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (|RtR - I| = {worst:e}, det = {det})"
            )));
        }
        Ok(())
    }

    /// Camera looking from `eye` towards `target` with the world z axis as up.
    pub fn look_at(f: f64, eye: Point3, target: Point3, image_w: usize, image_h: usize) -> Result<Self> {
        let forward = normalize(sub(target, eye));
        let side = cross(forward, [0.0, 0.0, 1.0]);
        if norm(side) < 1e-9 {
            return Err(Error::InvalidArgument("look_at direction is vertical".into()));
        }
        let right = normalize(side);
        let down = cross(forward, right);
        Self::from_axes(f, eye, right, down, forward, image_w, image_h)
    }

    fn from_axes(
        f: f64,
        eye: Point3,
        right: Point3,
        down: Point3,
        forward: Point3,
        image_w: usize,
        image_h: usize,
    ) -> Result<Self> {
        let r = [
            right[0], right[1], right[2], down[0], down[1], down[2], forward[0], forward[1],
            forward[2],
        ];
        let t = [-dot(right, eye), -dot(down, eye), -dot(forward, eye)];
        CameraModel::new(
            f,
            f,
            (image_w as f64 - 1.0) / 2.0,
            (image_h as f64 - 1.0) / 2.0,
            r,
            t,
            image_w,
            image_h,
        )
    }

    /// Camera at `eye` facing horizontal heading `yaw` (0 looks along +y, positive turns
    /// towards +x), tilted down by `theta`.
    pub fn yaw_pitch(
        f: f64,
        eye: Point3,
        yaw: f64,
        theta: f64,
        image_w: usize,
        image_h: usize,
    ) -> Result<Self> {
        if theta.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidArgument(format!("pitch {theta} must be within (-pi/2, pi/2)")));
        }
        let (sy, cy) = yaw.sin_cos();
        let (st, ct) = theta.sin_cos();
        let forward = [sy * ct, cy * ct, -st];
        let right = [cy, -sy, 0.0];
        let down = cross(forward, right);
        Self::from_axes(f, eye, right, down, forward, image_w, image_h)
    }

    pub fn rotate(&self, p: Point3) -> Point3 {
        let r = &self.r;
        [
            r[0] * p[0] + r[1] * p[1] + r[2] * p[2],
            r[3] * p[0] + r[4] * p[1] + r[5] * p[2],
            r[6] * p[0] + r[7] * p[1] + r[8] * p[2],
        ]
    }

    pub fn to_camera(&self, p: Point3) -> Point3 {
        add(self.rotate(p), self.t)
    }

    pub fn to_world(&self, pc: Point3) -> Point3 {
        let q = sub(pc, self.t);
        let r = &self.r;
        [
            r[0] * q[0] + r[3] * q[1] + r[6] * q[2],
            r[1] * q[0] + r[4] * q[1] + r[7] * q[2],
            r[2] * q[0] + r[5] * q[1] + r[8] * q[2],
        ]
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3 {
        self.to_world([0.0; 3])
    }

    pub fn project(&self, p: Point3) -> Result<Projection> {
        let [x, y, z] = self.to_camera(p);
        if z <= 0.0 {
            return Err(Error::BehindCamera(z));
        }
        Ok(Projection {
            u: self.fx * x / z + self.cx,
            v: self.fy * y / z + self.cy,
            depth: z,
        })
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3> {
        if depth <= 0.0 {
            return Err(Error::InvalidArgument(format!("depth {depth} must be positive")));
        }
        Ok(self.to_world(self.backproject_camera(u, v, depth)))
    }

    /// Back-projection into the camera frame.
    pub fn backproject_camera(&self, u: f64, v: f64, depth: f64) -> Point3 {
        [(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth]
    }

    /// Whether continuous pixel coordinates fall on the image, with integer coordinates
    /// at pixel centers.
    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.image_w - 1) as f64 && v <= (self.image_h - 1) as f64
    }

    /// Same camera after moving the world by `delta`.
    pub fn translated_world(&self, delta: Point3) -> CameraModel {
        let rd = self.rotate(delta);
        CameraModel {
            t: sub(self.t, rd),
            ..*self
        }
    }
}

/// Camera at `(0, 0, cam_height)` looking along +y, pitched down by `theta`.
pub fn pitch_camera(f: f64, theta: f64, cam_height: f64, image_w: usize, image_h: usize) -> Result<CameraModel> {
    CameraModel::yaw_pitch(f, [0.0, 0.0, cam_height], 0.0, theta, image_w, image_h)
}

/// Standing height and pose-dependent vertical extent of a person.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyHeights {
    pub h_real: f64,
    pub h_pose: f64,
}

impl BodyHeights {
    pub fn new(h_real: f64, h_pose: f64) -> Result<Self> {
        let b = BodyHeights { h_real, h_pose };
        let g = b.gamma_pose();
        if !(h_real > 0.0) || !(g > 0.0 && g <= 1.2) {
            return Err(Error::InvalidArgument(format!(
                "implausible body heights (h_real={h_real}, gamma={g})"
            )));
        }
        Ok(b)
    }

    /// Heights from joint positions: the vertical extent of the pose over the stature.
    pub fn from_joints(h_real: f64, joints: &[Point3]) -> Result<Self> {
        let (lo, hi) = joints
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])));
        BodyHeights::new(h_real, hi - lo)
    }

    pub fn gamma_pose(&self) -> f64 {
        self.h_pose / self.h_real
    }
}

/// Depth from apparent height: `d = f * gamma * h_real * cos(theta) / h_img`.
pub fn tbs_depth(f: f64, heights: &BodyHeights, theta: f64, h_img: f64) -> Result<f64> {
    if !(h_img > 0.0) {
        return Err(Error::InvalidArgument(format!("image height {h_img} must be positive")));
    }
    Ok(f * heights.gamma_pose() * heights.h_real * theta.cos() / h_img)
}

/// Axis-aligned voxel grid; voxel `(i, j, k)` is centered at
/// `origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: Point3,
    pub voxel_size: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Point3, voxel_size: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        let g = GridSpec {
            origin,
            voxel_size,
            dims,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.voxel_size.iter().any(|&s| !(s > 0.0)) || self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs positive voxel size and dims (size {:?}, dims {:?})",
                self.voxel_size, self.dims
            )));
        }
        Ok(())
    }

    /// Cube of `extent` mm per axis split into `n` voxels per axis, centered at `center`.
    pub fn centered_cube(center: Point3, extent: f64, n: usize) -> Result<Self> {
        let size = extent / n as f64;
        GridSpec::new(sub(center, [extent / 2.0; 3]), [size; 3], [n; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.voxel_size[a] * self.dims[a] as f64)
    }

    pub fn center(&self) -> Point3 {
        add(self.origin, scale(self.extent(), 0.5))
    }

    pub fn voxel_center(&self, idx: [usize; 3]) -> Result<Point3> {
        if idx.iter().zip(&self.dims).any(|(i, d)| i >= d) {
            return Err(Error::OutOfRange {
                index: idx.to_vec(),
                dims: self.dims.to_vec(),
            });
        }
        Ok(self.index_to_world([idx[0] as f64, idx[1] as f64, idx[2] as f64]))
    }

    /// Continuous voxel index to world position (integer indices map to voxel centers).
    pub fn index_to_world(&self, idx: [f64; 3]) -> Point3 {
        [0, 1, 2].map(|a| self.origin[a] + (idx[a] + 0.5) * self.voxel_size[a])
    }

    /// Continuous voxel index of a world position (voxel centers map to integers).
    pub fn world_to_index(&self, p: Point3) -> [f64; 3] {
        [0, 1, 2].map(|a| (p[a] - self.origin[a]) / self.voxel_size[a] - 0.5)
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn world_to_voxel(&self, p: Point3) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size[a]).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }

    pub fn linear(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn unlinear(&self, l: usize) -> [usize; 3] {
        let k = l % self.dims[2];
        let j = (l / self.dims[2]) % self.dims[1];
        let i = l / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn corners(&self) -> [Point3; 8] {
        let e = self.extent();
        let mut out = [[0.0; 3]; 8];
        for (n, c) in out.iter_mut().enumerate() {
            for a in 0..3 {
                c[a] = self.origin[a] + if n >> a & 1 == 1 { e[a] } else { 0.0 };
            }
        }
        out
    }

    pub fn translated(&self, delta: Point3) -> GridSpec {
        GridSpec {
            origin: add(self.origin, delta),
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple() -> CameraModel {
        CameraModel::new(
            1000.0,
            1000.0,
            100.0,
            100.0,
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            [0.0; 3],
            200,
            200,
        )
        .unwrap()
    }

    #[test]
    fn on_axis_and_offset_projection() {
        let c = simple();
        let p = c.project([0.0, 0.0, 2000.0]).unwrap();
        assert_eq!((p.u, p.v, p.depth), (100.0, 100.0, 2000.0));
        let p = c.project([200.0, 0.0, 2000.0]).unwrap();
        assert_eq!((p.u, p.v, p.depth), (200.0, 100.0, 2000.0));
        assert_eq!(c.backproject(100.0, 100.0, 2000.0).unwrap(), [0.0, 0.0, 2000.0]);
    }

    #[test]
    fn behind_camera_and_bad_depth_rejected() {
        let c = simple();
        assert!(matches!(c.project([0.0, 0.0, -5.0]), Err(Error::BehindCamera(_))));
        assert!(matches!(c.project([0.0, 0.0, 0.0]), Err(Error::BehindCamera(_))));
        assert!(c.backproject(10.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn backprojection_is_linear_in_depth() {
        let c = simple();
        let a = c.backproject_camera(37.0, 151.0, 1200.0);
        let b = c.backproject_camera(37.0, 151.0, 2400.0);
        for k in 0..3 {
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut c = simple();
        c.r[0] = 1.01;
        assert!(c.validate().is_err());
        c.r[0] = 1.0;
        c.fx = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pitch_zero_is_axis_permutation() {
        let c = pitch_camera(500.0, 0.0, 1500.0, 64, 48).unwrap();
        assert_eq!(c.r, [1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert_eq!(c.center(), [0.0, 0.0, 1500.0]);
    }

    #[test]
    fn optical_axis_hits_image_center() {
        let theta = 30f64.to_radians();
        let c = pitch_camera(500.0, theta, 2000.0, 65, 49).unwrap();
        let d = 3000.0;
        let p = [0.0, d * theta.cos(), 2000.0 - d * theta.sin()];
        let q = c.project(p).unwrap();
        assert!((q.u - c.cx).abs() < 1e-9 && (q.v - c.cy).abs() < 1e-9);
        assert!((q.depth - d).abs() < 1e-9);
    }

    #[test]
    fn near_vertical_camera_sees_ground_below_at_center() {
        let eps = 1e-3;
        let c = pitch_camera(500.0, std::f64::consts::FRAC_PI_2 - eps, 2000.0, 65, 49).unwrap();
        let q = c.project([0.0, 0.0, 0.0]).unwrap();
        // Offset from center is f * tan(eps) ~ 0.5 px, vanishing as eps -> 0.
        assert!((q.v - c.cy).abs() < 500.0 * (2.0 * eps).tan());
        assert!((q.u - c.cx).abs() < 1e-9);
    }

    #[test]
    fn tbs_depth_examples() {
        let h = BodyHeights::new(1700.0, 1700.0).unwrap();
        assert!((tbs_depth(1400.0, &h, 0.0, 476.0).unwrap() - 5000.0).abs() < 1e-9);
        let h = BodyHeights::new(2000.0, 2000.0).unwrap();
        let d = tbs_depth(1000.0, &h, 60f64.to_radians(), 500.0).unwrap();
        assert!((d - 2000.0).abs() < 1e-9);
        assert!(tbs_depth(1000.0, &h, 0.0, 0.0).is_err());
        assert!(BodyHeights::new(1000.0, 1300.0).is_err());
    }

    #[test]
    fn voxel_centers() {
        let g = GridSpec::new([0.0; 3], [100.0; 3], [4, 4, 4]).unwrap();
        assert_eq!(g.voxel_center([0, 0, 0]).unwrap(), [50.0, 50.0, 50.0]);
        assert!(g.voxel_center([4, 0, 0]).is_err());
        let g = GridSpec::new([-3000.0, -3000.0, 0.0], [75.0, 75.0, 75.0], [80, 80, 24]).unwrap();
        let c = g.voxel_center([79, 79, 23]).unwrap();
        assert_eq!(c, [-3000.0 + 79.5 * 75.0, -3000.0 + 79.5 * 75.0, 23.5 * 75.0]);
        assert_eq!(g.world_to_voxel(c), Some([79, 79, 23]));
        assert_eq!(g.world_to_voxel([0.0, 0.0, -1.0]), None);
    }

    fn arb_camera() -> impl Strategy<Value = CameraModel> {
        (
            50.0..2000.0f64,
            -3.1..3.1f64,
            -1.2..1.2f64,
            prop::array::uniform3(-3000.0..3000.0f64),
        )
            .prop_map(|(f, yaw, pitch, eye)| CameraModel::yaw_pitch(f, eye, yaw, pitch, 320, 240).unwrap())
    }

    proptest! {
        #[test]
        fn project_backproject_round_trip(cam in arb_camera(), local in prop::array::uniform3(-2000.0..2000.0f64), depth in 100.0..10000.0f64) {
            let pc = [local[0], local[1], depth];
            let p = cam.to_world(pc);
            let q = cam.project(p).unwrap();
            let back = cam.backproject(q.u, q.v, q.depth).unwrap();
            let scale = norm(p).max(1.0);
            prop_assert!(distance(back, p) / scale < 1e-9);
            prop_assert!(distance(back, p) < 1e-6);
            let q2 = cam.project(back).unwrap();
            prop_assert!((q2.u - q.u).abs() < 1e-6 && (q2.v - q.v).abs() < 1e-6);
        }

        #[test]
        fn tbs_homogeneity(f in 10.0..5000.0f64, h_img in 1.0..1000.0f64, hr in 500.0..2500.0f64) {
            let h = BodyHeights::new(hr, hr).unwrap();
            let d = tbs_depth(f, &h, 0.0, h_img).unwrap();
            prop_assert_eq!(tbs_depth(2.0 * f, &h, 0.0, h_img).unwrap(), 2.0 * d);
            prop_assert_eq!(tbs_depth(f, &h, 0.0, 2.0 * h_img).unwrap(), d / 2.0);
            // Exact up to the single rounding of the division.
            prop_assert!((d * h_img - f * hr).abs() <= 4.0 * f64::EPSILON * f * hr);
        }
    }
}
