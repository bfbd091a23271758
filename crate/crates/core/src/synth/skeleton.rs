//! Kinematic skeleton and forward-kinematics pose sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point3};

/// Joint tree with per-bone rest directions and lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSpec {
    pub names: Vec<String>,
    pub root: usize,
    /// Parent of each joint; the root's entry is ignored.
    pub parents: Vec<usize>,
    /// Length of the bone from each joint's parent to the joint (root entry unused).
    pub bone_lengths: Vec<f64>,
    /// Unit direction of each bone in the rest pose (root entry unused).
    pub rest_directions: Vec<Point3>,
}

/// Joint positions in world millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub joints: Vec<Point3>,
}

const DEFAULT_JOINTS: [(&str, usize, f64, Point3); 15] = [
    ("pelvis", 0, 0.0, [0.0, 0.0, 0.0]),
    ("neck", 0, 0.30, [0.0, 0.0, 1.0]),
    ("head", 1, 0.15, [0.0, 0.0, 1.0]),
    ("l_shoulder", 1, 0.11, [-1.0, 0.0, -0.1]),
    ("l_elbow", 3, 0.17, [0.0, 0.0, -1.0]),
    ("l_wrist", 4, 0.15, [0.0, 0.0, -1.0]),
    ("r_shoulder", 1, 0.11, [1.0, 0.0, -0.1]),
    ("r_elbow", 6, 0.17, [0.0, 0.0, -1.0]),
    ("r_wrist", 7, 0.15, [0.0, 0.0, -1.0]),
    ("l_hip", 0, 0.07, [-1.0, 0.0, -0.25]),
    ("l_knee", 9, 0.24, [0.0, 0.0, -1.0]),
    ("l_ankle", 10, 0.24, [0.0, 0.0, -1.0]),
    ("r_hip", 0, 0.07, [1.0, 0.0, -0.25]),
    ("r_knee", 12, 0.24, [0.0, 0.0, -1.0]),
    ("r_ankle", 13, 0.24, [0.0, 0.0, -1.0]),
];

impl SkeletonSpec {
    /// 15-joint body rooted at the pelvis. Bone lengths along the ankle-to-head chain
    /// sum to `stature`.
    pub fn default_body(stature: f64) -> Self {
        let mut s = SkeletonSpec {
            names: Vec::new(),
            root: 0,
            parents: Vec::new(),
            bone_lengths: Vec::new(),
            rest_directions: Vec::new(),
        };
        for (name, parent, frac, dir) in DEFAULT_JOINTS {
            s.names.push(name.to_string());
            s.parents.push(parent);
            s.bone_lengths.push(frac * stature);
            let n = geometry::norm(dir);
            s.rest_directions
                .push(if n > 0.0 { geometry::scale(dir, 1.0 / n) } else { dir });
        }
        s
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n == 0
            || self.parents.len() != n
            || self.bone_lengths.len() != n
            || self.rest_directions.len() != n
            || self.root >= n
        {
            return Err(Error::InvalidArgument("inconsistent skeleton arrays".into()));
        }
        for j in 0..n {
            if j == self.root {
                continue;
            }
            if !(self.bone_lengths[j] > 0.0) {
                return Err(Error::InvalidArgument(format!("bone {j} has non-positive length")));
            }
            // Walk to the root; a cycle or stray parent never reaches it.
            let mut cur = j;
            for _ in 0..=n {
                if cur == self.root {
                    break;
                }
                cur = self.parents[cur];
                if cur >= n {
                    return Err(Error::InvalidArgument(format!("joint {j} has invalid parent")));
                }
            }
            if cur != self.root {
                return Err(Error::InvalidArgument(format!("joint {j} is not connected to the root")));
            }
        }
        Ok(())
    }

    /// Joints in an order where every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.joint_count();
        let mut order = vec![self.root];
        let mut placed = vec![false; n];
        placed[self.root] = true;
        while order.len() < n {
            let before = order.len();
            for j in 0..n {
                if !placed[j] && placed[self.parents[j]] {
                    placed[j] = true;
                    order.push(j);
                }
            }
            assert!(order.len() > before, "skeleton is not a tree");
        }
        order
    }

    /// Rest pose with the root at the origin.
    pub fn rest_pose(&self) -> Pose3D {
        let mut joints = vec![[0.0; 3]; self.joint_count()];
        for j in self.topological_order().into_iter().skip(1) {
            let bone = geometry::scale(self.rest_directions[j], self.bone_lengths[j]);
            joints[j] = geometry::add(joints[self.parents[j]], bone);
        }
        Pose3D { joints }
    }

    pub fn bone_length_error(&self, pose: &Pose3D) -> f64 {
        (0..self.joint_count())
            .filter(|&j| j != self.root)
            .map(|j| {
                (geometry::distance(pose.joints[j], pose.joints[self.parents[j]]) - self.bone_lengths[j])
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply(m: &Mat3, v: Point3) -> Point3 {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

/// Rodrigues rotation about a unit axis.
fn axis_angle(axis: Point3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let [x, y, z] = axis;
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    loop {
        let v = [0, 1, 2].map(|_| rng.random::<f64>() * 2.0 - 1.0);
        let n = geometry::norm(v);
        if n > 1e-3 && n <= 1.0 {
            return geometry::scale(v, 1.0 / n);
        }
    }
}

/// Forward-kinematics pose with every joint rotated by a random angle of at most
/// `angle_jitter` radians about a random axis, composed down the tree. Root at origin.
pub fn sample_pose<R: Rng + ?Sized>(skel: &SkeletonSpec, rng: &mut R, angle_jitter: f64) -> Result<Pose3D> {
    if !(angle_jitter >= 0.0) {
        return Err(Error::InvalidArgument(format!("angle jitter {angle_jitter} must be >= 0")));
    }
    if angle_jitter == 0.0 {
        return Ok(skel.rest_pose());
    }
    let n = skel.joint_count();
    let mut frames = vec![IDENTITY; n];
    let mut joints = vec![[0.0; 3]; n];
    for j in skel.topological_order() {
        let local = axis_angle(random_axis(rng), angle_jitter * rng.random::<f64>());
        if j == skel.root {
            frames[j] = local;
            continue;
        }
        let parent = skel.parents[j];
        frames[j] = matmul(&frames[parent], &local);
        let bone = apply(&frames[j], geometry::scale(skel.rest_directions[j], skel.bone_lengths[j]));
        joints[j] = geometry::add(joints[parent], bone);
    }
    Ok(Pose3D { joints })
}

impl Pose3D {
    pub fn root(&self, skel: &SkeletonSpec) -> Point3 {
        self.joints[skel.root]
    }

    pub fn translated(&self, delta: Point3) -> Pose3D {
        Pose3D {
            joints: self.joints.iter().map(|&p| geometry::add(p, delta)).collect(),
        }
    }

    /// Rotation about the vertical axis through the world origin.
    pub fn rotated_z(&self, angle: f64) -> Pose3D {
        let (s, c) = angle.sin_cos();
        Pose3D {
            joints: self
                .joints
                .iter()
                .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
                .collect(),
        }
    }
}
