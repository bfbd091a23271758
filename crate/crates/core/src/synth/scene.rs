//! Scene sampling: people placement, camera sampling and full sample generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::{corrupt_agr, NoiseConfig};
use super::render::{render_box_and_depth, render_heatmaps_n, RenderParams};
use super::skeleton::{sample_pose, Pose3D, SkeletonSpec};
use super::AgrSample;
use crate::error::{Error, Result};
use crate::geometry::{self, CameraModel, Point3};

/// Axis-aligned region in world mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Point3,
    pub max: Point3,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|a| !(self.min[a] <= self.max[a])) {
            return Err(Error::InvalidArgument(format!(
                "bounds min {:?} exceeds max {:?}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        [0, 1, 2].map(|a| uniform(rng, [self.min[a], self.max[a]]))
    }
}

/// Uniform draw from `[lo, hi]`; returns `lo` exactly for a degenerate range.
pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    if range[0] == range[1] {
        range[0]
    } else {
        range[0] + (range[1] - range[0]) * u
    }
}

/// Translates each pose so its root lands uniformly inside `bounds`, keeping pairwise
/// root distances at least `min_sep`. Gives up after `retries` rejected draws in total.
pub fn place_people<R: Rng + ?Sized>(
    poses: &[Pose3D],
    skel: &SkeletonSpec,
    bounds: &Bounds,
    min_sep: f64,
    retries: usize,
    rng: &mut R,
) -> Result<Vec<Pose3D>> {
    bounds.validate()?;
    let mut roots: Vec<Point3> = Vec::with_capacity(poses.len());
    let mut rejected = 0;
    while roots.len() < poses.len() {
        let cand = bounds.sample(rng);
        if roots.iter().all(|&r| geometry::distance(r, cand) >= min_sep) {
            roots.push(cand);
            continue;
        }
        rejected += 1;
        if rejected > retries {
            return Err(Error::Placement {
                count: poses.len(),
                retries,
            });
        }
    }
    Ok(poses
        .iter()
        .zip(&roots)
        .map(|(p, &r)| p.translated(geometry::sub(r, p.root(skel))))
        .collect())
}

/// Sampling ranges for cameras. Angles in degrees, lengths in mm, focal length in px.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRanges {
    pub f: [f64; 2],
    pub theta_deg: [f64; 2],
    pub height: [f64; 2],
    pub yaw_deg: [f64; 2],
    pub distance: [f64; 2],
    /// Horizontal point the camera is placed around.
    pub target: [f64; 2],
}

impl CameraRanges {
    /// Degenerate ranges that always produce the same camera.
    pub fn fixed(f: f64, theta_deg: f64, height: f64, yaw_deg: f64, distance: f64) -> Self {
        CameraRanges {
            f: [f, f],
            theta_deg: [theta_deg, theta_deg],
            height: [height, height],
            yaw_deg: [yaw_deg, yaw_deg],
            distance: [distance, distance],
            target: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("f", self.f),
            ("theta_deg", self.theta_deg),
            ("height", self.height),
            ("yaw_deg", self.yaw_deg),
            ("distance", self.distance),
        ] {
            if !(r[0] <= r[1]) {
                return Err(Error::InvalidArgument(format!("camera range {name} is empty: {r:?}")));
            }
        }
        if self.f[0] <= 0.0 {
            return Err(Error::InvalidArgument("focal length range must be positive".into()));
        }
        if self.theta_deg[0] <= -90.0 || self.theta_deg[1] >= 90.0 {
            return Err(Error::InvalidArgument("pitch range must lie inside (-90, 90) degrees".into()));
        }
        Ok(())
    }
}

/// Camera at `height` above the ground, `distance` back from the target along heading
/// `yaw`, facing the target horizontally and pitched down by `theta`.
pub fn sample_camera<R: Rng + ?Sized>(
    ranges: &CameraRanges,
    image_w: usize,
    image_h: usize,
    rng: &mut R,
) -> Result<CameraModel> {
    ranges.validate()?;
    let f = uniform(rng, ranges.f);
    let theta = uniform(rng, ranges.theta_deg).to_radians();
    let height = uniform(rng, ranges.height);
    let yaw = uniform(rng, ranges.yaw_deg).to_radians();
    let dist = uniform(rng, ranges.distance);
    let eye = [
        ranges.target[0] - dist * yaw.sin(),
        ranges.target[1] - dist * yaw.cos(),
        height,
    ];
    CameraModel::yaw_pitch(f, eye, yaw, theta, image_w, image_h)
}

/// Everything needed to generate a dataset of scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub image_w: usize,
    pub image_h: usize,
    pub stature: f64,
    pub people: [usize; 2],
    pub angle_jitter: f64,
    pub bounds: Bounds,
    pub min_sep: f64,
    pub placement_retries: usize,
    /// Whole-scene redraws allowed when a root leaves the image.
    pub scene_retries: usize,
    pub camera: CameraRanges,
    pub render: RenderParams,
    pub noise: NoiseConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 200,
            seed: 1,
            image_w: 120,
            image_h: 64,
            stature: 1700.0,
            people: [1, 3],
            angle_jitter: 0.35,
            bounds: Bounds {
                min: [-2400.0, -2400.0, 850.0],
                max: [2400.0, 2400.0, 1000.0],
            },
            min_sep: 600.0,
            placement_retries: 1000,
            scene_retries: 1000,
            camera: CameraRanges {
                f: [80.0, 80.0],
                theta_deg: [4.0, 14.0],
                height: [1500.0, 2500.0],
                yaw_deg: [-30.0, 30.0],
                distance: [5000.0, 5500.0],
                target: [0.0, 0.0],
            },
            render: RenderParams::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        if self.people[0] > self.people[1] {
            return Err(Error::InvalidArgument(format!("people range {:?} is empty", self.people)));
        }
        if !(self.stature > 0.0) {
            return Err(Error::InvalidArgument("stature must be positive".into()));
        }
        self.bounds.validate()?;
        self.camera.validate()?;
        self.noise.validate()
    }

    pub fn skeleton(&self) -> SkeletonSpec {
        SkeletonSpec::default_body(self.stature)
    }

    /// Generator for scene `index`, independent of every other scene.
    pub fn scene_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Renders scene `index`: samples a camera, then redraws people until every root projects
/// inside the image, renders the AGR, and applies the configured corruption.
pub fn generate_sample(cfg: &SynthConfig, skel: &SkeletonSpec, index: u64) -> Result<AgrSample<f32>> {
    let mut rng = cfg.scene_rng(index);
    let camera = sample_camera(&cfg.camera, cfg.image_w, cfg.image_h, &mut rng)?;
    for _ in 0..=cfg.scene_retries {
        let count = if cfg.people[0] == cfg.people[1] {
            cfg.people[0]
        } else {
            rng.random_range(cfg.people[0]..=cfg.people[1])
        };
        let mut poses = Vec::with_capacity(count);
        for _ in 0..count {
            let heading = rng.random::<f64>() * std::f64::consts::TAU;
            poses.push(sample_pose(skel, &mut rng, cfg.angle_jitter)?.rotated_z(heading));
        }
        let placed = place_people(&poses, skel, &cfg.bounds, cfg.min_sep, cfg.placement_retries, &mut rng)?;
        let visible = placed.iter().all(|p| {
            camera
                .project(p.root(skel))
                .is_ok_and(|q| camera.in_image(q.u, q.v))
        });
        if !visible {
            continue;
        }
        let clean = render_sample(&placed, skel, &camera, &cfg.render)?;
        return Ok(corrupt_agr(&clean, &cfg.noise, &mut rng));
    }
    Err(Error::Placement {
        count: cfg.people[1],
        retries: cfg.scene_retries,
    })
}

/// Uncorrupted AGR for placed people.
pub fn render_sample(
    poses: &[Pose3D],
    skel: &SkeletonSpec,
    camera: &CameraModel,
    render: &RenderParams,
) -> Result<AgrSample<f32>> {
    let (w, h) = (camera.image_w, camera.image_h);
    let heatmaps = render_heatmaps_n(poses, camera, skel.joint_count(), w, h, render.sigma_2d)?;
    let bd = render_box_and_depth(poses, skel, camera, render)?;
    Ok(AgrSample {
        heatmaps,
        box_map: bd.box_map,
        depth_targets: bd.depths,
        root_pixels: bd.root_pixels,
        gt_boxes: bd.boxes,
        gt_poses: poses.to_vec(),
        camera: *camera,
        render: *render,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_bounds_place_exactly() {
        let skel = SkeletonSpec::default_body(1700.0);
        let b = Bounds {
            min: [100.0, 200.0, 900.0],
            max: [100.0, 200.0, 900.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let placed = place_people(&[skel.rest_pose()], &skel, &b, 600.0, 10, &mut rng).unwrap();
        assert_eq!(placed[0].root(&skel), [100.0, 200.0, 900.0]);
    }

    #[test]
    fn separation_and_failure() {
        let skel = SkeletonSpec::default_body(1700.0);
        let b = Bounds {
            min: [-2000.0, -2000.0, 900.0],
            max: [2000.0, 2000.0, 900.0],
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poses = vec![skel.rest_pose(); 3];
            let placed = place_people(&poses, &skel, &b, 600.0, 1000, &mut rng).unwrap();
            for i in 0..3 {
                for j in 0..i {
                    assert!(geometry::distance(placed[i].root(&skel), placed[j].root(&skel)) >= 600.0);
                }
            }
        }
        let tiny = Bounds {
            min: [0.0, 0.0, 900.0],
            max: [10.0, 10.0, 900.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = place_people(&vec![skel.rest_pose(); 2], &skel, &tiny, 600.0, 50, &mut rng);
        assert!(matches!(err, Err(Error::Placement { count: 2, retries: 50 })));
    }

    #[test]
    fn camera_ranges_respected() {
        let ranges = CameraRanges {
            f: [60.0, 100.0],
            theta_deg: [0.0, 60.0],
            height: [1000.0, 3000.0],
            yaw_deg: [-90.0, 90.0],
            distance: [3000.0, 6000.0],
            target: [0.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let cam = sample_camera(&ranges, 120, 64, &mut rng).unwrap();
            // The optical axis in world coordinates is the third row of R.
            let theta = (-cam.r[8]).asin().to_degrees();
            assert!((-1e-9..=60.0 + 1e-9).contains(&theta));
            assert!((60.0..=100.0).contains(&cam.fx));
            let c = cam.center();
            assert!((1000.0 - 1e-6..=3000.0 + 1e-6).contains(&c[2]));
        }
        let fixed = CameraRanges::fixed(80.0, 10.0, 2000.0, 20.0, 5000.0);
        let a = sample_camera(&fixed, 120, 64, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_camera(&fixed, 120, 64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_samples_are_valid_and_deterministic() {
        let cfg = SynthConfig::default();
        let skel = cfg.skeleton();
        for i in 0..10 {
            let s = generate_sample(&cfg, &skel, i).unwrap();
            assert_eq!(s, generate_sample(&cfg, &skel, i).unwrap());
            assert!((1..=3).contains(&s.people()));
            assert!(s.heatmaps.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            for (p, pose) in s.gt_poses.iter().enumerate() {
                let q = s.camera.project(pose.root(&skel)).unwrap();
                assert!(s.camera.in_image(q.u, q.v));
                assert_eq!(s.depth_targets[p], q.depth);
                assert!(skel.bone_length_error(pose) < 1e-6);
            }
        }
    }
}
