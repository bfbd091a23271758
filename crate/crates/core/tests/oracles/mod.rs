//! Oracle checks shared by the core integration tests and the acceptance target.
//! Each check panics with a description on failure.
#![allow(dead_code)]

use agrpose::config::RunConfig;
use agrpose::eval::{MetricParams, MetricsAccumulator, PersonPrediction};
use agrpose::geometry::{CameraModel, GridSpec};
use agrpose::pen::{integral_decode, integral_indices};
use agrpose::ren::{build_naive_volume, build_root_volume, gt_detections, nms_3d, NmsParams, PersonDetection};
use agrpose::synth::{generate_sample, read_dataset, write_dataset, AgrSample, DatasetInfo, Pose3D, SynthConfig};
use agrpose::tensor::Tensor;
use agrpose::volume::VoxelVolume;
use agrpose::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    grid: GridSpec,
    cam: CameraModel,
    heatmaps: Tensor<f64>,
    detections: Vec<PersonDetection>,
    sigma: f64,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [10, 10, 6];
    let vs = rng.random_range(80.0..250.0);
    let origin = [rng.random_range(-1500.0..-500.0), rng.random_range(-1500.0..-500.0), rng.random_range(0.0..300.0)];
    let grid = GridSpec::new(origin, [vs; 3], dims).unwrap();
    let (w, h) = (rng.random_range(16..40), rng.random_range(12..30));
    let eye = [rng.random_range(-800.0..800.0), rng.random_range(-6000.0..-3500.0), rng.random_range(800.0..2500.0)];
    let target = [rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0), rng.random_range(300.0..900.0)];
    let cam = CameraModel::look_at(rng.random_range(10.0..40.0), eye, target, w, h).unwrap();
    let n = rng.random_range(1..4);
    let heatmaps = Tensor::from_fn(&[n, h, w], |_| rng.random::<f64>());
    let detections = (0..rng.random_range(0..4))
        .map(|_| PersonDetection {
            root_uv: [rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)],
            box_ltrb: [0, 1, 2, 3].map(|_| rng.random_range(0.5..10.0)),
            depth: rng.random_range(3000.0..7000.0),
            confidence: 1.0,
        })
        .collect();
    Case {
        grid,
        cam,
        heatmaps,
        detections,
        sigma: rng.random_range(100.0..400.0),
    }
}

fn sample_bilinear(map: &[f64], w: usize, h: usize, u: f64, v: f64) -> f64 {
    let u0 = (u.floor() as usize).min(w - 1);
    let v0 = (v.floor() as usize).min(h - 1);
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    let a = u - u0 as f64;
    let b = v - v0 as f64;
    (1.0 - a) * (1.0 - b) * map[v0 * w + u0] + a * (1.0 - b) * map[v0 * w + u1] + (1.0 - a) * b * map[v1 * w + u0] + a * b * map[v1 * w + u1]
}

/// Triple loop over voxels with the camera applied by hand.
fn brute_force(c: &Case, gated: bool) -> Vec<f64> {
    let [nx, ny, nz] = c.grid.dims;
    let n = c.heatmaps.dims()[0];
    let (w, h) = (c.cam.image_w, c.cam.image_h);
    let len = nx * ny * nz;
    let mut out = vec![0.0; n * len];
    let r = c.cam.r;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = [0, 1, 2].map(|a| c.grid.origin[a] + ([i, j, k][a] as f64 + 0.5) * c.grid.voxel_size[a]);
                let x = r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + c.cam.t[0];
                let y = r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + c.cam.t[1];
                let z = r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + c.cam.t[2];
                if z <= 0.0 {
                    continue;
                }
                let u = c.cam.fx * x / z + c.cam.cx;
                let v = c.cam.fy * y / z + c.cam.cy;
                if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
                    continue;
                }
                let mut g = 1.0f64;
                if gated {
                    g = 0.0;
                    for d in &c.detections {
                        let [l, t, rr, b] = d.box_ltrb;
                        let [ru, rv] = d.root_uv;
                        if u >= ru - l && u <= ru + rr && v >= rv - t && v <= rv + b {
                            let dz = z - d.depth;
                            g = g.max((-(dz * dz) / (2.0 * c.sigma * c.sigma)).exp());
                        }
                    }
                }
                if g == 0.0 {
                    continue;
                }
                for ch in 0..n {
                    let map = &c.heatmaps.data()[ch * w * h..(ch + 1) * w * h];
                    out[ch * len + (i * ny + j) * nz + k] = sample_bilinear(map, w, h, u, v) * g;
                }
            }
        }
    }
    out
}

/// Repeatedly takes the largest remaining local maximum by a full scan.
fn nms_oracle(v: &VoxelVolume<f64>, p: &NmsParams) -> Vec<[usize; 3]> {
    let n = v.grid.dims;
    let val = |i: usize, j: usize, k: usize| v.get(0, [i, j, k]);
    let mut taken = vec![false; v.grid.len()];
    let mut out: Vec<[usize; 3]> = Vec::new();
    while out.len() < p.max_people {
        let mut best: Option<([usize; 3], f64)> = None;
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let x = val(i, j, k);
                    if taken[(i * n[1] + j) * n[2] + k] || x < p.threshold {
                        continue;
                    }
                    let mut is_max = true;
                    for di in -1i64..=1 {
                        for dj in -1i64..=1 {
                            for dk in -1i64..=1 {
                                let q = [i as i64 + di, j as i64 + dj, k as i64 + dk];
                                if (di, dj, dk) == (0, 0, 0) || (0..3).any(|a| q[a] < 0 || q[a] >= n[a] as i64) {
                                    continue;
                                }
                                if val(q[0] as usize, q[1] as usize, q[2] as usize) >= x {
                                    is_max = false;
                                }
                            }
                        }
                    }
                    if is_max && best.is_none_or(|(_, b)| x > b) {
                        best = Some(([i, j, k], x));
                    }
                }
            }
        }
        let Some((idx, _)) = best else { break };
        taken[(idx[0] * n[1] + idx[1]) * n[2] + idx[2]] = true;
        let near = out.iter().any(|o| (0..3).all(|a| o[a].abs_diff(idx[a]) <= p.radius_vox));
        if !near {
            out.push(idx);
        }
    }
    out
}

pub fn projection_oracle(seeds: u64) {
    let mut nonzero = 0usize;
    for seed in 0..seeds {
        let c = random_case(seed);
        let gated = build_root_volume(&c.heatmaps, &c.detections, &c.grid, &c.cam, c.sigma).unwrap();
        let naive = build_naive_volume(&c.heatmaps, &c.grid, &c.cam).unwrap();
        let want_gated = brute_force(&c, true);
        let want_naive = brute_force(&c, false);
        for (got, want) in [(&gated, &want_gated), (&naive, &want_naive)] {
            assert_eq!(got.data.len(), want.len(), "seed {seed}");
            for (l, (a, b)) in got.data.data().iter().zip(want).enumerate() {
                assert_eq!(a.to_bits(), b.to_bits(), "seed {seed} element {l}: {a} vs {b}");
            }
        }
        nonzero += want_naive.iter().filter(|&&x| x != 0.0).count();
    }
    assert!(nonzero > 10_000, "cases barely touch the image ({nonzero} nonzero voxels)");
}

pub fn gate_spot_values() {
    let cam = CameraModel::look_at(50.0, [0.0, -5000.0, 1000.0], [0.0, 0.0, 1000.0], 31, 31).unwrap();
    let grid = GridSpec::new([-50.0, -50.0, 950.0], [100.0; 3], [1, 1, 1]).unwrap();
    let z = cam.project(grid.voxel_center([0, 0, 0]).unwrap()).unwrap().depth;
    let heatmaps: Tensor<f64> = Tensor::full(&[1, 31, 31], 1.0);
    let det = |depth: f64| PersonDetection {
        root_uv: [15.0, 15.0],
        box_ltrb: [5.0; 4],
        depth,
        confidence: 1.0,
    };
    let at = |depth: f64| build_root_volume(&heatmaps, &[det(depth)], &grid, &cam, 200.0).unwrap().get(0, [0, 0, 0]);
    assert_eq!(at(z), 1.0);
    let e = (-0.5f64).exp();
    assert!((at(z + 200.0) - e).abs() < 1e-12);
    assert!((at(z - 200.0) - e).abs() < 1e-12);
}

pub fn nms_oracle_equivalence(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let grid = GridSpec::new([0.0; 3], [50.0; 3], [16, 16, 16]).unwrap();
        let levels = rng.random_range(4..64) as f64;
        let data = Tensor::from_fn(&[1, 16, 16, 16], |_| (rng.random::<f64>() * levels).floor() / levels);
        let v = VoxelVolume::new(grid, data).unwrap();
        let p = NmsParams {
            radius_vox: rng.random_range(1..4),
            threshold: rng.random_range(0.0..0.9),
            max_people: rng.random_range(1..30),
        };
        let got = nms_3d(&v, &p).unwrap();
        let want = nms_oracle(&v, &p);
        let idx: Vec<[usize; 3]> = got.iter().map(|c| c.index).collect();
        assert_eq!(idx, want, "seed {seed}");
        for (a, ca) in got.iter().enumerate() {
            assert_eq!(ca.confidence, v.get(0, ca.index));
            assert_eq!(ca.world, grid.voxel_center(ca.index).unwrap());
            for cb in &got[a + 1..] {
                let cheb = (0..3).map(|d| ca.index[d].abs_diff(cb.index[d])).max().unwrap();
                assert!(cheb > p.radius_vox, "seed {seed}: {:?} and {:?} within radius", ca.index, cb.index);
            }
        }
    }
}

pub fn clean_agr_argmax(scenes: u64) {
    let run = RunConfig::desk();
    let cfg = SynthConfig {
        people: [1, 1],
        seed: 77,
        ..run.synth.clone()
    };
    assert!(cfg.noise.is_zero());
    let skel = cfg.skeleton();
    let grid = run.coarse_grid;
    for i in 0..scenes {
        let s = generate_sample(&cfg, &skel, i).unwrap().cast::<f64>();
        let dets = gt_detections(&s, skel.root).unwrap();
        let vol = build_root_volume(&s.heatmaps, &dets, &grid, &s.camera, run.model.gate_sigma).unwrap();
        let arg = vol.argmax(skel.root);
        let truth = grid.world_to_voxel(s.gt_poses[0].joints[skel.root]).expect("root inside the coarse grid");
        let cheb = (0..3).map(|a| arg[a].abs_diff(truth[a])).max().unwrap();
        assert!(cheb <= 1, "scene {i}: argmax {arg:?} vs root voxel {truth:?}");
    }
}

/// Mean of `exp(-(x - mu)^2 / 2 s^2)` restricted to `[lo, hi]`, by composite Simpson.
fn truncated_mean(mu: f64, s: f64, lo: f64, hi: f64) -> f64 {
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let (mut m0, mut m1) = (0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let g = (-(x - mu) * (x - mu) / (2.0 * s * s)).exp();
        m0 += w * g;
        m1 += w * g * x;
    }
    m1 / m0
}

pub fn integral_decode_gaussians(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [0, 1, 2].map(|_| rng.random_range(10..24usize));
        let sigma = [0, 1, 2].map(|_| rng.random_range(0.5..=2.0));
        let mu = [0, 1, 2].map(|a| rng.random_range(2.5..dims[a] as f64 - 3.5));
        let grid = GridSpec::new([-100.0, 40.0, 0.0], [30.0, 30.0, 30.0], dims).unwrap();
        let data = Tensor::from_fn(&[1, dims[0], dims[1], dims[2]], |l| {
            let idx = grid.unlinear(l);
            (0..3)
                .map(|a| {
                    let d = idx[a] as f64 - mu[a];
                    (-d * d / (2.0 * sigma[a] * sigma[a])).exp()
                })
                .product::<f64>()
        });
        let vol = VoxelVolume::new(grid, data).unwrap();
        let got = integral_indices(&vol).unwrap()[0];
        let world = integral_decode(&vol).unwrap().joints[0];
        for a in 0..3 {
            let want = truncated_mean(mu[a], sigma[a], -0.5, dims[a] as f64 - 0.5);
            assert!((got[a] - want).abs() < 0.1, "seed {seed} axis {a}: {} vs {want}", got[a]);
            let want_mm = grid.origin[a] + (want + 0.5) * grid.voxel_size[a];
            assert!((world[a] - want_mm).abs() < 0.1 * grid.voxel_size[a]);
        }
    }
}

fn oracle(gt: &[Pose3D], root: usize) -> Vec<PersonPrediction> {
    gt.iter()
        .map(|p| PersonPrediction {
            confidence: 1.0,
            root_xyz_mm: p.joints[root],
            coarse_root_xyz_mm: p.joints[root],
            joints_mm: Some(p.joints.clone()),
        })
        .collect()
}

/// Rounds to a multiple of 2^-10 mm so that sums with similar values are exact.
fn dyadic(x: f64) -> f64 {
    (x * 1024.0).round() / 1024.0
}

pub fn ground_truth_identities() {
    let cfg = SynthConfig::default();
    let skel = cfg.skeleton();
    let mut acc = MetricsAccumulator::default();
    for i in 0..20 {
        let s = generate_sample(&cfg, &skel, i).unwrap();
        acc.add_scene(&skel, &s.camera, &s.gt_poses, &oracle(&s.gt_poses, skel.root), &MetricParams::default(), 5500.0)
            .unwrap();
    }
    let r = acc.report();
    for v in [r.mrpe, r.mrpe_z, r.coarse_mrpe, r.coarse_mrpe_z, r.mpjpe_abs, r.mpjpe_rel] {
        assert_eq!(v, Some(0.0));
    }
    assert_eq!((r.pck_abs, r.pck_root), (Some(100.0), Some(100.0)));
    assert_eq!(r.counts.matched, r.counts.gt);
}

pub fn translation_identity() {
    let cfg = SynthConfig::default();
    let skel = cfg.skeleton();
    let mut acc = MetricsAccumulator::default();
    let params = MetricParams {
        match_max_dist: 1e6,
        ..MetricParams::default()
    };
    for i in 0..20 {
        let s = generate_sample(&cfg, &skel, i).unwrap();
        let gt: Vec<Pose3D> = s
            .gt_poses
            .iter()
            .map(|p| Pose3D {
                joints: p.joints.iter().map(|q| q.map(dyadic)).collect(),
            })
            .collect();
        let delta = [37.25 * (i % 5) as f64, -111.5, 96.125];
        let moved: Vec<Pose3D> = gt.iter().map(|p| p.translated(delta)).collect();
        acc.add_scene(&skel, &s.camera, &gt, &oracle(&moved, skel.root), &params, 5500.0)
            .unwrap();
    }
    let r = acc.report();
    assert_eq!(r.mpjpe_rel, Some(0.0));
    assert!(r.mpjpe_abs.unwrap() > 0.0);
}

pub fn samples(c: &RunConfig) -> Vec<AgrSample<f32>> {
    let skel = c.synth.skeleton();
    (0..c.synth.count as u64).map(|i| generate_sample(&c.synth, &skel, i).unwrap()).collect()
}

pub fn bits(xs: &[f32]) -> Vec<u32> {
    xs.iter().map(|x| x.to_bits()).collect()
}

pub fn info(c: &RunConfig) -> DatasetInfo {
    DatasetInfo {
        seed: c.synth.seed,
        config_hash: "test".into(),
        config: serde_json::to_value(&c.synth).unwrap(),
        skeleton: c.synth.skeleton(),
    }
}

pub fn dataset_round_trip(count: usize) {
    let mut c = RunConfig::desk();
    c.synth.count = count;
    let data = samples(&c);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &info(&c), &data).unwrap();
    assert_eq!(manifest.count, count);
    let back = read_dataset::<f32>(dir.path()).unwrap();
    assert_eq!(back.manifest, manifest);
    assert_eq!(back.samples.len(), data.len());
    for (a, b) in data.iter().zip(&back.samples) {
        assert_eq!(bits(a.heatmaps.data()), bits(b.heatmaps.data()));
        assert_eq!(bits(a.box_map.data()), bits(b.box_map.data()));
        assert_eq!(a.heatmaps.dims(), b.heatmaps.dims());
        assert_eq!(a, b);
    }
}

pub fn corrupted_magic_rejected() {
    let mut c = RunConfig::desk();
    c.synth.count = 2;
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &info(&c), &samples(&c)).unwrap();
    let path = dir.path().join("samples").join("00001.heatmaps.agrt");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    match read_dataset::<f32>(dir.path()) {
        Err(Error::Format { .. }) => {}
        other => panic!("expected a format error, got {other:?}"),
    }
}
