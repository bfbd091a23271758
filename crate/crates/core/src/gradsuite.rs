//! Finite-difference verification of every layer type and every training loss in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::nn::{backward, finite_difference, forward, forward_tape, max_relative_error, Layer, NetSpec, ParamSet};
use crate::pen::{integral_backward, integral_indices, loss_pen_grad, PenLossUnits};
use crate::ren::{loss_depth_grad, loss_ren_grad, DepthRange};
use crate::synth::loss_2d_grad;
use crate::tensor::Tensor;
use crate::volume::VoxelVolume;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Name of a check whose analytic gradient is perturbed before comparison.
    pub corrupt: Option<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            eps: DEFAULT_EPS,
            tolerance: DEFAULT_TOLERANCE,
            corrupt: None,
        }
    }
}

/// Names of all checks in execution order.
pub const CHECKS: [&str; 15] = [
    "layer.conv2d",
    "layer.conv2d_stride2",
    "layer.conv3d",
    "layer.conv3d_stride2",
    "layer.relu",
    "layer.sigmoid",
    "layer.spatial_softmax",
    "layer.bias_add",
    "loss.agr_2d",
    "loss.depth",
    "loss.ren",
    "loss.pen",
    "composite.softmax_decode_l1",
    "composite.de_depth",
    "composite.pen_pose",
];

struct Runner<'a> {
    opts: &'a SuiteOptions,
    results: Vec<CheckResult>,
}

impl Runner<'_> {
    fn record(&mut self, name: &str, mut analytic: Vec<f64>, numeric: Vec<f64>) {
        if self.opts.corrupt.as_deref() == Some(name) {
            for a in analytic.iter_mut() {
                *a *= 1.01;
            }
            if let Some(a) = analytic.first_mut() {
                *a += 1e-3;
            }
        }
        let err = max_relative_error(&analytic, &numeric);
        self.results.push(CheckResult {
            name: name.to_string(),
            max_rel_err: err,
            passed: err < self.opts.tolerance,
        });
    }
}

fn uniform(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi))
}

/// Uniform values with magnitude at least `gap`, so ReLU kinks are never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| {
        let m = rng.random_range(gap..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

fn random_params(net: &NetSpec, rng: &mut ChaCha8Rng) -> ParamSet<f64> {
    let mut p = ParamSet::init(net, rng.random());
    for param in p.params_mut() {
        let dims = param.value.dims().to_vec();
        param.value = uniform(rng, &dims, -0.5, 0.5);
    }
    p
}

fn flatten_params(p: &ParamSet<f64>) -> Vec<f64> {
    p.params().iter().flat_map(|q| q.value.data().to_vec()).collect()
}

fn flatten_grads(p: &ParamSet<f64>) -> Vec<f64> {
    p.params().iter().flat_map(|q| q.grad.data().to_vec()).collect()
}

fn load_params(p: &mut ParamSet<f64>, flat: &[f64]) {
    let mut at = 0;
    for q in p.params_mut() {
        let n = q.value.len();
        q.value.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
}

/// Parameter and input gradients of `sum(r * net(x))`, concatenated.
fn layer_check(run: &mut Runner, name: &str, net: NetSpec, input: Tensor<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
    let params = random_params(&net, rng);
    let r = uniform(rng, &net.output_shape(), -1.0, 1.0);
    let objective = |p: &ParamSet<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = forward(&net, p, x)?;
        Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let mut work = params.clone();
    work.zero_grad();
    let tape = forward_tape(&net, &work, &input)?;
    let dx = backward(&net, &mut work, &tape, &r, true)?.expect("input gradient requested");
    let mut analytic = flatten_grads(&work);
    analytic.extend_from_slice(dx.data());

    let mut failure = None;
    let mut probe = params.clone();
    let mut numeric = finite_difference(
        |flat| {
            load_params(&mut probe, flat);
            objective(&probe, &input).unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        },
        &flatten_params(&params),
        run.opts.eps,
    );
    let mut x = input.clone();
    numeric.extend(finite_difference(
        |flat| {
            x.data_mut().copy_from_slice(flat);
            objective(&params, &x).unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        },
        input.data(),
        run.opts.eps,
    ));
    if let Some(e) = failure {
        return Err(e);
    }
    run.record(name, analytic, numeric);
    Ok(())
}

fn conv2d(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Layer {
    Layer::Conv2d {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding,
    }
}

fn conv3d(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Layer {
    Layer::Conv3d {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding,
    }
}

fn layer_checks(run: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let net = |input: &[usize], layers: Vec<Layer>| NetSpec::new(input.to_vec(), layers);
    let x = uniform(rng, &[2, 5, 6], -1.0, 1.0);
    layer_check(run, "layer.conv2d", net(&[2, 5, 6], vec![conv2d(2, 3, 3, 1, 1)])?, x, rng)?;
    let x = uniform(rng, &[2, 7, 6], -1.0, 1.0);
    layer_check(run, "layer.conv2d_stride2", net(&[2, 7, 6], vec![conv2d(2, 2, 5, 2, 2)])?, x, rng)?;
    let x = uniform(rng, &[2, 4, 5, 3], -1.0, 1.0);
    layer_check(run, "layer.conv3d", net(&[2, 4, 5, 3], vec![conv3d(2, 2, 3, 1, 1)])?, x, rng)?;
    let x = uniform(rng, &[1, 5, 4, 5], -1.0, 1.0);
    layer_check(run, "layer.conv3d_stride2", net(&[1, 5, 4, 5], vec![conv3d(1, 2, 3, 2, 1)])?, x, rng)?;
    let x = away_from_zero(rng, &[2, 4, 5], 1e-2);
    layer_check(run, "layer.relu", net(&[2, 4, 5], vec![Layer::Relu])?, x, rng)?;
    let x = uniform(rng, &[2, 4, 5], -4.0, 4.0);
    layer_check(run, "layer.sigmoid", net(&[2, 4, 5], vec![Layer::Sigmoid])?, x, rng)?;
    let x = uniform(rng, &[2, 3, 4, 3], -2.0, 2.0);
    layer_check(run, "layer.spatial_softmax", net(&[2, 3, 4, 3], vec![Layer::SpatialSoftmax])?, x, rng)?;
    let x = uniform(rng, &[3, 4, 5], -1.0, 1.0);
    layer_check(run, "layer.bias_add", net(&[3, 4, 5], vec![Layer::BiasAdd { channels: 3 }])?, x, rng)
}

/// Shifts every entry of `b` away from the matching entry of `a` by at least `gap`.
fn separated(rng: &mut ChaCha8Rng, a: &Tensor<f64>, gap: f64, spread: f64) -> Tensor<f64> {
    Tensor::from_fn(a.dims(), |i| {
        let v = a.data()[i];
        let d = rng.random_range(gap..spread);
        if rng.random::<bool>() {
            v + d
        } else {
            v - d
        }
    })
}

fn numeric_of(mut f: impl FnMut(&[f64]) -> Result<f64>, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    let mut failure = None;
    let numeric = finite_difference(
        |v| {
            f(v).unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        },
        x,
        eps,
    );
    failure.map_or(Ok(numeric), Err)
}

fn with_data(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::new(t.dims().to_vec(), data.to_vec()).expect("same length")
}

fn loss_checks(run: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let eps = run.opts.eps;

    // Heatmap sum of squares plus box L1 at root pixels, differentiated in H and B jointly.
    let (n, h, w) = (3, 5, 6);
    let h_gt = uniform(rng, &[n, h, w], 0.0, 1.0);
    let hm = uniform(rng, &[n, h, w], 0.0, 1.0);
    let b_gt = uniform(rng, &[4, h, w], 0.0, 10.0);
    let b = separated(rng, &b_gt, 0.05, 2.0);
    let roots = [[1, 2], [4, 0], [5, 4]];
    let lambda = 0.7;
    let (_, dh, db) = loss_2d_grad(&hm, &h_gt, &b, &b_gt, &roots, lambda)?;
    let mut x: Vec<f64> = hm.data().to_vec();
    x.extend_from_slice(b.data());
    let split = hm.len();
    let numeric = numeric_of(
        |v| loss_2d_grad(&with_data(&hm, &v[..split]), &h_gt, &with_data(&b, &v[split..]), &b_gt, &roots, lambda).map(|r| r.0),
        &x,
        eps,
    )?;
    let mut analytic = dh.data().to_vec();
    analytic.extend_from_slice(db.data());
    run.record("loss.agr_2d", analytic, numeric);

    // Root depth L1.
    let dm = uniform(rng, &[1, h, w], 2000.0, 8000.0);
    let roots = [[0, 0], [3, 2], [5, 4]];
    let targets: Vec<f64> = roots
        .iter()
        .map(|&[u, v]| {
            let d = dm.get(&[0, v, u]).unwrap();
            d + if rng.random::<bool>() { 150.0 } else { -220.0 }
        })
        .collect();
    let (_, g) = loss_depth_grad(&dm, &roots, &targets)?;
    let numeric = numeric_of(|v| loss_depth_grad(&with_data(&dm, v), &roots, &targets).map(|r| r.0), dm.data(), eps)?;
    run.record("loss.depth", g.data().to_vec(), numeric);

    // Root heatmap sum of squares.
    let grid = GridSpec::new([0.0; 3], [100.0; 3], [4, 3, 5])?;
    let pred = VoxelVolume::new(grid, uniform(rng, &[1, 4, 3, 5], 0.0, 1.0))?;
    let target = VoxelVolume::new(grid, uniform(rng, &[1, 4, 3, 5], 0.0, 1.0))?;
    let (_, g) = loss_ren_grad(&pred, &target)?;
    let numeric = numeric_of(
        |v| loss_ren_grad(&VoxelVolume::new(grid, with_data(&pred.data, v))?, &target).map(|r| r.0),
        pred.data.data(),
        eps,
    )?;
    run.record("loss.ren", g.data().to_vec(), numeric);

    // Pose L1 in voxel indices, with one ground-truth joint masked out.
    let joints = 4;
    let decoded: Vec<[f64; 3]> = (0..joints).map(|_| [0, 1, 2].map(|_| rng.random_range(0.5..3.5))).collect();
    let gt: Vec<[f64; 3]> = decoded
        .iter()
        .map(|d| d.map(|x| x + if rng.random::<bool>() { 0.3 } else { -0.45 }))
        .collect();
    let mask = vec![true, true, false, true];
    let mut analytic = Vec::new();
    for units in [PenLossUnits::Voxel, PenLossUnits::Millimeter] {
        let (_, g) = loss_pen_grad(&decoded, &gt, &mask, &grid, units)?;
        analytic.extend(g.iter().flatten());
    }
    let flat: Vec<f64> = decoded.iter().flatten().copied().collect();
    let unflat = |v: &[f64]| -> Vec<[f64; 3]> { v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect() };
    let mut numeric = Vec::new();
    for units in [PenLossUnits::Voxel, PenLossUnits::Millimeter] {
        numeric.extend(numeric_of(|v| loss_pen_grad(&unflat(v), &gt, &mask, &grid, units).map(|r| r.0), &flat, eps)?);
    }
    run.record("loss.pen", analytic, numeric);
    Ok(())
}

/// PEN objective from a heatmap-producing net: softmax output, integral decode, L1.
fn pen_objective(h: &VoxelVolume<f64>, gt: &[[f64; 3]], mask: &[bool]) -> Result<(f64, Tensor<f64>)> {
    let idx = integral_indices(h)?;
    let (loss, d_idx) = loss_pen_grad(&idx, gt, mask, &h.grid, PenLossUnits::Voxel)?;
    Ok((loss, integral_backward(h, &idx, &d_idx)))
}

fn composite_checks(run: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let eps = run.opts.eps;

    // Logits -> spatial softmax -> integral decode -> L1, differentiated in the logits.
    let grid = GridSpec::new([0.0; 3], [50.0; 3], [4, 5, 3])?;
    let joints = 3;
    let softmax = NetSpec::new(vec![joints, 4, 5, 3], vec![Layer::SpatialSoftmax])?;
    let no_params = ParamSet::init(&softmax, 0);
    let logits = uniform(rng, &[joints, 4, 5, 3], -2.0, 2.0);
    let gt = vec![[0.4, 3.6, 0.2], [2.9, 0.3, 1.7], [1.2, 2.2, 9.0]];
    let mask = vec![true, true, false];
    let objective = |x: &Tensor<f64>| -> Result<(f64, Tensor<f64>, crate::nn::Tape<f64>)> {
        let tape = forward_tape(&softmax, &no_params, x)?;
        let h = VoxelVolume::new(grid, tape.output().unwrap().clone())?;
        let (l, g) = pen_objective(&h, &gt, &mask)?;
        Ok((l, g, tape))
    };
    let (_, g, tape) = objective(&logits)?;
    let mut work = no_params.clone();
    let dx = backward(&softmax, &mut work, &tape, &g, true)?.expect("input gradient requested");
    let numeric = numeric_of(|v| objective(&with_data(&logits, v)).map(|r| r.0), logits.data(), eps)?;
    run.record("composite.softmax_decode_l1", dx.data().to_vec(), numeric);

    // Depth network: conv stack, sigmoid, affine map to mm, L1 at root pixels.
    let (n, h, w) = (3, 6, 7);
    let de = NetSpec::conv_stack(2, &[h, w], &[n, 4, 1], 3, Some(Layer::Sigmoid))?;
    let params = random_params(&de, rng);
    let input = uniform(rng, &[n, h, w], 0.0, 1.0);
    let range = DepthRange { min: 1000.0, max: 9000.0 };
    let roots = [[1, 1], [5, 4]];
    let s0 = forward(&de, &params, &input)?;
    let targets: Vec<f64> = roots
        .iter()
        .zip([300.0, -400.0])
        .map(|(&[u, v], off)| range.to_mm(s0.get(&[0, v, u]).unwrap()) + off)
        .collect();
    let de_loss = |out: &Tensor<f64>| -> Result<(f64, Tensor<f64>)> {
        let dm = out.map(|s| range.to_mm(s));
        let (l, g) = loss_depth_grad(&dm, &roots, &targets)?;
        Ok((l, g.map(|x| x * range.span())))
    };
    let mut work = params.clone();
    work.zero_grad();
    let tape = forward_tape(&de, &work, &input)?;
    let (_, g) = de_loss(tape.output().unwrap())?;
    backward(&de, &mut work, &tape, &g, false)?;
    let mut probe = params.clone();
    let numeric = numeric_of(
        |v| {
            load_params(&mut probe, v);
            let out = forward(&de, &probe, &input)?;
            de_loss(&out).map(|r| r.0)
        },
        &flatten_params(&params),
        eps,
    )?;
    run.record("composite.de_depth", flatten_grads(&work), numeric);

    // Pose network: conv stack, spatial softmax, integral decode, L1, in the parameters.
    let pen = NetSpec::conv_stack(3, &[4, 5, 3], &[joints, 2, joints], 3, Some(Layer::SpatialSoftmax))?;
    let params = random_params(&pen, rng);
    let input = uniform(rng, &[joints, 4, 5, 3], 0.0, 1.0);
    let run_pen = |p: &ParamSet<f64>| -> Result<(f64, Tensor<f64>, crate::nn::Tape<f64>)> {
        let tape = forward_tape(&pen, p, &input)?;
        let h = VoxelVolume::new(grid, tape.output().unwrap().clone())?;
        let (l, g) = pen_objective(&h, &gt, &mask)?;
        Ok((l, g, tape))
    };
    let mut work = params.clone();
    work.zero_grad();
    let (_, g, tape) = run_pen(&work)?;
    backward(&pen, &mut work, &tape, &g, false)?;
    let mut probe = params.clone();
    let numeric = numeric_of(
        |v| {
            load_params(&mut probe, v);
            run_pen(&probe).map(|r| r.0)
        },
        &flatten_params(&params),
        eps,
    )?;
    run.record("composite.pen_pose", flatten_grads(&work), numeric);
    Ok(())
}

/// Runs every check. Errors only on invalid options or internal shape failures; a
/// failed comparison is reported through [`CheckResult::passed`].
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CheckResult>> {
    if !(1e-7..=1e-3).contains(&opts.eps) {
        return Err(Error::InvalidArgument(format!("finite-difference step {} outside [1e-7, 1e-3]", opts.eps)));
    }
    if let Some(name) = &opts.corrupt {
        if !CHECKS.contains(&name.as_str()) {
            return Err(Error::InvalidArgument(format!("unknown check {name:?}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_6ad);
    let mut run = Runner {
        opts,
        results: Vec::new(),
    };
    layer_checks(&mut run, &mut rng)?;
    loss_checks(&mut run, &mut rng)?;
    composite_checks(&mut run, &mut rng)?;
    debug_assert_eq!(run.results.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), CHECKS);
    Ok(run.results)
}
