//! Forward evaluation and reverse-mode differentiation of a layer stack.

use super::conv::{self, ConvGeom};
use super::params::ParamSet;
use super::spec::{Layer, NetSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Activations recorded by a forward pass, consumed by [`backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    /// `activations[i]` is the input of layer `i`; the last entry is the net output.
    activations: Vec<Tensor<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> Option<&Tensor<T>> {
        self.activations.last()
    }

    pub fn into_output(mut self) -> Option<Tensor<T>> {
        self.activations.pop()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }
}

fn geom(layer: &Layer, shape: &[usize]) -> Option<ConvGeom> {
    match *layer {
        Layer::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => Some(ConvGeom::new_2d(
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            [shape[1], shape[2]],
        )),
        Layer::Conv3d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => Some(ConvGeom::new_3d(
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            [shape[1], shape[2], shape[3]],
        )),
        _ => None,
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn spatial_softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for c in 0..x.dims()[0] {
        let ch = out.channel_mut(c);
        let max = ch.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in ch.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in ch.iter_mut() {
            *v /= sum;
        }
    }
    out
}

struct Resolved {
    shapes: Vec<Vec<usize>>,
    /// Parameter slot per layer: (weight index, bias index).
    slots: Vec<(Option<usize>, Option<usize>)>,
}

fn resolve<T: Scalar>(net: &NetSpec, params: &ParamSet<T>, input: &Tensor<T>) -> Result<Resolved> {
    if input.dims() != net.input_shape() {
        return Err(Error::Shape(format!(
            "input dims {:?} do not match the net's declared input {:?}",
            input.dims(),
            net.input_shape()
        )));
    }
    params.validate(net)?;
    let shapes = net.shapes()?;
    let slots = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut w = None;
            let mut b = None;
            for (name, _) in l.param_shapes() {
                let idx = params.index_of(&NetSpec::param_name(i, name))?;
                if name == "weight" {
                    w = Some(idx);
                } else {
                    b = Some(idx);
                }
            }
            Ok((w, b))
        })
        .collect::<Result<_>>()?;
    Ok(Resolved { shapes, slots })
}

fn layer_forward<T: Scalar>(
    layer: &Layer,
    in_shape: &[usize],
    out_shape: &[usize],
    slot: (Option<usize>, Option<usize>),
    params: &ParamSet<T>,
    x: &Tensor<T>,
) -> Tensor<T> {
    match layer {
        Layer::Conv2d { .. } | Layer::Conv3d { .. } => {
            let g = geom(layer, in_shape).unwrap();
            let w = &params.params()[slot.0.unwrap()].value;
            let b = &params.params()[slot.1.unwrap()].value;
            let data = conv::forward(&g, x.data(), w.data(), b.data());
            Tensor::new(out_shape.to_vec(), data).expect("conv output shape")
        }
        Layer::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Layer::Sigmoid => x.map(sigmoid),
        Layer::SpatialSoftmax => spatial_softmax(x),
        Layer::BiasAdd { .. } => {
            let b = &params.params()[slot.1.unwrap()].value;
            let mut out = x.clone();
            for c in 0..in_shape[0] {
                let bc = b.data()[c];
                out.channel_mut(c).iter_mut().for_each(|v| *v += bc);
            }
            out
        }
    }
}

/// Evaluates the net. Pure: identical `(params, input)` give bit-identical output.
pub fn forward<T: Scalar>(net: &NetSpec, params: &ParamSet<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let r = resolve(net, params, input)?;
    let mut x = input.clone();
    for (i, layer) in net.layers().iter().enumerate() {
        x = layer_forward(layer, &r.shapes[i], &r.shapes[i + 1], r.slots[i], params, &x);
    }
    Ok(x)
}

/// Forward pass that keeps every intermediate activation for [`backward`].
pub fn forward_tape<T: Scalar>(
    net: &NetSpec,
    params: &ParamSet<T>,
    input: &Tensor<T>,
) -> Result<Tape<T>> {
    let r = resolve(net, params, input)?;
    let mut activations = Vec::with_capacity(net.layers().len() + 1);
    activations.push(input.clone());
    for (i, layer) in net.layers().iter().enumerate() {
        let next = layer_forward(
            layer,
            &r.shapes[i],
            &r.shapes[i + 1],
            r.slots[i],
            params,
            activations.last().unwrap(),
        );
        activations.push(next);
    }
    Ok(Tape { activations })
}

/// Accumulates `d loss / d param` into `params` gradients given `d loss / d output`.
///
/// Returns the gradient with respect to the net input when `want_input_grad` is set.
pub fn backward<T: Scalar>(
    net: &NetSpec,
    params: &mut ParamSet<T>,
    tape: &Tape<T>,
    loss_grad: &Tensor<T>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    if tape.activations.len() != net.layers().len() + 1 {
        return Err(Error::NoForwardContext);
    }
    let r = resolve(net, params, &tape.activations[0])?;
    let out_shape = r.shapes.last().unwrap();
    if loss_grad.dims() != out_shape.as_slice() {
        return Err(Error::Shape(format!(
            "loss gradient dims {:?} do not match net output {:?}",
            loss_grad.dims(),
            out_shape
        )));
    }
    let mut grad = loss_grad.clone();
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let x = &tape.activations[i];
        let y = &tape.activations[i + 1];
        let need_dx = want_input_grad || i > 0;
        let slot = r.slots[i];
        grad = match layer {
            Layer::Conv2d { .. } | Layer::Conv3d { .. } => {
                let g = geom(layer, &r.shapes[i]).unwrap();
                let (wi, bi) = (slot.0.unwrap(), slot.1.unwrap());
                let w = params.params()[wi].value.clone();
                let mut dw = std::mem::replace(&mut params.params_mut()[wi].grad, Tensor::zeros(&[1]));
                let mut db = std::mem::replace(&mut params.params_mut()[bi].grad, Tensor::zeros(&[1]));
                let dx = conv::backward(
                    &g,
                    x.data(),
                    w.data(),
                    grad.data(),
                    dw.data_mut(),
                    db.data_mut(),
                    need_dx,
                );
                params.params_mut()[wi].grad = dw;
                params.params_mut()[bi].grad = db;
                match dx {
                    Some(d) => Tensor::new(r.shapes[i].clone(), d)?,
                    None => break,
                }
            }
            Layer::Relu => {
                let mut d = grad;
                for (g, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                    if xv <= T::zero() {
                        *g = T::zero();
                    }
                }
                d
            }
            Layer::Sigmoid => {
                let mut d = grad;
                for (g, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *g *= yv * (T::one() - yv);
                }
                d
            }
            Layer::SpatialSoftmax => {
                let mut d = grad;
                for c in 0..x.dims()[0] {
                    let yc = y.channel(c);
                    let gc = d.channel_mut(c);
                    let inner: T = gc.iter().zip(yc).map(|(&g, &p)| g * p).sum();
                    for (g, &p) in gc.iter_mut().zip(yc) {
                        *g = p * (*g - inner);
                    }
                }
                d
            }
            Layer::BiasAdd { .. } => {
                let bi = slot.1.unwrap();
                for c in 0..grad.dims()[0] {
                    let s: T = grad.channel(c).iter().copied().sum();
                    params.params_mut()[bi].grad.data_mut()[c] += s;
                }
                grad
            }
        };
        if i == 0 && !want_input_grad {
            return Ok(None);
        }
    }
    Ok(if want_input_grad { Some(grad) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Param;

    fn single_conv2d(weight: f64) -> (NetSpec, ParamSet<f64>) {
        let net = NetSpec::new(vec![1, 1, 1], vec![Layer::conv2d(1, 1, 1, 0)]).unwrap();
        let params = ParamSet::from_params(
            vec![
                Param::new("layer0.weight".into(), 0, Tensor::full(&[1, 1, 1, 1], weight)),
                Param::new("layer0.bias".into(), 0, Tensor::zeros(&[1])),
            ],
            0,
        );
        (net, params)
    }

    #[test]
    fn identity_one_by_one_conv() {
        let net = NetSpec::new(vec![1, 4, 5], vec![Layer::conv2d(1, 1, 1, 0)]).unwrap();
        let mut params = ParamSet::<f64>::init(&net, 0);
        params.get_mut("layer0.weight").unwrap().value = Tensor::full(&[1, 1, 1, 1], 1.0);
        let input = Tensor::from_fn(&[1, 4, 5], |i| (i as f64 * 0.37).sin());
        assert_eq!(forward(&net, &params, &input).unwrap(), input);
    }

    #[test]
    fn relu_values() {
        let net = NetSpec::new(vec![3], vec![Layer::Relu]).unwrap();
        let params = ParamSet::<f64>::init(&net, 0);
        let out = forward(&net, &params, &Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn all_ones_three_by_three() {
        let net = NetSpec::new(vec![1, 3, 3], vec![Layer::conv2d(1, 1, 3, 1)]).unwrap();
        let mut params = ParamSet::<f64>::init(&net, 0);
        params.get_mut("layer0.weight").unwrap().value = Tensor::full(&[1, 1, 3, 3], 1.0);
        let out = forward(&net, &params, &Tensor::full(&[1, 3, 3], 1.0)).unwrap();
        assert_eq!(out.get(&[0, 1, 1]).unwrap(), 9.0);
        for corner in [[0, 0, 0], [0, 0, 2], [0, 2, 0], [0, 2, 2]] {
            assert_eq!(out.get(&corner).unwrap(), 4.0);
        }
        assert_eq!(out.get(&[0, 0, 1]).unwrap(), 6.0);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let net = NetSpec::new(vec![2, 4, 4], vec![Layer::conv2d(2, 1, 3, 1)]).unwrap();
        let params = ParamSet::<f64>::init(&net, 0);
        assert!(matches!(
            forward(&net, &params, &Tensor::zeros(&[3, 4, 4])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn square_through_scalar_conv() {
        // y = w * 1 and loss = y^2, so d loss / d w = 2w.
        let (net, mut params) = single_conv2d(3.0);
        let input = Tensor::full(&[1, 1, 1], 1.0);
        let tape = forward_tape(&net, &params, &input).unwrap();
        let y = tape.output().unwrap().data()[0];
        assert_eq!(y, 3.0);
        let lg = Tensor::full(&[1, 1, 1], 2.0 * y);
        backward(&net, &mut params, &tape, &lg, false).unwrap();
        assert_eq!(params.get("layer0.weight").unwrap().grad.data()[0], 6.0);
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let net = NetSpec::conv_stack(2, &[5, 5], &[2, 4, 1], 3, Some(Layer::Sigmoid)).unwrap();
        let mut params = ParamSet::<f64>::init(&net, 3);
        let input = Tensor::from_fn(&[2, 5, 5], |i| (i as f64).cos());
        let tape = forward_tape(&net, &params, &input).unwrap();
        let dx = backward(&net, &mut params, &tape, &Tensor::zeros(&[1, 5, 5]), true)
            .unwrap()
            .unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        for p in params.params() {
            assert!(p.grad.data().iter().all(|&v| v == 0.0), "{}", p.name);
        }
    }

    #[test]
    fn backward_without_forward_is_rejected() {
        let (net, mut params) = single_conv2d(1.0);
        let empty = Tape::default();
        assert!(matches!(
            backward(&net, &mut params, &empty, &Tensor::zeros(&[1, 1, 1]), false),
            Err(Error::NoForwardContext)
        ));
    }

    #[test]
    fn softmax_channels_sum_to_one() {
        let net = NetSpec::new(vec![3, 4, 4, 4], vec![Layer::SpatialSoftmax]).unwrap();
        let params = ParamSet::<f64>::init(&net, 0);
        let input = Tensor::from_fn(&[3, 4, 4, 4], |i| ((i * 7919) % 97) as f64 * 0.3 - 10.0);
        let out = forward(&net, &params, &input).unwrap();
        for c in 0..3 {
            let s: f64 = out.channel(c).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(out.channel(c).iter().all(|&v| v > 0.0));
        }
    }
}
