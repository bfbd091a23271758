use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Layer, NetSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub layer: usize,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: String, layer: usize, value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.dims());
        Param {
            name,
            layer,
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    step: u64,
}

impl<T: Scalar> ParamSet<T> {
    pub fn from_params(params: Vec<Param<T>>, step: u64) -> Self {
        ParamSet { params, step }
    }

    /// Fan-in scaled uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(net: &NetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, layer) in net.layers().iter().enumerate() {
            let fan_in = match *layer {
                Layer::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
                Layer::Conv3d { in_ch, kernel, .. } => in_ch * kernel * kernel * kernel,
                _ => 0,
            };
            for (name, shape) in layer.param_shapes() {
                let value = if name == "weight" {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Tensor::from_fn(&shape, |_| {
                        T::from_f64_lossy(rng.random_range(-bound..bound))
                    })
                } else {
                    Tensor::zeros(&shape)
                };
                params.push(Param::new(NetSpec::param_name(i, name), i, value));
            }
        }
        ParamSet { params, step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) {
        self.step += 1;
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub(crate) fn index_of(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Checks that every parameter the net needs exists with the right shape.
    pub fn validate(&self, net: &NetSpec) -> Result<()> {
        for (name, _, shape) in net.param_layout() {
            let p = self.get(&name).ok_or_else(|| {
                Error::InvalidArgument(format!("missing parameter `{name}`"))
            })?;
            if p.value.dims() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter `{name}` has shape {:?}, net expects {shape:?}",
                    p.value.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    layer: p.layer,
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                    m: p.m.cast(),
                    v: p.v.cast(),
                })
                .collect(),
            step: self.step,
        }
    }
}
