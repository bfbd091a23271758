//! Layer descriptors and static shape inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Conv3d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Sigmoid,
    /// Softmax over all spatial positions, independently per channel.
    SpatialSoftmax,
    BiasAdd {
        channels: usize,
    },
}

impl Layer {
    pub fn conv2d(in_ch: usize, out_ch: usize, kernel: usize, padding: usize) -> Self {
        Layer::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding,
        }
    }

    pub fn conv3d(in_ch: usize, out_ch: usize, kernel: usize, padding: usize) -> Self {
        Layer::Conv3d {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Conv3d { .. } => "conv3d",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::SpatialSoftmax => "spatial_softmax",
            Layer::BiasAdd { .. } => "bias_add",
        }
    }

    /// Parameter names and shapes owned by this layer, in a fixed order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_ch, in_ch, kernel, kernel]),
                ("bias", vec![out_ch]),
            ],
            Layer::Conv3d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_ch, in_ch, kernel, kernel, kernel]),
                ("bias", vec![out_ch]),
            ],
            Layer::BiasAdd { channels } => vec![("bias", vec![channels])],
            Layer::Relu | Layer::Sigmoid | Layer::SpatialSoftmax => vec![],
        }
    }

    /// Output shape for a given input shape, or a description of the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        fn conv_out(
            rank: usize,
            input: &[usize],
            in_ch: usize,
            out_ch: usize,
            kernel: usize,
            stride: usize,
            padding: usize,
        ) -> std::result::Result<Vec<usize>, String> {
            if input.len() != rank + 1 {
                return Err(format!(
                    "expects rank-{} input [C, spatial...], got {input:?}",
                    rank + 1
                ));
            }
            if input[0] != in_ch {
                return Err(format!("expects {in_ch} input channels, got {}", input[0]));
            }
            if kernel == 0 || stride == 0 || out_ch == 0 {
                return Err("kernel, stride and out_ch must be positive".into());
            }
            let mut out = vec![out_ch];
            for &d in &input[1..] {
                let padded = d + 2 * padding;
                if padded < kernel {
                    return Err(format!(
                        "kernel {kernel} larger than padded extent {padded}"
                    ));
                }
                out.push((padded - kernel) / stride + 1);
            }
            Ok(out)
        }
        match *self {
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => conv_out(2, input, in_ch, out_ch, kernel, stride, padding),
            Layer::Conv3d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => conv_out(3, input, in_ch, out_ch, kernel, stride, padding),
            Layer::Relu | Layer::Sigmoid => Ok(input.to_vec()),
            Layer::SpatialSoftmax => {
                if input.len() < 2 {
                    Err(format!("needs [C, spatial...] input, got {input:?}"))
                } else {
                    Ok(input.to_vec())
                }
            }
            Layer::BiasAdd { channels } => {
                if input.first() != Some(&channels) {
                    Err(format!("expects {channels} channels, got {input:?}"))
                } else {
                    Ok(input.to_vec())
                }
            }
        }
    }
}

/// An ordered layer stack with a declared input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    input: Vec<usize>,
    layers: Vec<Layer>,
}

impl NetSpec {
    pub fn new(input: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let spec = NetSpec { input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Shapes flowing between layers: `shapes()[0]` is the input, `shapes()[i + 1]` the
    /// output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.iter().any(|&d| d == 0) || self.input.is_empty() {
            return Err(Error::Shape(format!("invalid input shape {:?}", self.input)));
        }
        let mut shapes = vec![self.input.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|msg| Error::Layer {
                    layer: i,
                    kind: layer.kind(),
                    msg,
                })?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.shapes()
            .expect("validated at construction")
            .pop()
            .unwrap()
    }

    /// Same layers, different spatial input extent (channels unchanged).
    pub fn with_input(&self, input: Vec<usize>) -> Result<Self> {
        NetSpec::new(input, self.layers.clone())
    }

    pub fn param_name(layer: usize, name: &str) -> String {
        format!("layer{layer}.{name}")
    }

    /// Every parameter of the stack as (name, layer index, shape).
    pub fn param_layout(&self) -> Vec<(String, usize, Vec<usize>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.param_shapes()
                    .into_iter()
                    .map(move |(n, s)| (NetSpec::param_name(i, n), i, s))
            })
            .collect()
    }

    /// Convolution stack `channels[0] -> channels[1] -> ...` with relu between convs.
    pub fn conv_stack(
        rank: usize,
        spatial: &[usize],
        channels: &[usize],
        kernel: usize,
        head: Option<Layer>,
    ) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::InvalidArgument("need at least two channel counts".into()));
        }
        let mut layers = Vec::new();
        let pad = kernel / 2;
        for (i, w) in channels.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            layers.push(match rank {
                2 => Layer::conv2d(w[0], w[1], kernel, pad),
                3 => Layer::conv3d(w[0], w[1], kernel, pad),
                _ => return Err(Error::InvalidArgument(format!("unsupported rank {rank}"))),
            });
        }
        layers.extend(head);
        let mut input = vec![channels[0]];
        input.extend_from_slice(spatial);
        NetSpec::new(input, layers)
    }
}
