use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{self, Padding};
use crate::tensor::Tensor;

/// Named parameter tensors of a network.
pub type Params = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Relu,
    LeakyRelu {
        slope: f32,
    },
    Sigmoid,
    NearestUpsample {
        factor: usize,
    },
    AvgDownsample {
        factor: usize,
    },
    /// Adds the value at index `source` to the node input.
    ResidualAdd {
        source: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    GlobalAvgPool,
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::LeakyRelu { .. } => "leaky_relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::NearestUpsample { .. } => "nearest_upsample",
            LayerKind::AvgDownsample { .. } => "avg_downsample",
            LayerKind::ResidualAdd { .. } => "residual_add",
            LayerKind::Dense { .. } => "dense",
            LayerKind::GlobalAvgPool => "global_avg_pool",
        }
    }
}

/// One node of a network graph.
///
/// Values are numbered so that value 0 is the network input and value
/// `i + 1` is the output of node `i`. `input` (and a residual `source`)
/// refer to value indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub name: String,
    pub kind: LayerKind,
    pub input: usize,
}

impl LayerNode {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    /// Parameter names and shapes owned by this node.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 4])> {
        match self.kind {
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => alloc::vec![
                (self.weight_name(), [out_ch, in_ch, kernel, kernel]),
                (self.bias_name(), [out_ch, 1, 1, 1]),
            ],
            LayerKind::Dense { inputs, outputs } => alloc::vec![
                (self.weight_name(), [outputs, inputs, 1, 1]),
                (self.bias_name(), [outputs, 1, 1, 1]),
            ],
            _ => Vec::new(),
        }
    }

    fn param<'a>(&self, params: &'a Params, name: String) -> Result<&'a Tensor> {
        params
            .get(&name)
            .ok_or_else(|| Error::State(format!("missing parameter `{name}`")))
    }
}

/// Gradients produced by [`layer_backward`].
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub input: Tensor,
    /// Gradient flowing to the residual source, for `ResidualAdd`.
    pub source: Option<Tensor>,
    pub params: Vec<(String, Tensor)>,
}

/// Evaluate one node. `source` must be given for residual adds.
pub fn layer_forward(
    node: &LayerNode,
    params: &Params,
    input: &Tensor,
    source: Option<&Tensor>,
) -> Result<Tensor> {
    Ok(match node.kind {
        LayerKind::Conv2d {
            stride, padding, ..
        } => ops::conv2d(
            input,
            node.param(params, node.weight_name())?,
            node.param(params, node.bias_name())?,
            stride,
            padding,
        )?,
        LayerKind::Relu => ops::relu(input),
        LayerKind::LeakyRelu { slope } => ops::leaky_relu(input, slope),
        LayerKind::Sigmoid => ops::sigmoid(input),
        LayerKind::NearestUpsample { factor } => ops::nearest_up(input, factor)?,
        LayerKind::AvgDownsample { factor } => ops::avg_down(input, factor)?,
        LayerKind::ResidualAdd { .. } => {
            let source =
                source.ok_or_else(|| Error::State("residual add without source value".into()))?;
            let mut out = input.clone();
            out.add_assign(source)?;
            out
        }
        LayerKind::Dense { .. } => ops::dense(
            input,
            node.param(params, node.weight_name())?,
            node.param(params, node.bias_name())?,
        )?,
        LayerKind::GlobalAvgPool => ops::global_avg_pool(input),
    })
}

/// Analytic backward of one node given its cached `(input, output)` from a
/// prior forward. `None` means the node was never executed.
pub fn layer_backward(
    node: &LayerNode,
    params: &Params,
    cache: Option<(&Tensor, &Tensor)>,
    upstream: &Tensor,
) -> Result<LayerGrads> {
    let (input, output) = cache.ok_or_else(|| {
        Error::State(format!("backward on `{}` before forward", node.name))
    })?;
    if upstream.shape() != output.shape() {
        return Err(Error::shape("layer_backward upstream", output.shape(), upstream.shape()));
    }
    let plain = |g: Tensor| LayerGrads {
        input: g,
        source: None,
        params: Vec::new(),
    };
    Ok(match node.kind {
        LayerKind::Conv2d {
            stride, padding, ..
        } => {
            let g = ops::conv2d_backward(
                input,
                node.param(params, node.weight_name())?,
                upstream,
                stride,
                padding,
            )?;
            LayerGrads {
                input: g.input,
                source: None,
                params: alloc::vec![(node.weight_name(), g.weights), (node.bias_name(), g.bias)],
            }
        }
        LayerKind::Relu => plain(ops::relu_backward(input, upstream)?),
        LayerKind::LeakyRelu { slope } => plain(ops::leaky_relu_backward(input, upstream, slope)?),
        LayerKind::Sigmoid => plain(ops::sigmoid_backward(output, upstream)?),
        LayerKind::NearestUpsample { factor } => plain(ops::nearest_up_backward(upstream, factor)?),
        LayerKind::AvgDownsample { factor } => plain(ops::avg_down_backward(upstream, factor)?),
        LayerKind::ResidualAdd { .. } => LayerGrads {
            input: upstream.clone(),
            source: Some(upstream.clone()),
            params: Vec::new(),
        },
        LayerKind::Dense { .. } => {
            let g = ops::dense_backward(input, node.param(params, node.weight_name())?, upstream)?;
            LayerGrads {
                input: g.input,
                source: None,
                params: alloc::vec![(node.weight_name(), g.weights), (node.bias_name(), g.bias)],
            }
        }
        LayerKind::GlobalAvgPool => plain(ops::global_avg_pool_backward(input.shape(), upstream)?),
    })
}
