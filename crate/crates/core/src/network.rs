//! Networks as ordered node lists, with a recorded forward pass (`Tape`)
//! that supports exact reverse-order backpropagation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layer::{layer_backward, layer_forward, LayerKind, LayerNode, Params};
use crate::models::Arch;
use crate::tensor::Tensor;

/// Declarative network description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub arch: Arch,
    pub nodes: Vec<LayerNode>,
    /// Value indices returned by `forward`, in order.
    pub outputs: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(
        name: impl Into<String>,
        arch: Arch,
        nodes: Vec<LayerNode>,
        outputs: Vec<usize>,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            name: name.into(),
            arch,
            nodes,
            outputs,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.input > i {
                return Err(Error::invalid(format!(
                    "node `{}` reads value {} produced later",
                    node.name, node.input
                )));
            }
            if let LayerKind::ResidualAdd { source } = node.kind {
                if source > i {
                    return Err(Error::invalid(format!(
                        "residual `{}` source {} does not precede it",
                        node.name, source
                    )));
                }
            }
            for (name, _) in node.param_shapes() {
                if !names.insert(name.clone()) {
                    return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
                }
            }
        }
        if self.outputs.is_empty() || self.outputs.iter().any(|&o| o > self.nodes.len()) {
            return Err(Error::invalid("network outputs must name existing values"));
        }
        Ok(())
    }

    /// Parameter names and shapes in node order.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 4])> {
        self.nodes.iter().flat_map(|n| n.param_shapes()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// A network description together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Params,
}

impl Network {
    /// All parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Self {
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape)))
            .collect();
        Network { spec, params }
    }

    /// Parameter tensors in node order.
    pub fn ordered_params(&self) -> Vec<(&str, &Tensor)> {
        self.spec
            .param_shapes()
            .into_iter()
            .map(|(name, _)| {
                let (k, v) = self.params.get_key_value(&name).expect("spec parameter present");
                (k.as_str(), v)
            })
            .collect()
    }

    /// Run the network and return its declared outputs.
    pub fn forward(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let tape = self.forward_tape(input)?;
        Ok(tape.into_outputs())
    }

    /// Run the network, recording every intermediate value for backward.
    pub fn forward_tape(&self, input: &Tensor) -> Result<Tape> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.spec.nodes.len() + 1);
        values.push(input.clone());
        for node in &self.spec.nodes {
            let source = match node.kind {
                LayerKind::ResidualAdd { source } => Some(&values[source]),
                _ => None,
            };
            let out = layer_forward(node, &self.params, &values[node.input], source)?;
            values.push(out);
        }
        Ok(Tape {
            values,
            outputs: self.spec.outputs.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }
}

/// Recorded forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    values: Vec<Tensor>,
    outputs: Vec<usize>,
}

/// Result of a backward pass: gradient for the network input and for every
/// named parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub input: Tensor,
    pub params: Params,
}

impl Tape {
    /// Value `i` (0 is the network input, `i + 1` the output of node `i`).
    pub fn value(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn output(&self, i: usize) -> &Tensor {
        &self.values[self.outputs[i]]
    }

    pub fn outputs(&self) -> Vec<&Tensor> {
        self.outputs.iter().map(|&i| &self.values[i]).collect()
    }

    pub fn into_outputs(mut self) -> Vec<Tensor> {
        let idx = self.outputs.clone();
        // Outputs may alias; clone only when a value is requested twice.
        let mut taken: Vec<Option<Tensor>> = self.values.drain(..).map(Some).collect();
        let mut out = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let needed_later = idx[k + 1..].contains(&i);
            let v = if needed_later {
                taken[i].clone()
            } else {
                taken[i].take()
            };
            out.push(v.expect("output value present"));
        }
        out
    }

    /// Backpropagate. `output_grads[i]` is the loss gradient for output `i`,
    /// or `None` when that output does not feed the loss. Nodes are visited in
    /// exact reverse execution order.
    pub fn backward(&self, net: &Network, output_grads: &[Option<Tensor>]) -> Result<Gradients> {
        let nodes = &net.spec.nodes;
        if self.values.len() != nodes.len() + 1 {
            return Err(Error::State("tape does not belong to this network".into()));
        }
        if output_grads.len() != self.outputs.len() {
            return Err(Error::shape(
                "backward output gradients",
                self.outputs.len(),
                output_grads.len(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        for (&vi, g) in self.outputs.iter().zip(output_grads) {
            if let Some(g) = g {
                accumulate(&mut grads[vi], g.clone(), self.values[vi].shape())?;
            }
        }
        let mut param_grads: Params = net
            .spec
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape)))
            .collect();
        for (i, node) in nodes.iter().enumerate().rev() {
            let Some(upstream) = grads[i + 1].take() else {
                continue;
            };
            let cache = (&self.values[node.input], &self.values[i + 1]);
            let lg = layer_backward(node, &net.params, Some(cache), &upstream)?;
            for (name, g) in lg.params {
                param_grads
                    .get_mut(&name)
                    .expect("parameter gradient slot")
                    .add_assign(&g)?;
            }
            let in_shape = self.values[node.input].shape();
            accumulate(&mut grads[node.input], lg.input, in_shape)?;
            if let (LayerKind::ResidualAdd { source }, Some(gs)) = (&node.kind, lg.source) {
                accumulate(&mut grads[*source], gs, self.values[*source].shape())?;
            }
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.values[0].shape()));
        Ok(Gradients {
            input,
            params: param_grads,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor, shape: [usize; 4]) -> Result<()> {
    if g.shape() != shape {
        return Err(Error::shape("gradient accumulation", shape, g.shape()));
    }
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::Padding;

    fn node(name: &str, kind: LayerKind, input: usize) -> LayerNode {
        LayerNode {
            name: name.into(),
            kind,
            input,
        }
    }

    #[test]
    fn rejects_forward_references_and_duplicates() {
        let conv = LayerKind::Conv2d {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            stride: 1,
            padding: Padding::Zero,
        };
        let bad = NetworkSpec::new(
            "x",
            Arch::Custom,
            vec![node("a", LayerKind::ResidualAdd { source: 2 }, 0), node("b", LayerKind::Relu, 1)],
            vec![2],
        );
        assert!(bad.is_err());
        let dup = NetworkSpec::new(
            "x",
            Arch::Custom,
            vec![node("a", conv.clone(), 0), node("a", conv, 1)],
            vec![2],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn residual_gradient_reaches_both_branches() {
        // y = relu(x) + x
        let spec = NetworkSpec::new(
            "r",
            Arch::Custom,
            vec![node("act", LayerKind::Relu, 0), node("skip", LayerKind::ResidualAdd { source: 0 }, 1)],
            vec![2],
        )
        .unwrap();
        let net = Network::zeros(spec);
        let x = Tensor::from_vec([1, 1, 1, 2], vec![-1.0, 2.0]).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        assert_eq!(tape.output(0).data(), &[-1.0, 4.0]);
        let g = tape
            .backward(&net, &[Some(Tensor::full([1, 1, 1, 2], 1.0))])
            .unwrap();
        assert_eq!(g.input.data(), &[1.0, 2.0]);
    }
}
