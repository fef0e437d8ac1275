//! Central finite-difference verification of analytic gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::layer::{LayerKind, LayerNode};
use crate::loss;
use crate::models::{self, Arch};
use crate::network::{Network, NetworkSpec};
use crate::ops::Padding;
use crate::rng;
use crate::tensor::Tensor;

/// Loss applied to the network's primary output during a check.
#[derive(Debug, Clone)]
pub enum GradLoss {
    /// Fidelity loss against a fixed target.
    Mse(Tensor),
    /// `-ln D` averaged over the batch (output must be a probability).
    Adversarial,
    /// Discriminator cross entropy, treating the batch as real samples.
    DiscriminatorReal,
    /// Discriminator cross entropy, treating the batch as generated samples.
    DiscriminatorFake,
    /// `sum_i w_i y_i`, a generic probe for any layer.
    Weighted(Tensor),
}

impl GradLoss {
    /// Loss value and gradient with respect to `output`.
    pub fn eval(&self, output: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            GradLoss::Mse(target) => loss::mse_loss(output, target),
            GradLoss::Adversarial => Ok(loss::adversarial_loss_batch(output)),
            GradLoss::DiscriminatorReal | GradLoss::DiscriminatorFake => {
                let other = Tensor::full(output.shape(), 0.5);
                if matches!(self, GradLoss::DiscriminatorReal) {
                    let (l, g, _) = loss::discriminator_loss_batch(output, &other)?;
                    Ok((l, g))
                } else {
                    let (l, _, g) = loss::discriminator_loss_batch(&other, output)?;
                    Ok((l, g))
                }
            }
            GradLoss::Weighted(w) => {
                output.ensure_same_shape(w, "weighted probe")?;
                let l = output
                    .data()
                    .iter()
                    .zip(w.data())
                    .map(|(&y, &k)| y as f64 * k as f64)
                    .sum();
                Ok((l, w.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub eps: f32,
    /// Failure threshold on relative error.
    pub tolerance: f64,
    /// Multiplier applied to analytic gradients before comparison. Anything
    /// other than 1 deliberately corrupts the check (used to prove the
    /// checker can fail).
    pub corrupt: f32,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            eps: 1e-3,
            tolerance: 1e-3,
            corrupt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    /// Parameter name, or `"input"`.
    pub name: String,
    /// Norm-relative error of the whole tensor's gradient.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub entries: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.entries.iter().filter(|e| e.max_rel_error >= self.tolerance)
    }
}

/// Relative error of one gradient tensor, `||a - n|| / max(||a||, ||n||)`
/// in the Euclidean norm. Elementwise ratios are dominated by 32-bit rounding
/// noise on near-zero components; the norm ratio is not, yet still moves by
/// the full relative size of any systematic error.
#[derive(Default)]
struct RelError {
    diff2: f64,
    a2: f64,
    n2: f64,
}

impl RelError {
    fn push(&mut self, analytic: f64, numeric: f64) {
        self.diff2 += (analytic - numeric) * (analytic - numeric);
        self.a2 += analytic * analytic;
        self.n2 += numeric * numeric;
    }

    fn value(&self) -> f64 {
        let denom = self.a2.max(self.n2);
        if denom == 0.0 {
            0.0
        } else {
            libm::sqrt(self.diff2 / denom)
        }
    }
}

/// Central difference quotient, dividing by the step actually taken in `f32`.
fn central(plus: f64, minus: f64, hi: f32, lo: f32) -> f64 {
    (plus - minus) / (hi as f64 - lo as f64)
}

fn loss_at(net: &Network, input: &Tensor, loss: &GradLoss) -> Result<f64> {
    let outs = net.forward(input)?;
    Ok(loss.eval(&outs[net.primary_output()])?.0)
}

/// Compare analytic gradients of every parameter (and of the input) with
/// central finite differences. Intended for networks below ~10^4 parameters.
pub fn gradcheck(
    net: &Network,
    input: &Tensor,
    loss: &GradLoss,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let tape = net.forward_tape(input)?;
    let mut out_grads = vec![None; net.spec.outputs.len()];
    out_grads[net.primary_output()] = Some(loss.eval(tape.output(net.primary_output()))?.1);
    let grads = tape.backward(net, &out_grads)?;

    let eps = opts.eps;
    let mut entries = Vec::new();
    let mut probe = net.clone();
    for (name, _) in net.spec.param_shapes() {
        let analytic = &grads.params[&name];
        let mut err = RelError::default();
        for i in 0..analytic.len() {
            let orig = probe.params[&name].data()[i];
            let (hi, lo) = (orig + eps, orig - eps);
            probe.params.get_mut(&name).expect("param").data_mut()[i] = hi;
            let plus = loss_at(&probe, input, loss)?;
            probe.params.get_mut(&name).expect("param").data_mut()[i] = lo;
            let minus = loss_at(&probe, input, loss)?;
            probe.params.get_mut(&name).expect("param").data_mut()[i] = orig;
            let a = (analytic.data()[i] * opts.corrupt) as f64;
            err.push(a, central(plus, minus, hi, lo));
        }
        entries.push(TensorCheck {
            name,
            max_rel_error: err.value(),
        });
    }

    let mut x = input.clone();
    let mut err = RelError::default();
    for i in 0..x.len() {
        let orig = x.data()[i];
        let (hi, lo) = (orig + eps, orig - eps);
        x.data_mut()[i] = hi;
        let plus = loss_at(net, &x, loss)?;
        x.data_mut()[i] = lo;
        let minus = loss_at(net, &x, loss)?;
        x.data_mut()[i] = orig;
        let a = (grads.input.data()[i] * opts.corrupt) as f64;
        err.push(a, central(plus, minus, hi, lo));
    }
    entries.push(TensorCheck {
        name: "input".into(),
        max_rel_error: err.value(),
    });
    Ok(GradcheckReport {
        entries,
        tolerance: opts.tolerance,
    })
}

/// Every layer kind and loss covered by [`check_kind`], in report order.
pub const CHECK_KINDS: [&str; 12] = [
    "conv2d",
    "relu",
    "leaky_relu",
    "sigmoid",
    "nearest_upsample",
    "avg_downsample",
    "residual_add",
    "dense",
    "global_avg_pool",
    "mse_loss",
    "adversarial_loss",
    "discriminator_loss",
];

/// Aggregate over seeds for one kind.
#[derive(Debug, Clone)]
pub struct KindReport {
    pub kind: &'static str,
    pub seeds: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn uniform(shape: [usize; 4], lo: f32, hi: f32, r: &mut rng::Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Values in `±[0.1, 1]`, kept away from activation kinks.
fn off_zero(shape: [usize; 4], r: &mut rng::Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m: f32 = r.random_range(0.1..1.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn single(kind: LayerKind) -> Result<NetworkSpec> {
    NetworkSpec::new(
        "probe",
        Arch::Custom,
        vec![LayerNode {
            name: "layer".into(),
            kind,
            input: 0,
        }],
        vec![1],
    )
}

fn randomize(spec: NetworkSpec, r: &mut rng::Rng) -> Network {
    let mut net = Network::zeros(spec);
    for t in net.params.values_mut() {
        *t = uniform(t.shape(), -1.0, 1.0, r);
    }
    net
}

/// Build the probe network, input and loss for `kind` at `seed`.
pub fn probe_case(kind: &str, seed: u64) -> Result<(Network, Tensor, GradLoss)> {
    let mut r = rng::rng(rng::derive_str(seed, kind));
    let weighted = |shape, r: &mut rng::Rng| GradLoss::Weighted(uniform(shape, -1.0, 1.0, r));
    let case = match kind {
        "conv2d" => {
            let stride = 1 + (seed % 2) as usize;
            let padding = if (seed / 2) % 2 == 0 { Padding::Zero } else { Padding::Reflect };
            let spec = single(LayerKind::Conv2d {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
                stride,
                padding,
            })?;
            let net = randomize(spec, &mut r);
            let x = uniform([2, 2, 5, 6], -1.0, 1.0, &mut r);
            let y = net.forward(&x)?.remove(0);
            let l = weighted(y.shape(), &mut r);
            (net, x, l)
        }
        "relu" | "leaky_relu" | "sigmoid" => {
            let k = match kind {
                "relu" => LayerKind::Relu,
                "leaky_relu" => LayerKind::LeakyRelu {
                    slope: models::LEAKY_SLOPE,
                },
                _ => LayerKind::Sigmoid,
            };
            let net = Network::zeros(single(k)?);
            let mut x = off_zero([2, 3, 4, 4], &mut r);
            if kind == "sigmoid" {
                x.scale(3.0);
            }
            let l = weighted(x.shape(), &mut r);
            (net, x, l)
        }
        "nearest_upsample" => {
            let net = Network::zeros(single(LayerKind::NearestUpsample { factor: 2 })?);
            let x = uniform([2, 2, 3, 3], -1.0, 1.0, &mut r);
            let l = weighted([2, 2, 6, 6], &mut r);
            (net, x, l)
        }
        "avg_downsample" => {
            let net = Network::zeros(single(LayerKind::AvgDownsample { factor: 2 })?);
            let x = uniform([2, 2, 4, 6], -1.0, 1.0, &mut r);
            let l = weighted([2, 2, 2, 3], &mut r);
            (net, x, l)
        }
        "residual_add" => {
            let spec = NetworkSpec::new(
                "probe",
                Arch::Custom,
                vec![
                    LayerNode {
                        name: "conv".into(),
                        kind: LayerKind::Conv2d {
                            in_ch: 2,
                            out_ch: 2,
                            kernel: 3,
                            stride: 1,
                            padding: Padding::Zero,
                        },
                        input: 0,
                    },
                    LayerNode {
                        name: "add".into(),
                        kind: LayerKind::ResidualAdd { source: 0 },
                        input: 1,
                    },
                ],
                vec![2],
            )?;
            let net = randomize(spec, &mut r);
            let x = uniform([2, 2, 4, 4], -1.0, 1.0, &mut r);
            let l = weighted(x.shape(), &mut r);
            (net, x, l)
        }
        "dense" => {
            let net = randomize(single(LayerKind::Dense { inputs: 8, outputs: 3 })?, &mut r);
            let x = uniform([3, 2, 2, 2], -1.0, 1.0, &mut r);
            let l = weighted([3, 3, 1, 1], &mut r);
            (net, x, l)
        }
        "global_avg_pool" => {
            let net = Network::zeros(single(LayerKind::GlobalAvgPool)?);
            let x = uniform([2, 3, 3, 4], -1.0, 1.0, &mut r);
            let l = weighted([2, 3, 1, 1], &mut r);
            (net, x, l)
        }
        "mse_loss" => {
            let spec = single(LayerKind::Conv2d {
                in_ch: 3,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                padding: Padding::Zero,
            })?;
            let net = randomize(spec, &mut r);
            let x = uniform([2, 3, 4, 4], 0.0, 1.0, &mut r);
            let target = uniform([2, 3, 4, 4], 0.0, 1.0, &mut r);
            (net, x, GradLoss::Mse(target))
        }
        "adversarial_loss" => {
            let spec = NetworkSpec::new(
                "probe",
                Arch::Custom,
                vec![
                    LayerNode {
                        name: "dense".into(),
                        kind: LayerKind::Dense { inputs: 6, outputs: 1 },
                        input: 0,
                    },
                    LayerNode {
                        name: "prob".into(),
                        kind: LayerKind::Sigmoid,
                        input: 1,
                    },
                ],
                vec![2],
            )?;
            let net = randomize(spec, &mut r);
            let x = uniform([4, 6, 1, 1], -1.0, 1.0, &mut r);
            (net, x, GradLoss::Adversarial)
        }
        "discriminator_loss" => {
            let l = if seed % 2 == 0 {
                GradLoss::DiscriminatorReal
            } else {
                GradLoss::DiscriminatorFake
            };
            // Resample until no leaky-relu input lies within reach of the kink
            // under a single-element perturbation and the output is unsaturated.
            let spec = models::build_discriminator(2, 3)?;
            let mut attempt = 0u64;
            loop {
                let mut net = models::init_weights(spec.clone(), rng::derive(seed, attempt));
                for t in net.params.values_mut() {
                    t.scale(PROBE_GAIN);
                }
                let x = uniform([2, 3, 4, 4], 0.0, 1.0, &mut r);
                let d = net.forward(&x)?.remove(0);
                let moderate = d.data().iter().all(|&p| (0.2..=0.8).contains(&p));
                if attempt >= 1000 || (moderate && min_kink_distance(&net, &x)? > KINK_MARGIN) {
                    break (net, x, l);
                }
                attempt += 1;
            }
        }
        other => return Err(Error::invalid(format!("unknown gradcheck kind `{other}`"))),
    };
    Ok(case)
}

const KINK_MARGIN: f32 = 0.02;
/// Weight gain for the discriminator probe: lifts the logit sensitivity above
/// the f32 rounding floor of the sigmoid output.
const PROBE_GAIN: f32 = 2.0;

fn min_kink_distance(net: &Network, x: &Tensor) -> Result<f32> {
    let tape = net.forward_tape(x)?;
    let mut min = f32::INFINITY;
    for node in &net.spec.nodes {
        if matches!(node.kind, LayerKind::Relu | LayerKind::LeakyRelu { .. }) {
            for v in tape.value(node.input).data() {
                min = min.min(v.abs());
            }
        }
    }
    Ok(min)
}

/// Run `seeds` randomized checks for one layer kind or loss.
pub fn check_kind(kind: &str, seeds: usize, opts: GradcheckOptions) -> Result<KindReport> {
    let label = CHECK_KINDS
        .iter()
        .copied()
        .find(|k| *k == kind)
        .ok_or_else(|| Error::invalid(format!("unknown gradcheck kind `{kind}`")))?;
    let mut worst = 0.0f64;
    for seed in 0..seeds as u64 {
        let (net, x, l) = probe_case(kind, seed)?;
        let report = gradcheck(&net, &x, &l, opts)?;
        worst = worst.max(report.max_rel_error());
    }
    Ok(KindReport {
        kind: label,
        seeds,
        max_rel_error: worst,
        passed: worst < opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_passes_a_few_seeds() {
        for kind in CHECK_KINDS {
            let r = check_kind(kind, 4, GradcheckOptions::default()).unwrap();
            assert!(r.passed, "{kind}: {}", r.max_rel_error);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let opts = GradcheckOptions {
            corrupt: 1.1,
            ..Default::default()
        };
        let r = check_kind("conv2d", 2, opts).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(check_kind("softmax", 1, GradcheckOptions::default()).is_err());
    }
}
