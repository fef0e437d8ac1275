//! Generator and discriminator construction, and weight initialization.
//!
//! Parameterized layers are named positionally (`conv0`, `conv1`, ...,
//! `dense0`) in execution order, so checkpoints of different architectures
//! disagree at the first layer whose shape differs.
//!
//! Parameter counts, with `f` features and `u = log2(scale)` upsampling steps:
//!
//! - `sr_small(blocks, f, scale)`: `(75f + f) + blocks * 2(9f² + f) + u(9f² + f) + (27f + 3)`
//! - `dm_net(blocks, tail, f, scale)`: `(75f + f) + blocks * 2(9f² + f) + 2(27f + 3) + tail(9f² + f)`
//! - `discriminator(stages, b)`: `sum_s (9 c_s c_{s+1} + c_{s+1}) + (c_last + 1)` with
//!   `c_0 = 3`, `c_{s+1} = b 2^s`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::layer::{LayerKind, LayerNode};
use crate::network::{Network, NetworkSpec};
use crate::ops::Padding;
use crate::rng;

pub const LEAKY_SLOPE: f32 = 0.2;
const ENTRY_KERNEL: usize = 5;
const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Residual super-resolution network: output is `scale` times the input.
    SrSmall {
        blocks: usize,
        features: usize,
        scale: usize,
    },
    /// Multiscale restoration network with a coarse and a full-resolution output.
    DmNet {
        res_blocks: usize,
        tail_convs: usize,
        features: usize,
        scale: usize,
    },
    Discriminator {
        stages: usize,
        base_features: usize,
    },
    /// Hand-built graphs (tests, gradient checks).
    Custom,
}

impl Arch {
    pub const fn sr_small_default() -> Self {
        Arch::SrSmall {
            blocks: 4,
            features: 32,
            scale: 4,
        }
    }

    pub const fn dm_net_default() -> Self {
        Arch::DmNet {
            res_blocks: 4,
            tail_convs: 5,
            features: 32,
            scale: 4,
        }
    }

    pub const fn discriminator_default() -> Self {
        Arch::Discriminator {
            stages: 3,
            base_features: 16,
        }
    }

    /// Output spatial size for an input of `(h, w)`.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        match *self {
            Arch::SrSmall { scale, .. } => (h * scale, w * scale),
            Arch::Discriminator { .. } => (1, 1),
            _ => (h, w),
        }
    }

    /// Validate an input shape before running a network of this architecture.
    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        let [_, c, h, w] = shape;
        match *self {
            Arch::Custom => return Ok(()),
            _ if c != 3 => return Err(Error::shape("network input channels", 3, c)),
            Arch::DmNet { scale, .. } if h % scale != 0 || w % scale != 0 || h == 0 || w == 0 => {
                return Err(Error::shape(
                    "dm_net input dims",
                    format!("multiples of {scale}"),
                    [h, w],
                ));
            }
            Arch::Discriminator { stages, .. } if h < (1 << stages) || w < (1 << stages) => {
                return Err(Error::shape(
                    "discriminator input dims",
                    format!(">= {}", 1usize << stages),
                    [h, w],
                ));
            }
            _ => {}
        }
        if h == 0 || w == 0 {
            return Err(Error::shape("network input dims", "non-empty", [h, w]));
        }
        Ok(())
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Arch::SrSmall {
                blocks,
                features,
                scale,
            } => write!(f, "sr_small:blocks={blocks},features={features},scale={scale}"),
            Arch::DmNet {
                res_blocks,
                tail_convs,
                features,
                scale,
            } => write!(
                f,
                "dm_net:res_blocks={res_blocks},tail_convs={tail_convs},features={features},scale={scale}"
            ),
            Arch::Discriminator {
                stages,
                base_features,
            } => write!(f, "discriminator:stages={stages},base_features={base_features}"),
            Arch::Custom => f.write_str("custom"),
        }
    }
}

impl FromStr for Arch {
    type Err = Error;

    /// Parses `kind[:key=value,...]`; omitted keys take the desk-scale defaults.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut arch = match kind.trim() {
            "sr_small" => Arch::sr_small_default(),
            "dm_net" => Arch::dm_net_default(),
            "discriminator" => Arch::discriminator_default(),
            "custom" => Arch::Custom,
            other => return Err(Error::invalid(format!("unknown architecture `{other}`"))),
        };
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got `{kv}`")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("`{k}` needs an integer, got `{v}`")))?;
            let slot = match (&mut arch, k.trim()) {
                (Arch::SrSmall { blocks, .. }, "blocks") => blocks,
                (Arch::SrSmall { features, .. }, "features") => features,
                (Arch::SrSmall { scale, .. }, "scale") => scale,
                (Arch::DmNet { res_blocks, .. }, "res_blocks") => res_blocks,
                (Arch::DmNet { tail_convs, .. }, "tail_convs") => tail_convs,
                (Arch::DmNet { features, .. }, "features") => features,
                (Arch::DmNet { scale, .. }, "scale") => scale,
                (Arch::Discriminator { stages, .. }, "stages") => stages,
                (Arch::Discriminator { base_features, .. }, "base_features") => base_features,
                (_, other) => {
                    return Err(Error::invalid(format!("unknown key `{other}` for `{kind}`")))
                }
            };
            *slot = v;
        }
        Ok(arch)
    }
}

/// Incremental node-list builder with positional naming.
struct Builder {
    nodes: Vec<LayerNode>,
    convs: usize,
    dense: usize,
    others: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nodes: Vec::new(),
            convs: 0,
            dense: 0,
            others: 0,
        }
    }

    fn push(&mut self, name: String, kind: LayerKind, input: usize) -> usize {
        self.nodes.push(LayerNode { name, kind, input });
        self.nodes.len()
    }

    fn conv(&mut self, input: usize, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> usize {
        let name = format!("conv{}", self.convs);
        self.convs += 1;
        self.push(
            name,
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding: Padding::Zero,
            },
            input,
        )
    }

    fn dense(&mut self, input: usize, inputs: usize, outputs: usize) -> usize {
        let name = format!("dense{}", self.dense);
        self.dense += 1;
        self.push(name, LayerKind::Dense { inputs, outputs }, input)
    }

    fn op(&mut self, input: usize, kind: LayerKind) -> usize {
        let name = format!("{}{}", kind.label(), self.others);
        self.others += 1;
        self.push(name, kind, input)
    }

    fn res_block(&mut self, input: usize, f: usize) -> usize {
        let a = self.conv(input, f, f, KERNEL, 1);
        let a = self.op(a, LayerKind::Relu);
        let a = self.conv(a, f, f, KERNEL, 1);
        self.op(a, LayerKind::ResidualAdd { source: input })
    }
}

fn check_generator_params(blocks: usize, features: usize, scale: usize) -> Result<()> {
    if blocks < 1 {
        return Err(Error::invalid("generator needs at least one residual block"));
    }
    if features < 4 {
        return Err(Error::invalid(format!("features must be >= 4, got {features}")));
    }
    if scale == 0 || !scale.is_power_of_two() {
        return Err(Error::invalid(format!("scale must be a power of two, got {scale}")));
    }
    Ok(())
}

/// Build a generator network description.
pub fn build_generator(arch: Arch) -> Result<NetworkSpec> {
    let mut b = Builder::new();
    match arch {
        Arch::SrSmall {
            blocks,
            features: f,
            scale,
        } => {
            check_generator_params(blocks, f, scale)?;
            let x = b.conv(0, 3, f, ENTRY_KERNEL, 1);
            let mut x = b.op(x, LayerKind::Relu);
            for _ in 0..blocks {
                x = b.res_block(x, f);
            }
            for _ in 0..scale.trailing_zeros() {
                x = b.op(x, LayerKind::NearestUpsample { factor: 2 });
                x = b.conv(x, f, f, KERNEL, 1);
                x = b.op(x, LayerKind::Relu);
            }
            let out = b.conv(x, f, 3, KERNEL, 1);
            NetworkSpec::new("sr_small", arch, b.nodes, alloc::vec![out])
        }
        Arch::DmNet {
            res_blocks,
            tail_convs,
            features: f,
            scale,
        } => {
            check_generator_params(res_blocks, f, scale)?;
            let x = b.op(0, LayerKind::AvgDownsample { factor: scale });
            let x = b.conv(x, 3, f, ENTRY_KERNEL, 1);
            let mut x = b.op(x, LayerKind::Relu);
            for _ in 0..res_blocks {
                x = b.res_block(x, f);
            }
            let coarse = b.conv(x, f, 3, KERNEL, 1);
            let mut y = b.op(x, LayerKind::NearestUpsample { factor: scale });
            for _ in 0..tail_convs {
                y = b.conv(y, f, f, KERNEL, 1);
                y = b.op(y, LayerKind::Relu);
            }
            let full = b.conv(y, f, 3, KERNEL, 1);
            NetworkSpec::new("dm_net", arch, b.nodes, alloc::vec![coarse, full])
        }
        _ => Err(Error::invalid(format!("`{arch}` is not a generator architecture"))),
    }
}

/// Strided convolutional discriminator ending in a sigmoid probability per item.
pub fn build_discriminator(stages: usize, base_features: usize) -> Result<NetworkSpec> {
    if stages < 2 {
        return Err(Error::invalid(format!("discriminator needs >= 2 stages, got {stages}")));
    }
    if base_features == 0 {
        return Err(Error::invalid("discriminator base_features must be >= 1"));
    }
    let mut b = Builder::new();
    let mut c_in = 3;
    let mut x = 0;
    for s in 0..stages {
        let c_out = base_features << s;
        x = b.conv(x, c_in, c_out, KERNEL, 2);
        x = b.op(x, LayerKind::LeakyRelu { slope: LEAKY_SLOPE });
        c_in = c_out;
    }
    let x = b.op(x, LayerKind::GlobalAvgPool);
    let x = b.dense(x, c_in, 1);
    let out = b.op(x, LayerKind::Sigmoid);
    NetworkSpec::new(
        "discriminator",
        Arch::Discriminator {
            stages,
            base_features,
        },
        b.nodes,
        alloc::vec![out],
    )
}

/// Build any architecture.
pub fn build(arch: Arch) -> Result<NetworkSpec> {
    match arch {
        Arch::Discriminator {
            stages,
            base_features,
        } => build_discriminator(stages, base_features),
        Arch::Custom => Err(Error::invalid("custom networks cannot be built from a descriptor")),
        _ => build_generator(arch),
    }
}

/// He-style init: weights uniform in `±sqrt(6 / fan_in)` (variance `2 / fan_in`),
/// biases zero. Each tensor draws from its own stream keyed by `(seed, name)`,
/// so the result does not depend on parameter order.
pub fn init_weights(spec: NetworkSpec, seed: u64) -> Network {
    let mut net = Network::zeros(spec);
    for (name, t) in net.params.iter_mut() {
        if name.ends_with(".bias") {
            continue;
        }
        let [_, fan_in_c, kh, kw] = t.shape();
        let fan_in = (fan_in_c * kh * kw).max(1) as f32;
        let bound = libm::sqrtf(6.0 / fan_in);
        let mut r = rng::rng(rng::derive_str(seed, name));
        for v in t.data_mut() {
            *v = r.random_range(-bound..bound);
        }
    }
    net
}

/// Weight multiplier for the last conv of each residual branch.
pub const RESIDUAL_INIT_SCALE: f32 = 0.05;
/// Weight multiplier for convs that produce a network output.
pub const HEAD_INIT_SCALE: f32 = 0.1;

/// Shrink the last conv of every residual branch and every output conv, so
/// a fresh generator starts close to its skip paths with small outputs.
pub fn damp_generator_init(net: &mut Network) {
    let nodes = &net.spec.nodes;
    let producer = |value: usize| value.checked_sub(1).map(|i| &nodes[i]);
    let mut scaled: Vec<(String, f32)> = Vec::new();
    for node in nodes {
        if let LayerKind::ResidualAdd { .. } = node.kind {
            if let Some(p) = producer(node.input).filter(|p| matches!(p.kind, LayerKind::Conv2d { .. })) {
                scaled.push((p.weight_name(), RESIDUAL_INIT_SCALE));
            }
        }
    }
    for &o in &net.spec.outputs {
        if let Some(p) = producer(o).filter(|p| matches!(p.kind, LayerKind::Conv2d { .. })) {
            scaled.push((p.weight_name(), HEAD_INIT_SCALE));
        }
    }
    for (name, k) in scaled {
        if let Some(t) = net.params.get_mut(&name) {
            t.scale(k);
        }
    }
}

/// Convenience: build and initialize.
pub fn instantiate(arch: Arch, seed: u64) -> Result<Network> {
    Ok(init_weights(build(arch)?, seed))
}

impl Network {
    /// Index of the full-resolution output (the last declared output).
    pub fn primary_output(&self) -> usize {
        self.spec.outputs.len() - 1
    }

    /// Run and return only the primary output, after validating the input
    /// against the architecture.
    pub fn restore(&self, input: &crate::Tensor) -> Result<crate::Tensor> {
        self.spec.arch.check_input(input.shape())?;
        let mut outs = self.forward(input)?;
        Ok(outs.pop().expect("at least one output"))
    }
}

/// Human-readable summary used in logs.
pub fn describe(spec: &NetworkSpec) -> String {
    format!("{} ({} parameters)", spec.arch, spec.param_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn sr_small_parameter_count_formula() {
        let spec = build_generator(Arch::sr_small_default()).unwrap();
        let f = 32;
        let expect = (75 * f + f) + 4 * 2 * (9 * f * f + f) + 2 * (9 * f * f + f) + (27 * f + 3);
        assert_eq!(spec.param_count(), expect);
        assert_eq!(spec.param_count(), 95_779);
    }

    #[test]
    fn dm_net_counts() {
        let arch = Arch::DmNet {
            res_blocks: 16,
            tail_convs: 20,
            features: 64,
            scale: 4,
        };
        let spec = build_generator(arch).unwrap();
        let adds = spec
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, LayerKind::ResidualAdd { .. }))
            .count();
        assert_eq!(adds, 16);
        // Tail convs sit between the upsample and the final head.
        let up = spec
            .nodes
            .iter()
            .position(|n| matches!(n.kind, LayerKind::NearestUpsample { .. }))
            .unwrap();
        let tail = spec.nodes[up + 1..]
            .iter()
            .filter(|n| matches!(n.kind, LayerKind::Conv2d { .. }))
            .count();
        assert_eq!(tail, 20 + 1);
        let f = 64;
        let expect = (75 * f + f) + 16 * 2 * (9 * f * f + f) + 2 * (27 * f + 3) + 20 * (9 * f * f + f);
        assert_eq!(spec.param_count(), expect);
        assert_eq!(spec.outputs.len(), 2);
    }

    #[test]
    fn discriminator_count() {
        let spec = build_discriminator(3, 16).unwrap();
        let expect = (9 * 3 * 16 + 16) + (9 * 16 * 32 + 32) + (9 * 32 * 64 + 64) + (64 + 1);
        assert_eq!(spec.param_count(), expect);
        assert!(build_discriminator(1, 16).is_err());
    }

    #[test]
    fn invalid_generator_params() {
        assert!(build_generator(Arch::SrSmall { blocks: 0, features: 8, scale: 4 }).is_err());
        assert!(build_generator(Arch::SrSmall { blocks: 1, features: 3, scale: 4 }).is_err());
        assert!(build_generator(Arch::SrSmall { blocks: 1, features: 8, scale: 3 }).is_err());
    }

    #[test]
    fn arch_descriptor_round_trip() {
        for arch in [
            Arch::sr_small_default(),
            Arch::dm_net_default(),
            Arch::discriminator_default(),
            Arch::SrSmall { blocks: 2, features: 8, scale: 2 },
        ] {
            assert_eq!(format!("{arch}").parse::<Arch>().unwrap(), arch);
        }
        assert_eq!("sr_small".parse::<Arch>().unwrap(), Arch::sr_small_default());
        assert!("sr_small:depth=3".parse::<Arch>().is_err());
        assert!("unet".parse::<Arch>().is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = instantiate(Arch::sr_small_default(), 9).unwrap();
        let b = instantiate(Arch::sr_small_default(), 9).unwrap();
        assert_eq!(a, b);
        let c = instantiate(Arch::sr_small_default(), 10).unwrap();
        assert_ne!(a, c);
        for (name, t) in &a.params {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn init_variance_near_he() {
        let node = LayerNode {
            name: "conv0".into(),
            kind: LayerKind::Conv2d {
                in_ch: 64,
                out_ch: 64,
                kernel: 3,
                stride: 1,
                padding: Padding::Zero,
            },
            input: 0,
        };
        let spec = NetworkSpec::new("v", Arch::Custom, alloc::vec![node], alloc::vec![1]).unwrap();
        let target = 2.0 / (64.0 * 9.0);
        for seed in 0..10 {
            let net = init_weights(spec.clone(), seed);
            let w = &net.params["conv0.weight"];
            let mean = w.mean();
            let var = w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / w.len() as f64;
            assert!((var / target - 1.0).abs() < 0.2, "seed {seed}: {var} vs {target}");
        }
    }

    #[test]
    fn shapes_through_architectures() {
        let g = instantiate(Arch::sr_small_default(), 1).unwrap();
        let y = g.restore(&Tensor::zeros([1, 3, 30, 30])).unwrap();
        assert_eq!(y.shape(), [1, 3, 120, 120]);

        let dm = instantiate(Arch::DmNet { res_blocks: 1, tail_convs: 2, features: 8, scale: 4 }, 1).unwrap();
        let outs = dm.forward(&Tensor::zeros([2, 3, 16, 24])).unwrap();
        assert_eq!(outs[0].shape(), [2, 3, 4, 6]);
        assert_eq!(outs[1].shape(), [2, 3, 16, 24]);
        assert!(dm.restore(&Tensor::zeros([1, 3, 18, 24])).is_err());
        assert!(dm.restore(&Tensor::zeros([1, 1, 16, 16])).is_err());

        let d = instantiate(Arch::Discriminator { stages: 3, base_features: 4 }, 1).unwrap();
        let p = d.restore(&Tensor::zeros([32, 3, 16, 16])).unwrap();
        assert_eq!(p.shape(), [32, 1, 1, 1]);
        assert!(d.restore(&Tensor::zeros([1, 3, 4, 16])).is_err());
    }

    #[test]
    fn zero_weights_give_zero_and_half() {
        let g = Network::zeros(build_generator(Arch::sr_small_default()).unwrap());
        let x = Tensor::full([1, 3, 8, 8], 0.7);
        assert!(g.restore(&x).unwrap().data().iter().all(|&v| v == 0.0));
        let d = Network::zeros(build_discriminator(2, 4).unwrap());
        let p = d.restore(&Tensor::full([4, 3, 8, 8], 0.3)).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn damping_touches_residual_tails_and_heads_only() {
        let arch = Arch::DmNet { res_blocks: 2, tail_convs: 1, features: 4, scale: 4 };
        let plain = instantiate(arch, 5).unwrap();
        let mut damped = plain.clone();
        damp_generator_init(&mut damped);
        let scaled: Vec<&str> = plain
            .params
            .iter()
            .filter(|(n, t)| !damped.params[*n].bit_eq(t))
            .map(|(n, _)| n.as_str())
            .collect();
        // entry conv0, blocks conv1..conv4, coarse head conv5, tail conv6, full head conv7
        assert_eq!(scaled, ["conv2.weight", "conv4.weight", "conv5.weight", "conv7.weight"]);
        let (a, b) = (&plain.params["conv2.weight"], &damped.params["conv2.weight"]);
        assert_eq!(b.data()[0], a.data()[0] * RESIDUAL_INIT_SCALE);
        let (a, b) = (&plain.params["conv7.weight"], &damped.params["conv7.weight"]);
        assert_eq!(b.data()[0], a.data()[0] * HEAD_INIT_SCALE);
    }
}
