//! Adam, the stage-1 and stage-2 training loops, surrogate generation and
//! PSNR evaluation.
//!
//! Every loop is deterministic given its config: batch composition depends
//! only on `(seed, iteration)` and all random draws come from derived streams.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::loss::{adversarial_loss_batch, discriminator_loss_batch, mse_loss};
use crate::models::{self, Arch};
use crate::layer::Params;
use crate::network::Network;
use crate::ops::avg_down;
use crate::rng::{self, STREAM_BATCH, STREAM_CLEAN, STREAM_INIT_D, STREAM_INIT_G, STREAM_STAGE};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Params = params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Per-element arithmetic is done in `f64`.
/// Parameters missing from `grads` are treated as having zero gradient.
pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    for (name, p) in params.iter() {
        let m = state
            .m
            .get(name)
            .ok_or_else(|| Error::State(alloc::format!("no Adam moments for {name}")))?;
        p.ensure_same_shape(m, "adam_step moments")?;
        if let Some(g) = grads.get(name) {
            p.ensure_same_shape(g, "adam_step gradient")?;
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (name, p) in params.iter_mut() {
        let m = state.m.get_mut(name).expect("checked above");
        let v = state.v.get_mut(name).expect("moments share keys");
        let g = grads.get(name);
        let p = p.data_mut();
        let m = m.data_mut();
        let v = v.data_mut();
        for i in 0..p.len() {
            let gi = g.map_or(0.0, |g| g.data()[i] as f64);
            let mi = cfg.beta1 * m[i] as f64 + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * v[i] as f64 + (1.0 - cfg.beta2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let step = lr * (mi / bc1) / (libm::sqrt(vi / bc2) + cfg.eps);
            p[i] = (p[i] as f64 - step) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub batch: usize,
    pub iterations: usize,
    pub lambda_adv: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Discriminator updates per generator update.
    pub gan_k: usize,
    /// Emit a metrics row every `log_every` iterations (and after the last).
    pub log_every: usize,
    pub discriminator: Arch,
}

impl TrainConfig {
    /// Desk-scale stage-1 schedule.
    pub fn stage_one() -> Self {
        TrainConfig {
            stage: Stage::One,
            lr: 1e-3,
            batch: 8,
            iterations: 2000,
            lambda_adv: 0.0,
            adam: AdamConfig::default(),
            seed: 0,
            gan_k: 1,
            log_every: 100,
            discriminator: Arch::discriminator_default(),
        }
    }

    /// Desk-scale stage-2 schedule: a tenth of the stage-1 iterations.
    pub fn stage_two() -> Self {
        TrainConfig {
            stage: Stage::Two,
            lr: 1e-4,
            iterations: 200,
            lambda_adv: 1e-3,
            log_every: 10,
            ..Self::stage_one()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive and finite"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if self.gan_k == 0 {
            return Err(Error::invalid("gan_k must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every must be at least 1"));
        }
        if !(self.lambda_adv.is_finite() && self.lambda_adv >= 0.0) {
            return Err(Error::invalid("lambda_adv must be non-negative and finite"));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::invalid("adam betas must lie in [0, 1) and eps be positive"));
        }
        if !matches!(self.discriminator, Arch::Discriminator { .. }) {
            return Err(Error::invalid("discriminator arch must be a discriminator"));
        }
        Ok(())
    }
}

/// One logged iteration. `iter` counts generator updates, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_fid: f64,
    pub loss_adv: f64,
    pub loss_disc: f64,
    pub psnr_val: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str = "iter,loss_total,loss_fid,loss_adv,loss_disc,psnr_val";
}

/// Total generator loss as logged: `fid + lambda * adv`.
pub fn total_loss(fid: f64, lambda: f64, adv: f64) -> f64 {
    fid + lambda * adv
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub generator: Network,
    /// Present for stage 2.
    pub discriminator: Option<Network>,
    pub metrics: Vec<MetricsRow>,
}

/// A run stopped on a non-finite loss or parameter. `last_good` holds the
/// generator weights from before the failing update.
#[derive(Debug, Clone)]
pub struct Aborted {
    pub error: Error,
    pub last_good: Network,
    pub metrics: Vec<MetricsRow>,
}

#[derive(Debug, Clone)]
pub enum TrainError {
    /// Rejected before any update ran.
    Invalid(Error),
    Aborted(Box<Aborted>),
}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Invalid(e) => write!(f, "{e}"),
            TrainError::Aborted(a) => write!(f, "training aborted: {}", a.error),
        }
    }
}

impl core::error::Error for TrainError {}

impl TrainError {
    pub fn error(&self) -> &Error {
        match self {
            TrainError::Invalid(e) => e,
            TrainError::Aborted(a) => &a.error,
        }
    }
}

/// Seed for stage `s` (1-based) of a run with `master` seed.
pub fn stage_seed(master: u64, stage: usize) -> u64 {
    rng::derive(rng::derive(master, STREAM_STAGE), stage as u64)
}

/// Freshly initialized generator for a run with `master` seed.
pub fn initial_generator(arch: Arch, master: u64) -> Result<Network> {
    let mut g = models::instantiate(arch, rng::derive(master, STREAM_INIT_G))?;
    models::damp_generator_init(&mut g);
    Ok(g)
}

/// Indices for iteration `iteration`, drawn with replacement.
pub fn batch_indices(seed: u64, stream: u64, iteration: usize, len: usize, batch: usize) -> Vec<usize> {
    let mut r = rng::rng(rng::derive(rng::derive(seed, stream), iteration as u64));
    (0..batch).map(|_| r.random_range(0..len)).collect()
}

fn gather(items: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    let refs: Vec<&Tensor> = idx.iter().map(|&i| &items[i]).collect();
    Tensor::stack(&refs)
}

fn check_pairs(inputs: &[Tensor], targets: &[Tensor], net: &Network) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::shape("training pairs", inputs.len(), targets.len()));
    }
    let arch = net.spec.arch;
    let first = inputs[0].shape();
    for (x, y) in inputs.iter().zip(targets) {
        if x.n() != 1 || x.shape() != first {
            return Err(Error::shape("training input", first, x.shape()));
        }
        arch.check_input(x.shape())?;
        let (h, w) = arch.output_dims(x.h(), x.w());
        let want = [1, x.c(), h, w];
        if arch != Arch::Custom && y.shape() != want {
            return Err(Error::shape("training target", want, y.shape()));
        }
    }
    Ok(())
}

/// Downsampling factor of the coarse output for multiscale networks.
fn coarse_factor(arch: Arch) -> Option<usize> {
    match arch {
        Arch::DmNet { scale, .. } => Some(scale),
        _ => None,
    }
}

/// Fidelity loss over all outputs: one MSE term for the primary output, plus
/// a term against the box-downsampled target for multiscale networks.
fn fidelity(net: &Network, outputs: &[&Tensor], target: &Tensor) -> Result<(f64, Vec<Option<Tensor>>)> {
    let primary = net.primary_output();
    let mut grads: Vec<Option<Tensor>> = (0..outputs.len()).map(|_| None).collect();
    let (mut loss, g) = mse_loss(outputs[primary], target)?;
    grads[primary] = Some(g);
    if let (Some(f), true) = (coarse_factor(net.spec.arch), primary > 0) {
        let coarse = avg_down(target, f)?;
        let (l, g) = mse_loss(outputs[0], &coarse)?;
        loss += l;
        grads[0] = Some(g);
    }
    Ok((loss, grads))
}

fn clamped(t: &Tensor) -> Tensor {
    let mut t = t.clone();
    t.clamp01();
    t
}

fn non_finite(iteration: usize, what: &str) -> Error {
    Error::NonFinite {
        iteration,
        what: what.into(),
    }
}

fn abort(error: Error, last_good: Network, metrics: Vec<MetricsRow>) -> TrainError {
    TrainError::Aborted(Box::new(Aborted {
        error,
        last_good,
        metrics,
    }))
}

fn should_log(cfg: &TrainConfig, iter: usize) -> bool {
    iter % cfg.log_every == 0 || iter == cfg.iterations
}

/// Held-out pairs used for the `psnr_val` column. Without one, the column
/// reports PSNR of the current batch against its training targets.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub inputs: &'a [Tensor],
    pub references: &'a [Tensor],
}

fn psnr_column(net: &Network, val: Option<Validation<'_>>, batch_out: &Tensor, batch_target: &Tensor) -> Result<f64> {
    match val {
        Some(v) => Ok(evaluate(net, v.inputs, v.references)?.mean),
        None => psnr(&clamped(batch_out), batch_target),
    }
}

/// Train `g0` on `(inputs, targets)` pairs by minimizing the fidelity loss.
pub fn train_stage1(
    cfg: &TrainConfig,
    mut g0: Network,
    inputs: &[Tensor],
    targets: &[Tensor],
    val: Option<Validation<'_>>,
) -> core::result::Result<StageOutcome, TrainError> {
    cfg.validate()?;
    if cfg.stage != Stage::One {
        return Err(Error::invalid("train_stage1 needs a stage-one config").into());
    }
    check_pairs(inputs, targets, &g0)?;
    let mut adam = AdamState::new(&g0.params);
    let mut metrics = Vec::new();
    for it in 1..=cfg.iterations {
        let idx = batch_indices(cfg.seed, STREAM_BATCH, it, inputs.len(), cfg.batch);
        let x = gather(inputs, &idx)?;
        let y = gather(targets, &idx)?;
        let tape = g0.forward_tape(&x)?;
        let (fid, grads) = fidelity(&g0, &tape.outputs(), &y)?;
        if !fid.is_finite() {
            return Err(abort(non_finite(it, "fidelity loss"), g0, metrics));
        }
        let g = tape.backward(&g0, &grads)?;
        let before = g0.params.clone();
        adam_step(&mut g0.params, &g.params, &mut adam, cfg.lr, &cfg.adam)?;
        if !g0.all_finite() {
            g0.params = before;
            return Err(abort(non_finite(it, "generator parameters"), g0, metrics));
        }
        if should_log(cfg, it) {
            let out = tape.output(g0.primary_output());
            metrics.push(MetricsRow {
                iter: it,
                loss_total: total_loss(fid, 0.0, 0.0),
                loss_fid: fid,
                loss_adv: 0.0,
                loss_disc: 0.0,
                psnr_val: psnr_column(&g0, val, out, &y)?,
            });
        }
    }
    Ok(StageOutcome {
        generator: g0,
        discriminator: None,
        metrics,
    })
}

/// Surrogate targets: the unclamped primary output of `g0` for each input,
/// one independent single-image forward each.
pub fn generate_surrogates(g0: &Network, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    inputs.iter().map(|y| g0.restore(y)).collect()
}

/// Retrain a copy of `g0` on real inputs against frozen surrogate targets,
/// with a freshly initialized discriminator judging outputs against the
/// unpaired `clean` pool.
pub fn train_stage2(
    cfg: &TrainConfig,
    g0: &Network,
    real: &[Tensor],
    surrogates: &[Tensor],
    clean: &[Tensor],
    val: Option<Validation<'_>>,
) -> core::result::Result<StageOutcome, TrainError> {
    cfg.validate()?;
    if cfg.stage != Stage::Two {
        return Err(Error::invalid("train_stage2 needs a stage-two config").into());
    }
    check_pairs(real, surrogates, g0)?;
    if clean.is_empty() {
        return Err(Error::invalid("unpaired clean set is empty").into());
    }
    let out_shape = surrogates[0].shape();
    if let Some(c) = clean.iter().find(|c| c.shape() != out_shape) {
        return Err(Error::shape("unpaired clean image", out_shape, c.shape()).into());
    }
    let mut g = g0.clone();
    let mut d = models::instantiate(cfg.discriminator, rng::derive(cfg.seed, STREAM_INIT_D))?;
    cfg.discriminator.check_input(out_shape)?;
    let mut adam_g = AdamState::new(&g.params);
    let mut adam_d = AdamState::new(&d.params);
    let primary = g.primary_output();
    let mut metrics = Vec::new();
    for it in 1..=cfg.iterations {
        let idx = batch_indices(cfg.seed, STREAM_BATCH, it, real.len(), cfg.batch);
        let y = gather(real, &idx)?;
        let xs = gather(surrogates, &idx)?;
        let tape_g = g.forward_tape(&y)?;
        let fake = tape_g.output(primary);

        let mut loss_disc = 0.0;
        for k in 0..cfg.gan_k {
            let sub = it * cfg.gan_k + k;
            let cidx = batch_indices(cfg.seed, STREAM_CLEAN, sub, clean.len(), cfg.batch);
            let x = gather(clean, &cidx)?;
            let tape_real = d.forward_tape(&x)?;
            let tape_fake = d.forward_tape(fake)?;
            let (l, g_real, g_fake) = discriminator_loss_batch(tape_real.output(0), tape_fake.output(0))?;
            if !l.is_finite() {
                return Err(abort(non_finite(it, "discriminator loss"), g, metrics));
            }
            let mut grads = tape_real.backward(&d, &[Some(g_real)])?.params;
            let gf = tape_fake.backward(&d, &[Some(g_fake)])?.params;
            for (name, t) in grads.iter_mut() {
                t.add_assign(&gf[name])?;
            }
            adam_step(&mut d.params, &grads, &mut adam_d, cfg.lr, &cfg.adam)?;
            if !d.all_finite() {
                return Err(abort(non_finite(it, "discriminator parameters"), g, metrics));
            }
            loss_disc = l;
        }

        let tape_d = d.forward_tape(fake)?;
        let (adv, g_prob) = adversarial_loss_batch(tape_d.output(0));
        let adv_in = tape_d.backward(&d, &[Some(g_prob)])?.input;
        let (fid, mut out_grads) = fidelity(&g, &tape_g.outputs(), &xs)?;
        let total = total_loss(fid, cfg.lambda_adv, adv);
        if !total.is_finite() {
            return Err(abort(non_finite(it, "generator loss"), g, metrics));
        }
        let lambda = cfg.lambda_adv as f32;
        let gp = out_grads[primary].as_mut().expect("primary gradient");
        for (a, &b) in gp.data_mut().iter_mut().zip(adv_in.data()) {
            *a += lambda * b;
        }
        let grads = tape_g.backward(&g, &out_grads)?;
        let before = g.params.clone();
        adam_step(&mut g.params, &grads.params, &mut adam_g, cfg.lr, &cfg.adam)?;
        if !g.all_finite() {
            g.params = before;
            return Err(abort(non_finite(it, "generator parameters"), g, metrics));
        }
        if should_log(cfg, it) {
            metrics.push(MetricsRow {
                iter: it,
                loss_total: total,
                loss_fid: fid,
                loss_adv: adv,
                loss_disc,
                psnr_val: psnr_column(&g, val, tape_g.output(primary), &xs)?,
            });
        }
    }
    Ok(StageOutcome {
        generator: g,
        discriminator: Some(d),
        metrics,
    })
}

/// Data for a multi-stage run.
#[derive(Debug, Clone, Copy)]
pub struct StageData<'a> {
    pub synthetic_inputs: &'a [Tensor],
    pub clean_targets: &'a [Tensor],
    pub real_inputs: &'a [Tensor],
    pub unpaired_clean: &'a [Tensor],
    pub validation: Option<Validation<'a>>,
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: usize,
    pub outcome: StageOutcome,
    /// Surrogates the stage trained against (none for stage 1).
    pub surrogates: Option<Vec<Tensor>>,
}

/// Stage 1, then `stages - 1` rounds of stage 2, each regenerating surrogates
/// with the previous stage's generator and starting from its weights. Stage
/// `s` runs with seed [`stage_seed`]`(master, s)`.
pub fn train_multistage(
    stage1: &TrainConfig,
    stage2: &TrainConfig,
    stages: usize,
    arch: Arch,
    master: u64,
    data: StageData<'_>,
) -> core::result::Result<Vec<StageRecord>, TrainError> {
    if stages < 2 {
        return Err(Error::invalid("multi-stage training needs at least 2 stages").into());
    }
    let g0 = initial_generator(arch, master)?;
    let cfg1 = TrainConfig {
        seed: stage_seed(master, 1),
        ..stage1.clone()
    };
    let first = train_stage1(&cfg1, g0, data.synthetic_inputs, data.clean_targets, data.validation)?;
    let mut records = alloc::vec![StageRecord {
        stage: 1,
        outcome: first,
        surrogates: None,
    }];
    for s in 2..=stages {
        let prev = &records.last().expect("stage 1 recorded").outcome.generator;
        let xs = generate_surrogates(prev, data.real_inputs)?;
        let cfg = TrainConfig {
            seed: stage_seed(master, s),
            ..stage2.clone()
        };
        let outcome = train_stage2(&cfg, prev, data.real_inputs, &xs, data.unpaired_clean, data.validation)?;
        records.push(StageRecord {
            stage: s,
            outcome,
            surrogates: Some(xs),
        });
    }
    Ok(records)
}

/// `10 log10(1 / mse)` over all pixels and channels; `f64::INFINITY` when
/// the images are identical.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.ensure_same_shape(b, "psnr")?;
    let mut sum = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = (x - y) as f64;
        sum += d * d;
    }
    if sum == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sum / a.len() as f64;
    Ok(-10.0 * libm::log10(mse))
}

/// Primary output clamped to `[0, 1]`.
pub fn restore_clamped(net: &Network, input: &Tensor) -> Result<Tensor> {
    Ok(clamped(&net.restore(input)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub psnr: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

impl EvalReport {
    pub fn from_values(psnr: Vec<f64>) -> Self {
        let n = psnr.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            psnr.iter().sum::<f64>() / n as f64
        };
        let mut sorted = psnr.clone();
        sorted.sort_by(f64::total_cmp);
        let median = match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => sorted[n / 2],
            _ => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
        };
        EvalReport { psnr, mean, median }
    }
}

/// PSNR of the clamped restoration of each input against its reference.
pub fn evaluate(net: &Network, inputs: &[Tensor], references: &[Tensor]) -> Result<EvalReport> {
    if inputs.len() != references.len() {
        return Err(Error::shape("evaluation pairs", inputs.len(), references.len()));
    }
    let values = inputs
        .iter()
        .zip(references)
        .map(|(x, r)| psnr(&restore_clamped(net, x)?, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_values(values))
}
