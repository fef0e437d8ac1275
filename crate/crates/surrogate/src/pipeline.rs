//! The command implementations, usable as a library.

use std::fs;
use std::path::{Path, PathBuf};

use surrogate_core::checkpoint::CheckpointMeta;
use surrogate_core::degrade::{DegradationKind, DegradationSpec};
use surrogate_core::gradcheck::{self, GradcheckOptions, KindReport, CHECK_KINDS};
use surrogate_core::rng;
use surrogate_core::scenes::gen_scene;
use surrogate_core::train::{
    self, Aborted, EvalReport, StageOutcome, TrainConfig, TrainError, Validation,
};
use surrogate_core::{Network, Tensor};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::image::{list_images, read_image, write_image};
use crate::manifest::{build_manifest, write_atomic, Entry, Fractions, Manifest, Role, Split};
use crate::report::{eval_csv, load_checkpoint, metrics_csv, save_checkpoint};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CONFIG_ECHO: &str = "config-echo.json";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub scenes: usize,
    pub size: usize,
    pub seed: u64,
    /// Degradation producing the `synthetic` inputs.
    pub degrade: DegradationKind,
    /// Optional second degradation producing `real` inputs.
    pub real: Option<DegradationKind>,
    /// Extra scenes written only as `unpaired` clean images.
    pub unpaired: usize,
    pub split: Fractions,
    pub out: PathBuf,
}

/// Seed of the random parts of degradation `label` for scene `index`.
pub fn degradation_seed(master: u64, label: &str, index: usize) -> u64 {
    rng::derive(rng::derive_str(master, label), index as u64)
}

/// Generate scenes, degrade them and write images plus a manifest under
/// `out`. The `clean` images are the targets aligned with the synthetic
/// inputs (the scene itself except for moiré synthesis).
pub fn synth(opts: &SynthOptions) -> Result<Manifest> {
    let images = opts.out.join("images");
    let dir = |role: Role| images.join(role.as_str());
    let mut roles = vec![(Role::Clean, dir(Role::Clean)), (Role::Synthetic, dir(Role::Synthetic))];
    if opts.real.is_some() {
        roles.push((Role::Real, dir(Role::Real)));
    }
    if opts.unpaired > 0 {
        roles.push((Role::Unpaired, dir(Role::Unpaired)));
    }
    for (_, d) in &roles {
        create_dir(d)?;
    }
    for i in 0..opts.scenes {
        let scene = gen_scene(opts.seed, i as u64, opts.size)?;
        let name = format!("scene_{i:05}.ppm");
        let spec = DegradationSpec::new(opts.degrade, degradation_seed(opts.seed, "synthetic", i));
        let (degraded, target) = spec.apply(&scene)?;
        write_image(&target, &dir(Role::Clean).join(&name))?;
        write_image(&degraded, &dir(Role::Synthetic).join(&name))?;
        if let Some(kind) = opts.real {
            let spec = DegradationSpec::new(kind, degradation_seed(opts.seed, "real", i));
            let (real, real_target) = spec.apply(&scene)?;
            if !real_target.bit_eq(&target) {
                return Err(Error::Usage(
                    "the real degradation must share the synthetic degradation's target".into(),
                ));
            }
            write_image(&real, &dir(Role::Real).join(&name))?;
        }
    }
    for i in opts.scenes..opts.scenes + opts.unpaired {
        let scene = gen_scene(opts.seed, i as u64, opts.size)?;
        write_image(&scene, &dir(Role::Unpaired).join(format!("scene_{i:05}.ppm")))?;
    }
    let manifest = build_manifest(&roles, opts.split, opts.seed)?;
    manifest.write(&opts.out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Everything the training stages read, in memory.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    /// Stage-1 inputs, paired with `clean`.
    pub synthetic: Vec<Tensor>,
    pub clean: Vec<Tensor>,
    /// Stage-2 inputs and the names their surrogates are stored under.
    pub real: Vec<Tensor>,
    pub real_names: Vec<String>,
    pub unpaired: Vec<Tensor>,
    pub val_inputs: Vec<Tensor>,
    pub val_references: Vec<Tensor>,
}

fn read_all(paths: &[&Path]) -> Result<Vec<Tensor>> {
    paths.iter().map(|p| read_image(p)).collect()
}

impl Dataset {
    /// Load the `train` split (and the `val` split for validation, if
    /// enabled). Stage-1 inputs are synthesized from the clean images with
    /// the configured degradation when the manifest has none.
    pub fn from_manifest(m: &Manifest, cfg: &RunConfig) -> Result<Self> {
        let clean = read_all(&m.files(Role::Clean, Split::Train))?;
        let mut synthetic = read_all(&m.files(Role::Synthetic, Split::Train))?;
        if synthetic.is_empty() && !clean.is_empty() {
            let kind = cfg.synthetic_degradation()?;
            let mut targets = Vec::with_capacity(clean.len());
            for (i, x) in clean.iter().enumerate() {
                let (y, t) = DegradationSpec::new(kind, degradation_seed(m.seed, "synthetic", i)).apply(x)?;
                synthetic.push(y);
                targets.push(t);
            }
            return Ok(Dataset {
                synthetic,
                clean: targets,
                ..Self::stage_two_parts(m, cfg)?
            });
        }
        Ok(Dataset {
            synthetic,
            clean,
            ..Self::stage_two_parts(m, cfg)?
        })
    }

    fn stage_two_parts(m: &Manifest, cfg: &RunConfig) -> Result<Self> {
        let real_paths = m.files(Role::Real, Split::Train);
        let (val_inputs, val_references) = if cfg.data.validation {
            (
                read_all(&m.files(Role::Real, Split::Val))?,
                read_all(&m.files(Role::Clean, Split::Val))?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Dataset {
            real: read_all(&real_paths)?,
            real_names: real_paths.iter().map(|p| file_name(p)).collect(),
            unpaired: read_all(&m.files(Role::Unpaired, Split::Train))?,
            val_inputs,
            val_references,
            ..Default::default()
        })
    }

    fn validation(&self) -> Option<Validation<'_>> {
        (!self.val_inputs.is_empty() && self.val_inputs.len() == self.val_references.len()).then_some(
            Validation {
                inputs: &self.val_inputs,
                references: &self.val_references,
            },
        )
    }

    fn require_stage_one(&self) -> Result<()> {
        if self.clean.is_empty() {
            return Err(Error::Data("stage 1 needs clean training images".into()));
        }
        Ok(())
    }

    fn require_stage_two(&self) -> Result<()> {
        if self.real.is_empty() {
            return Err(Error::Data("stage 2 needs real degraded training inputs".into()));
        }
        if self.unpaired.is_empty() {
            return Err(Error::Data("stage 2 needs an unpaired clean-image set".into()));
        }
        Ok(())
    }
}

/// Which stages a training invocation runs.
#[derive(Debug, Clone)]
pub enum Plan {
    StageOne,
    /// Stage 2 semantics starting from an existing checkpoint; the stage
    /// index is the checkpoint's plus one.
    Continue { g0: PathBuf },
    /// Stage 1 followed by `stages - 1` rounds of stage 2.
    Multi { stages: usize },
}

/// Output layout under the `--out` directory.
#[derive(Debug, Clone)]
pub struct OutputTree {
    pub root: PathBuf,
}

impl OutputTree {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputTree { root: root.into() }
    }

    pub fn checkpoint(&self, stage: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("stage{stage}.sgt"))
    }

    pub fn discriminator(&self, stage: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("stage{stage}-disc.sgt"))
    }

    pub fn last_good(&self, stage: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("stage{stage}-last-good.sgt"))
    }

    pub fn metrics(&self, stage: usize) -> PathBuf {
        self.root.join("metrics").join(format!("stage{stage}.csv"))
    }

    pub fn surrogates(&self, stage: usize) -> PathBuf {
        self.root.join("images").join("surrogates").join(format!("stage{stage}"))
    }

    pub fn config_echo(&self) -> PathBuf {
        self.root.join(CONFIG_ECHO)
    }

    fn create(&self) -> Result<()> {
        for d in ["checkpoints", "metrics", "images"] {
            create_dir(&self.root.join(d))?;
        }
        Ok(())
    }
}

/// Artifacts of one finished stage.
#[derive(Debug, Clone)]
pub struct StageArtifacts {
    pub stage: usize,
    pub generator: Network,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

fn meta(stage: usize, iterations: usize, master: u64) -> CheckpointMeta {
    CheckpointMeta {
        stage: stage as u32,
        iteration: iterations as u64,
        master_seed: master,
    }
}

fn write_metrics(path: &Path, rows: &[train::MetricsRow]) -> Result<()> {
    write_atomic(path, metrics_csv(rows).as_bytes())
}

/// Persist a finished stage, or the last-good state of an aborted one.
fn finish_stage(
    out: &OutputTree,
    stage: usize,
    cfg: &TrainConfig,
    master: u64,
    result: std::result::Result<StageOutcome, TrainError>,
) -> Result<StageArtifacts> {
    match result {
        Ok(o) => {
            save_checkpoint(&o.generator, meta(stage, cfg.iterations, master), &out.checkpoint(stage))?;
            if let Some(d) = &o.discriminator {
                save_checkpoint(d, meta(stage, cfg.iterations, master), &out.discriminator(stage))?;
            }
            write_metrics(&out.metrics(stage), &o.metrics)?;
            Ok(StageArtifacts {
                stage,
                generator: o.generator,
                checkpoint: out.checkpoint(stage),
                metrics: out.metrics(stage),
            })
        }
        Err(TrainError::Aborted(a)) => {
            let Aborted {
                error,
                last_good,
                metrics,
            } = *a;
            let done = metrics.last().map_or(0, |r| r.iter);
            save_checkpoint(&last_good, meta(stage, done, master), &out.last_good(stage))?;
            write_metrics(&out.metrics(stage), &metrics)?;
            Err(Error::Train(TrainError::Aborted(Box::new(Aborted {
                error,
                last_good,
                metrics,
            }))))
        }
        Err(e) => Err(e.into()),
    }
}

fn run_stage_one(cfg: &RunConfig, data: &Dataset, out: &OutputTree) -> Result<StageArtifacts> {
    data.require_stage_one()?;
    let master = cfg.train.master_seed;
    let tc = TrainConfig {
        seed: train::stage_seed(master, 1),
        ..cfg.stage_one()?
    };
    let g0 = train::initial_generator(cfg.arch()?, master)?;
    let result = train::train_stage1(&tc, g0, &data.synthetic, &data.clean, data.validation());
    finish_stage(out, 1, &tc, master, result)
}

/// Generate, store and return the surrogate set for `stage`.
fn surrogates_for(g0: &Network, data: &Dataset, out: &OutputTree, stage: usize, master: u64) -> Result<Vec<Tensor>> {
    let xs = train::generate_surrogates(g0, &data.real)?;
    let dir = out.surrogates(stage);
    create_dir(&dir)?;
    let mut entries = Vec::with_capacity(xs.len());
    for (x, name) in xs.iter().zip(&data.real_names) {
        let stem = Path::new(name).file_stem().unwrap_or_default().to_string_lossy();
        let path = dir.join(format!("{stem}.pfm"));
        write_image(x, &path)?;
        entries.push(Entry {
            role: Role::Surrogate,
            split: Split::Train,
            path,
        });
    }
    Manifest {
        seed: master,
        entries,
    }
    .write(&dir.join("index.tsv"))?;
    Ok(xs)
}

fn run_stage_two(
    cfg: &RunConfig,
    data: &Dataset,
    out: &OutputTree,
    g0: &Network,
    stage: usize,
) -> Result<StageArtifacts> {
    data.require_stage_two()?;
    let master = cfg.train.master_seed;
    let tc = TrainConfig {
        seed: train::stage_seed(master, stage),
        ..cfg.stage_two()?
    };
    let xs = surrogates_for(g0, data, out, stage, master)?;
    let result = train::train_stage2(&tc, g0, &data.real, &xs, &data.unpaired, data.validation());
    finish_stage(out, stage, &tc, master, result)
}

/// Run the planned stages, writing checkpoints, metrics, surrogate sets and
/// the config echo under `out`.
pub fn run_training(cfg: &RunConfig, data: &Dataset, plan: &Plan, out: &Path) -> Result<Vec<StageArtifacts>> {
    cfg.validate()?;
    let out = OutputTree::new(out);
    // Check the plan's prerequisites before any compute.
    let start = match plan {
        Plan::StageOne => {
            data.require_stage_one()?;
            None
        }
        Plan::Continue { g0 } => {
            let (net, meta) = load_checkpoint(g0)?;
            let arch = cfg.arch()?;
            if net.spec.arch != arch {
                return Err(Error::Data(format!(
                    "checkpoint {} holds `{}` but the config asks for `{arch}`",
                    g0.display(),
                    net.spec.arch
                )));
            }
            data.require_stage_two()?;
            Some((net, meta.stage as usize + 1))
        }
        Plan::Multi { stages } => {
            if *stages < 2 {
                return Err(Error::Usage("--multistage needs at least 2 stages".into()));
            }
            data.require_stage_one()?;
            data.require_stage_two()?;
            None
        }
    };
    out.create()?;
    write_atomic(&out.config_echo(), cfg.to_json().as_bytes())?;

    let mut done = Vec::new();
    match (plan, start) {
        (Plan::Continue { .. }, Some((g0, stage))) => {
            done.push(run_stage_two(cfg, data, &out, &g0, stage)?);
        }
        (Plan::Multi { stages }, _) => {
            done.push(run_stage_one(cfg, data, &out)?);
            for s in 2..=*stages {
                let prev = done.last().expect("previous stage").generator.clone();
                done.push(run_stage_two(cfg, data, &out, &prev, s)?);
            }
        }
        _ => done.push(run_stage_one(cfg, data, &out)?),
    }
    Ok(done)
}

/// Restore every image in `input` with the checkpoint at `model`, writing
/// clamped 8-bit results under the same file names in `output`.
pub fn restore(model: &Path, input: &Path, output: &Path) -> Result<usize> {
    let (net, _) = load_checkpoint(model)?;
    let files = list_images(input)?;
    create_dir(output)?;
    for f in &files {
        let y = read_image(f)?;
        let x = train::restore_clamped(&net, &y)?;
        let mut name = PathBuf::from(file_name(f));
        name.set_extension("ppm");
        write_image(&x, &output.join(name))?;
    }
    Ok(files.len())
}

/// PSNR of each image in `a` (restored with `model` first, when given)
/// against the same-named image in `b`. Writes the CSV report.
pub fn evaluate_dirs(a: &Path, b: &Path, model: Option<&Path>, report: &Path) -> Result<EvalReport> {
    let fa = list_images(a)?;
    let fb = list_images(b)?;
    let na: Vec<String> = fa.iter().map(|p| file_name(p)).collect();
    let nb: Vec<String> = fb.iter().map(|p| file_name(p)).collect();
    if na != nb {
        let unmatched: Vec<&str> = na
            .iter()
            .filter(|n| !nb.contains(n))
            .chain(nb.iter().filter(|n| !na.contains(n)))
            .map(String::as_str)
            .collect();
        return Err(Error::Data(format!(
            "{} and {} do not pair up; unmatched files: {}",
            a.display(),
            b.display(),
            unmatched.join(", ")
        )));
    }
    let net = model.map(load_checkpoint).transpose()?.map(|(n, _)| n);
    let mut values = Vec::with_capacity(fa.len());
    for (pa, pb) in fa.iter().zip(&fb) {
        let mut x = read_image(pa)?;
        if let Some(net) = &net {
            x = train::restore_clamped(net, &x)?;
        }
        values.push(train::psnr(&x, &read_image(pb)?)?);
    }
    let r = EvalReport::from_values(values);
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_atomic(report, eval_csv(&na, &r).as_bytes())?;
    Ok(r)
}

/// Gradient checks for the given layer kinds, or all of them.
pub fn run_gradcheck(kinds: Option<&[String]>, seeds: usize, corrupt: f32) -> Result<Vec<KindReport>> {
    let opts = GradcheckOptions {
        corrupt,
        ..Default::default()
    };
    let list: Vec<&str> = match kinds {
        Some(k) => k.iter().map(String::as_str).collect(),
        None => CHECK_KINDS.to_vec(),
    };
    list.into_iter()
        .map(|k| {
            gradcheck::check_kind(k, seeds, opts).map_err(|e| match e {
                surrogate_core::Error::InvalidArgument(m) => {
                    Error::Usage(format!("{m}; known kinds: {}", CHECK_KINDS.join(", ")))
                }
                other => other.into(),
            })
        })
        .collect()
}
