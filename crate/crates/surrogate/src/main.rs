use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use surrogate::config::RunConfig;
use surrogate::manifest::{Fractions, Manifest};
use surrogate::pipeline::{self, Dataset, Plan, SynthOptions};
use surrogate::{Error, Result};
use surrogate_core::degrade::DegradationKind;

#[derive(Parser)]
#[command(name = "surrogate", version, about = "Two-stage restoration training with surrogate ground truth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural scenes, degrade them and write a dataset manifest.
    Synth {
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value_t = 48)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Degradation for the synthetic inputs, e.g. `bicubic4`,
        /// `pseudo_real:blur=1.2`, `moire:ss=6`.
        #[arg(long)]
        degrade: String,
        /// Optional degradation for a second, "real" input set.
        #[arg(long)]
        real: Option<String>,
        /// Extra scenes stored only as unpaired clean images.
        #[arg(long, default_value_t = 0)]
        unpaired: usize,
        /// Train, validation and test fractions.
        #[arg(long, default_value = "1,0,0")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train stage 1, continue with stage 2 from a checkpoint, or run several stages.
    #[command(group(ArgGroup::new("plan").required(true).args(["stage", "multistage"])))]
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        stage: Option<u32>,
        /// Checkpoint to start stage 2 from.
        #[arg(long)]
        g0: Option<PathBuf>,
        #[arg(long)]
        multistage: Option<usize>,
        /// Output directory; overrides the config's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Restore every image in a directory with a checkpoint.
    Restore {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR of same-named images in two directories.
    Eval {
        #[arg(long, num_args = 2, value_names = ["DIR_A", "DIR_B"])]
        pairs: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Restore the images of DIR_A with this checkpoint before scoring.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Finite-difference gradient checks of every layer kind and loss.
    #[command(group(ArgGroup::new("which").required(true).args(["all", "layer"])))]
    Gradcheck {
        #[arg(long)]
        all: bool,
        #[arg(long)]
        layer: Vec<String>,
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        /// Scale analytic gradients by this factor (test hook).
        #[arg(long, hide = true, default_value_t = 1.0)]
        corrupt: f32,
    },
}

fn parse_kind(s: &str) -> Result<DegradationKind> {
    s.parse().map_err(|e| Error::Usage(format!("bad degradation `{s}`: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            scenes,
            size,
            seed,
            degrade,
            real,
            unpaired,
            split,
            out,
        } => {
            if scenes == 0 || size == 0 || size % 4 != 0 {
                return Err(Error::Usage("--scenes must be positive and --size a positive multiple of 4".into()));
            }
            let opts = SynthOptions {
                scenes,
                size,
                seed,
                degrade: parse_kind(&degrade)?,
                real: real.as_deref().map(parse_kind).transpose()?,
                unpaired,
                split: split.parse::<Fractions>()?,
                out,
            };
            let m = pipeline::synth(&opts)?;
            println!("wrote {} manifest entries to {}", m.entries.len(), opts.out.display());
        }
        Command::Train {
            config,
            stage,
            g0,
            multistage,
            out,
        } => {
            let plan = match (stage, multistage, g0) {
                (Some(1), None, None) => Plan::StageOne,
                (Some(1), None, Some(_)) => return Err(Error::Usage("--g0 only applies to --stage 2".into())),
                (Some(_), None, Some(g0)) => Plan::Continue { g0 },
                (Some(_), None, None) => {
                    return Err(Error::Usage("--stage 2 requires a stage-1 checkpoint via --g0".into()))
                }
                (None, Some(stages), None) => Plan::Multi { stages },
                _ => return Err(Error::Usage("--multistage cannot be combined with --stage or --g0".into())),
            };
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            let manifest = Manifest::read(&cfg.data.manifest)?;
            let data = Dataset::from_manifest(&manifest, &cfg)?;
            for a in pipeline::run_training(&cfg, &data, &plan, &out)? {
                println!("stage {}: {}", a.stage, a.checkpoint.display());
            }
        }
        Command::Restore { model, input, out } => {
            let n = pipeline::restore(&model, &input, &out)?;
            println!("restored {n} images into {}", out.display());
        }
        Command::Eval { pairs, report, model } => {
            let r = pipeline::evaluate_dirs(&pairs[0], &pairs[1], model.as_deref(), &report)?;
            println!("{} images: mean {:.4} dB, median {:.4} dB", r.psnr.len(), r.mean, r.median);
        }
        Command::Gradcheck {
            all,
            layer,
            seeds,
            corrupt,
        } => {
            let kinds = (!all).then_some(layer);
            let reports = pipeline::run_gradcheck(kinds.as_deref(), seeds, corrupt)?;
            let mut failed = Vec::new();
            for r in &reports {
                let status = if r.passed { "PASS" } else { "FAIL" };
                println!("{:<20} seeds={:<4} max_rel_error={:.3e} {status}", r.kind, r.seeds, r.max_rel_error);
                if !r.passed {
                    failed.push(r.kind);
                }
            }
            if !failed.is_empty() {
                return Err(Error::GradcheckFailed(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
