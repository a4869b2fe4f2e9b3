//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use maskpar_core::ablation::{architecture_grid, loss_grid, run_ablation, DeskProtocol, Setting};
use maskpar_core::data::{preprocess, synthetic_policy, Sample, SynthSpec};
use maskpar_core::gradcheck::{run_suite, CheckConfig};
use maskpar_core::train::{evaluate, TrainConfig};
use maskpar_core::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::manifest::{load_manifest, Split};
use crate::policies::load_policy;
use crate::report::{self, read_json, write_json};
use crate::run::{train_run, RunConfig};
use crate::{heatmap, png};

#[derive(Debug, Parser)]
#[command(name = "maskpar", version, about = "Multi-task pedestrian attributes with hard-attention masks")]
pub struct Cli {
    /// Overrides the seed of the command's configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Every command runs serially, so results never depend
    /// on this value.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Print per-attribute probabilities and labels for one image.
    Infer(InferArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic dataset with manifest.
    Synth(SynthArgs),
    /// Train a grid of ablation settings on the synthetic protocol.
    Ablate(AblateArgs),
    /// Write before/mask/after activation panels for one image.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Policy JSON, or `peta`, `rap`, `synthetic`.
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run configuration JSON (`{"model": .., "train": ..}`); defaults apply
    /// when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a `last.ckpt` written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random cases per entry.
    #[arg(long, default_value_t = 10)]
    pub cases: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// SynthSpec JSON, or `default`.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Grid JSON, or `architecture`, `loss`, `all`.
    #[arg(long)]
    pub grid: String,
    /// Directory for `ablation.json` and `ablation.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Document accepted by `ablate --grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridFile {
    /// `architecture`, `loss` or `all`; ignored when `settings` is given.
    pub preset: String,
    pub settings: Vec<Setting>,
    pub protocol: DeskProtocol,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for GridFile {
    fn default() -> Self {
        Self {
            preset: "all".into(),
            settings: Vec::new(),
            protocol: DeskProtocol::default(),
            model: ModelConfig::desk_light(),
            train: DeskProtocol::train_config(),
        }
    }
}

impl GridFile {
    pub fn settings(&self) -> Result<Vec<Setting>> {
        if !self.settings.is_empty() {
            return Ok(self.settings.clone());
        }
        preset(&self.preset)
    }
}

fn preset(name: &str) -> Result<Vec<Setting>> {
    match name {
        "architecture" => Ok(architecture_grid()),
        "loss" => Ok(loss_grid()),
        "all" => {
            let mut v = architecture_grid();
            // the all-on row and the weighted-bce loss row are the same run
            v.extend(loss_grid().into_iter().filter(|s| s.name != "weighted-bce"));
            Ok(v)
        }
        other => Err(Error::config(format!("unknown ablation preset '{other}'"))),
    }
}

/// Runs one command. `Ok(false)` means it ran but reported a failure.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    if cli.threads > 1 {
        log::warn!("--threads {} requested; running serially", cli.threads);
    }
    let w = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e));
    match cli.command {
        Command::Train(a) => {
            let policy = load_policy(&a.policy)?;
            let mut cfg: RunConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            cfg.train.validate()?;
            cfg.model.validate()?;
            let data = load_manifest(&a.manifest, &policy)?;
            let resume = a.resume.as_deref().map(checkpoint::load).transpose()?;
            let result = train_run(&policy, &data, &cfg, Some(&a.out), resume)?;
            if let Some(r) = &result.record.final_report {
                w(out, &report::metric_table(r))?;
            }
            w(out, &format!("fingerprint {}\nwrote {}\n", result.record.fingerprint, a.out.display()))?;
            Ok(true)
        }
        Command::Eval(a) => {
            let ck = checkpoint::load(&a.checkpoint)?;
            let data = load_manifest(&a.manifest, ck.model.policy())?;
            let samples = match a.split {
                SplitArg::All => data.samples.clone(),
                SplitArg::Train => data.split(Split::Train),
                SplitArg::Val => data.split(Split::Val),
                SplitArg::Test => data.split(Split::Test),
            };
            let cfg = ck.model.config();
            let processed = crate::run::prepare(&samples, cfg)?;
            let r = evaluate(&ck.model, &processed, 32)?;
            if let Some(p) = &a.json {
                write_json(p, &r)?;
            }
            w(out, &report::metric_table(&r))?;
            Ok(true)
        }
        Command::Infer(a) => {
            let ck = checkpoint::load(&a.checkpoint)?;
            let p = load_single(&ck.model, &a.image, &a.mask)?;
            let (images, masks, _) = maskpar_core::data::collate(&[&p])?;
            let pred = ck.model.predict(&images, &masks)?.remove(0);
            for (i, (prob, label)) in pred.probabilities.iter().zip(&pred.labels).enumerate() {
                let name = ck.model.policy().attribute_name(i).unwrap_or_default();
                w(out, &format!("{name:40} {prob:.4} {label}\n"))?;
            }
            Ok(true)
        }
        Command::Gradcheck(a) => {
            let mut cfg = CheckConfig { cases: a.cases, ..CheckConfig::default() };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let outcomes = run_suite(&cfg)?;
            let mut ok = true;
            for o in &outcomes {
                ok &= o.passed;
                let status = if o.passed { "ok  " } else { "FAIL" };
                w(
                    out,
                    &format!("{status} {:28} max rel. err {:.2e} over {} cases\n", o.name, o.max_rel_error, o.cases),
                )?;
            }
            w(out, &format!("{} entries, tolerance {:.0e}\n", outcomes.len(), cfg.tolerance))?;
            Ok(ok)
        }
        Command::Synth(a) => {
            let mut spec: SynthSpec =
                if a.spec == "default" { default_synth() } else { read_json(Path::new(&a.spec))? };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let files = crate::synth::write_synth(&spec, &a.out)?;
            w(
                out,
                &format!(
                    "wrote {} samples\nmanifest {}\npolicy {}\n",
                    spec.samples,
                    files.manifest.display(),
                    files.policy.display()
                ),
            )?;
            Ok(true)
        }
        Command::Ablate(a) => {
            let grid: GridFile = match a.grid.as_str() {
                name @ ("architecture" | "loss" | "all") => GridFile { preset: name.into(), ..GridFile::default() },
                path => read_json(Path::new(path))?,
            };
            let mut protocol = grid.protocol.clone();
            if let Some(s) = cli.seed {
                protocol.seeds = (s..s + protocol.seeds.len() as u64).collect();
            }
            let (train, test) = protocol.datasets(&grid.model)?;
            let spec = maskpar_core::ablation::AblationSpec {
                settings: grid.settings()?,
                seeds: protocol.seeds.clone(),
                model: grid.model.clone(),
                train: grid.train.clone(),
            };
            let r = run_ablation(&spec, &synthetic_policy(), &train, &test, |s, seed, rep| {
                log::info!("{} seed {seed}: mA {:.2}%", s.name, 100.0 * rep.mean_accuracy);
            })?;
            let table = report::ablation_table(&r);
            if let Some(dir) = &a.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_json(&dir.join("ablation.json"), &r)?;
                std::fs::write(dir.join("ablation.txt"), &table).map_err(|e| Error::io(dir, e))?;
            }
            w(out, &table)?;
            Ok(true)
        }
        Command::Heatmap(a) => {
            let ck = checkpoint::load(&a.checkpoint)?;
            let p = load_single(&ck.model, &a.image, &a.mask)?;
            let h = heatmap::emit_heatmaps(&ck.model, &p, Some(&a.out))?;
            for f in &h.files {
                w(out, &format!("{}\n", f.display()))?;
            }
            Ok(true)
        }
    }
}

/// The dataset `synth --spec default` writes.
pub fn default_synth() -> SynthSpec {
    SynthSpec::new(200, 0.8, 0.3, 0)
}

fn load_single(model: &maskpar_core::Model<f32>, image: &Path, mask: &Path) -> Result<maskpar_core::data::Processed> {
    let (img, msk) = (png::read_image(image)?, png::read_mask(mask)?);
    let labels = vec![0; model.policy().attribute_count()];
    let id = image.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
    let sample = Sample::new(&id, img, msk, labels)?;
    let cfg = model.config();
    let p = preprocess(&sample, cfg.input_size, cfg.mask_grid())?;
    if p.grid.foreground() == 0 && cfg.multiplication_layer {
        log::warn!("the mask leaves no foreground cell; every feature is discarded and the output is a constant");
    }
    Ok(p)
}
