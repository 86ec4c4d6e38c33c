use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morphdet::{DecomposerMode, Extractor};
use morphdet_pipeline::{run_experiment, run_stage, synth_stage, ExperimentConfig, Method, PipelineError, Stage, WeightsSpec};

#[derive(Parser)]
#[command(name = "morphdet", version, about = "Differential morphing-attack detection experiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset
    Synth(Common),
    /// Decompose every record into canonical-frame normals and diffuse image
    Decompose(Common),
    /// Write per-record feature vectors
    Extract(Common),
    /// Train per-camera, per-branch SVMs
    Train(Common),
    /// Choose fusion weights on training scores
    FuseSearch(Common),
    /// Score the test split and write metrics
    Eval(Common),
    /// Render DET plots from summaries
    Report(Common),
    /// Run every stage (generating the dataset first if it is missing)
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment output directory
    #[arg(long)]
    output: Option<PathBuf>,
    /// Dataset manifest (default: <output>/data/manifest.txt)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// proposed | lbp | signed-distance
    #[arg(long)]
    method: Option<Method>,
    /// oracle | synthetic | template
    #[arg(long)]
    decomposer: Option<DecomposerMode>,
    /// builtin | external[:<dir>]
    #[arg(long)]
    extractor: Option<Extractor>,
    /// Canonical-frame normal map used by the template decomposer
    #[arg(long)]
    template: Option<PathBuf>,
    /// search | paper | six comma-separated weights
    #[arg(long)]
    weights: Option<WeightsSpec>,
    #[arg(long)]
    c: Option<f64>,
    /// Select C on the training split
    #[arg(long)]
    tune_c: bool,
    #[arg(long)]
    folds: Option<usize>,
    /// Number of subjects to generate
    #[arg(long)]
    subjects: Option<usize>,
    /// Number of morphs to generate
    #[arg(long)]
    morphs: Option<usize>,
    /// Pass generated passports through the print-scan channel
    #[arg(long)]
    print_scan: bool,
}

impl Common {
    fn into_config(self) -> Result<ExperimentConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::new(self.output.clone().unwrap_or_else(|| PathBuf::from("out"))),
        };
        if let Some(o) = self.output {
            let default_manifest = cfg.output_dir.join("data").join("manifest.txt");
            if cfg.manifest == default_manifest {
                cfg.manifest = o.join("data").join("manifest.txt");
            }
            cfg.output_dir = o;
        }
        if let Some(m) = self.manifest {
            cfg.manifest = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(d) = self.decomposer {
            cfg.decomposer = d;
        }
        if let Some(e) = self.extractor {
            cfg.extractor = e;
        }
        if self.template.is_some() {
            cfg.template = self.template;
        }
        if let Some(w) = self.weights {
            cfg.weights = w;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        cfg.tune_c |= self.tune_c;
        if let Some(f) = self.folds {
            cfg.folds = f;
        }
        if let Some(n) = self.subjects {
            cfg.synth.subjects = n;
        }
        if let Some(n) = self.morphs {
            cfg.synth.morphs = n;
        }
        cfg.synth.print_scan |= self.print_scan;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (stage, common) = match cli.command {
        Command::Synth(c) => (Some(Stage::Synth), c),
        Command::Decompose(c) => (Some(Stage::Decompose), c),
        Command::Extract(c) => (Some(Stage::Extract), c),
        Command::Train(c) => (Some(Stage::Train), c),
        Command::FuseSearch(c) => (Some(Stage::FuseSearch), c),
        Command::Eval(c) => (Some(Stage::Eval), c),
        Command::Report(c) => (Some(Stage::Report), c),
        Command::Run(c) => (None, c),
    };
    let cfg = common.into_config()?;
    match stage {
        Some(s) => run_stage(&cfg, s),
        None => {
            if !cfg.manifest.is_file() {
                synth_stage(&cfg)?;
            }
            let rows = run_experiment(&cfg)?;
            print!("{}", morphdet::evaluation::summary_csv(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
