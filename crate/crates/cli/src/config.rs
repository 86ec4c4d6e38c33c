//! Experiment configuration: TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use morphdet::learning::renormalize;
use morphdet::{DecomposerMode, Extractor, FusionWeights};
use serde::Deserialize;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    Lbp,
    SignedDistance,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Lbp, Method::SignedDistance];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Lbp => "lbp",
            Method::SignedDistance => "signed-distance",
        }
    }

    /// Score branches fused at the feature level, in weight order.
    pub fn branches(self) -> &'static [Branch] {
        match self {
            Method::Proposed => &[Branch::Reconstruction, Branch::Normal],
            Method::Lbp => &[Branch::Lbp],
            Method::SignedDistance => &[Branch::SignedDistance],
        }
    }

    /// Label used in reports; baselines run on the linear SVM.
    pub fn report_label(self) -> String {
        match self {
            Method::Proposed => "proposed".into(),
            other => format!("{} (linear-SVM variant)", other.name()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown method {s:?}")))
    }
}

/// One classifier input of a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Reconstruction,
    Normal,
    Lbp,
    SignedDistance,
}

impl Branch {
    pub fn tag(self) -> &'static str {
        match self {
            Branch::Reconstruction => "reconstruction",
            Branch::Normal => "normal",
            Branch::Lbp => "lbp",
            Branch::SignedDistance => "signed-distance",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightsSpec {
    Search,
    Paper,
    Fixed(FusionWeights),
}

impl FromStr for WeightsSpec {
    type Err = PipelineError;
    /// `search`, `paper`, or six comma-separated weights (two feature, four
    /// camera); each group is renormalized to sum to one.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "search" => Ok(WeightsSpec::Search),
            "paper" => Ok(WeightsSpec::Paper),
            list => {
                let values = list
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| PipelineError::Config(format!("weights {list:?}: {e}")))?;
                WeightsSpec::from_values(&values)
            }
        }
    }
}

impl WeightsSpec {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() != 6 {
            return Err(PipelineError::Config(format!(
                "expected 6 weights (2 feature + 4 camera), got {}",
                values.len()
            )));
        }
        let bad = |e: morphdet::Error| PipelineError::Config(e.to_string());
        let f = renormalize(&values[..2]).map_err(bad)?;
        let c = renormalize(&values[2..]).map_err(bad)?;
        FusionWeights::new([f[0], f[1]], [c[0], c[1], c[2], c[3]])
            .map(WeightsSpec::Fixed)
            .map_err(bad)
    }
}

/// Dataset generation settings used by the `synth` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub subjects: usize,
    pub morphs: usize,
    pub print_scan: bool,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            subjects: morphdet_synth::dataset::DEFAULT_SUBJECTS,
            morphs: morphdet_synth::dataset::DEFAULT_MORPHS,
            print_scan: false,
        }
    }
}

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_C: f64 = 1.0;
pub const C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub method: Method,
    pub decomposer: DecomposerMode,
    pub extractor: Extractor,
    /// Normal-map FMAP in the canonical frame for template fitting; a
    /// built-in ellipsoidal head is used when absent.
    pub template: Option<PathBuf>,
    pub c: f64,
    pub tune_c: bool,
    pub weights: WeightsSpec,
    pub seed: u64,
    /// Reference-grouped folds for out-of-fold training scores.
    pub folds: usize,
    pub synth: SynthSettings,
}

impl ExperimentConfig {
    /// Defaults rooted at `output_dir`, with the dataset under `data/`.
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        let output_dir = output_dir.into();
        ExperimentConfig {
            manifest: output_dir.join("data").join("manifest.txt"),
            output_dir,
            method: Method::Proposed,
            decomposer: DecomposerMode::SyntheticGroundTruth,
            extractor: Extractor::Builtin,
            template: None,
            c: DEFAULT_C,
            tune_c: false,
            weights: WeightsSpec::Search,
            seed: morphdet_synth::dataset::DEFAULT_SEED,
            folds: DEFAULT_FOLDS,
            synth: SynthSettings::default(),
        }
    }

    /// Directory the `synth` stage writes the dataset into.
    pub fn data_dir(&self) -> PathBuf {
        self.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(PipelineError::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.folds < 2 {
            return Err(PipelineError::Config(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        Ok(())
    }

    /// Parses a TOML config; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let output_dir = resolve(raw.output_dir.unwrap_or_else(|| PathBuf::from("out")));
        let mut cfg = ExperimentConfig::new(output_dir);
        if let Some(m) = raw.manifest {
            cfg.manifest = resolve(m);
        }
        if let Some(m) = raw.method {
            cfg.method = m.parse()?;
        }
        if let Some(d) = raw.decomposer {
            cfg.decomposer = d.parse().map_err(|e: morphdet::Error| PipelineError::Config(e.to_string()))?;
        }
        if let Some(e) = raw.extractor {
            cfg.extractor = e.parse().map_err(|e: morphdet::Error| PipelineError::Config(e.to_string()))?;
        }
        cfg.template = raw.template.map(resolve);
        if let Some(c) = raw.c {
            cfg.c = c;
        }
        if let Some(t) = raw.tune_c {
            cfg.tune_c = t;
        }
        if let Some(w) = raw.weights {
            cfg.weights = match w {
                RawWeights::Named(s) => s.parse()?,
                RawWeights::Values(v) => WeightsSpec::from_values(&v)?,
            };
        }
        if let Some(s) = raw.seed {
            cfg.seed = s;
        }
        if let Some(f) = raw.folds {
            cfg.folds = f;
        }
        if let Some(s) = raw.synth {
            if let Some(n) = s.subjects {
                cfg.synth.subjects = n;
            }
            if let Some(n) = s.morphs {
                cfg.synth.morphs = n;
            }
            if let Some(p) = s.print_scan {
                cfg.synth.print_scan = p;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentConfig::from_toml(&text, base)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    manifest: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    method: Option<String>,
    decomposer: Option<String>,
    extractor: Option<String>,
    template: Option<PathBuf>,
    c: Option<f64>,
    tune_c: Option<bool>,
    weights: Option<RawWeights>,
    seed: Option<u64>,
    folds: Option<usize>,
    synth: Option<RawSynth>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawWeights {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    subjects: Option<usize>,
    morphs: Option<usize>,
    print_scan: Option<bool>,
}
