//! `fuse-search` and `eval`: score normalization, feature- and camera-level
//! fusion, metrics.

use std::fmt::Write as _;
use std::fs;

use morphdet::evaluation::{
    d_eer_of, det_curve, metrics, rate_to_f64, summary_csv, write_text, SummaryRow,
};
use morphdet::learning::fusion::{simplex_grid, SEARCH_STEPS};
use morphdet::learning::{greedy_weight_search, read_model, FusionWeights, LinearSvmModel, MinMax};
use morphdet::scores::{read_scores, write_scores};
use morphdet::{CameraId, Error, Label, ScoreEntry, ScoreSet, Split};

use crate::artifacts::{ensure_parent, require, Artifacts};
use crate::config::{ExperimentConfig, Method, WeightsSpec};
use crate::error::{InStage, PipelineError, Result, Stage};
use crate::pairs::{cross_camera_rows, PairList, RecordStore};
use crate::prepare::open_manifest;

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Fusion weights of one method: one per branch, one per camera.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodWeights {
    pub feature: Vec<f64>,
    pub camera: [f64; 4],
}

fn check_group(w: &[f64], what: &str) -> morphdet::Result<()> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::Validation(format!("{what} weights {w:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

impl MethodWeights {
    pub fn new(feature: Vec<f64>, camera: [f64; 4]) -> morphdet::Result<Self> {
        check_group(&feature, "feature")?;
        check_group(&camera, "camera")?;
        if feature.len() == 2 {
            FusionWeights::new([feature[0], feature[1]], camera)?;
        }
        Ok(MethodWeights { feature, camera })
    }

    fn fixed(method: Method, w: &FusionWeights) -> Self {
        let feature = if method.branches().len() == 2 {
            w.feature().to_vec()
        } else {
            vec![1.0]
        };
        MethodWeights {
            feature,
            camera: w.camera(),
        }
    }

    pub fn to_text(&self) -> String {
        let join = |w: &[f64]| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        format!("feature {}\ncamera {}\n", join(&self.feature), join(&self.camera))
    }

    pub fn parse(text: &str) -> morphdet::Result<Self> {
        let mut feature = None;
        let mut camera = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let values = it
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    context: "weights file".into(),
                    message: e.to_string(),
                })?;
            match key {
                "feature" => feature = Some(values),
                "camera" => camera = Some(values),
                other => {
                    return Err(Error::Parse {
                        context: "weights file".into(),
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        let missing = |k: &str| Error::Parse {
            context: "weights file".into(),
            message: format!("missing {k} line"),
        };
        let feature = feature.ok_or_else(|| missing("feature"))?;
        let camera = camera.ok_or_else(|| missing("camera"))?;
        let camera: [f64; 4] = camera.try_into().map_err(|v: Vec<f64>| {
            Error::Validation(format!("expected 4 camera weights, got {}", v.len()))
        })?;
        MethodWeights::new(feature, camera)
    }
}

/// Training scores of every (camera, branch), checked against the protocol.
struct TrainScores {
    lists: Vec<PairList>,
    /// `raw[camera][branch][pair]`.
    raw: Vec<Vec<Vec<f64>>>,
    norms: Vec<Vec<MinMax>>,
}

fn load_train_scores(
    cfg: &ExperimentConfig,
    m: &morphdet::DatasetManifest,
    art: &Artifacts,
    stage: Stage,
) -> Result<TrainScores> {
    let mut lists = Vec::new();
    let mut raw = Vec::new();
    let mut norms = Vec::new();
    for camera in CameraId::ALL {
        let list = PairList::new(m, Split::Train, camera, stage)?;
        let mut per_branch = Vec::new();
        let mut per_norm = Vec::new();
        for &branch in cfg.method.branches() {
            let path = art.train_scores(cfg.method, camera, branch);
            require(&path, &format!("camera {camera} {branch} training scores"), stage, Stage::Train)?;
            let set = read_scores(&path).in_stage(stage)?;
            let matches = set.entries.len() == list.len()
                && set.entries.iter().enumerate().all(|(i, e)| {
                    e.reference_id == list.references[i] && e.probe_id == list.probes[i]
                });
            if !matches {
                return Err(PipelineError::Core {
                    stage,
                    source: Error::Validation(format!(
                        "{} does not match the training protocol; rerun the train stage",
                        path.display()
                    )),
                });
            }
            let scores: Vec<f64> = set.entries.iter().map(|e| e.score).collect();
            per_norm.push(MinMax::fit(&scores).in_stage(stage)?);
            per_branch.push(scores);
        }
        lists.push(list);
        raw.push(per_branch);
        norms.push(per_norm);
    }
    Ok(TrainScores { lists, raw, norms })
}

fn feature_fused(norms: &[MinMax], raw: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    (0..raw[0].len())
        .map(|i| {
            raw.iter()
                .zip(norms)
                .zip(w)
                .map(|((s, n), wb)| wb * n.apply(s[i]))
                .sum()
        })
        .collect()
}

/// Feature weights shared by every camera: the grid point whose fused
/// training scores have the lowest mean per-camera D-EER. Scores are only
/// compared within a camera, where one normalization applies.
fn shared_feature_weights(ts: &TrainScores, n_branches: usize) -> Result<Vec<f64>> {
    const STAGE: Stage = Stage::FuseSearch;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for w in simplex_grid(n_branches, SEARCH_STEPS) {
        let mut total = 0.0;
        for (c, list) in ts.lists.iter().enumerate() {
            let fused = feature_fused(&ts.norms[c], &ts.raw[c], &w);
            let (mut g, mut a) = (Vec::new(), Vec::new());
            for (s, l) in fused.iter().zip(&list.labels) {
                match l {
                    Label::Genuine => g.push(*s),
                    Label::Attack => a.push(*s),
                }
            }
            total += rate_to_f64(d_eer_of(&g, &a).in_stage(STAGE)?.eer);
        }
        let mean = total / ts.lists.len() as f64;
        if best.as_ref().is_none_or(|b| mean < b.0) {
            best = Some((mean, w));
        }
    }
    let (mean, w) = best.expect("grid is non-empty");
    log::info!("feature weights {w:?} (mean train D-EER {mean:.4})");
    Ok(w)
}

/// Chooses (or fixes) the fusion weights from out-of-fold training scores.
pub fn fuse_search_stage(cfg: &ExperimentConfig) -> Result<MethodWeights> {
    const STAGE: Stage = Stage::FuseSearch;
    let m = open_manifest(cfg, STAGE)?;
    let art = Artifacts::new(&cfg.output_dir);
    let weights = match &cfg.weights {
        WeightsSpec::Paper => MethodWeights::fixed(cfg.method, &FusionWeights::paper()),
        WeightsSpec::Fixed(w) => MethodWeights::fixed(cfg.method, w),
        WeightsSpec::Search => {
            let ts = load_train_scores(cfg, &m, &art, STAGE)?;
            let n_branches = cfg.method.branches().len();
            let feature = if n_branches == 1 {
                vec![1.0]
            } else {
                shared_feature_weights(&ts, n_branches)?
            };
            let per_camera: Vec<Vec<f64>> = (0..4)
                .map(|c| feature_fused(&ts.norms[c], &ts.raw[c], &feature))
                .collect();
            let rows = cross_camera_rows(&m, &ts.lists);
            let branches: Vec<Vec<f64>> = (0..4)
                .map(|c| rows.iter().map(|r| per_camera[c][r[c]]).collect())
                .collect();
            let labels: Vec<Label> = rows.iter().map(|r| ts.lists[0].labels[r[0]]).collect();
            let found = greedy_weight_search(&branches, &labels).in_stage(STAGE)?;
            log::info!("camera weights {:?} (train D-EER {})", found.weights, found.eer);
            let camera = [found.weights[0], found.weights[1], found.weights[2], found.weights[3]];
            MethodWeights::new(feature, camera).in_stage(STAGE)?
        }
    };
    let path = art.weights(cfg.method);
    ensure_parent(&path, STAGE)?;
    write_text(&path, &weights.to_text()).in_stage(STAGE)?;
    Ok(weights)
}

fn write_det(art: &Artifacts, method: Method, label: &str, set: &ScoreSet, stage: Stage) -> Result<()> {
    let det = det_curve(set).in_stage(stage)?;
    det.check_monotone().in_stage(stage)?;
    let path = art.det(method, label);
    ensure_parent(&path, stage)?;
    write_text(&path, &det.to_csv()).in_stage(stage)
}

/// Scores the test split, fuses, and writes score CSVs, DET CSVs and the
/// summary. Returns the summary rows (cameras 1–4, then fused).
pub fn eval_stage(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    const STAGE: Stage = Stage::Eval;
    let m = open_manifest(cfg, STAGE)?;
    let art = Artifacts::new(&cfg.output_dir);
    let mut models: Vec<Vec<LinearSvmModel<f32>>> = Vec::new();
    for camera in CameraId::ALL {
        let mut row = Vec::new();
        for &branch in cfg.method.branches() {
            let path = art.model(cfg.method, camera, branch);
            require(&path, &format!("camera {camera} {branch} model"), STAGE, Stage::Train)?;
            row.push(read_model(&path).in_stage(STAGE)?);
        }
        models.push(row);
    }
    let weights_path = art.weights(cfg.method);
    require(&weights_path, "fusion weights", STAGE, Stage::FuseSearch)?;
    let text = fs::read_to_string(&weights_path)
        .map_err(|e| Error::Io {
            path: weights_path.clone(),
            source: e,
        })
        .in_stage(STAGE)?;
    let weights = MethodWeights::parse(&text).in_stage(STAGE)?;
    if weights.feature.len() != cfg.method.branches().len() {
        return Err(PipelineError::Core {
            stage: STAGE,
            source: Error::Validation(format!(
                "{} holds {} feature weights but {} has {} branches",
                weights_path.display(),
                weights.feature.len(),
                cfg.method,
                cfg.method.branches().len()
            )),
        });
    }
    let ts = load_train_scores(cfg, &m, &art, STAGE)?;

    let mut store = RecordStore::new(&art, &cfg.extractor, STAGE);
    let mut rows = Vec::new();
    let mut lists = Vec::new();
    let mut fused_per_camera = Vec::new();
    for (c, camera) in CameraId::ALL.into_iter().enumerate() {
        let list = PairList::new(&m, Split::Test, camera, STAGE)?;
        let mut raw = Vec::new();
        for (b, &branch) in cfg.method.branches().iter().enumerate() {
            let x = list.features(&mut store, branch)?;
            let scores: Vec<f64> = x
                .rows()
                .map(|r| models[c][b].score(r).map(f64::from))
                .collect::<morphdet::Result<_>>()
                .in_stage(STAGE)?;
            let set = ScoreSet::new(list.entries(&scores, branch.tag())).in_stage(STAGE)?;
            let path = art.test_scores(cfg.method, camera, branch);
            ensure_parent(&path, STAGE)?;
            write_scores(&set, &path).in_stage(STAGE)?;
            raw.push(scores);
        }
        store.evict_gates(&m);
        let fused = feature_fused(&ts.norms[c], &raw, &weights.feature);
        let set = ScoreSet::new(list.entries(&fused, "fused")).in_stage(STAGE)?;
        write_scores(&set, art.test_camera_fused(cfg.method, camera)).in_stage(STAGE)?;
        write_det(&art, cfg.method, &camera.to_string(), &set, STAGE)?;
        rows.push(SummaryRow {
            method: cfg.method.name().to_string(),
            camera: camera.to_string(),
            metrics: metrics(&set).in_stage(STAGE)?,
        });
        lists.push(list);
        fused_per_camera.push(fused);
    }

    let cross = cross_camera_rows(&m, &lists);
    let entries: Vec<ScoreEntry> = cross
        .iter()
        .map(|r| {
            let score = (0..4).map(|c| weights.camera[c] * fused_per_camera[c][r[c]]).sum();
            ScoreEntry {
                probe_id: lists[0].probes[r[0]].clone(),
                reference_id: lists[0].references[r[0]].clone(),
                camera: None,
                label: lists[0].labels[r[0]],
                feature_tag: "fused".into(),
                score,
            }
        })
        .collect();
    let set = ScoreSet::new(entries).in_stage(STAGE)?;
    write_scores(&set, art.test_fused(cfg.method)).in_stage(STAGE)?;
    write_det(&art, cfg.method, "fused", &set, STAGE)?;
    rows.push(SummaryRow {
        method: cfg.method.name().to_string(),
        camera: "fused".into(),
        metrics: metrics(&set).in_stage(STAGE)?,
    });
    write_text(art.summary(cfg.method), &summary_csv(&rows)).in_stage(STAGE)?;
    let mut log_line = String::new();
    for r in &rows {
        let _ = write!(log_line, " {}={}", r.camera, morphdet::evaluation::format_rate(r.metrics.eer));
    }
    log::info!("{} test D-EER:{log_line}", cfg.method);
    Ok(rows)
}
