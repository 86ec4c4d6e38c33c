//! `train`: per-camera, per-branch linear SVMs plus out-of-fold training scores.

use std::collections::HashMap;

use morphdet::evaluation::d_eer_of;
use morphdet::learning::{svm_train, write_model, LinearSvmModel, Samples, SvmParams};
use morphdet::scores::write_scores;
use morphdet::{CameraId, Error, Label, Role, ScoreSet, Split};
use morphdet_synth::derive_seed;

use crate::artifacts::{ensure_parent, Artifacts};
use crate::config::{Branch, ExperimentConfig, C_GRID};
use crate::error::{InStage, Result, Stage};
use crate::pairs::{PairList, RecordStore};
use crate::prepare::open_manifest;

const STAGE: Stage = Stage::Train;
const SEED_DOMAIN: u64 = 0x5_0000;
/// Largest KKT violation accepted at convergence.
pub const KKT_TOLERANCE: f64 = 0.1;
/// Relative per-epoch dual decrease accepted at convergence.
pub const DUAL_TOLERANCE: f64 = 1e-4;
pub const MAX_EPOCHS: usize = 300;

fn svm_params(cfg: &ExperimentConfig, c: f64, camera: CameraId, branch: Branch, fold: usize) -> SvmParams {
    let index = ((camera.slot() as u64) << 16) | ((branch as u64) << 8) | fold as u64;
    SvmParams {
        c,
        seed: derive_seed(cfg.seed, SEED_DOMAIN, index),
        kkt_tolerance: KKT_TOLERANCE,
        tolerance: DUAL_TOLERANCE,
        max_epochs: MAX_EPOCHS,
        ..SvmParams::default()
    }
}

fn subset(x: &Samples<f32>, rows: &[usize]) -> Result<Samples<f32>> {
    let mut data = Vec::with_capacity(rows.len() * x.dim());
    for &i in rows {
        data.extend_from_slice(x.row(i));
    }
    Samples::new(x.dim(), data).in_stage(STAGE)
}

fn score_rows(model: &LinearSvmModel<f32>, x: &Samples<f32>, rows: &[usize]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|&i| model.score(x.row(i)).map(f64::from).in_stage(STAGE))
        .collect()
}

/// Fold of every pair: references (in manifest order) are dealt round-robin
/// into `k` folds so that all comparisons of a passport share one fold.
pub fn reference_folds(pairs: &PairList, k: usize) -> (Vec<usize>, usize) {
    let mut order: HashMap<&str, usize> = HashMap::new();
    for r in &pairs.references {
        let n = order.len();
        order.entry(r.as_str()).or_insert(n);
    }
    let k = k.min(order.len()).max(1);
    (pairs.references.iter().map(|r| order[r.as_str()] % k).collect(), k)
}

/// Scores every pair with a model that never saw its reference.
fn out_of_fold_scores(
    cfg: &ExperimentConfig,
    x: &Samples<f32>,
    y: &[f64],
    folds: &[usize],
    k: usize,
    c: f64,
    camera: CameraId,
    branch: Branch,
) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; y.len()];
    for fold in 0..k {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] == fold);
        let yk: Vec<f64> = kept.iter().map(|&i| y[i]).collect();
        let model = svm_train(&subset(x, &kept)?, &yk, &svm_params(cfg, c, camera, branch, fold + 1))
            .in_stage(STAGE)?;
        for (i, s) in held.iter().zip(score_rows(&model, x, &held)?) {
            scores[*i] = s;
        }
    }
    Ok(scores)
}

fn split_by_label(scores: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut g = Vec::new();
    let mut a = Vec::new();
    for (&s, &t) in scores.iter().zip(y) {
        if t > 0.0 {
            a.push(s);
        } else {
            g.push(s);
        }
    }
    (g, a)
}

pub fn train_stage(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let m = open_manifest(cfg, STAGE)?;
    let art = Artifacts::new(&cfg.output_dir);
    let mut store = RecordStore::new(&art, &cfg.extractor, STAGE);
    for camera in CameraId::ALL {
        let pairs = PairList::new(&m, Split::Train, camera, STAGE)?;
        let y = pairs.targets();
        for (need, what) in [(Label::Genuine, "bona fide"), (Label::Attack, "attack")] {
            if pairs.labels.iter().filter(|&&l| l == need).count() < 2 {
                return Err(Error::Degenerate(format!(
                    "camera {camera}: fewer than two {what} training pairs"
                )))
                .in_stage(STAGE);
            }
        }
        let n_refs = m
            .records_in(Split::Train)
            .filter(|r| r.role == Role::BonafidePassport || r.role == Role::MorphPassport)
            .count();
        let (folds, k) = reference_folds(&pairs, cfg.folds.min(n_refs));
        for &branch in cfg.method.branches() {
            let x = pairs.features(&mut store, branch)?;
            let mut c = cfg.c;
            let mut oof = None;
            if cfg.tune_c {
                let mut best: Option<(morphdet::Rate, f64, Vec<f64>)> = None;
                for &cand in &C_GRID {
                    let s = out_of_fold_scores(cfg, &x, &y, &folds, k, cand, camera, branch)?;
                    let (g, a) = split_by_label(&s, &y);
                    let eer = d_eer_of(&g, &a).in_stage(STAGE)?.eer;
                    if best.as_ref().is_none_or(|b| eer < b.0) {
                        best = Some((eer, cand, s));
                    }
                }
                let (eer, cand, s) = best.expect("non-empty grid");
                log::info!("camera {camera} {branch}: C = {cand} (train D-EER {eer})");
                c = cand;
                oof = Some(s);
            }
            let oof = match oof {
                Some(s) => s,
                None => out_of_fold_scores(cfg, &x, &y, &folds, k, c, camera, branch)?,
            };
            let mut model =
                svm_train(&x, &y, &svm_params(cfg, c, camera, branch, 0)).in_stage(STAGE)?;
            model.extractor_tag = match branch {
                Branch::Reconstruction => cfg.extractor.tag().to_string(),
                other => other.tag().to_string(),
            };
            log::info!(
                "camera {camera} {branch}: {} pairs, dim {}, {} epochs",
                y.len(),
                x.dim(),
                model.meta.epochs
            );
            if model.meta.epochs >= MAX_EPOCHS {
                log::warn!("camera {camera} {branch}: stopped at the {MAX_EPOCHS}-epoch cap");
            }
            let model_path = art.model(cfg.method, camera, branch);
            ensure_parent(&model_path, STAGE)?;
            write_model(&model, &model_path).in_stage(STAGE)?;
            let set = ScoreSet::new(pairs.entries(&oof, branch.tag())).in_stage(STAGE)?;
            let score_path = art.train_scores(cfg.method, camera, branch);
            ensure_parent(&score_path, STAGE)?;
            write_scores(&set, &score_path).in_stage(STAGE)?;
        }
        store.evict_gates(&m);
    }
    Ok(())
}
