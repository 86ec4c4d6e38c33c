//! `decompose` and `extract`: per-record work in the canonical frame.

use std::path::PathBuf;

use morphdet::baselines::lbp_feature;
use morphdet::features::{
    builtin_descriptor, quantize_normals, read_embedding, write_embedding, write_quantized,
    EXTERNAL_DIM,
};
use morphdet::geometry::{align_transform, read_landmarks, warp};
use morphdet::manifest::load_manifest;
use morphdet::raster::{load_image, read_fmap, write_fmap};
use morphdet::shading::{decompose, diffuse_reconstruct, template_fit};
use morphdet::{
    CanonicalFrame, DatasetManifest, DecomposerMode, Embedding, Extractor, LandmarkSet, NormalMap,
    Raster, Record, SimilarityTransform,
};

use crate::artifacts::{ensure_parent, require, Artifacts};
use crate::config::{Branch, ExperimentConfig, Method};
use crate::error::{InStage, Result, Stage};

pub fn open_manifest(cfg: &ExperimentConfig, stage: Stage) -> Result<DatasetManifest> {
    require(&cfg.manifest, "dataset manifest", stage, Stage::Synth)?;
    load_manifest(&cfg.manifest).in_stage(stage)
}

/// A record's image (luminance) and landmarks, with the transform onto the
/// canonical frame.
pub struct Placed {
    pub image: Raster<f64>,
    pub landmarks: LandmarkSet<f64>,
    pub transform: SimilarityTransform<f64>,
}

pub fn place(m: &DatasetManifest, r: &Record, stage: Stage) -> Result<Placed> {
    let image = load_image(m.resolve(&r.image_path)).in_stage(stage)?.cast::<f64>();
    let image = if image.channels() == 1 { image } else { image.luminance() };
    let landmarks: LandmarkSet<f64> = read_landmarks(m.resolve(&r.landmarks_path)).in_stage(stage)?;
    let transform = align_transform(&landmarks, &CanonicalFrame::default()).in_stage(stage)?;
    Ok(Placed {
        image,
        landmarks,
        transform,
    })
}

fn canonical_size() -> (usize, usize) {
    let c = CanonicalFrame::default();
    (c.width, c.height)
}

/// Ellipsoidal head in the canonical frame, used when no template is given.
pub fn builtin_template() -> NormalMap<f64> {
    let (w, h) = canonical_size();
    let canon = CanonicalFrame::default();
    let eye_dist = canon.right_eye[0] - canon.left_eye[0];
    let center = [
        0.5 * (canon.left_eye[0] + canon.right_eye[0]),
        canon.left_eye[1] + 0.45 * eye_dist,
    ];
    let radii = [1.1 * eye_dist, 1.45 * eye_dist];
    let mut data = Vec::with_capacity(w * h * 3);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let u = (x as f64 - center[0]) / radii[0];
            let v = (y as f64 - center[1]) / radii[1];
            let r2 = u * u + v * v;
            if r2 < 0.98 {
                let z = (1.0 - r2).sqrt();
                // Gradient of the implicit surface, scaled back to pixels.
                let n = [u / radii[0], v / radii[1], z / radii[0].min(radii[1])];
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                data.extend(n.map(|c| c / len));
                mask.push(true);
            } else {
                data.extend([0.0; 3]);
                mask.push(false);
            }
        }
    }
    NormalMap::new(Raster::new(w, h, 3, data, mask).expect("finite template"))
        .expect("unit normals")
}

fn load_template(cfg: &ExperimentConfig, stage: Stage) -> Result<NormalMap<f64>> {
    match &cfg.template {
        None => Ok(builtin_template()),
        Some(p) => NormalMap::new(read_fmap(p).in_stage(stage)?).in_stage(stage),
    }
}

/// Writes each record's canonical-frame diffuse reconstruction and quantized
/// normal map. Only the proposed method uses decompositions.
pub fn decompose_stage(cfg: &ExperimentConfig) -> Result<()> {
    const STAGE: Stage = Stage::Decompose;
    if cfg.method != Method::Proposed {
        log::info!("{} does not use decompositions; nothing to do", cfg.method);
        return Ok(());
    }
    let m = open_manifest(cfg, STAGE)?;
    let art = Artifacts::new(&cfg.output_dir);
    let template = if cfg.decomposer == DecomposerMode::TemplateFit {
        Some(load_template(cfg, STAGE)?)
    } else {
        None
    };
    let (w, h) = canonical_size();
    for r in &m.records {
        let placed = place(&m, r, STAGE)?;
        let aligned = match &template {
            Some(t) => {
                let img = warp(&placed.image, &placed.transform, w, h);
                template_fit(&img, t).in_stage(STAGE)?
            }
            None => decompose(&placed.image, r, &m, cfg.decomposer, None)
                .in_stage(STAGE)?
                .warped(&placed.transform, w, h)
                .in_stage(STAGE)?,
        };
        let diffuse = diffuse_reconstruct(&aligned).in_stage(STAGE)?;
        let diffuse_path = art.aligned_diffuse(&r.id);
        ensure_parent(&diffuse_path, STAGE)?;
        write_fmap(&diffuse, &diffuse_path).in_stage(STAGE)?;
        write_quantized(&quantize_normals(&aligned.normals), art.aligned_normals(&r.id))
            .in_stage(STAGE)?;
    }
    Ok(())
}

fn external_file(m: &DatasetManifest, r: &Record, dir: &Option<PathBuf>) -> Option<PathBuf> {
    match dir {
        Some(d) => Some(d.join(format!("{}.txt", r.id))),
        None => r.embedding_path.as_ref().map(|p| m.resolve(p)),
    }
}

/// Writes the per-record vectors the method's branches compare.
pub fn extract_stage(cfg: &ExperimentConfig) -> Result<()> {
    const STAGE: Stage = Stage::Extract;
    let m = open_manifest(cfg, STAGE)?;
    let art = Artifacts::new(&cfg.output_dir);
    let (w, h) = canonical_size();
    for r in &m.records {
        let (branch, emb): (Branch, Embedding<f64>) = match cfg.method {
            Method::Proposed => {
                let emb = match &cfg.extractor {
                    Extractor::Builtin => {
                        let p = art.aligned_diffuse(&r.id);
                        require(&p, "aligned diffuse reconstruction", STAGE, Stage::Decompose)?;
                        require(
                            &art.aligned_normals(&r.id),
                            "aligned normal map",
                            STAGE,
                            Stage::Decompose,
                        )?;
                        builtin_descriptor(&read_fmap::<f64>(&p).in_stage(STAGE)?).in_stage(STAGE)?
                    }
                    Extractor::External(dir) => {
                        let file = external_file(&m, r, dir).ok_or_else(|| {
                            crate::error::PipelineError::Core {
                                stage: STAGE,
                                source: morphdet::Error::MissingFile {
                                    what: format!("external embedding of record {}", r.id),
                                    path: "<not declared in manifest>".into(),
                                },
                            }
                        })?;
                        read_embedding(&file, EXTERNAL_DIM, "external").in_stage(STAGE)?
                    }
                };
                (Branch::Reconstruction, emb)
            }
            Method::Lbp => {
                let placed = place(&m, r, STAGE)?;
                let aligned = warp(&placed.image, &placed.transform, w, h);
                let hist = lbp_feature(&aligned).in_stage(STAGE)?;
                (Branch::Lbp, Embedding::new(hist, "lbp").in_stage(STAGE)?)
            }
            Method::SignedDistance => {
                let placed = place(&m, r, STAGE)?;
                let lm = placed.landmarks.transformed(&placed.transform);
                let flat = lm.points().iter().flat_map(|p| [p[0], p[1]]).collect();
                (Branch::SignedDistance, Embedding::new(flat, "landmarks").in_stage(STAGE)?)
            }
        };
        let path = art.record_vector(&r.id, branch);
        ensure_parent(&path, STAGE)?;
        write_embedding(&emb, &path).in_stage(STAGE)?;
    }
    Ok(())
}
