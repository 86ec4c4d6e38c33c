//! Dataset planning and emission.

use std::fs;
use std::path::Path;

use morphdet::geometry::write_landmarks;
use morphdet::manifest::save_manifest;
use morphdet::raster::{save_image, write_fmap};
use morphdet::shading::write_lighting;
use morphdet::{CameraId, DatasetManifest, Error, Record, Result, Role, Split};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{render_gate_capture, CameraProfile};
use crate::degrade::degrade_print_scan;
use crate::face::{gen_morph, Face, FaceModel, IdentityParams};

pub const DEFAULT_SUBJECTS: usize = 39;
pub const DEFAULT_MORPHS: usize = 90;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_SUBJECTS: usize = 19;
pub const DEFAULT_TEST_SUBJECTS: usize = 20;
/// Morph passports per split in the default benchmark.
pub const DEFAULT_MORPH_SPLIT: (usize, usize) = (52, 38);
/// Gate images per camera (1..4) in each split of the default benchmark.
pub const DEFAULT_TRAIN_GATES: [usize; 4] = [58, 64, 58, 57];
pub const DEFAULT_TEST_GATES: [usize; 4] = [57, 63, 49, 53];

const DOMAIN_SPLIT: u64 = 1;
const DOMAIN_PAIRS: u64 = 2;
const DOMAIN_IDENTITY: u64 = 3;
const DOMAIN_GATE: u64 = 4;
const DOMAIN_PRINT: u64 = 5;

/// Seed for record `index` of stream `domain`, independent of generation order.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((domain << 40) | index);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub morphs: usize,
    pub seed: u64,
    pub cameras: [CameraProfile; 4],
    pub morph_alpha: f64,
    /// Run passports through the simulated print-scan channel.
    pub print_scan: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: DEFAULT_SUBJECTS,
            morphs: DEFAULT_MORPHS,
            seed: DEFAULT_SEED,
            cameras: CameraProfile::defaults(),
            morph_alpha: 0.5,
            print_scan: false,
        }
    }
}

impl SynthConfig {
    pub fn with_size(subjects: usize, morphs: usize, seed: u64) -> Self {
        SynthConfig {
            subjects,
            morphs,
            seed,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MorphPlan {
    pub parents: (usize, usize),
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatePlan {
    pub camera: CameraId,
    pub subject: usize,
    /// Capture number of this subject on this camera.
    pub capture: usize,
    pub split: Split,
    pub seed: u64,
}

/// Which subjects, morphs and gate captures a dataset contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPlan {
    pub train_subjects: Vec<usize>,
    pub test_subjects: Vec<usize>,
    pub morphs: Vec<MorphPlan>,
    pub gates: Vec<GatePlan>,
}

impl DatasetPlan {
    pub fn subjects(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_subjects,
            Split::Test => &self.test_subjects,
        }
    }
}

fn pairs_within(subjects: &[usize]) -> usize {
    subjects.len() * subjects.len().saturating_sub(1) / 2
}

/// Gate images for one camera and split, scaled from the default benchmark by
/// the split's subject count (at least one per subject).
fn gate_count(camera: CameraId, split: Split, n_subjects: usize) -> usize {
    if n_subjects == 0 {
        return 0;
    }
    let (per, base) = match split {
        Split::Train => (DEFAULT_TRAIN_GATES[camera.slot()], DEFAULT_TRAIN_SUBJECTS),
        Split::Test => (DEFAULT_TEST_GATES[camera.slot()], DEFAULT_TEST_SUBJECTS),
    };
    if n_subjects == base {
        return per;
    }
    ((per * n_subjects) as f64 / base as f64).round().max(n_subjects as f64) as usize
}

/// Splits subjects by parity of a seeded shuffle (odd positions train), picks
/// morph pairs from a seeded shuffle of same-split pairs and assigns gate
/// captures round-robin. With fewer than two subjects on one side every
/// subject goes to train.
pub fn plan_dataset(cfg: &SynthConfig) -> Result<DatasetPlan> {
    if cfg.subjects < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 subjects, got {}",
            cfg.subjects
        )));
    }
    let mut order: Vec<usize> = (0..cfg.subjects).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, DOMAIN_SPLIT, 0)));
    let mut train: Vec<usize> = order.iter().skip(1).step_by(2).copied().collect();
    let mut test: Vec<usize> = order.iter().step_by(2).copied().collect();
    if train.len() < 2 || test.len() < 2 {
        train = (0..cfg.subjects).collect();
        test.clear();
    }
    train.sort_unstable();
    test.sort_unstable();

    let (cap_train, cap_test) = (pairs_within(&train), pairs_within(&test));
    if cfg.morphs > cap_train + cap_test {
        return Err(Error::Validation(format!(
            "{} morphs requested but only {} same-split subject pairs exist",
            cfg.morphs,
            cap_train + cap_test
        )));
    }
    let (def_train, def_test) = DEFAULT_MORPH_SPLIT;
    let share = (cfg.morphs * def_train) as f64 / (def_train + def_test) as f64;
    let mut n_train = (share.round() as usize).min(cap_train);
    if cfg.morphs - n_train > cap_test {
        n_train = cfg.morphs - cap_test;
    }
    let n_test = cfg.morphs - n_train;

    let mut morphs = Vec::with_capacity(cfg.morphs);
    for (split, subjects, n, stream) in [
        (Split::Train, &train, n_train, 0),
        (Split::Test, &test, n_test, 1),
    ] {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (i, &a) in subjects.iter().enumerate() {
            for &b in &subjects[i + 1..] {
                pairs.push((a, b));
            }
        }
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, DOMAIN_PAIRS, stream)));
        morphs.extend(pairs.into_iter().take(n).map(|parents| MorphPlan { parents, split }));
    }

    let mut gates = Vec::new();
    for (split, subjects) in [(Split::Train, &train), (Split::Test, &test)] {
        for camera in CameraId::ALL {
            let count = gate_count(camera, split, subjects.len());
            for k in 0..count {
                let index = ((camera.slot() as u64) << 24) | ((split as u64) << 20) | k as u64;
                gates.push(GatePlan {
                    camera,
                    subject: subjects[k % subjects.len()],
                    capture: k / subjects.len(),
                    split,
                    seed: derive_seed(cfg.seed, DOMAIN_GATE, index),
                });
            }
        }
    }
    Ok(DatasetPlan {
        train_subjects: train,
        test_subjects: test,
        morphs,
        gates,
    })
}

pub fn subject_name(i: usize) -> String {
    format!("s{i:02}")
}

pub fn passport_id(i: usize) -> String {
    format!("p_{}", subject_name(i))
}

pub fn morph_id(a: usize, b: usize) -> String {
    format!("m_{}_{}", subject_name(a), subject_name(b))
}

pub fn gate_id(g: &GatePlan) -> String {
    format!("g{}_{}_{:02}", g.camera.get(), subject_name(g.subject), g.capture)
}

struct Layout<'a> {
    root: &'a Path,
}

impl Layout<'_> {
    fn write_record(
        &self,
        id: &str,
        image: &morphdet::Raster<f64>,
        face: &morphdet::Decomposition<f64>,
        landmarks: &morphdet::LandmarkSet<f64>,
    ) -> Result<[String; 5]> {
        let paths = [
            format!("images/{id}.png"),
            format!("landmarks/{id}.txt"),
            format!("maps/{id}_normals.fmap"),
            format!("maps/{id}_albedo.fmap"),
            format!("maps/{id}_lighting.txt"),
        ];
        save_image(image, self.root.join(&paths[0]))?;
        write_landmarks(landmarks, self.root.join(&paths[1]))?;
        write_fmap(face.normals.raster(), self.root.join(&paths[2]))?;
        write_fmap(&face.albedo, self.root.join(&paths[3]))?;
        write_lighting(&face.lighting, self.root.join(&paths[4]))?;
        Ok(paths)
    }
}

fn record(
    id: String,
    subject_id: String,
    role: Role,
    camera: Option<CameraId>,
    split: Split,
    paths: [String; 5],
    morph_parents: Option<(String, String)>,
) -> Record {
    let [image, landmarks, normals, albedo, lighting] = paths;
    Record {
        id,
        subject_id,
        role,
        camera,
        split,
        image_path: image,
        landmarks_path: landmarks,
        normals_path: Some(normals),
        albedo_path: Some(albedo),
        lighting_path: Some(lighting),
        diffuse_path: None,
        embedding_path: None,
        morph_parents,
    }
}

fn passport_image(face: &Face, cfg: &SynthConfig, stream: u64) -> morphdet::Raster<f64> {
    if cfg.print_scan {
        degrade_print_scan(&face.passport, derive_seed(cfg.seed, DOMAIN_PRINT, stream))
    } else {
        face.passport.clone()
    }
}

/// Renders every record of the plan under `out_dir` and writes `manifest.txt`.
/// Records are ordered by split (train first), then bona fide passports,
/// morph passports and gate images by camera and capture.
pub fn emit_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = out_dir.as_ref();
    let plan = plan_dataset(cfg)?;
    for sub in ["images", "maps", "landmarks"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir, source: e })?;
    }
    let params: Vec<IdentityParams> = (0..cfg.subjects)
        .map(|i| IdentityParams::random(derive_seed(cfg.seed, DOMAIN_IDENTITY, i as u64)))
        .collect();
    let faces: Vec<Face> = params
        .iter()
        .map(|p| Face::render(FaceModel::Identity(p.clone())))
        .collect::<Result<_>>()?;
    let layout = Layout { root };
    let mut records = Vec::new();
    for split in [Split::Train, Split::Test] {
        for &s in plan.subjects(split) {
            let face = &faces[s];
            let id = passport_id(s);
            let img = passport_image(face, cfg, s as u64);
            let paths = layout.write_record(&id, &img, &face.decomposition, &face.landmarks)?;
            records.push(record(id, subject_name(s), Role::BonafidePassport, None, split, paths, None));
        }
        for (k, m) in plan.morphs.iter().enumerate().filter(|(_, m)| m.split == split) {
            let (a, b) = m.parents;
            let face = gen_morph(&params[a], &params[b], cfg.morph_alpha)?;
            let id = morph_id(a, b);
            let img = passport_image(&face, cfg, (1 << 32) | k as u64);
            let paths = layout.write_record(&id, &img, &face.decomposition, &face.landmarks)?;
            let parents = Some((subject_name(a), subject_name(b)));
            records.push(record(id.clone(), id, Role::MorphPassport, None, split, paths, parents));
        }
        for g in plan.gates.iter().filter(|g| g.split == split) {
            let cam = &cfg.cameras[g.camera.slot()];
            let cap = render_gate_capture(&faces[g.subject], cam, g.seed)?;
            let id = gate_id(g);
            let paths = layout.write_record(&id, &cap.image, &cap.decomposition, &cap.landmarks)?;
            records.push(record(
                id,
                subject_name(g.subject),
                Role::Gate,
                Some(g.camera),
                split,
                paths,
                None,
            ));
        }
    }
    let manifest = DatasetManifest::new(records, root)?;
    save_manifest(&manifest, root.join("manifest.txt"))?;
    Ok(manifest)
}
