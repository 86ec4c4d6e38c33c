//! Pair feature matrices and cross-camera score pairing.

use std::collections::HashMap;

use morphdet::baselines::{lbp_pair_feature, LBP_DIM, SIGNED_DISTANCE_DIM};
use morphdet::evaluation::{pair_protocol, ProtocolPair};
use morphdet::features::{
    normal_pair_feature_pooled, read_embedding, read_quantized, reconstruction_pair_feature,
    BUILTIN_DIM, EXTERNAL_DIM, NORMAL_GRID,
};
use morphdet::learning::Samples;
use morphdet::{
    CameraId, DatasetManifest, Embedding, Extractor, Label, QuantizedNormalMap, Role, ScoreEntry,
    Split,
};

use crate::artifacts::{require, Artifacts};
use crate::config::Branch;
use crate::error::{InStage, Result, Stage};

/// Lazily loaded per-record representations.
pub struct RecordStore<'a> {
    art: &'a Artifacts,
    extractor: &'a Extractor,
    stage: Stage,
    vectors: HashMap<(String, Branch), Embedding<f32>>,
    normals: HashMap<String, QuantizedNormalMap>,
}

impl<'a> RecordStore<'a> {
    pub fn new(art: &'a Artifacts, extractor: &'a Extractor, stage: Stage) -> Self {
        RecordStore {
            art,
            extractor,
            stage,
            vectors: HashMap::new(),
            normals: HashMap::new(),
        }
    }

    fn vector(&mut self, id: &str, branch: Branch) -> Result<&Embedding<f32>> {
        let key = (id.to_string(), branch);
        if !self.vectors.contains_key(&key) {
            let (dim, tag) = match branch {
                Branch::Reconstruction => match self.extractor {
                    Extractor::Builtin => (BUILTIN_DIM, "builtin"),
                    Extractor::External(_) => (EXTERNAL_DIM, "external"),
                },
                Branch::Lbp => (LBP_DIM, "lbp"),
                Branch::SignedDistance => (SIGNED_DISTANCE_DIM, "landmarks"),
                Branch::Normal => unreachable!("normal maps are not vectors"),
            };
            let path = self.art.record_vector(id, branch);
            require(&path, &format!("{branch} vector of {id}"), self.stage, Stage::Extract)?;
            let e = read_embedding(&path, dim, tag).in_stage(self.stage)?;
            self.vectors.insert(key.clone(), e);
        }
        Ok(&self.vectors[&key])
    }

    fn normal_map(&mut self, id: &str) -> Result<&QuantizedNormalMap> {
        if !self.normals.contains_key(id) {
            let path = self.art.aligned_normals(id);
            require(&path, &format!("aligned normal map of {id}"), self.stage, Stage::Decompose)?;
            let q = read_quantized(&path).in_stage(self.stage)?;
            self.normals.insert(id.to_string(), q);
        }
        Ok(&self.normals[id])
    }

    /// The classifier input for one (reference, probe) pair.
    pub fn pair_feature(&mut self, reference: &str, probe: &str, branch: Branch) -> Result<Vec<f32>> {
        let stage = self.stage;
        match branch {
            Branch::Normal => {
                let a = self.normal_map(reference)?.clone();
                let b = self.normal_map(probe)?;
                Ok(normal_pair_feature_pooled::<f32>(&a, b, NORMAL_GRID).in_stage(stage)?.diff)
            }
            Branch::Reconstruction => {
                let a = self.vector(reference, branch)?.clone();
                let b = self.vector(probe, branch)?;
                Ok(reconstruction_pair_feature(&a, b).in_stage(stage)?.diff)
            }
            Branch::Lbp => {
                let a = self.vector(reference, branch)?.clone();
                let b = self.vector(probe, branch)?;
                lbp_pair_feature(a.values(), b.values()).in_stage(stage)
            }
            Branch::SignedDistance => {
                let a = self.vector(reference, branch)?.clone();
                let b = self.vector(probe, branch)?;
                Ok(a.values().iter().zip(b.values()).map(|(r, p)| r - p).collect())
            }
        }
    }

    /// Drops cached gate representations, keeping passports.
    pub fn evict_gates(&mut self, m: &DatasetManifest) {
        let gate = |id: &str| m.get(id).is_some_and(|r| r.role == Role::Gate);
        self.vectors.retain(|(id, _), _| !gate(id));
        self.normals.retain(|id, _| !gate(id));
    }
}

/// Pair identities and labels of one camera and split, in protocol order.
#[derive(Debug, Clone)]
pub struct PairList {
    pub camera: CameraId,
    pub references: Vec<String>,
    pub probes: Vec<String>,
    pub labels: Vec<Label>,
}

impl PairList {
    pub fn new(m: &DatasetManifest, split: Split, camera: CameraId, stage: Stage) -> Result<Self> {
        let pairs: Vec<ProtocolPair> = pair_protocol(m, split, camera).in_stage(stage)?;
        Ok(PairList {
            camera,
            references: pairs.iter().map(|p| p.reference.id.clone()).collect(),
            probes: pairs.iter().map(|p| p.probe.id.clone()).collect(),
            labels: pairs.iter().map(|p| p.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// SVM targets: bona fide −1, attack +1.
    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.target()).collect()
    }

    pub fn features(&self, store: &mut RecordStore, branch: Branch) -> Result<Samples<f32>> {
        let mut data = Vec::new();
        let mut dim = 0;
        for (r, p) in self.references.iter().zip(&self.probes) {
            let f = store.pair_feature(r, p, branch)?;
            dim = f.len();
            data.extend(f);
        }
        Samples::new(dim, data).in_stage(store.stage)
    }

    pub fn entries(&self, scores: &[f64], tag: &str) -> Vec<ScoreEntry> {
        (0..self.len())
            .map(|i| ScoreEntry {
                probe_id: self.probes[i].clone(),
                reference_id: self.references[i].clone(),
                camera: Some(self.camera),
                label: self.labels[i],
                feature_tag: tag.to_string(),
                score: scores[i],
            })
            .collect()
    }
}

/// Identifies a comparison independently of the camera: the reference, the
/// probe's subject and the probe's capture number on that camera.
pub type PairKey = (String, String, usize);

/// Capture number of every gate image: its rank among the same subject's
/// images on the same camera and split, in manifest order.
pub fn capture_numbers(m: &DatasetManifest) -> HashMap<String, usize> {
    let mut seen: HashMap<(String, Option<CameraId>, Split), usize> = HashMap::new();
    let mut out = HashMap::new();
    for r in m.records.iter().filter(|r| r.role == Role::Gate) {
        let k = seen.entry((r.subject_id.clone(), r.camera, r.split)).or_insert(0);
        out.insert(r.id.clone(), *k);
        *k += 1;
    }
    out
}

/// For each cross-camera comparison, its row in every camera's list. The
/// comparisons kept are those present on all cameras, in the order of the
/// shortest list, which truncates every camera to the minimum count.
pub fn cross_camera_rows(m: &DatasetManifest, lists: &[PairList]) -> Vec<Vec<usize>> {
    let captures = capture_numbers(m);
    let key = |list: &PairList, i: usize| -> PairKey {
        let probe = &list.probes[i];
        let subject = m.get(probe).map(|r| r.subject_id.clone()).unwrap_or_default();
        (list.references[i].clone(), subject, captures.get(probe).copied().unwrap_or(0))
    };
    let index: Vec<HashMap<PairKey, usize>> = lists
        .iter()
        .map(|l| (0..l.len()).map(|i| (key(l, i), i)).collect())
        .collect();
    let Some(shortest) = (0..lists.len()).min_by_key(|&c| (lists[c].len(), c)) else {
        return Vec::new();
    };
    (0..lists[shortest].len())
        .filter_map(|i| {
            let k = key(&lists[shortest], i);
            index.iter().map(|ix| ix.get(&k).copied()).collect::<Option<Vec<usize>>>()
        })
        .collect()
}
