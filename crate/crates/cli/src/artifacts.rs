//! Locations of every stage output under the experiment directory.

use std::fs;
use std::path::{Path, PathBuf};

use morphdet::CameraId;

use crate::config::{Branch, Method};
use crate::error::{PipelineError, Result, Stage};

#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Artifacts { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn aligned_diffuse(&self, id: &str) -> PathBuf {
        self.root.join("aligned").join(format!("{id}_diffuse.fmap"))
    }

    pub fn aligned_normals(&self, id: &str) -> PathBuf {
        self.root.join("aligned").join(format!("{id}_normals.png"))
    }

    /// Per-record vector of a branch (embedding, LBP histograms or aligned
    /// landmark coordinates).
    pub fn record_vector(&self, id: &str, branch: Branch) -> PathBuf {
        self.root.join("features").join(format!("{id}_{}.txt", branch.tag()))
    }

    fn method_dir(&self, kind: &str, method: Method) -> PathBuf {
        self.root.join(kind).join(method.name())
    }

    pub fn model(&self, method: Method, camera: CameraId, branch: Branch) -> PathBuf {
        self.method_dir("models", method)
            .join(format!("cam{}_{}.model", camera.get(), branch.tag()))
    }

    pub fn train_scores(&self, method: Method, camera: CameraId, branch: Branch) -> PathBuf {
        self.method_dir("scores", method)
            .join(format!("train_cam{}_{}.csv", camera.get(), branch.tag()))
    }

    pub fn test_scores(&self, method: Method, camera: CameraId, branch: Branch) -> PathBuf {
        self.method_dir("scores", method)
            .join(format!("test_cam{}_{}.csv", camera.get(), branch.tag()))
    }

    pub fn test_camera_fused(&self, method: Method, camera: CameraId) -> PathBuf {
        self.method_dir("scores", method)
            .join(format!("test_cam{}_fused.csv", camera.get()))
    }

    pub fn test_fused(&self, method: Method) -> PathBuf {
        self.method_dir("scores", method).join("test_fused.csv")
    }

    pub fn weights(&self, method: Method) -> PathBuf {
        self.root.join("weights").join(format!("{}.txt", method.name()))
    }

    /// DET curve CSV; `label` is a camera number or `fused`.
    pub fn det(&self, method: Method, label: &str) -> PathBuf {
        self.root.join("det").join(format!("{}_{label}.csv", method.name()))
    }

    pub fn summary(&self, method: Method) -> PathBuf {
        self.root.join(format!("summary_{}.csv", method.name()))
    }

    pub fn report(&self, method: Method) -> PathBuf {
        self.root.join("report").join(format!("{}_det.svg", method.name()))
    }
}

/// Fails with a missing-artifact error naming `producer` unless `path` exists.
pub fn require(path: &Path, what: &str, stage: Stage, producer: Stage) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact {
            stage,
            producer,
            what: what.to_string(),
            path: path.to_path_buf(),
        })
    }
}

pub fn ensure_parent(path: &Path, stage: Stage) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Core {
            stage,
            source: morphdet::Error::Io {
                path: dir.to_path_buf(),
                source,
            },
        })?;
    }
    Ok(())
}
