//! Dataset manifest: one self-describing `key=value` record per line.
//!
//! ```text
//! # comment
//! id=p_s03 subject=s03 role=bonafide_passport camera=none split=train image=images/p_s03.png landmarks=landmarks/p_s03.txt
//! id=m_000 subject=m_000 role=morph_passport camera=none split=train parents=s03,s11 image=... landmarks=...
//! id=g1_s03_0 subject=s03 role=gate camera=1 split=train image=... landmarks=... normals=... albedo=... lighting=...
//! ```
//!
//! Required keys: `id subject role camera split image landmarks`. Optional keys:
//! `normals albedo lighting diffuse embedding parents`. Paths are relative to the
//! manifest's directory unless absolute.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    BonafidePassport,
    MorphPassport,
    Gate,
}

impl Role {
    pub fn is_passport(self) -> bool {
        !matches!(self, Role::Gate)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::BonafidePassport => "bonafide_passport",
            Role::MorphPassport => "morph_passport",
            Role::Gate => "gate",
        })
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide_passport" => Ok(Role::BonafidePassport),
            "morph_passport" => Ok(Role::MorphPassport),
            "gate" => Ok(Role::Gate),
            other => Err(Error::parse("role", format!("unknown role {other:?}"))),
        }
    }
}

/// Gate camera index, 1 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CameraId(u8);

impl CameraId {
    pub const ALL: [CameraId; 4] = [CameraId(1), CameraId(2), CameraId(3), CameraId(4)];

    pub fn new(n: u8) -> Result<Self> {
        if (1..=4).contains(&n) {
            Ok(CameraId(n))
        } else {
            Err(Error::Validation(format!("camera id {n} outside 1..=4")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position, for indexing per-camera arrays.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Formats an optional camera as `1`..`4` or `none`.
pub fn camera_label(c: Option<CameraId>) -> String {
    c.map_or_else(|| "none".to_string(), |c| c.to_string())
}

pub fn parse_camera(s: &str) -> Result<Option<CameraId>> {
    if s == "none" {
        return Ok(None);
    }
    let n: u8 = s
        .parse()
        .map_err(|_| Error::parse("camera", format!("bad camera id {s:?}")))?;
    CameraId::new(n).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::parse("split", format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub subject_id: String,
    pub role: Role,
    pub camera: Option<CameraId>,
    pub split: Split,
    pub image_path: String,
    pub landmarks_path: String,
    pub normals_path: Option<String>,
    pub albedo_path: Option<String>,
    pub lighting_path: Option<String>,
    pub diffuse_path: Option<String>,
    pub embedding_path: Option<String>,
    pub morph_parents: Option<(String, String)>,
}

impl Record {
    fn paths(&self) -> impl Iterator<Item = &str> {
        [
            Some(self.image_path.as_str()),
            Some(self.landmarks_path.as_str()),
            self.normals_path.as_deref(),
            self.albedo_path.as_deref(),
            self.lighting_path.as_deref(),
            self.diffuse_path.as_deref(),
            self.embedding_path.as_deref(),
        ]
        .into_iter()
        .flatten()
    }

    /// Serializes to a single manifest line.
    pub fn to_line(&self) -> String {
        let mut parts = vec![
            format!("id={}", self.id),
            format!("subject={}", self.subject_id),
            format!("role={}", self.role),
            format!("camera={}", camera_label(self.camera)),
            format!("split={}", self.split),
        ];
        if let Some((a, b)) = &self.morph_parents {
            parts.push(format!("parents={a},{b}"));
        }
        parts.push(format!("image={}", self.image_path));
        parts.push(format!("landmarks={}", self.landmarks_path));
        let optional = [
            ("normals", &self.normals_path),
            ("albedo", &self.albedo_path),
            ("lighting", &self.lighting_path),
            ("diffuse", &self.diffuse_path),
            ("embedding", &self.embedding_path),
        ];
        for (key, value) in optional {
            if let Some(v) = value {
                parts.push(format!("{key}={v}"));
            }
        }
        parts.join(" ")
    }

    fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let ctx = || format!("manifest line {lineno}");
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::parse(ctx(), format!("token {token:?} is not key=value")))?;
            if v.is_empty() {
                return Err(Error::parse(ctx(), format!("empty value for {k:?}")));
            }
            if fields.insert(k, v).is_some() {
                return Err(Error::parse(ctx(), format!("duplicate key {k:?}")));
            }
        }
        let mut take = |k: &str| fields.remove(k).map(str::to_string);
        let mut required = |k: &str| {
            take(k).ok_or_else(|| Error::parse(ctx(), format!("missing required key {k:?}")))
        };
        let id = required("id")?;
        let subject_id = required("subject")?;
        let role: Role = required("role")?.parse()?;
        let camera = parse_camera(&required("camera")?)?;
        let split: Split = required("split")?.parse()?;
        let image_path = required("image")?;
        let landmarks_path = required("landmarks")?;
        let morph_parents = match take("parents") {
            None => None,
            Some(p) => {
                let list: Vec<&str> = p.split(',').collect();
                if list.len() != 2 || list.iter().any(|s| s.is_empty()) {
                    return Err(Error::Validation(format!(
                        "{}: morph record {id:?} must name exactly two parents, got {p:?}",
                        ctx()
                    )));
                }
                Some((list[0].to_string(), list[1].to_string()))
            }
        };
        let rec = Record {
            id,
            subject_id,
            role,
            camera,
            split,
            image_path,
            landmarks_path,
            normals_path: take("normals"),
            albedo_path: take("albedo"),
            lighting_path: take("lighting"),
            diffuse_path: take("diffuse"),
            embedding_path: take("embedding"),
            morph_parents,
        };
        if let Some(k) = fields.keys().next() {
            return Err(Error::parse(ctx(), format!("unknown key {k:?}")));
        }
        Ok(rec)
    }
}

/// Validated list of dataset records plus the directory paths resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Validates `records` and wraps them.
    pub fn new(records: Vec<Record>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = DatasetManifest {
            records,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            records.push(Record::parse_line(line, i + 1)?);
        }
        DatasetManifest::new(records, base_dir)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Resolves a record path against the manifest directory.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut path_split: BTreeMap<&str, Split> = BTreeMap::new();
        let bonafide_subjects: BTreeSet<&str> = self
            .records
            .iter()
            .filter(|r| r.role == Role::BonafidePassport)
            .map(|r| r.subject_id.as_str())
            .collect();
        for r in &self.records {
            if r.id.chars().any(|c| c == ',' || c == '"') {
                return Err(Error::Validation(format!("record id {:?} contains ',' or '\"'", r.id)));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id {:?}", r.id)));
            }
            match (r.role, r.camera) {
                (Role::Gate, None) => {
                    return Err(Error::Validation(format!(
                        "gate record {:?} has no camera id",
                        r.id
                    )))
                }
                (Role::BonafidePassport | Role::MorphPassport, Some(c)) => {
                    return Err(Error::Validation(format!(
                        "passport record {:?} carries camera {c}",
                        r.id
                    )))
                }
                _ => {}
            }
            match (&r.morph_parents, r.role) {
                (None, Role::MorphPassport) => {
                    return Err(Error::Validation(format!(
                        "morph record {:?} has no parents",
                        r.id
                    )))
                }
                (Some((a, b)), Role::MorphPassport) => {
                    if a == b {
                        return Err(Error::Validation(format!(
                            "morph record {:?} names the same parent twice",
                            r.id
                        )));
                    }
                    for p in [a, b] {
                        if !bonafide_subjects.contains(p.as_str()) {
                            return Err(Error::Validation(format!(
                                "morph record {:?} names unknown parent {p:?}",
                                r.id
                            )));
                        }
                    }
                }
                (Some(_), _) => {
                    return Err(Error::Validation(format!(
                        "non-morph record {:?} carries parents",
                        r.id
                    )))
                }
                (None, _) => {}
            }
            for p in r.paths() {
                if let Some(prev) = path_split.insert(p, r.split) {
                    if prev != r.split {
                        return Err(Error::Validation(format!(
                            "path {p:?} appears in both train and test splits"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(&text, base)
}

pub fn save_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_text()).map_err(|e| Error::io(path, e))
}
