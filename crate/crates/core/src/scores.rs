//! Labeled comparison scores and their CSV form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::manifest::{camera_label, parse_camera, CameraId};

pub const SCORE_CSV_HEADER: &str = "probe_id,reference_id,camera_id,label,feature_tag,score";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Bona fide reference against a bona fide probe.
    Genuine,
    /// Morphed reference against a bona fide probe.
    Attack,
}

impl Label {
    /// SVM target: bona fide is -1, attack is +1.
    pub fn target(self) -> f64 {
        match self {
            Label::Genuine => -1.0,
            Label::Attack => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::Attack => "attack",
        })
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "attack" => Ok(Label::Attack),
            other => Err(Error::parse("label", format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub probe_id: String,
    pub reference_id: String,
    pub camera: Option<CameraId>,
    pub label: Label,
    pub feature_tag: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite score for ({}, {})",
                e.reference_id, e.probe_id
            )));
        }
        Ok(ScoreSet { entries })
    }

    /// Builds an unlabeled-metadata set from raw class lists; handy for metrics.
    pub fn from_scores(genuine: &[f64], attack: &[f64]) -> Result<Self> {
        let mk = |label: Label, i: usize, s: f64| ScoreEntry {
            probe_id: format!("{label}{i}"),
            reference_id: String::new(),
            camera: None,
            label,
            feature_tag: String::new(),
            score: s,
        };
        let entries = genuine
            .iter()
            .enumerate()
            .map(|(i, &s)| mk(Label::Genuine, i, s))
            .chain(attack.iter().enumerate().map(|(i, &s)| mk(Label::Attack, i, s)))
            .collect();
        ScoreSet::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores_of(&self, label: Label) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.score)
            .collect()
    }

    pub fn genuine(&self) -> Vec<f64> {
        self.scores_of(Label::Genuine)
    }

    pub fn attack(&self) -> Vec<f64> {
        self.scores_of(Label::Attack)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCORE_CSV_HEADER);
        s.push('\n');
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.probe_id,
                e.reference_id,
                camera_label(e.camera),
                e.label,
                e.feature_tag,
                e.score
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == SCORE_CSV_HEADER => {}
            other => {
                return Err(Error::parse(
                    "score csv",
                    format!("expected header {SCORE_CSV_HEADER:?}, got {other:?}"),
                ))
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let ctx = || format!("score csv row {}", i + 2);
            if cols.len() != 6 {
                return Err(Error::parse(ctx(), format!("expected 6 columns, got {}", cols.len())));
            }
            entries.push(ScoreEntry {
                probe_id: cols[0].to_string(),
                reference_id: cols[1].to_string(),
                camera: parse_camera(cols[2])?,
                label: cols[3].parse()?,
                feature_tag: cols[4].to_string(),
                score: cols[5]
                    .parse()
                    .map_err(|_| Error::parse(ctx(), format!("bad score {:?}", cols[5])))?,
            });
        }
        ScoreSet::new(entries)
    }
}

pub fn write_scores(set: &ScoreSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScoreSet::from_csv(&text)
}
