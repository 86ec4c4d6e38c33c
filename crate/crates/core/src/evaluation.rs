//! Pairing protocol and presentation-attack error rates.
//!
//! Scores follow one polarity everywhere: a score `s` is classified as an
//! attack at threshold `τ` when `s ≥ τ`. Rates are exact fractions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::manifest::{CameraId, DatasetManifest, Record, Role, Split};
use crate::scores::{Label, ScoreSet};

/// An exact error rate.
pub type Rate = Ratio<u64>;

/// BPCER is reported at these APCER targets (5 % and 10 %).
pub fn bpcer20_target() -> Rate {
    Rate::new(1, 20)
}

pub fn bpcer10_target() -> Rate {
    Rate::new(1, 10)
}

pub fn rate_to_f64(r: Rate) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Renders a rate with four decimals, rounding half up on the exact value.
pub fn format_rate(r: Rate) -> String {
    let (n, d) = (u128::from(*r.numer()), u128::from(*r.denom()));
    let scaled = (n * 20_000 + d) / (2 * d);
    format!("{}.{:04}", scaled / 10_000, scaled % 10_000)
}

/// One reference/probe comparison.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolPair<'a> {
    pub reference: &'a Record,
    pub probe: &'a Record,
    pub label: Label,
}

/// Every passport of `split` against every gate image of `camera` in
/// `split`, references outermost, both in manifest order.
pub fn pair_protocol<'a>(
    m: &'a DatasetManifest,
    split: Split,
    camera: CameraId,
) -> Result<Vec<ProtocolPair<'a>>> {
    let refs: Vec<&Record> = m.records_in(split).filter(|r| r.role.is_passport()).collect();
    let probes: Vec<&Record> = m
        .records_in(split)
        .filter(|r| r.role == Role::Gate && r.camera == Some(camera))
        .collect();
    if refs.is_empty() {
        return Err(Error::Degenerate(format!("no passports in the {split} split")));
    }
    if probes.is_empty() {
        return Err(Error::Degenerate(format!(
            "no camera {} gate images in the {split} split",
            camera.get()
        )));
    }
    Ok(refs
        .iter()
        .flat_map(|&reference| {
            probes.iter().map(move |&probe| ProtocolPair {
                reference,
                probe,
                label: if reference.role == Role::BonafidePassport {
                    Label::Genuine
                } else {
                    Label::Attack
                },
            })
        })
        .collect())
}

fn check_nonempty(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        Err(Error::Degenerate(format!("no {what} scores")))
    } else {
        Ok(())
    }
}

/// Fraction of attack scores below `tau`.
pub fn apcer(attack: &[f64], tau: f64) -> Result<Rate> {
    check_nonempty(attack, "attack")?;
    let missed = attack.iter().filter(|&&s| s < tau).count();
    Ok(Rate::new(missed as u64, attack.len() as u64))
}

/// Fraction of bona fide scores at or above `tau`.
pub fn bpcer(bonafide: &[f64], tau: f64) -> Result<Rate> {
    check_nonempty(bonafide, "bona fide")?;
    let flagged = bonafide.iter().filter(|&&s| s >= tau).count();
    Ok(Rate::new(flagged as u64, bonafide.len() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub apcer: Rate,
    pub bpcer: Rate,
}

/// Error rates at `-∞`, every distinct score in ascending order, and `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    points: Vec<DetPoint>,
    n_genuine: usize,
    n_attack: usize,
}

impl DetCurve {
    pub fn points(&self) -> &[DetPoint] {
        &self.points
    }

    pub fn n_genuine(&self) -> usize {
        self.n_genuine
    }

    pub fn n_attack(&self) -> usize {
        self.n_attack
    }

    /// Checks endpoint values and that APCER never falls and BPCER never
    /// rises as the threshold increases.
    pub fn check_monotone(&self) -> Result<()> {
        let (first, last) = (self.points[0], self.points[self.points.len() - 1]);
        let (zero, one) = (Rate::from_integer(0), Rate::from_integer(1));
        if first.apcer != zero || first.bpcer != one || last.apcer != one || last.bpcer != zero {
            return Err(Error::Numeric("DET endpoints are wrong".into()));
        }
        for w in self.points.windows(2) {
            if !(w[0].threshold < w[1].threshold
                && w[0].apcer <= w[1].apcer
                && w[0].bpcer >= w[1].bpcer)
            {
                return Err(Error::Numeric(format!(
                    "DET curve not monotone between thresholds {} and {}",
                    w[0].threshold, w[1].threshold
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,apcer,bpcer\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, format_rate(p.apcer), format_rate(p.bpcer));
        }
        s
    }
}

fn split_classes(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut g, mut a) = (scores.genuine(), scores.attack());
    if g.is_empty() || a.is_empty() {
        return Err(Error::Degenerate(format!(
            "score set needs both classes, has {} genuine and {} attack",
            g.len(),
            a.len()
        )));
    }
    g.sort_by(f64::total_cmp);
    a.sort_by(f64::total_cmp);
    Ok((g, a))
}

pub fn det_curve(scores: &ScoreSet) -> Result<DetCurve> {
    let (g, a) = split_classes(scores)?;
    det_from_sorted(&g, &a)
}

fn det_from_sorted(g: &[f64], a: &[f64]) -> Result<DetCurve> {
    let mut taus: Vec<f64> = g.iter().chain(a).copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let (ng, na) = (g.len() as u64, a.len() as u64);
    let mut points = Vec::with_capacity(taus.len() + 2);
    points.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        apcer: Rate::from_integer(0),
        bpcer: Rate::from_integer(1),
    });
    for &t in &taus {
        let missed = a.partition_point(|&s| s < t) as u64;
        let flagged = ng - g.partition_point(|&s| s < t) as u64;
        points.push(DetPoint {
            threshold: t,
            apcer: Rate::new(missed, na),
            bpcer: Rate::new(flagged, ng),
        });
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        apcer: Rate::from_integer(1),
        bpcer: Rate::from_integer(0),
    });
    Ok(DetCurve {
        points,
        n_genuine: g.len(),
        n_attack: a.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualError {
    pub eer: Rate,
    pub threshold: f64,
}

fn abs_diff(a: Rate, b: Rate) -> Rate {
    if a >= b { a - b } else { b - a }
}

/// Equal error rate: the mean of APCER and BPCER at the sweep threshold where
/// they differ least, preferring the smallest such threshold.
pub fn d_eer(scores: &ScoreSet) -> Result<EqualError> {
    let (g, a) = split_classes(scores)?;
    d_eer_sorted(&g, &a)
}

/// [`d_eer`] on raw class score lists.
pub fn d_eer_of(genuine: &[f64], attack: &[f64]) -> Result<EqualError> {
    check_nonempty(genuine, "genuine")?;
    check_nonempty(attack, "attack")?;
    let (mut g, mut a) = (genuine.to_vec(), attack.to_vec());
    g.sort_by(f64::total_cmp);
    a.sort_by(f64::total_cmp);
    d_eer_sorted(&g, &a)
}

fn d_eer_sorted(g: &[f64], a: &[f64]) -> Result<EqualError> {
    let det = det_from_sorted(g, a)?;
    det_eer(&det)
}

pub fn det_eer(det: &DetCurve) -> Result<EqualError> {
    let mut best = det.points[0];
    let mut best_gap = abs_diff(best.apcer, best.bpcer);
    for p in &det.points[1..] {
        let gap = abs_diff(p.apcer, p.bpcer);
        if gap < best_gap {
            best = *p;
            best_gap = gap;
        }
    }
    Ok(EqualError {
        eer: (best.apcer + best.bpcer) / 2,
        threshold: best.threshold,
    })
}

/// BPCER at the largest sweep threshold whose APCER does not exceed `target`.
pub fn bpcer_at_apcer(scores: &ScoreSet, target: Rate) -> Result<Rate> {
    let det = det_curve(scores)?;
    det_bpcer_at_apcer(&det, target)
}

pub fn det_bpcer_at_apcer(det: &DetCurve, target: Rate) -> Result<Rate> {
    if target <= Rate::from_integer(0) || target >= Rate::from_integer(1) {
        return Err(Error::Validation(format!("APCER target {target} outside (0, 1)")));
    }
    let p = det
        .points
        .iter()
        .rev()
        .find(|p| p.apcer <= target)
        .expect("APCER is zero at -inf");
    Ok(p.bpcer)
}

/// Headline metrics of one score set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub eer: Rate,
    pub threshold: f64,
    pub bpcer20: Rate,
    pub bpcer10: Rate,
}

pub fn metrics(scores: &ScoreSet) -> Result<Metrics> {
    let det = det_curve(scores)?;
    let e = det_eer(&det)?;
    Ok(Metrics {
        eer: e.eer,
        threshold: e.threshold,
        bpcer20: det_bpcer_at_apcer(&det, bpcer20_target())?,
        bpcer10: det_bpcer_at_apcer(&det, bpcer10_target())?,
    })
}

pub const SUMMARY_CSV_HEADER: &str = "method,camera,eer,bpcer20,bpcer10";

/// One row of the metrics summary; `camera` is a camera number or `fused`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub camera: String,
    pub metrics: Metrics,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.method,
            r.camera,
            format_rate(r.metrics.eer),
            format_rate(r.metrics.bpcer20),
            format_rate(r.metrics.bpcer10)
        );
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
