//! Open-set evaluation over per-sample score records: OSCR curves, CCR at
//! fixed FPR, accuracy-vs-confidence, precision-recall AUC and the
//! entropy/magnitude statistics per split.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::data::SplitKind;
use crate::error::{Error, Result};
use crate::numeric::{argmax, entropy, mean_std};

/// One scored test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: usize,
    /// Non-negative scores over the `C` known classes.
    pub scores: Vec<f64>,
    pub feature_magnitude: f64,
    pub kind: SplitKind,
    /// Present exactly when `kind` is [`SplitKind::Known`].
    pub true_class: Option<usize>,
}

impl ScoreRecord {
    pub fn new(
        id: usize,
        scores: Vec<f64>,
        feature_magnitude: f64,
        kind: SplitKind,
        true_class: Option<usize>,
    ) -> Result<Self> {
        if scores.is_empty() || scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(format!("record {id}: scores must be finite and non-negative")));
        }
        if !(feature_magnitude.is_finite() && feature_magnitude >= 0.0) {
            return Err(Error::invalid(format!("record {id}: bad feature magnitude")));
        }
        match (kind, true_class) {
            (SplitKind::Known, Some(c)) if c < scores.len() => {}
            (SplitKind::Known, _) => {
                return Err(Error::invalid(format!("record {id}: known record needs a valid true class")))
            }
            (_, Some(_)) => {
                return Err(Error::invalid(format!("record {id}: only known records carry a true class")))
            }
            _ => {}
        }
        Ok(ScoreRecord {
            id,
            scores,
            feature_magnitude,
            kind,
            true_class,
        })
    }

    /// `(max score, argmax)` under `mode`; ties go to the lowest class.
    pub fn decision(&self, mode: ScoreMode) -> (f64, usize) {
        let c = argmax(&self.scores).expect("non-empty scores");
        let top = self.scores[c];
        match mode {
            ScoreMode::Softmax => (top, c),
            ScoreMode::Scaled => (top * self.feature_magnitude, c),
        }
    }

    fn is_correct(&self) -> bool {
        self.true_class == argmax(&self.scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Use the stored scores directly.
    Softmax,
    /// Multiply every score by the feature magnitude.
    Scaled,
}

impl ScoreMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softmax" => Some(ScoreMode::Softmax),
            "scaled" => Some(ScoreMode::Scaled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscrPoint {
    pub theta: f64,
    pub fpr: f64,
    pub ccr: f64,
}

/// Points ordered by decreasing threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct OscrCurve {
    pub points: Vec<OscrPoint>,
    pub num_known: usize,
    pub num_unknown: usize,
}

impl OscrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,fpr,ccr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.theta, p.fpr, p.ccr);
        }
        s
    }
}

/// Sweeps θ over every distinct max-score, one sentinel above the largest
/// and one below the smallest.
///
/// `FPR(θ)` counts unknowns with max-score `≥ θ`; `CCR(θ)` counts knowns
/// whose argmax is correct with score `> θ`. The lower sentinel is what
/// makes the last point's CCR equal the closed-set accuracy even when a
/// correct known holds the minimum score.
pub fn oscr(records: &[ScoreRecord], unknown_kinds: &BTreeSet<SplitKind>, mode: ScoreMode) -> Result<OscrCurve> {
    if unknown_kinds.contains(&SplitKind::Known) {
        return Err(Error::invalid("knowns cannot be counted as unknowns"));
    }
    let mut correct = Vec::new();
    let mut num_known = 0usize;
    let mut unknown = Vec::new();
    let mut all = Vec::new();
    for r in records {
        let (score, class) = r.decision(mode);
        if r.kind == SplitKind::Known {
            num_known += 1;
            if Some(class) == r.true_class {
                correct.push(score);
            }
            all.push(score);
        } else if unknown_kinds.contains(&r.kind) {
            unknown.push(score);
            all.push(score);
        }
    }
    if num_known == 0 || unknown.is_empty() {
        return Err(Error::invalid("OSCR needs at least one known and one unknown record"));
    }
    let by_value = |a: &f64, b: &f64| a.total_cmp(b);
    correct.sort_by(by_value);
    unknown.sort_by(by_value);
    all.sort_by(by_value);
    all.dedup();

    let hi = all[all.len() - 1];
    let lo = all[0];
    let mut thetas = Vec::with_capacity(all.len() + 2);
    thetas.push(hi + hi.abs().max(1.0));
    thetas.extend(all.iter().rev());
    thetas.push(lo - lo.abs().max(1.0));

    let nk = num_known as f64;
    let nu = unknown.len() as f64;
    let points = thetas
        .into_iter()
        .map(|theta| {
            let fp = unknown.len() - unknown.partition_point(|&s| s < theta);
            let cc = correct.len() - correct.partition_point(|&s| s <= theta);
            OscrPoint {
                theta,
                fpr: fp as f64 / nu,
                ccr: cc as f64 / nk,
            }
        })
        .collect();
    Ok(OscrCurve {
        points,
        num_known,
        num_unknown: unknown.len(),
    })
}

/// Step-function reading of the curve: for each FPR target, the best CCR
/// among points with `fpr ≤ target`. `None` marks an unreachable rate
/// (`target·num_unknowns < 1`) or no qualifying point.
pub fn ccr_at_fpr(curve: &OscrCurve, targets: &[f64], num_unknowns: usize) -> Result<Vec<Option<f64>>> {
    targets
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::invalid(format!("FPR target {t} outside (0, 1]")));
            }
            if t * (num_unknowns as f64) < 1.0 {
                return Ok(None);
            }
            Ok(curve
                .points
                .iter()
                .filter(|p| p.fpr <= t)
                .map(|p| p.ccr)
                .fold(None, |best: Option<f64>, c| Some(best.map_or(c, |b| b.max(c)))))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPoint {
    pub threshold: f64,
    /// `None` when nothing passes the threshold.
    pub accuracy: Option<f64>,
    pub admitted: usize,
}

/// Accuracy among all records whose max-score reaches each threshold; any
/// admitted non-known record counts as an error.
pub fn accuracy_vs_confidence(
    records: &[ScoreRecord],
    thresholds: &[f64],
    mode: ScoreMode,
) -> Result<Vec<AccuracyPoint>> {
    if records.is_empty() {
        return Err(Error::invalid("accuracy-vs-confidence needs at least one record"));
    }
    let decided: Vec<(f64, bool)> = records
        .iter()
        .map(|r| (r.decision(mode).0, r.kind == SplitKind::Known && r.is_correct()))
        .collect();
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let admitted: Vec<bool> = decided.iter().filter(|(s, _)| *s >= threshold).map(|&(_, ok)| ok).collect();
            let hits = admitted.iter().filter(|&&ok| ok).count();
            AccuracyPoint {
                threshold,
                accuracy: (!admitted.is_empty()).then(|| hits as f64 / admitted.len() as f64),
                admitted: admitted.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall points for ranking records by max-score, one per
/// distinct score in decreasing order.
pub fn pr_curve(records: &[ScoreRecord], positive: SplitKind, mode: ScoreMode) -> Result<Vec<PrPoint>> {
    let mut ranked: Vec<(f64, bool)> = records.iter().map(|r| (r.decision(mode).0, r.kind == positive)).collect();
    let positives = ranked.iter().filter(|(_, p)| *p).count();
    if positives == 0 || positives == ranked.len() {
        return Err(Error::invalid("PR curve needs at least one positive and one negative"));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let threshold = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == threshold {
            if ranked[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under the PR curve, anchored at `(recall 0, precision 1)`.
/// With `monotonize`, each precision is first replaced by the maximum
/// precision at any equal or larger recall.
pub fn pr_auc(records: &[ScoreRecord], positive: SplitKind, monotonize: bool, mode: ScoreMode) -> Result<f64> {
    let curve = pr_curve(records, positive, mode)?;
    let mut pts: Vec<(f64, f64)> = std::iter::once((0.0, 1.0))
        .chain(curve.iter().map(|p| (p.recall, p.precision)))
        .collect();
    if monotonize {
        let mut best = f64::NEG_INFINITY;
        for p in pts.iter_mut().rev() {
            best = best.max(p.1);
            p.1 = best;
        }
    }
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStats {
    pub kind: SplitKind,
    pub count: usize,
    pub entropy_mean: f64,
    pub entropy_std: f64,
    pub magnitude_mean: f64,
    pub magnitude_std: f64,
}

/// Mean ± population std of softmax entropy (scores renormalized to sum to
/// one) and feature magnitude, one row per split present.
pub fn split_statistics(records: &[ScoreRecord]) -> Result<Vec<SplitStats>> {
    let mut rows = Vec::new();
    for kind in SplitKind::ALL {
        let group: Vec<&ScoreRecord> = records.iter().filter(|r| r.kind == kind).collect();
        if group.is_empty() {
            continue;
        }
        let entropies = group
            .iter()
            .map(|r| {
                let sum: f64 = r.scores.iter().sum();
                if sum <= 0.0 {
                    return Ok((r.scores.len() as f64).ln());
                }
                let p: Vec<f64> = r.scores.iter().map(|s| s / sum).collect();
                entropy(&p)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mags: Vec<f64> = group.iter().map(|r| r.feature_magnitude).collect();
        let (entropy_mean, entropy_std) = mean_std(&entropies);
        let (magnitude_mean, magnitude_std) = mean_std(&mags);
        rows.push(SplitStats {
            kind,
            count: group.len(),
            entropy_mean,
            entropy_std,
            magnitude_mean,
            magnitude_std,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeHistogram {
    /// `num_bins + 1` shared edges spanning `[0, max magnitude]`.
    pub edges: Vec<f64>,
    /// Normalized bin masses per non-empty split.
    pub splits: Vec<(SplitKind, Vec<f64>)>,
}

pub fn magnitude_histogram(records: &[ScoreRecord], num_bins: usize) -> Result<MagnitudeHistogram> {
    if num_bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let max = records.iter().map(|r| r.feature_magnitude).fold(0.0, f64::max);
    let width = if max > 0.0 { max / num_bins as f64 } else { 1.0 };
    let edges = (0..=num_bins).map(|i| i as f64 * width).collect();
    let mut splits = Vec::new();
    for kind in SplitKind::ALL {
        let mags: Vec<f64> = records.iter().filter(|r| r.kind == kind).map(|r| r.feature_magnitude).collect();
        if mags.is_empty() {
            continue;
        }
        let mut bins = vec![0.0; num_bins];
        for m in &mags {
            let b = ((m / width) as usize).min(num_bins - 1);
            bins[b] += 1.0;
        }
        let n = mags.len() as f64;
        bins.iter_mut().for_each(|b| *b /= n);
        splits.push((kind, bins));
    }
    Ok(MagnitudeHistogram { edges, splits })
}

// ---------------------------------------------------------------------------
// score files
// ---------------------------------------------------------------------------

pub fn write_scores_csv(records: &[ScoreRecord]) -> String {
    let c = records.first().map_or(0, |r| r.scores.len());
    let mut out = String::from("id,tag,true_class,feature_magnitude");
    for i in 0..c {
        let _ = write!(out, ",s_{i}");
    }
    out.push('\n');
    for r in records {
        let tc = r.true_class.map(|c| c.to_string()).unwrap_or_default();
        let _ = write!(out, "{},{},{},{}", r.id, r.kind.name(), tc, r.feature_magnitude);
        for s in &r.scores {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
    }
    out
}

pub fn read_scores_csv(text: &str) -> Result<Vec<ScoreRecord>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty score file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..4] != ["id", "tag", "true_class", "feature_magnitude"] {
        return Err(Error::parse(1, "expected header `id,tag,true_class,feature_magnitude,s_0,...`"));
    }
    for (i, col) in cols[4..].iter().enumerate() {
        if *col != format!("s_{i}") {
            return Err(Error::parse(1, format!("column {} should be `s_{i}`", i + 4)));
        }
    }
    let c = cols.len() - 4;
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != c + 4 {
            return Err(Error::parse(n, format!("expected {} fields, got {}", c + 4, f.len())));
        }
        let id = f[0].parse().map_err(|_| Error::parse(n, format!("bad id `{}`", f[0])))?;
        let kind = SplitKind::parse(f[1]).ok_or_else(|| Error::parse(n, format!("unknown tag `{}`", f[1])))?;
        let true_class = if f[2].is_empty() {
            None
        } else {
            Some(f[2].parse().map_err(|_| Error::parse(n, format!("bad true_class `{}`", f[2])))?)
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(n, format!("bad number `{s}`")));
        let magnitude = num(f[3])?;
        let scores = f[4..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let record = ScoreRecord::new(id, scores, magnitude, kind, true_class).map_err(|e| Error::parse(n, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}
