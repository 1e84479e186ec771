//! Frame-level detection metrics: ROC curve, AUC, EER and replicate
//! aggregation. Higher scores mean "more anomalous" unless the polarity is
//! flipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    HigherIsAnomalous,
    LowerIsAnomalous,
}

/// Scores paired with binary ground truth (1 = anomalous).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Metric(format!("label {bad} is not 0 or 1")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Metric("scores contain NaN".into()));
        }
        Ok(LabeledScores { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        if polarity == Polarity::LowerIsAnomalous {
            for s in &mut self.scores {
                *s = -*s;
            }
        }
        self
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::Metric(format!(
                "both classes are required ({pos} anomalous, {neg} normal)"
            )));
        }
        Ok((pos, neg))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve ordered by decreasing threshold. A sample is predicted
/// anomalous iff `score >= threshold`; the sweep covers every distinct score
/// plus `+inf` and `-inf`.
pub fn roc_curve(ls: &LabeledScores) -> Result<Vec<RocPoint>> {
    let (pos, neg) = ls.require_both_classes()?;
    let mut order: Vec<usize> = (0..ls.len()).collect();
    order.sort_by(|&a, &b| ls.scores[b].total_cmp(&ls.scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = ls.scores[order[i]];
        while i < order.len() && ls.scores[order[i]] == threshold {
            if ls.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

/// Midranks (1-based) of `values`; tied values share their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(anomalous > normal) + ½·P(tie)`, computed from midranks.
pub fn auc(ls: &LabeledScores) -> Result<f64> {
    let (pos, neg) = ls.require_both_classes()?;
    let ranks = midranks(&ls.scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(&ls.labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Equal error rate: the false-positive rate at which it equals the
/// false-negative rate, linearly interpolated between ROC points.
pub fn eer(ls: &LabeledScores) -> Result<f64> {
    let points = roc_curve(ls)?;
    // gap = fpr − fnr runs from −1 at (0,0) to +1 at (1,1)
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    for w in points.windows(2) {
        let (g0, g1) = (gap(&w[0]), gap(&w[1]));
        if g0 == 0.0 {
            return Ok(w[0].fpr);
        }
        if g0 < 0.0 && g1 >= 0.0 {
            let t = -g0 / (g1 - g0);
            return Ok(w[0].fpr + t * (w[1].fpr - w[0].fpr));
        }
    }
    Ok(1.0)
}

/// AUC averaged over groups (for example test videos). Groups lacking one
/// of the classes are skipped; it is an error if every group is skipped.
pub fn grouped_auc(ls: &LabeledScores, groups: &[u32]) -> Result<f64> {
    if groups.len() != ls.len() {
        return Err(Error::Metric("group track length differs from scores".into()));
    }
    let mut ids: Vec<u32> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut aucs = Vec::new();
    for id in ids {
        let (s, l): (Vec<f64>, Vec<u8>) = groups
            .iter()
            .zip(ls.scores.iter().zip(&ls.labels))
            .filter(|(&g, _)| g == id)
            .map(|(_, (&s, &l))| (s, l))
            .unzip();
        let sub = LabeledScores::new(s, l)?;
        if let Ok(a) = auc(&sub) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        return Err(Error::Metric("no group contains both classes".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Rescales scores to `[0, 1]` independently within each group.
pub fn normalize_per_group(scores: &[f64], groups: &[u32]) -> Vec<f64> {
    let mut out = scores.to_vec();
    let mut ids: Vec<u32> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let members: Vec<usize> = (0..scores.len()).filter(|&i| groups[i] == id).collect();
        let lo = members.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for &i in &members {
            out[i] = if span > 0.0 { (scores[i] - lo) / span } else { 0.0 };
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub sd: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::Input("cannot aggregate an empty replicate list".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Aggregate { mean, sd, n })
}
