//! Screening metrics, operating-threshold choice and champion selection.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::schema::Class;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.r#fn
    }

    /// tp / (tp + fn); 0 when there are no positives.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.r#fn)
    }

    /// tn / (tn + fp); 0 when there are no negatives.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub rocauc: f64,
    pub threshold: f64,
    pub counts: ConfusionCounts,
}

impl EvalMetrics {
    pub fn compute(scores: &[f64], labels: &[Class], threshold: f64) -> Result<Self> {
        let counts = confusion(scores, labels, threshold)?;
        Ok(Self {
            sensitivity: counts.sensitivity(),
            specificity: counts.specificity(),
            rocauc: roc_auc(scores, labels)?,
            threshold,
            counts,
        })
    }
}

fn check_lengths(scores: &[f64], labels: &[Class]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty { module: "evaluation" });
    }
    if scores.len() != labels.len() {
        return Err(invalid("evaluation", "scores and labels differ in length"));
    }
    Ok(())
}

/// Predicted CKD iff `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[Class], threshold: f64) -> Result<ConfusionCounts> {
    check_lengths(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.r#fn += 1,
        }
    }
    Ok(c)
}

/// Mann–Whitney AUC via average ranks; tied pairs count ½.
pub fn roc_auc(scores: &[f64], labels: &[Class]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass { module: "evaluation" });
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_positive())
        .map(|(r, _)| r)
        .sum();
    let n_pos_f = n_pos as f64;
    let u = rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). `None` when either
/// side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / libm::sqrt(sxx * syy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Highest sensitivity among thresholds with specificity ≥ the floor.
    MaxSensitivity { specificity_floor: f64 },
    Fixed { threshold: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::MaxSensitivity {
            specificity_floor: 0.60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// Set when the specificity floor could not be met.
    pub floor_unattainable: bool,
}

/// Midpoints between consecutive distinct sorted scores, plus 0 and 1.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut out = alloc::vec![0.0];
    out.extend(s.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Picks the operating threshold from validation scores.
pub fn choose_threshold(scores: &[f64], labels: &[Class], policy: ThresholdPolicy) -> Result<ThresholdChoice> {
    let floor = match policy {
        ThresholdPolicy::Fixed { threshold } => {
            return Ok(ThresholdChoice {
                threshold,
                floor_unattainable: false,
            })
        }
        ThresholdPolicy::MaxSensitivity { specificity_floor } => specificity_floor,
    };
    check_lengths(scores, labels)?;
    let mut evaluated = Vec::new();
    for t in candidate_thresholds(scores) {
        let c = confusion(scores, labels, t)?;
        evaluated.push((t, c.sensitivity(), c.specificity()));
    }
    // Ascending thresholds: `>=` keeps the largest among equals.
    let mut best: Option<(f64, f64)> = None;
    for &(t, sens, spec) in &evaluated {
        if spec >= floor && best.is_none_or(|(_, bs)| sens >= bs) {
            best = Some((t, sens));
        }
    }
    if let Some((t, _)) = best {
        return Ok(ThresholdChoice {
            threshold: t,
            floor_unattainable: false,
        });
    }
    // Fallback: maximal specificity, then maximal sensitivity, then largest.
    let mut fb = evaluated[0];
    for &e in &evaluated[1..] {
        let better = match e.2.total_cmp(&fb.2) {
            Ordering::Greater => true,
            Ordering::Equal => e.1 >= fb.1,
            Ordering::Less => false,
        };
        if better {
            fb = e;
        }
    }
    Ok(ThresholdChoice {
        threshold: fb.0,
        floor_unattainable: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    /// True when another candidate matched on every metric and input order
    /// decided.
    pub full_tie: bool,
}

/// Argmax by sensitivity, then ROC-AUC, then specificity; first wins a
/// full tie.
pub fn select_model(candidates: &[EvalMetrics]) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Empty { module: "evaluation" });
    }
    let key = |m: &EvalMetrics| (m.sensitivity, m.rocauc, m.specificity);
    let cmp = |a: &EvalMetrics, b: &EvalMetrics| {
        let (a, b) = (key(a), key(b));
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    };
    let mut best = 0;
    for i in 1..candidates.len() {
        if cmp(&candidates[i], &candidates[best]) == Ordering::Greater {
            best = i;
        }
    }
    let full_tie = candidates
        .iter()
        .enumerate()
        .any(|(i, c)| i != best && cmp(c, &candidates[best]) == Ordering::Equal);
    Ok(Selection {
        index: best,
        full_tie,
    })
}
