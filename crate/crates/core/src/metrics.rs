//! Evaluation metrics for imbalanced multiclass problems.
//!
//! The headline metric is the normalized AUC area: one-vs-one AUCs for every
//! class pair, placed around a ring in lexicographic pair order
//! `(0,1), (0,2), ..., (k-2,k-1)`, and the mean product of ring neighbours.
//! The value depends on that order, so the order is part of the definition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows = predicted class, columns = actual class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_predictions(predictions: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                found: predictions.len(),
            });
        }
        let mut m = Self::new(k);
        for (&p, &y) in predictions.iter().zip(labels) {
            if p >= k || y >= k {
                return Err(Error::InvalidConfig(format!("class index out of range for k={k}")));
            }
            m.counts[p][y] += 1;
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.k()).map(|c| self.counts[c][c]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() - self.counts[c][c]
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        self.actual(c) - self.counts[c][c]
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        self.total() - self.true_positives(c) - self.false_positives(c) - self.false_negatives(c)
    }

    pub fn actual(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Lexicographic class pairs `(a, b)` with `a < b`.
pub fn class_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .collect()
}

/// AUC of separating `class_a` from `class_b` using the margin `s_a - s_b`.
///
/// Equals the probability that a random class-a sample has a larger margin
/// than a random class-b sample, with ties counting one half.
pub fn pairwise_auc(scores: &[Vec<f64>], labels: &[usize], class_a: usize, class_b: usize) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let mut margins: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == class_a || y == class_b)
        .map(|(s, &y)| (s[class_a] - s[class_b], y == class_a))
        .collect();
    let n_a = margins.iter().filter(|m| m.1).count();
    let n_b = margins.len() - n_a;
    if n_a == 0 {
        return Err(Error::MissingClass(class_a));
    }
    if n_b == 0 {
        return Err(Error::MissingClass(class_b));
    }
    margins.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Mann-Whitney: sum of midranks of the positive class.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < margins.len() {
        let mut j = i;
        while j + 1 < margins.len() && margins[j + 1].0 == margins[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let positives = margins[i..=j].iter().filter(|m| m.1).count();
        rank_sum += midrank * positives as f64;
        i = j + 1;
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    Ok((rank_sum - na * (na + 1.0) / 2.0) / (na * nb))
}

/// Pairwise AUCs in lexicographic pair order.
pub fn pairwise_aucs(scores: &[Vec<f64>], labels: &[usize], k: usize) -> Result<Vec<f64>> {
    class_pairs(k)
        .into_iter()
        .map(|(a, b)| pairwise_auc(scores, labels, a, b))
        .collect()
}

/// Normalized polar area of the AUC ring: `(1/q) * Σ r_i r_{i+1}` with wrap-around.
pub fn auc_area(aucs: &[f64]) -> Result<f64> {
    let q = aucs.len();
    if q == 0 {
        return Err(Error::EmptySet);
    }
    let ring: f64 = (0..q).map(|i| aucs[i] * aucs[(i + 1) % q]).sum();
    Ok(ring / q as f64)
}

/// ROC points `(FPR, TPR)` for class a versus class b, from the margin `s_a - s_b`.
pub fn roc_points(
    scores: &[Vec<f64>],
    labels: &[usize],
    class_a: usize,
    class_b: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut margins: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == class_a || y == class_b)
        .map(|(s, &y)| (s[class_a] - s[class_b], y == class_a))
        .collect();
    let pos = margins.iter().filter(|m| m.1).count();
    let neg = margins.len() - pos;
    if pos == 0 {
        return Err(Error::MissingClass(class_a));
    }
    if neg == 0 {
        return Err(Error::MissingClass(class_b));
    }
    margins.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < margins.len() {
        let v = margins[i].0;
        while i < margins.len() && margins[i].0 == v {
            if margins[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_area: f64,
    /// Pairwise AUCs in the lexicographic order used by `auc_area`.
    pub pairwise_auc: Vec<f64>,
    pub micro_f1: f64,
    pub accuracy: f64,
    /// Recall of each class.
    pub per_class_accuracy: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn csv_header(class_names: &[String]) -> String {
        let mut cols = vec![
            "algorithm".to_owned(),
            "auc_area".into(),
            "micro_f1".into(),
            "accuracy".into(),
        ];
        cols.extend(class_names.iter().map(|c| format!("acc_{c}")));
        cols.join(",")
    }

    /// One experiment-table row: algorithm, AUC area, Micro-F1, accuracy, per-class accuracy.
    pub fn csv_row(&self, algorithm: &str) -> String {
        let mut cols = vec![
            algorithm.to_owned(),
            format!("{:.6}", self.auc_area),
            format!("{:.6}", self.micro_f1),
            format!("{:.6}", self.accuracy),
        ];
        cols.extend(self.per_class_accuracy.iter().map(|a| format!("{a:.6}")));
        cols.join(",")
    }
}

/// Full report from class scores and hard predictions.
pub fn evaluate(
    scores: &[Vec<f64>],
    predictions: &[usize],
    labels: &[usize],
    k: usize,
) -> Result<EvalReport> {
    if k < 2 {
        return Err(Error::InvalidConfig("evaluation needs at least two classes".into()));
    }
    for len in [scores.len(), predictions.len()] {
        if len != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                found: len,
            });
        }
    }
    if let Some(s) = scores.iter().find(|s| s.len() != k) {
        return Err(Error::LengthMismatch {
            expected: k,
            found: s.len(),
        });
    }
    let confusion = ConfusionMatrix::from_predictions(predictions, labels, k)?;
    let aucs = pairwise_aucs(scores, labels, k)?;
    let total = confusion.total();
    let correct = confusion.correct();
    let accuracy = if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    };
    let per_class_accuracy = (0..k)
        .map(|c| {
            let actual = confusion.actual(c);
            if actual == 0 {
                0.0
            } else {
                confusion.true_positives(c) as f64 / actual as f64
            }
        })
        .collect();
    let (tp, fp, fn_) = (0..k).fold((0u64, 0u64, 0u64), |(tp, fp, fn_), c| {
        (
            tp + confusion.true_positives(c),
            fp + confusion.false_positives(c),
            fn_ + confusion.false_negatives(c),
        )
    });
    let denom = 2 * tp + fp + fn_;
    let micro_f1 = if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    };
    Ok(EvalReport {
        auc_area: auc_area(&aucs)?,
        pairwise_auc: aucs,
        micro_f1,
        accuracy,
        per_class_accuracy,
        confusion,
    })
}
