//! AdaBoost.M1 over C4.5 trees.
//!
//! Each round fits a tree to the current sample distribution, measures its
//! weighted error `ε`, sets `β = ε / (1 - ε)`, shrinks the weight of correctly
//! classified samples by `β` and renormalizes. The ensemble votes with
//! `ln(1/β)` per round; class scores are the `(1 - ε)`-weighted average of the
//! per-round leaf distributions.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::tree::{argmax, train_tree_presorted, DecisionTree, SortedColumns, TrainControl};

/// Floor applied to `β` when a round classifies every sample correctly.
pub const MIN_BETA: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub tree: DecisionTree,
    pub epsilon: f64,
    pub beta: f64,
}

impl BoostRound {
    pub fn vote_weight(&self) -> f64 {
        (1.0 / self.beta).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub schema: FeatureSchema,
    pub class_names: Vec<String>,
    /// Feature indices the trees were allowed to use (all, or a BPSO subset).
    pub selected_features: Vec<usize>,
    pub rounds: Vec<BoostRound>,
}

pub fn compute_error(predictions: &[usize], labels: &[usize], weights: &[f64]) -> Result<f64> {
    for len in [labels.len(), weights.len()] {
        if len != predictions.len() {
            return Err(Error::LengthMismatch {
                expected: predictions.len(),
                found: len,
            });
        }
    }
    let (mut wrong, mut right) = (0.0, 0.0);
    for ((p, y), w) in predictions.iter().zip(labels).zip(weights) {
        if p == y {
            right += w;
        } else {
            wrong += w;
        }
    }
    // Dividing by the summed total keeps exact halves exact.
    let total = wrong + right;
    Ok(if total > 0.0 { wrong / total } else { 0.0 })
}

pub fn compute_beta(epsilon: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok((epsilon / (1.0 - epsilon)).max(MIN_BETA))
}

/// Multiplies correctly classified weights by `beta` and renormalizes.
pub fn update_weights(weights: &[f64], beta: f64, correct: &[bool]) -> Result<Vec<f64>> {
    if correct.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            found: correct.len(),
        });
    }
    let mut next: Vec<f64> = weights
        .iter()
        .zip(correct)
        .map(|(&w, &ok)| if ok { w * beta } else { w })
        .collect();
    let total: f64 = next.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    for w in &mut next {
        *w /= total;
    }
    Ok(next)
}

/// Boosts over every feature of `ds`.
pub fn run_boosting(ds: &LabeledDataset, rounds: usize, ctrl: &TrainControl) -> Result<AdaBoostModel> {
    let all: Vec<usize> = (0..ds.feature_count()).collect();
    fit_boosting(ds, &all, rounds, ctrl)
}

/// Boosts with trees restricted to `features`.
///
/// A round with `ε >= 0.5` is dropped and ends training; if it is the first
/// round, training fails. A round with `ε = 0` is kept (with `β` floored at
/// [`MIN_BETA`]) and ends training, since the distribution would collapse.
pub fn fit_boosting(
    ds: &LabeledDataset,
    features: &[usize],
    rounds: usize,
    ctrl: &TrainControl,
) -> Result<AdaBoostModel> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("boosting needs at least one round".into()));
    }
    if features.is_empty() {
        return Err(Error::MaskEmpty);
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sorted = SortedColumns::new(ds, features)?;
    fit_boosting_presorted(ds, &sorted, rounds, ctrl)
}

/// As [`fit_boosting`], restricted to the features of `sorted`.
pub fn fit_boosting_presorted(
    ds: &LabeledDataset,
    sorted: &SortedColumns,
    rounds: usize,
    ctrl: &TrainControl,
) -> Result<AdaBoostModel> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("boosting needs at least one round".into()));
    }
    if sorted.features().is_empty() {
        return Err(Error::MaskEmpty);
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut kept = Vec::new();
    let mut predictions = vec![0usize; n];

    for t in 0..rounds {
        let tree = train_tree_presorted(ds, &weights, sorted, ctrl)?;
        for (i, p) in predictions.iter_mut().enumerate() {
            *p = argmax(&tree.predict_proba_row(ds.row(i)));
        }
        let epsilon = compute_error(&predictions, ds.labels(), &weights)?;
        if epsilon >= 0.5 {
            if t == 0 {
                return Err(Error::FirstRoundTooWeak { epsilon });
            }
            log::debug!("boosting stopped at round {}: error {epsilon}", t + 1);
            break;
        }
        let beta = compute_beta(epsilon)?;
        kept.push(BoostRound {
            tree,
            epsilon,
            beta,
        });
        if epsilon == 0.0 {
            break;
        }
        let correct: Vec<bool> = predictions
            .iter()
            .zip(ds.labels())
            .map(|(p, y)| p == y)
            .collect();
        weights = update_weights(&weights, beta, &correct)?;
    }

    Ok(AdaBoostModel {
        schema: ds.schema().clone(),
        class_names: ds.class_names().to_vec(),
        selected_features: sorted.features().to_vec(),
        rounds: kept,
    })
}

impl AdaBoostModel {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "model expects {} features ({}), got {}",
                self.schema.len(),
                self.schema.name.as_str(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Weighted vote: each round adds `ln(1/β)` to its predicted class.
    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        self.check(x.as_slice())?;
        Ok(self.predict_row(x.as_slice()))
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = vec![0.0; self.class_count()];
        for round in &self.rounds {
            let class = argmax(&round.tree.predict_proba_row(x));
            votes[class] += round.vote_weight();
        }
        argmax(&votes)
    }

    /// Convex combination of per-round class distributions, weighted by `1 - ε`.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check(x.as_slice())?;
        Ok(self.predict_proba_row(x.as_slice()))
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let norm: f64 = self.rounds.iter().map(|r| 1.0 - r.epsilon).sum();
        let mut out = vec![0.0; self.class_count()];
        for round in &self.rounds {
            let w = (1.0 - round.epsilon) / norm;
            for (o, p) in out.iter_mut().zip(round.tree.predict_proba_row(x)) {
                *o += w * p;
            }
        }
        out
    }

    pub fn selected_feature_names(&self) -> Vec<String> {
        self.selected_features
            .iter()
            .map(|&i| self.schema.feature_names[i].clone())
            .collect()
    }
}
