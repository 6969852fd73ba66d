//! Training and cross-validation for the four compared algorithms.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{fit_boosting, AdaBoostModel};
use crate::bpso::{self, BpsoConfig};
use crate::dataset::{stratified_folds, LabeledDataset};
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::metrics::{evaluate, EvalReport};
use crate::tree::{argmax, train_tree, DecisionTree, TrainControl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "c45")]
    C45,
    #[serde(rename = "adaboost")]
    AdaBoost,
    #[serde(rename = "bpso-c45")]
    BpsoC45,
    #[serde(rename = "bpso-adaboost")]
    BpsoAdaBoost,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::C45,
        Algorithm::AdaBoost,
        Algorithm::BpsoC45,
        Algorithm::BpsoAdaBoost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::C45 => "c45",
            Algorithm::AdaBoost => "adaboost",
            Algorithm::BpsoC45 => "bpso-c45",
            Algorithm::BpsoAdaBoost => "bpso-adaboost",
        }
    }

    pub fn uses_bpso(self) -> bool {
        matches!(self, Algorithm::BpsoC45 | Algorithm::BpsoAdaBoost)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

/// A fitted model of either shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Tree {
        schema: FeatureSchema,
        class_names: Vec<String>,
        tree: DecisionTree,
    },
    Boosted(AdaBoostModel),
}

impl Classifier {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            Classifier::Tree { schema, .. } => schema,
            Classifier::Boosted(m) => &m.schema,
        }
    }

    pub fn class_names(&self) -> &[String] {
        match self {
            Classifier::Tree { class_names, .. } => class_names,
            Classifier::Boosted(m) => &m.class_names,
        }
    }

    fn check(&self, x: &FeatureVector) -> Result<()> {
        let schema = self.schema();
        if x.as_slice().len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "model expects {} features ({}), got {}",
                schema.len(),
                schema.name.as_str(),
                x.as_slice().len()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        self.check(x)?;
        Ok(self.predict_row(x.as_slice()))
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.predict_proba_row(x.as_slice()))
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        match self {
            Classifier::Tree { tree, .. } => argmax(&tree.predict_proba_row(x)),
            Classifier::Boosted(m) => m.predict_row(x),
        }
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Classifier::Tree { tree, .. } => tree.predict_proba_row(x),
            Classifier::Boosted(m) => m.predict_proba_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub selected_features: Vec<String>,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    pub generations: usize,
    pub converged: bool,
    pub evaluations: usize,
}

/// What `train` produces and what the CLI persists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub classifier: Classifier,
    pub selection: Option<SelectionSummary>,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trains `algorithm` on `ds`. `cfg.boosting_rounds` is the ensemble size for
/// the boosted arms; `bpso-c45` forces one round. `cfg.tree` applies to every arm.
pub fn train(ds: &LabeledDataset, algorithm: Algorithm, cfg: &BpsoConfig) -> Result<TrainedModel> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (classifier, selection) = match algorithm {
        Algorithm::C45 => {
            let tree = train_tree(ds, &vec![1.0; ds.len()], &cfg.tree)?;
            let c = Classifier::Tree {
                schema: ds.schema().clone(),
                class_names: ds.class_names().to_vec(),
                tree,
            };
            (c, None)
        }
        Algorithm::AdaBoost => {
            let all: Vec<usize> = (0..ds.feature_count()).collect();
            let m = fit_boosting(ds, &all, cfg.boosting_rounds, &cfg.tree)?;
            (Classifier::Boosted(m), None)
        }
        Algorithm::BpsoC45 | Algorithm::BpsoAdaBoost => {
            let mut cfg = cfg.clone();
            if algorithm == Algorithm::BpsoC45 {
                cfg.boosting_rounds = 1;
            }
            let r = bpso::run(ds, &cfg)?;
            let summary = SelectionSummary {
                selected_features: r.final_model.selected_feature_names(),
                best_fitness: r.best_fitness,
                history: r.history,
                generations: r.generations,
                converged: r.converged,
                evaluations: r.evaluations,
            };
            (Classifier::Boosted(r.final_model), Some(summary))
        }
    };
    Ok(TrainedModel {
        algorithm,
        seed: cfg.seed,
        classifier,
        selection,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalConfig {
    pub algorithm: Algorithm,
    pub folds: usize,
    pub seed: u64,
    /// Swarm, boosting and tree settings; its own seed is replaced per fold.
    pub bpso: BpsoConfig,
}

impl CrossvalConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        CrossvalConfig {
            algorithm,
            folds: 10,
            seed,
            bpso: BpsoConfig::default(),
        }
    }

    pub fn tree(&self) -> &TrainControl {
        &self.bpso.tree
    }
}

/// Seed handed to the optimizer for one outer fold.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    bpso::stream_seed(seed, u64::MAX, fold as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Absent when the test fold lacks some class.
    pub report: Option<EvalReport>,
    pub selection: Option<SelectionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub config: CrossvalConfig,
    pub schema: String,
    pub feature_count: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    /// Metrics over the pooled out-of-fold predictions.
    pub pooled: EvalReport,
    pub mean_fold_auc_area: f64,
    pub mean_fold_accuracy: f64,
    pub folds: Vec<FoldResult>,
}

impl CrossvalReport {
    /// Union of the features selected in any fold, in schema order.
    pub fn selected_features(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for f in &self.folds {
            if let Some(s) = &f.selection {
                for name in &s.selected_features {
                    if !seen.contains(name) {
                        seen.push(name.clone());
                    }
                }
            }
        }
        seen
    }
}

struct FoldOutput {
    result: FoldResult,
    test: Vec<usize>,
    scores: Vec<Vec<f64>>,
    predictions: Vec<usize>,
}

pub fn cross_validate(ds: &LabeledDataset, cfg: &CrossvalConfig) -> Result<CrossvalReport> {
    cfg.bpso.validate()?;
    let plan = stratified_folds(ds, cfg.folds, cfg.seed)?;
    let k = ds.class_count();
    for (c, &n) in ds.class_counts().iter().enumerate() {
        if n < cfg.folds {
            log::warn!(
                "class {} has {n} samples, fewer than {} folds",
                ds.class_names()[c],
                cfg.folds
            );
        }
    }

    let outputs: Vec<FoldOutput> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let train_idx = plan.train_indices(fold);
            let test_idx = plan.test_indices(fold);
            let train_ds = ds.subset(&train_idx);
            let mut fold_cfg = cfg.bpso.clone();
            fold_cfg.seed = fold_seed(cfg.seed, fold);
            let model = train(&train_ds, cfg.algorithm, &fold_cfg)?;
            let scores: Vec<Vec<f64>> = test_idx
                .iter()
                .map(|&i| model.classifier.predict_proba_row(ds.row(i)))
                .collect();
            let predictions: Vec<usize> = test_idx
                .iter()
                .map(|&i| model.classifier.predict_row(ds.row(i)))
                .collect();
            let labels: Vec<usize> = test_idx.iter().map(|&i| ds.label(i)).collect();
            let report = match evaluate(&scores, &predictions, &labels, k) {
                Ok(r) => Some(r),
                Err(Error::MissingClass(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(FoldOutput {
                result: FoldResult {
                    fold,
                    train_size: train_idx.len(),
                    test_size: test_idx.len(),
                    report,
                    selection: model.selection,
                },
                test: test_idx,
                scores,
                predictions,
            })
        })
        .collect::<Result<_>>()?;

    let n = ds.len();
    let mut scores = vec![Vec::new(); n];
    let mut predictions = vec![0usize; n];
    let mut folds = Vec::with_capacity(outputs.len());
    for out in outputs {
        for ((i, s), p) in out.test.into_iter().zip(out.scores).zip(out.predictions) {
            scores[i] = s;
            predictions[i] = p;
        }
        folds.push(out.result);
    }
    let pooled = evaluate(&scores, &predictions, ds.labels(), k)?;

    let reports: Vec<&EvalReport> = folds.iter().filter_map(|f| f.report.as_ref()).collect();
    let mean = |f: &dyn Fn(&EvalReport) -> f64| {
        if reports.is_empty() {
            f64::NAN
        } else {
            reports.iter().map(|r| f(r)).sum::<f64>() / reports.len() as f64
        }
    };
    let mean_fold_auc_area = mean(&|r| r.auc_area);
    let mean_fold_accuracy = mean(&|r| r.accuracy);

    Ok(CrossvalReport {
        config: cfg.clone(),
        schema: ds.schema().name.as_str().to_owned(),
        feature_count: ds.feature_count(),
        class_names: ds.class_names().to_vec(),
        class_counts: ds.class_counts(),
        pooled,
        mean_fold_auc_area,
        mean_fold_accuracy,
        folds,
    })
}
