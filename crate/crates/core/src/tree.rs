//! C4.5 decision trees over numeric features.
//!
//! Splits are binary `value <= threshold` tests. For each feature the
//! threshold with the highest information gain is found; among features whose
//! gain is at least the average candidate gain, the one with the highest gain
//! ratio wins. Instance weights are honored throughout. A sample whose split
//! value is missing goes down both branches with its weight scaled by the
//! branch's share of known weight, and prediction blends both subtrees with
//! the same fractions. Leaves store Laplace-smoothed class frequencies.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Comparison slack for gains and ratios, so float noise cannot reorder ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainControl {
    /// Minimum known weight per branch; nodes lighter than twice this are leaves.
    pub min_leaf_weight: f64,
    pub max_depth: usize,
    pub laplace_alpha: f64,
}

impl Default for TrainControl {
    fn default() -> Self {
        TrainControl {
            min_leaf_weight: 2.0,
            max_depth: 25,
            laplace_alpha: 1.0,
        }
    }
}

impl TrainControl {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf_weight.is_nan() || self.min_leaf_weight <= 0.0 {
            return Err(Error::InvalidConfig("min_leaf_weight must be > 0".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.laplace_alpha.is_nan() || self.laplace_alpha < 0.0 {
            return Err(Error::InvalidConfig("laplace_alpha must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Share of known training weight that went left; used for missing values.
        left_fraction: f64,
        right_fraction: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        distribution: Vec<f64>,
    },
}

impl TreeNode {
    pub fn predict_proba(&self, x: &[f64], class_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; class_count];
        self.accumulate(x, 1.0, &mut out);
        out
    }

    fn accumulate(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            TreeNode::Leaf { distribution } => {
                for (o, p) in out.iter_mut().zip(distribution) {
                    *o += scale * p;
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left_fraction,
                right_fraction,
                left,
                right,
            } => {
                let v = x[*feature];
                if v.is_nan() {
                    left.accumulate(x, scale * left_fraction, out);
                    right.accumulate(x, scale * right_fraction, out);
                } else if v <= *threshold {
                    left.accumulate(x, scale, out);
                } else {
                    right.accumulate(x, scale, out);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Features tested anywhere in the tree, ascending.
    pub fn used_features(&self) -> Vec<usize> {
        fn walk(node: &TreeNode, out: &mut Vec<usize>) {
            if let TreeNode::Split {
                feature,
                left,
                right,
                ..
            } = node
            {
                out.push(*feature);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub feature_count: usize,
    pub class_count: usize,
}

impl DecisionTree {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::SchemaMismatch(format!(
                "tree expects {} features, got {}",
                self.feature_count,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check(x.as_slice())?;
        Ok(self.predict_proba_row(x.as_slice()))
    }

    /// Unchecked variant for rows already known to match the schema.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        self.root.predict_proba(x, self.class_count)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        self.predict_proba(x).map(|p| argmax(&p))
    }
}

pub fn predict_proba_tree(tree: &DecisionTree, x: &FeatureVector) -> Result<Vec<f64>> {
    tree.predict_proba(x)
}

/// Per-feature sample orderings, reusable across trees fitted on the same rows
/// with different weights (as in boosting).
#[derive(Debug, Clone)]
pub struct SortedColumns {
    features: Vec<usize>,
    /// For each feature: known values ascending (ties by row), then missing rows.
    orders: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(ds: &LabeledDataset, features: &[usize]) -> Result<Self> {
        let mut features = features.to_vec();
        features.sort_unstable();
        features.dedup();
        if let Some(&f) = features.iter().find(|&&f| f >= ds.feature_count()) {
            return Err(Error::InvalidConfig(format!("feature index {f} out of range")));
        }
        let orders = features
            .iter()
            .map(|&f| {
                let mut idx: Vec<u32> = (0..ds.len() as u32).collect();
                idx.sort_by(|&a, &b| {
                    let (va, vb) = (ds.value(a as usize, f), ds.value(b as usize, f));
                    match (va.is_nan(), vb.is_nan()) {
                        (false, false) => va.total_cmp(&vb).then(a.cmp(&b)),
                        (true, true) => a.cmp(&b),
                        (false, true) => std::cmp::Ordering::Less,
                        (true, false) => std::cmp::Ordering::Greater,
                    }
                });
                idx
            })
            .collect();
        Ok(SortedColumns { features, orders })
    }

    pub fn all(ds: &LabeledDataset) -> Result<Self> {
        Self::new(ds, &(0..ds.feature_count()).collect::<Vec<_>>())
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    /// The orderings of a subset of this presort's features.
    pub fn select(&self, features: &[usize]) -> Result<Self> {
        let mut wanted = features.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let mut orders = Vec::with_capacity(wanted.len());
        for &f in &wanted {
            let Ok(pos) = self.features.binary_search(&f) else {
                return Err(Error::InvalidConfig(format!("feature index {f} was not presorted")));
            };
            orders.push(self.orders[pos].clone());
        }
        Ok(SortedColumns {
            features: wanted,
            orders,
        })
    }
}

/// Fits a tree on every feature of `ds`.
pub fn train_tree(ds: &LabeledDataset, weights: &[f64], ctrl: &TrainControl) -> Result<DecisionTree> {
    let sorted = SortedColumns::all(ds)?;
    train_tree_presorted(ds, weights, &sorted, ctrl)
}

/// Fits a tree restricted to the features of `sorted`.
pub fn train_tree_presorted(
    ds: &LabeledDataset,
    weights: &[f64],
    sorted: &SortedColumns,
    ctrl: &TrainControl,
) -> Result<DecisionTree> {
    ctrl.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if weights.len() != ds.len() {
        return Err(Error::LengthMismatch {
            expected: ds.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    let total: f64 = weights.iter().sum();
    if positive == 0 || total <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    // Rescale so weights sum to the number of contributing samples; this makes
    // `min_leaf_weight` read as a sample count and the tree scale invariant.
    let scale = positive as f64 / total;

    let cols: Vec<Column> = sorted
        .orders
        .iter()
        .zip(&sorted.features)
        .map(|(order, &f)| {
            order
                .iter()
                .filter(|&&i| weights[i as usize] > 0.0)
                .map(|&i| Entry {
                    value: ds.value(i as usize, f),
                    weight: weights[i as usize] * scale,
                    row: i,
                    class: ds.label(i as usize) as u32,
                })
                .collect()
        })
        .collect();

    let mut builder = Builder {
        ctrl,
        features: &sorted.features,
        k: ds.class_count(),
        side: vec![Side::Left; ds.len()],
    };
    let root = if cols.is_empty() {
        let mut cw = vec![0.0; builder.k];
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                cw[ds.label(i)] += w * scale;
            }
        }
        builder.leaf(&cw)
    } else {
        builder.build(cols, 0)
    };
    Ok(DecisionTree {
        root,
        feature_count: ds.feature_count(),
        class_count: ds.class_count(),
    })
}

/// One sample as seen by one feature column at one node.
#[derive(Debug, Clone, Copy)]
struct Entry {
    value: f64,
    weight: f64,
    row: u32,
    class: u32,
}

/// Known values ascending, then missing ones.
type Column = Vec<Entry>;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
    Both,
}

struct Candidate {
    column: usize,
    gain: f64,
    ratio: f64,
    threshold: f64,
    left_known: f64,
    right_known: f64,
}

struct Builder<'a> {
    ctrl: &'a TrainControl,
    features: &'a [usize],
    k: usize,
    side: Vec<Side>,
}

/// `x log2 x`, zero at zero.
fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Entropy in bits of a weighted class histogram with the given total.
fn entropy(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    (xlogx(total) - counts.iter().map(|&c| xlogx(c)).sum::<f64>()) / total
}

impl Builder<'_> {
    fn class_weights(&self, col: &[Entry]) -> Vec<f64> {
        let mut cw = vec![0.0; self.k];
        for e in col {
            cw[e.class as usize] += e.weight;
        }
        cw
    }

    fn leaf(&self, class_weights: &[f64]) -> TreeNode {
        let alpha = self.ctrl.laplace_alpha;
        let total: f64 = class_weights.iter().sum();
        let denom = total + alpha * self.k as f64;
        let distribution = if denom > 0.0 {
            class_weights.iter().map(|c| (c + alpha) / denom).collect()
        } else {
            vec![1.0 / self.k as f64; self.k]
        };
        TreeNode::Leaf { distribution }
    }

    fn build(&mut self, cols: Vec<Column>, depth: usize) -> TreeNode {
        let class_weights = self.class_weights(&cols[0]);
        let total: f64 = class_weights.iter().sum();
        let nonzero = class_weights.iter().filter(|&&c| c > 0.0).count();
        if nonzero <= 1 || total < 2.0 * self.ctrl.min_leaf_weight || depth >= self.ctrl.max_depth
        {
            return self.leaf(&class_weights);
        }
        let Some(best) = self.choose_split(&cols, total) else {
            return self.leaf(&class_weights);
        };

        let feature = self.features[best.column];
        for e in &cols[best.column] {
            self.side[e.row as usize] = if e.value.is_nan() {
                Side::Both
            } else if e.value <= best.threshold {
                Side::Left
            } else {
                Side::Right
            };
        }
        let left_fraction = best.left_known / (best.left_known + best.right_known);
        let right_fraction = 1.0 - left_fraction;

        let mut left_cols = Vec::with_capacity(cols.len());
        let mut right_cols = Vec::with_capacity(cols.len());
        for col in cols {
            let mut l = Vec::with_capacity(col.len());
            let mut r = Vec::with_capacity(col.len());
            for e in col {
                match self.side[e.row as usize] {
                    Side::Left => l.push(e),
                    Side::Right => r.push(e),
                    Side::Both => {
                        l.push(Entry {
                            weight: e.weight * left_fraction,
                            ..e
                        });
                        r.push(Entry {
                            weight: e.weight * right_fraction,
                            ..e
                        });
                    }
                }
            }
            left_cols.push(l);
            right_cols.push(r);
        }
        let left = self.build(left_cols, depth + 1);
        let right = self.build(right_cols, depth + 1);
        TreeNode::Split {
            feature,
            threshold: best.threshold,
            left_fraction,
            right_fraction,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn choose_split(&self, cols: &[Column], total: f64) -> Option<Candidate> {
        let mut scratch = Scratch::new(self.k);
        let candidates: Vec<Candidate> = cols
            .iter()
            .enumerate()
            .filter_map(|(j, col)| self.best_threshold(j, col, total, &mut scratch))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let average = candidates.iter().map(|c| c.gain).sum::<f64>() / candidates.len() as f64;
        let mut best: Option<Candidate> = None;
        for c in candidates {
            if c.gain < average - TIE_EPS {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    c.ratio > b.ratio + TIE_EPS
                        || ((c.ratio - b.ratio).abs() <= TIE_EPS && c.gain > b.gain + TIE_EPS)
                }
            };
            if better {
                best = Some(c);
            }
        }
        best
    }

    /// Highest-gain threshold for one feature, with its gain ratio.
    ///
    /// Only cuts next to a class change, plus the outermost cuts allowed by
    /// `min_leaf_weight`, are scored: weighted entropy is concave while
    /// weight of a single class moves across the cut, so no cut strictly
    /// inside a single-class run can beat both ends of the run.
    fn best_threshold(
        &self,
        column: usize,
        col: &[Entry],
        total: f64,
        s: &mut Scratch,
    ) -> Option<Candidate> {
        let min_leaf = self.ctrl.min_leaf_weight;
        let known = col.partition_point(|e| !e.value.is_nan());
        if known < 2 {
            return None;
        }
        let col = &col[..known];
        s.reset(self.class_weights(col));
        let known_total: f64 = s.known.iter().sum();
        if known_total < 2.0 * min_leaf {
            return None;
        }
        let known_entropy = entropy(&s.known, known_total);

        let mut left_total = 0.0;
        let mut best: Option<(f64, f64, f64)> = None; // gain, threshold, left weight
        let mut start = 0;
        let (mut end, mut class, _) = group(col, 0);
        while end < known {
            // Add group [start, end) to the left side; the cut follows it.
            for e in &col[start..end] {
                s.left[e.class as usize] += e.weight;
                left_total += e.weight;
            }
            let (next_end, next_class, next_weight) = group(col, end);
            let right_total = known_total - left_total;
            let feasible = left_total >= min_leaf && right_total >= min_leaf;
            if feasible {
                let first = !s.seen_feasible;
                let last = next_end == known || right_total - next_weight < min_leaf;
                let boundary = class.is_none() || next_class.is_none() || class != next_class;
                s.seen_feasible = true;
                if boundary || first || last {
                    let info = s.info(left_total, known_total);
                    let gain = known_total / total * (known_entropy - info);
                    if best.is_none_or(|(g, _, _)| gain > g + TIE_EPS) {
                        let (v, next) = (col[end - 1].value, col[end].value);
                        let mut threshold = 0.5 * (v + next);
                        if threshold.is_nan() || threshold >= next {
                            threshold = v;
                        }
                        best = Some((gain, threshold, left_total));
                    }
                }
            }
            start = end;
            end = next_end;
            class = next_class;
        }
        let (gain, threshold, left_known) = best?;
        if gain <= TIE_EPS {
            return None;
        }
        let right_known = known_total - left_known;
        let missing = (total - known_total).max(0.0);
        let split_info = -[left_known, right_known, missing]
            .iter()
            .filter(|&&b| b > 0.0)
            .map(|&b| (b / total) * (b / total).log2())
            .sum::<f64>();
        if split_info <= TIE_EPS {
            return None;
        }
        Some(Candidate {
            column,
            gain,
            ratio: gain / split_info,
            threshold,
            left_known,
            right_known,
        })
    }
}

/// End, shared class (if any) and weight of the run of equal values at `start`.
fn group(col: &[Entry], start: usize) -> (usize, Option<u32>, f64) {
    let first = col[start];
    let mut class = Some(first.class);
    let mut weight = first.weight;
    let mut end = start + 1;
    while end < col.len() && col[end].value == first.value {
        if class != Some(col[end].class) {
            class = None;
        }
        weight += col[end].weight;
        end += 1;
    }
    (end, class, weight)
}

/// Running class histograms for one threshold scan. `Σ x log x` for each
/// side is updated only for classes whose left weight moved since the last
/// scored cut.
struct Scratch {
    known: Vec<f64>,
    left: Vec<f64>,
    scored_left: Vec<f64>,
    term_left: Vec<f64>,
    term_right: Vec<f64>,
    sum_left: f64,
    sum_right: f64,
    seen_feasible: bool,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Scratch {
            known: vec![0.0; k],
            left: vec![0.0; k],
            scored_left: vec![0.0; k],
            term_left: vec![0.0; k],
            term_right: vec![0.0; k],
            sum_left: 0.0,
            sum_right: 0.0,
            seen_feasible: false,
        }
    }

    fn reset(&mut self, known: Vec<f64>) {
        for (t, &c) in self.term_right.iter_mut().zip(&known) {
            *t = xlogx(c);
        }
        self.sum_right = self.term_right.iter().sum();
        self.known = known;
        self.left.iter_mut().for_each(|x| *x = 0.0);
        self.scored_left.iter_mut().for_each(|x| *x = 0.0);
        self.term_left.iter_mut().for_each(|x| *x = 0.0);
        self.sum_left = 0.0;
        self.seen_feasible = false;
    }

    /// Weighted mean child entropy for the current left histogram.
    fn info(&mut self, left_total: f64, known_total: f64) -> f64 {
        for c in 0..self.known.len() {
            let new = self.left[c];
            if self.scored_left[c] != new {
                let tl = xlogx(new);
                let tr = xlogx((self.known[c] - new).max(0.0));
                self.sum_left += tl - self.term_left[c];
                self.sum_right += tr - self.term_right[c];
                self.term_left[c] = tl;
                self.term_right[c] = tr;
                self.scored_left[c] = new;
            }
        }
        let right_total = known_total - left_total;
        (xlogx(left_total) - self.sum_left + xlogx(right_total) - self.sum_right) / known_total
    }
}
