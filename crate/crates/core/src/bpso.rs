//! Binary particle swarm feature selection wrapped around AdaBoost.
//!
//! Each particle is a feature mask. Its fitness is the AUC area of pooled
//! out-of-fold AdaBoost scores from an inner stratified cross-validation on the
//! training data restricted to the masked features. Velocities follow the
//! inertia-weight PSO rule and each bit is resampled as 1 with probability
//! `sigmoid(v)`.
//!
//! All randomness is drawn from generators seeded by `(seed, generation,
//! particle)`, and fitness is a pure function of the mask, so evaluating the
//! swarm in parallel cannot change the outcome.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{fit_boosting, fit_boosting_presorted, AdaBoostModel};
use crate::dataset::{stratified_folds, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::{auc_area, pairwise_aucs};
use crate::tree::{SortedColumns, TrainControl};

/// Generations without a global-best improvement after which the swarm stops.
pub const STAGNATION_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsoConfig {
    pub swarm_size: usize,
    pub generation_limit: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub v_max: f64,
    pub boosting_rounds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub tree: TrainControl,
}

impl Default for BpsoConfig {
    fn default() -> Self {
        BpsoConfig {
            swarm_size: 30,
            generation_limit: 50,
            inertia: 0.73,
            c1: 1.5,
            c2: 1.5,
            v_max: 6.0,
            boosting_rounds: 30,
            inner_folds: 3,
            seed: 0,
            tree: TrainControl::default(),
        }
    }
}

impl BpsoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.swarm_size < 1 {
            return bad("swarm_size must be >= 1");
        }
        if self.generation_limit < 1 {
            return bad("generation_limit must be >= 1");
        }
        if self.v_max.is_nan() || self.v_max <= 0.0 {
            return bad("v_max must be > 0");
        }
        if self.boosting_rounds < 1 {
            return bad("boosting_rounds must be >= 1");
        }
        if self.inner_folds < 2 {
            return Err(Error::BadFoldCount(self.inner_folds));
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<bool>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<bool>,
    /// `-inf` until the particle has been evaluated successfully.
    pub best_fitness: f64,
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Seed for one (generation, particle) stream, mixed with SplitMix64.
pub fn stream_seed(seed: u64, generation: u64, particle: u64) -> u64 {
    let mut z = seed
        ^ generation.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ particle.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn particle_rng(seed: u64, generation: u64, particle: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, generation, particle as u64))
}

/// Ensures at least one bit is set by switching on a uniformly random bit.
fn repair<R: Rng>(mask: &mut [bool], rng: &mut R) {
    if !mask.iter().any(|&b| b) {
        let i = rng.gen_range(0..mask.len());
        mask[i] = true;
    }
}

pub fn init_swarm(feature_count: usize, cfg: &BpsoConfig) -> Result<Vec<Particle>> {
    if feature_count == 0 {
        return Err(Error::MaskEmpty);
    }
    cfg.validate()?;
    Ok((0..cfg.swarm_size)
        .map(|p| {
            let mut rng = particle_rng(cfg.seed, 0, p);
            let mut position: Vec<bool> = (0..feature_count).map(|_| rng.gen_bool(0.5)).collect();
            repair(&mut position, &mut rng);
            let velocity = (0..feature_count)
                .map(|_| rng.gen_range(-cfg.v_max..=cfg.v_max))
                .collect();
            Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_fitness: f64::NEG_INFINITY,
            }
        })
        .collect())
}

/// One velocity/position update toward the personal and global bests.
#[allow(clippy::needless_range_loop)]
pub fn step<R: Rng>(particle: &Particle, global_best: &[bool], cfg: &BpsoConfig, rng: &mut R) -> Particle {
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    let n = particle.position.len();
    let mut velocity = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    for d in 0..n {
        let x = bit(particle.position[d]);
        let r1: f64 = rng.gen();
        let r2: f64 = rng.gen();
        let v = cfg.inertia * particle.velocity[d]
            + cfg.c1 * r1 * (bit(particle.best_position[d]) - x)
            + cfg.c2 * r2 * (bit(global_best[d]) - x);
        let v = v.clamp(-cfg.v_max, cfg.v_max);
        velocity.push(v);
        position.push(rng.gen::<f64>() < sigmoid(v));
    }
    repair(&mut position, rng);
    Particle {
        position,
        velocity,
        best_position: particle.best_position.clone(),
        best_fitness: particle.best_fitness,
    }
}

pub fn mask_features(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect()
}

/// Inner folds of one training set, presorted once and shared by every mask.
struct InnerFolds {
    folds: Vec<(LabeledDataset, SortedColumns, Vec<usize>)>,
}

impl InnerFolds {
    fn new(train: &LabeledDataset, cfg: &BpsoConfig) -> Result<Self> {
        let plan = stratified_folds(train, cfg.inner_folds, cfg.seed)?;
        let mut folds = Vec::with_capacity(plan.fold_count);
        for fold in 0..plan.fold_count {
            let test = plan.test_indices(fold);
            if test.is_empty() {
                continue;
            }
            let fit_on = train.subset(&plan.train_indices(fold));
            let sorted = SortedColumns::all(&fit_on)?;
            folds.push((fit_on, sorted, test));
        }
        Ok(InnerFolds { folds })
    }

    fn fitness(&self, mask: &[bool], train: &LabeledDataset, cfg: &BpsoConfig) -> Result<f64> {
        let features = mask_features(mask);
        if features.is_empty() {
            return Err(Error::MaskEmpty);
        }
        if mask.len() != train.feature_count() {
            return Err(Error::LengthMismatch {
                expected: train.feature_count(),
                found: mask.len(),
            });
        }
        let k = train.class_count();
        let mut scores = vec![Vec::new(); train.len()];
        for (fit_on, sorted, test) in &self.folds {
            let model = fit_boosting_presorted(fit_on, &sorted.select(&features)?, cfg.boosting_rounds, &cfg.tree)?;
            for &i in test {
                scores[i] = model.predict_proba_row(train.row(i));
            }
        }
        debug_assert!(scores.iter().all(|s| s.len() == k));
        auc_area(&pairwise_aucs(&scores, train.labels(), k)?)
    }
}

/// Inner cross-validated AUC area of boosting on the masked features.
pub fn fitness(mask: &[bool], train: &LabeledDataset, cfg: &BpsoConfig) -> Result<f64> {
    if mask_features(mask).is_empty() {
        return Err(Error::MaskEmpty);
    }
    InnerFolds::new(train, cfg)?.fitness(mask, train, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsoResult {
    pub best_mask: Vec<bool>,
    pub best_fitness: f64,
    /// Best fitness after each generation.
    pub history: Vec<f64>,
    pub generations: usize,
    pub converged: bool,
    /// Distinct masks whose fitness was computed.
    pub evaluations: usize,
    pub final_model: AdaBoostModel,
}

impl BpsoResult {
    pub fn selected_features(&self) -> Vec<usize> {
        mask_features(&self.best_mask)
    }
}

/// Runs the swarm and refits boosting on all of `train` with the best mask.
pub fn run(train: &LabeledDataset, cfg: &BpsoConfig) -> Result<BpsoResult> {
    cfg.validate()?;
    let mut swarm = init_swarm(train.feature_count(), cfg)?;
    let inner = InnerFolds::new(train, cfg)?;
    let mut cache: HashMap<Vec<bool>, Option<f64>> = HashMap::new();
    let mut global: Option<(Vec<bool>, f64)> = None;
    let mut history = Vec::with_capacity(cfg.generation_limit);
    let mut last_error = None;
    let mut stagnant = 0;
    let mut converged = false;
    let mut generation = 0;

    while generation < cfg.generation_limit {
        let mut pending: Vec<Vec<bool>> = swarm
            .iter()
            .map(|p| p.position.clone())
            .filter(|m| !cache.contains_key(m))
            .collect();
        pending.sort();
        pending.dedup();
        let evaluated: Vec<(Vec<bool>, Result<f64>)> = pending
            .into_par_iter()
            .map(|mask| {
                let f = inner.fitness(&mask, train, cfg);
                (mask, f)
            })
            .collect();
        for (mask, f) in evaluated {
            let value = match f {
                Ok(v) => Some(v),
                Err(e) => {
                    log::debug!("mask rejected: {e}");
                    last_error = Some(e);
                    None
                }
            };
            cache.insert(mask, value);
        }

        let previous = global.as_ref().map(|g| g.1);
        for p in &mut swarm {
            let Some(f) = cache[&p.position] else {
                continue;
            };
            if f > p.best_fitness {
                p.best_fitness = f;
                p.best_position = p.position.clone();
            }
            if global.as_ref().is_none_or(|g| f > g.1) {
                global = Some((p.position.clone(), f));
            }
        }
        generation += 1;
        let current = global.as_ref().map_or(f64::NEG_INFINITY, |g| g.1);
        history.push(current);
        log::debug!("generation {generation}: best {current}");

        match previous {
            Some(prev) if current <= prev => stagnant += 1,
            _ => stagnant = 0,
        }
        if stagnant >= STAGNATION_LIMIT {
            converged = true;
            break;
        }
        if generation >= cfg.generation_limit {
            break;
        }
        if let Some((best_mask, _)) = &global {
            swarm = swarm
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = particle_rng(cfg.seed, generation as u64, i);
                    step(p, best_mask, cfg, &mut rng)
                })
                .collect();
        } else {
            // Nothing usable yet: draw a fresh swarm from this generation's streams.
            let reseeded = BpsoConfig {
                seed: stream_seed(cfg.seed, generation as u64, u64::MAX),
                ..cfg.clone()
            };
            swarm = init_swarm(train.feature_count(), &reseeded)?;
        }
    }

    let Some((best_mask, best_fitness)) = global else {
        return Err(last_error.unwrap_or(Error::MaskEmpty));
    };
    let final_model = fit_boosting(train, &mask_features(&best_mask), cfg.boosting_rounds, &cfg.tree)?;
    Ok(BpsoResult {
        best_mask,
        best_fitness,
        history,
        generations: generation,
        converged,
        evaluations: cache.len(),
        final_model,
    })
}
