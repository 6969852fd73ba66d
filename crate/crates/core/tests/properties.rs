use proptest::prelude::*;

use opclass_core::dataset::{stratified_folds, LabeledDataset};
use opclass_core::disasm::{assemble, disassemble, instructions, Bytecode, CodeSource};
use opclass_core::features::{
    extract_account_features, extract_code_features, Direction, FeatureSchema, FeatureVector,
    TransactionRecord,
};
use opclass_core::metrics::{auc_area, evaluate, pairwise_auc};

fn code(bytes: Vec<u8>) -> Bytecode {
    Bytecode::new(bytes, CodeSource::Inline)
}

fn brute_force_auc(scores: &[Vec<f64>], labels: &[usize], a: usize, b: usize) -> f64 {
    let margin = |s: &Vec<f64>| s[a] - s[b];
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == a).map(|(s, _)| margin(s)).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == b).map(|(s, _)| margin(s)).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn tx() -> impl Strategy<Value = TransactionRecord> {
    (0u64..1_000_000, any::<bool>(), 0u128..1_000_000_000_000_000_000u128, 0u8..8).prop_map(
        |(timestamp, incoming, value, who)| TransactionRecord {
            timestamp,
            direction: if incoming { Direction::In } else { Direction::Out },
            value,
            counterparty: format!("0x{who:040x}"),
        },
    )
}

proptest! {
    #[test]
    fn disassembly_round_trips(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let instrs = disassemble(&code(bytes.clone()));
        prop_assert_eq!(assemble(&instrs), bytes.clone());
        let mut offset = 0;
        for (i, ins) in instrs.iter().enumerate() {
            prop_assert_eq!(ins.offset, offset);
            offset += ins.encoded_len();
            if ins.truncated {
                prop_assert_eq!(i, instrs.len() - 1);
            }
        }
        prop_assert_eq!(offset, bytes.len());
    }

    #[test]
    fn family_counts_sum_to_instruction_count(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let f = extract_code_features(&code(bytes.clone()));
        prop_assert_eq!(f.counts.values().sum::<u64>(), instructions(&bytes).count() as u64);
        prop_assert_eq!(f.size, bytes.len() as u64);
    }

    #[test]
    fn counts_ignore_instruction_order(bytes in prop::collection::vec(any::<u8>(), 0..300), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut instrs: Vec<_> = disassemble(&code(bytes.clone()));
        if instrs.last().is_some_and(|i| i.truncated) {
            instrs.pop();
        }
        let before = extract_code_features(&code(assemble(&instrs)));
        instrs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let after = extract_code_features(&code(assemble(&instrs)));
        prop_assert_eq!(before, after);
    }

    #[test]
    fn appending_push1_adds_one_push(bytes in prop::collection::vec(any::<u8>(), 0..300), imm in any::<u8>()) {
        let instrs = disassemble(&code(bytes.clone()));
        prop_assume!(!instrs.last().is_some_and(|i| i.truncated));
        let before = extract_code_features(&code(bytes.clone()));
        let mut longer = bytes.clone();
        longer.extend([0x60, imm]);
        let after = extract_code_features(&code(longer));
        prop_assert_eq!(after.count("PUSH"), before.count("PUSH") + 1);
        prop_assert_eq!(after.size, before.size + 2);
        for (family, n) in &before.counts {
            if *family != "PUSH" {
                prop_assert_eq!(after.count(family), *n);
            }
        }
    }

    #[test]
    fn account_features_ignore_record_order(txs in prop::collection::vec(tx(), 0..30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = extract_account_features(5, 2, &txs);
        let mut shuffled = txs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let b = extract_account_features(5, 2, &shuffled);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn folds_partition_and_stratify(sizes in prop::collection::vec(1usize..40, 2..6), k in 2usize..8, seed in any::<u64>()) {
        let schema = FeatureSchema::custom(vec!["x".into()]).unwrap();
        let classes = (0..sizes.len()).map(|c| format!("c{c}")).collect();
        let mut ds = LabeledDataset::new(schema, classes);
        for (c, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                ds.push(FeatureVector(vec![i as f64]), c).unwrap();
            }
        }
        let plan = stratified_folds(&ds, k, seed).unwrap();
        let mut seen = vec![0; ds.len()];
        for f in 0..k {
            for i in plan.test_indices(f) {
                seen[i] += 1;
            }
            let train = plan.train_indices(f);
            prop_assert_eq!(train.len() + plan.test_indices(f).len(), ds.len());
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        for (c, &n) in sizes.iter().enumerate() {
            let per_fold: Vec<usize> = (0..k)
                .map(|f| plan.test_indices(f).iter().filter(|&&i| ds.label(i) == c).count())
                .collect();
            let (lo, hi) = (*per_fold.iter().min().unwrap(), *per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} of size {} spread {:?}", c, n, per_fold);
        }
        prop_assert_eq!(plan, stratified_folds(&ds, k, seed).unwrap());
    }

    #[test]
    fn rank_auc_matches_pair_counting(
        rows in prop::collection::vec((0usize..3, 0u8..12, 0u8..12, 0u8..12), 2..200)
    ) {
        let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&2));
        // Coarse score grid so ties are common.
        let scores: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.1 as f64 / 11.0, r.2 as f64 / 11.0, r.3 as f64 / 11.0]).collect();
        let fast = pairwise_auc(&scores, &labels, 0, 2).unwrap();
        let slow = brute_force_auc(&scores, &labels, 0, 2);
        prop_assert!((fast - slow).abs() <= 1e-12);
        // The margin flips sign with the pair order, so the AUC is symmetric.
        let reversed = pairwise_auc(&scores, &labels, 2, 0).unwrap();
        prop_assert!((fast - reversed).abs() <= 1e-12);
        let swapped: Vec<usize> = labels.iter().map(|&y| match y { 0 => 2, 2 => 0, y => y }).collect();
        let flipped = pairwise_auc(&scores, &swapped, 0, 2).unwrap();
        prop_assert!((fast + flipped - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn area_bounds_and_monotonicity(r in prop::collection::vec(0.0f64..=1.0, 1..16), i in any::<prop::sample::Index>(), bump in 0.0f64..1.0) {
        let area = auc_area(&r).unwrap();
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        let min = r.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(area <= max + 1e-12);
        prop_assert!(area >= min * min - 1e-12);
        let mut higher = r.clone();
        let j = i.index(r.len());
        higher[j] = (higher[j] + bump).min(1.0);
        prop_assert!(auc_area(&higher).unwrap() >= area - 1e-15);
    }

    #[test]
    fn micro_f1_is_accuracy(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..300)) {
        let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let predictions: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        // Scores only matter for the AUC part; make every class present.
        let mut labels_full = labels.clone();
        let mut preds_full = predictions.clone();
        for c in 0..5 {
            labels_full.push(c);
            preds_full.push(c);
        }
        let scores: Vec<Vec<f64>> = preds_full.iter().map(|&p| (0..5).map(|c| if c == p { 0.6 } else { 0.1 }).collect()).collect();
        let r = evaluate(&scores, &preds_full, &labels_full, 5).unwrap();
        prop_assert_eq!(r.micro_f1, r.accuracy);
    }
}
