use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use opclass_core::boost::run_boosting;
use opclass_core::bpso::{fitness, BpsoConfig};
use opclass_core::disasm::{disassemble, Bytecode, CodeSource};
use opclass_core::features::extract_code_features;
use opclass_core::metrics::{auc_area, pairwise_aucs};
use opclass_core::synth::{tabular, TabularSpec};
use opclass_core::tree::{train_tree, TrainControl};

fn random_code(len: usize, seed: u64) -> Bytecode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Bytecode::new((0..len).map(|_| rng.gen()).collect(), CodeSource::Inline)
}

fn disasm(c: &mut Criterion) {
    // Roughly the size of a large deployed contract.
    let code = random_code(24 * 1024, 1);
    c.bench_function("disassemble 24KiB", |b| b.iter(|| disassemble(black_box(&code))));
    c.bench_function("code features 24KiB", |b| {
        b.iter(|| extract_code_features(black_box(&code)))
    });
}

fn learners(c: &mut Criterion) {
    let ds = tabular(&TabularSpec::imbalanced_six_class(0)).unwrap();
    let weights = vec![1.0 / ds.len() as f64; ds.len()];
    let ctrl = TrainControl::default();
    let mut g = c.benchmark_group("learners");
    g.sample_size(20);
    g.bench_function("c45 tree 1200x20", |b| {
        b.iter(|| train_tree(black_box(&ds), &weights, &ctrl).unwrap())
    });
    g.bench_function("adaboost T=30 1200x20", |b| {
        b.iter(|| run_boosting(black_box(&ds), 30, &ctrl).unwrap())
    });
    let cfg = BpsoConfig {
        boosting_rounds: 10,
        ..BpsoConfig::default()
    };
    let mask: Vec<bool> = (0..ds.feature_count()).map(|i| i % 2 == 0).collect();
    g.bench_function("bpso fitness T=10", |b| {
        b.iter(|| fitness(black_box(&mask), &ds, &cfg).unwrap())
    });
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 6;
    let n = 5000;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    c.bench_function("pairwise AUCs + area, n=5000 k=6", |b| {
        b.iter_batched(
            || {
                (0..n)
                    .map(|_| (0..k).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            },
            |scores| auc_area(&pairwise_aucs(&scores, &labels, k).unwrap()).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, disasm, learners, metrics);
criterion_main!(benches);
