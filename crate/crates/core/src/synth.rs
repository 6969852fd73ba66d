//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! [`tabular`] draws Gaussian class clusters in a few informative dimensions
//! padded with pure-noise columns. [`bytecode_corpus`] emits raw contract
//! records whose opcode mix depends on the category, so the whole
//! bytecode-to-prediction path can be exercised end to end.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{LabeledDataset, RawRecord, RawTransaction};
use crate::disasm::Bytecode;
use crate::error::Result;
use crate::features::{Direction, FeatureSchema, FeatureVector};

pub const CATEGORIES: [&str; 6] = ["Governance", "Finance", "Gambling", "Game", "Wallet", "Social"];

#[derive(Debug, Clone, PartialEq)]
pub struct TabularSpec {
    pub class_sizes: Vec<usize>,
    pub informative: usize,
    pub noise: usize,
    /// Distance scale between class centers in units of the within-class sd.
    pub separation: f64,
    pub seed: u64,
}

impl TabularSpec {
    /// Six classes, 1,200 samples, largest/smallest = 19, 5 informative and 15 noise features.
    pub fn imbalanced_six_class(seed: u64) -> Self {
        TabularSpec {
            class_sizes: vec![380, 300, 220, 160, 120, 20],
            informative: 5,
            noise: 15,
            separation: 1.6,
            seed,
        }
    }
}

/// Informative features come first (`f00..`), noise features after.
pub fn tabular(spec: &TabularSpec) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.class_sizes.len();
    let dims = spec.informative + spec.noise;
    let names = (0..dims).map(|i| format!("f{i:02}")).collect();
    let schema = FeatureSchema::custom(names)?;
    let classes = (0..k).map(|c| format!("class{c}")).collect();
    let mut ds = LabeledDataset::new(schema, classes);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // Class centers: a random sign pattern per class so every pair differs in
    // several informative coordinates.
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..spec.informative)
                .map(|_| {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    sign * spec.separation * rng.gen_range(0.5..1.0)
                })
                .collect()
        })
        .collect();

    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (c, &size) in spec.class_sizes.iter().enumerate() {
        for _ in 0..size {
            let mut x: Vec<f64> = centers[c].iter().map(|m| m + unit.sample(&mut rng)).collect();
            x.extend((0..spec.noise).map(|_| unit.sample(&mut rng)));
            rows.push((x, c));
        }
    }
    rows.shuffle(&mut rng);
    for (x, c) in rows {
        ds.push(FeatureVector(x), c)?;
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BytecodeSpec {
    pub per_class: usize,
    pub classes: usize,
    pub seed: u64,
    /// Emit balance, nonce and transactions as well.
    pub with_account: bool,
}

/// Opcodes every contract uses, with relative frequencies.
const COMMON: [(u8, u32); 9] = [
    (0x60, 30), // PUSH1
    (0x80, 14), // DUP1
    (0x90, 10), // SWAP1
    (0x5b, 6),  // JUMPDEST
    (0x57, 6),  // JUMPI
    (0x50, 8),  // POP
    (0x52, 5),  // MSTORE
    (0x01, 4),  // ADD
    (0x15, 3),  // ISZERO
];

/// Opcodes characteristic of each category.
const SIGNATURES: [[u8; 3]; 6] = [
    [0x55, 0x54, 0x14], // Governance: SSTORE SLOAD EQ
    [0xf1, 0x31, 0x02], // Finance: CALL BALANCE MUL
    [0x42, 0x40, 0x06], // Gambling: TIMESTAMP BLOCKHASH MOD
    [0x51, 0x20, 0x0a], // Game: MLOAD SHA3 EXP
    [0xf4, 0x33, 0xff], // Wallet: DELEGATECALL CALLER SELFDESTRUCT
    [0xa2, 0xa3, 0x36], // Social: LOG2 LOG3 CALLDATASIZE
];

fn pick(rng: &mut ChaCha8Rng, table: &[(u8, u32)]) -> u8 {
    let total: u32 = table.iter().map(|t| t.1).sum();
    let mut r = rng.gen_range(0..total);
    for &(op, w) in table {
        if r < w {
            return op;
        }
        r -= w;
    }
    table[table.len() - 1].0
}

fn synthetic_code(rng: &mut ChaCha8Rng, class: usize) -> Vec<u8> {
    let len = rng.gen_range(60..240);
    let signature = &SIGNATURES[class % SIGNATURES.len()];
    let mut ops: Vec<u8> = (0..len)
        .map(|_| {
            if rng.gen_bool(0.2) {
                signature[rng.gen_range(0..signature.len())]
            } else {
                pick(rng, &COMMON)
            }
        })
        .collect();
    // Every signature opcode shows up at least eight times.
    for &op in signature {
        for _ in 0..8 {
            let at = rng.gen_range(0..=ops.len());
            ops.insert(at, op);
        }
    }
    let mut code = vec![0x60, 0x80, 0x60, 0x40, 0x52]; // PUSH1 0x80 PUSH1 0x40 MSTORE
    for op in ops {
        code.push(op);
        if (0x60..=0x7f).contains(&op) {
            let n = (op - 0x5f) as usize;
            code.extend((0..n).map(|_| rng.gen::<u8>()));
        }
    }
    code.push(0x00);
    code
}

fn synthetic_txs(rng: &mut ChaCha8Rng, class: usize) -> Vec<RawTransaction> {
    let n = rng.gen_range(0..6);
    let mut t = 1_500_000_000 + rng.gen_range(0..10_000_000u64);
    (0..n)
        .map(|_| {
            t += rng.gen_range(60..86_400) * (class as u64 + 1);
            RawTransaction {
                t,
                dir: if rng.gen_bool(0.6) {
                    Direction::In
                } else {
                    Direction::Out
                },
                value: (rng.gen_range(0..5_000u64) as u128 * 1_000_000_000_000_000).to_string(),
                addr: format!("0x{:040x}", rng.gen_range(0..32u64)),
            }
        })
        .collect()
}

pub fn bytecode_corpus(spec: &BytecodeSpec) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.per_class * spec.classes);
    for _ in 0..spec.per_class {
        for class in 0..spec.classes {
            let code = Bytecode::new(synthetic_code(&mut rng, class), Default::default());
            let mut addr = [0u8; 20];
            rng.fill(&mut addr[..]);
            let (balance, nonce, txs) = if spec.with_account {
                (
                    Some((rng.gen_range(0..1_000u64) as u128 * 1_000_000_000_000_000).to_string()),
                    Some(rng.gen_range(0..4)),
                    Some(synthetic_txs(&mut rng, class)),
                )
            } else {
                (None, None, None)
            };
            let category = CATEGORIES
                .get(class)
                .map_or_else(|| format!("category{class}"), |c| c.to_string());
            out.push(RawRecord {
                address: Bytecode::new(addr.to_vec(), Default::default()).to_hex(),
                bytecode: code.to_hex(),
                category: Some(category),
                balance,
                nonce,
                txs,
            });
        }
    }
    out
}
