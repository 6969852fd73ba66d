//! Opcode-based classification of Ethereum smart contracts.
//!
//! The pipeline runs from raw bytecode to a category prediction:
//! [`disasm`] decodes instructions, [`features`] counts opcode families and
//! summarizes account activity, [`tree`] and [`boost`] fit C4.5 trees and an
//! AdaBoost.M1 ensemble, and [`bpso`] searches feature subsets with a binary
//! particle swarm. [`metrics`] scores multi-class results, [`pipeline`] runs
//! cross-validation, and [`ingest`] pulls code from a JSON-RPC node.

pub mod boost;
pub mod bpso;
pub mod dataset;
pub mod disasm;
pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod tree;

pub use boost::{AdaBoostModel, BoostRound};
pub use bpso::{BpsoConfig, BpsoResult};
pub use dataset::{FoldPlan, LabeledDataset, RawRecord};
pub use disasm::{Bytecode, CodeSource, Instruction, OpcodeSpec, OpcodeTable};
pub use error::{Error, Result};
pub use features::{
    AccountFeatures, CodeFeatures, FeatureSchema, FeatureVector, SchemaKind, TransactionRecord,
};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use pipeline::{Algorithm, Classifier, CrossvalConfig, CrossvalReport, TrainedModel};
pub use tree::{DecisionTree, TrainControl};
