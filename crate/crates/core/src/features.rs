//! Code and account feature extraction.
//!
//! Code features are raw per-family instruction counts followed by the byte
//! length of the code. Account features summarize a contract's balance and
//! transaction history. Missing values are carried as `NaN` inside
//! [`FeatureVector`] and exposed as `None` through its accessors.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::disasm::{instructions, Bytecode, OpcodeTable};
use crate::error::{Error, Result};

/// Amounts of Ether in wei.
pub type Wei = u128;

pub const SIZE_FEATURE: &str = "size";

/// Account feature names in schema order.
pub const ACCOUNT_FEATURE_NAMES: [&str; 12] = [
    "Balance",
    "Nonce",
    "Nbr_trans_act",
    "Nbr_trans_psv",
    "Eth_in",
    "Eth_out",
    "Eth_avg",
    "Eth_sdev",
    "Lifetime",
    "Trs_gap_avg",
    "Trs_gap_sdev",
    "Nbr_addr",
];

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemaKind {
    /// Code features only; usable as soon as a contract is deployed.
    #[serde(rename = "code-0day")]
    Code0day,
    #[serde(rename = "full")]
    Full,
    /// Arbitrary named columns (tabular corpora not derived from bytecode).
    #[serde(rename = "custom")]
    Custom,
}

impl SchemaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemaKind::Code0day => "code-0day",
            SchemaKind::Full => "full",
            SchemaKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: SchemaKind,
    pub feature_names: Vec<String>,
    pub version: u32,
}

static CODE_FAMILIES: LazyLock<Vec<&'static str>> =
    LazyLock::new(|| OpcodeTable::istanbul().families());

impl FeatureSchema {
    pub fn code_0day() -> Self {
        let mut names: Vec<String> = CODE_FAMILIES.iter().map(|f| f.to_string()).collect();
        names.push(SIZE_FEATURE.to_owned());
        FeatureSchema {
            name: SchemaKind::Code0day,
            feature_names: names,
            version: SCHEMA_VERSION,
        }
    }

    pub fn full() -> Self {
        let mut schema = Self::code_0day();
        schema
            .feature_names
            .extend(ACCOUNT_FEATURE_NAMES.iter().map(|s| s.to_string()));
        schema.name = SchemaKind::Full;
        schema
    }

    pub fn custom(feature_names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = feature_names.iter().collect();
        if unique.len() != feature_names.len() {
            return Err(Error::InvalidConfig("duplicate feature names".into()));
        }
        Ok(FeatureSchema {
            name: SchemaKind::Custom,
            feature_names,
            version: SCHEMA_VERSION,
        })
    }

    pub fn for_kind(kind: SchemaKind) -> Option<Self> {
        match kind {
            SchemaKind::Code0day => Some(Self::code_0day()),
            SchemaKind::Full => Some(Self::full()),
            SchemaKind::Custom => None,
        }
    }

    pub fn len(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn requires_account(&self) -> bool {
        self.name == SchemaKind::Full
    }
}

/// Dense feature values; `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied().filter(|v| !v.is_nan())
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.0.get(i).is_some_and(|v| v.is_nan())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cells: Vec<Option<f64>> = self.0.iter().map(|v| (!v.is_nan()).then_some(*v)).collect();
        cells.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cells = Vec::<Option<f64>>::deserialize(d)?;
        Ok(FeatureVector(
            cells.into_iter().map(|c| c.unwrap_or(f64::NAN)).collect(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFeatures {
    /// Instruction count per family; every family of the table is present.
    pub counts: BTreeMap<&'static str, u64>,
    pub size: u64,
}

impl CodeFeatures {
    pub fn count(&self, family: &str) -> u64 {
        self.counts.get(family).copied().unwrap_or(0)
    }

    pub fn instruction_count(&self) -> u64 {
        self.counts.values().sum()
    }
}

pub fn extract_code_features(code: &Bytecode) -> CodeFeatures {
    let mut counts: BTreeMap<&'static str, u64> =
        CODE_FAMILIES.iter().map(|f| (*f, 0)).collect();
    for ins in instructions(&code.bytes) {
        *counts.entry(ins.spec.family).or_default() += 1;
    }
    CodeFeatures {
        counts,
        size: code.bytes.len() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub timestamp: u64,
    pub direction: Direction,
    pub value: Wei,
    pub counterparty: String,
}

/// Account-level features; `None` is the missing marker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccountFeatures {
    pub balance: Option<Wei>,
    pub nonce: Option<u64>,
    pub nbr_trans_act: Option<u64>,
    pub nbr_trans_psv: Option<u64>,
    pub eth_in: Option<Wei>,
    pub eth_out: Option<Wei>,
    pub eth_avg: Option<f64>,
    pub eth_sdev: Option<f64>,
    pub lifetime: Option<u64>,
    pub trs_gap_avg: Option<f64>,
    pub trs_gap_sdev: Option<f64>,
    pub nbr_addr: Option<u64>,
}

impl AccountFeatures {
    /// Values in [`ACCOUNT_FEATURE_NAMES`] order. Wei amounts are widened to
    /// `f64` here and lose precision beyond 2^53 wei.
    pub fn to_values(&self) -> [f64; 12] {
        fn cell<T: Into<f64>>(v: Option<T>) -> f64 {
            v.map_or(f64::NAN, Into::into)
        }
        let wei = |v: Option<Wei>| v.map_or(f64::NAN, |w| w as f64);
        let int = |v: Option<u64>| v.map_or(f64::NAN, |w| w as f64);
        [
            wei(self.balance),
            int(self.nonce),
            int(self.nbr_trans_act),
            int(self.nbr_trans_psv),
            wei(self.eth_in),
            wei(self.eth_out),
            cell(self.eth_avg),
            cell(self.eth_sdev),
            int(self.lifetime),
            cell(self.trs_gap_avg),
            cell(self.trs_gap_sdev),
            int(self.nbr_addr),
        ]
    }
}

/// Mean and population standard deviation; `None` for an empty sample.
fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = xs.clone().count();
    if n == 0 {
        return None;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

pub fn extract_account_features(
    balance: Wei,
    nonce: u64,
    txs: &[TransactionRecord],
) -> AccountFeatures {
    let mut sorted: Vec<&TransactionRecord> = txs.iter().collect();
    // Order by everything so equal timestamps cannot make the result input-order dependent.
    sorted.sort_by(|a, b| {
        (a.timestamp, a.direction as u8, a.value, &a.counterparty).cmp(&(
            b.timestamp,
            b.direction as u8,
            b.value,
            &b.counterparty,
        ))
    });

    let outgoing = sorted.iter().filter(|t| t.direction == Direction::Out);
    let incoming = sorted.iter().filter(|t| t.direction == Direction::In);
    let value_stats = mean_sd(sorted.iter().map(|t| t.value as f64));
    let gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp) as f64)
        .collect();
    let gap_stats = mean_sd(gaps.iter().copied());
    let lifetime = match (sorted.first(), sorted.last()) {
        (Some(first), Some(last)) => last.timestamp - first.timestamp,
        _ => 0,
    };
    let addrs: BTreeSet<&str> = sorted.iter().map(|t| t.counterparty.as_str()).collect();

    AccountFeatures {
        balance: Some(balance),
        nonce: Some(nonce),
        nbr_trans_act: Some(outgoing.clone().count() as u64),
        nbr_trans_psv: Some(incoming.clone().count() as u64),
        eth_in: Some(incoming.fold(0, |acc, t| acc.saturating_add(t.value))),
        eth_out: Some(outgoing.fold(0, |acc, t| acc.saturating_add(t.value))),
        eth_avg: value_stats.map(|s| s.0),
        eth_sdev: value_stats.map(|s| s.1),
        lifetime: Some(lifetime),
        trs_gap_avg: gap_stats.map(|s| s.0),
        trs_gap_sdev: gap_stats.map(|s| s.1),
        nbr_addr: Some(addrs.len() as u64),
    }
}

/// Lays code (and, for the full schema, account) features out in schema order.
pub fn assemble_vector(
    code: &CodeFeatures,
    account: Option<&AccountFeatures>,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    let mut values: Vec<f64> = CODE_FAMILIES
        .iter()
        .map(|f| code.count(f) as f64)
        .collect();
    values.push(code.size as f64);
    match schema.name {
        SchemaKind::Code0day => {}
        SchemaKind::Full => {
            let account = account.ok_or_else(|| {
                Error::SchemaMismatch("full schema requires account features".into())
            })?;
            values.extend_from_slice(&account.to_values());
        }
        SchemaKind::Custom => {
            return Err(Error::SchemaMismatch(
                "custom schemas are not assembled from bytecode".into(),
            ))
        }
    }
    if values.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "schema has {} features, extractor produced {}",
            schema.len(),
            values.len()
        )));
    }
    Ok(FeatureVector(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disasm::CodeSource;

    fn code(bytes: &[u8]) -> Bytecode {
        Bytecode::new(bytes.to_vec(), CodeSource::Inline)
    }

    fn tx(t: u64, direction: Direction, value: Wei, addr: &str) -> TransactionRecord {
        TransactionRecord {
            timestamp: t,
            direction,
            value,
            counterparty: addr.to_owned(),
        }
    }

    #[test]
    fn schema_layout() {
        let code = FeatureSchema::code_0day();
        assert_eq!(code.feature_names.last().unwrap(), SIZE_FEATURE);
        assert_eq!(code.len(), 78);
        let full = FeatureSchema::full();
        assert_eq!(full.len(), code.len() + 12);
        assert_eq!(&full.feature_names[..code.len()], &code.feature_names[..]);
        assert_eq!(full.feature_names[code.len()], "Balance");
        assert_eq!(full.feature_names.last().unwrap(), "Nbr_addr");
        let unique: BTreeSet<_> = full.feature_names.iter().collect();
        assert_eq!(unique.len(), full.len());
    }

    #[test]
    fn code_features_of_six_byte_example() {
        let f = extract_code_features(&code(&[0x60, 0x01, 0x60, 0x01, 0x54, 0x01]));
        assert_eq!(f.count("PUSH"), 2);
        assert_eq!(f.count("SLOAD"), 1);
        assert_eq!(f.count("ADD"), 1);
        assert_eq!(f.instruction_count(), 4);
        assert_eq!(f.size, 6);
        assert_eq!(f.counts.len(), 77);
    }

    #[test]
    fn code_features_empty_and_invalid() {
        let f = extract_code_features(&code(&[]));
        assert_eq!(f.instruction_count(), 0);
        assert_eq!(f.size, 0);

        let f = extract_code_features(&code(&[0xfe]));
        assert_eq!(f.count("INVALID"), 1);
        assert_eq!(f.instruction_count(), 1);
        assert_eq!(f.size, 1);
    }

    #[test]
    fn account_features_empty() {
        let a = extract_account_features(0, 0, &[]);
        assert_eq!(a.nbr_trans_act, Some(0));
        assert_eq!(a.nbr_trans_psv, Some(0));
        assert_eq!(a.eth_in, Some(0));
        assert_eq!(a.eth_avg, None);
        assert_eq!(a.eth_sdev, None);
        assert_eq!(a.lifetime, Some(0));
        assert_eq!(a.trs_gap_avg, None);
        assert_eq!(a.nbr_addr, Some(0));
    }

    #[test]
    fn account_features_two_records() {
        let txs = [tx(400, Direction::Out, 1, "0xb"), tx(100, Direction::In, 5, "0xa")];
        let a = extract_account_features(7, 2, &txs);
        assert_eq!(a.lifetime, Some(300));
        assert_eq!(a.trs_gap_avg, Some(300.0));
        assert_eq!(a.trs_gap_sdev, Some(0.0));
        assert_eq!(a.eth_avg, Some(3.0));
        assert_eq!(a.eth_sdev, Some(2.0));
        assert_eq!(a.nbr_trans_act, Some(1));
        assert_eq!(a.nbr_trans_psv, Some(1));
        assert_eq!(a.eth_in, Some(5));
        assert_eq!(a.eth_out, Some(1));
        assert_eq!(a.nbr_addr, Some(2));
        assert_eq!(a.balance, Some(7));
    }

    #[test]
    fn account_features_single_record() {
        let a = extract_account_features(0, 0, &[tx(10, Direction::In, 3, "0xa")]);
        assert_eq!(a.lifetime, Some(0));
        assert_eq!(a.trs_gap_avg, None);
        assert_eq!(a.trs_gap_sdev, None);
        assert_eq!(a.eth_sdev, Some(0.0));
    }

    #[test]
    fn assemble_code_schema() {
        let schema = FeatureSchema::code_0day();
        let f = extract_code_features(&code(&[0x60, 0x01, 0x60, 0x01, 0x54, 0x01]));
        let v = assemble_vector(&f, None, &schema).unwrap();
        assert_eq!(v.len(), schema.len());
        assert_eq!(v.get(schema.index_of("PUSH").unwrap()), Some(2.0));
        assert_eq!(v.get(schema.len() - 1), Some(6.0));

        let acct = extract_account_features(1, 1, &[]);
        let with_acct = assemble_vector(&f, Some(&acct), &schema).unwrap();
        assert_eq!(with_acct, v);
    }

    #[test]
    fn assemble_full_schema() {
        let schema = FeatureSchema::full();
        let f = extract_code_features(&code(&[0x00]));
        assert!(matches!(
            assemble_vector(&f, None, &schema),
            Err(Error::SchemaMismatch(_))
        ));
        let acct = extract_account_features(5, 1, &[]);
        let v = assemble_vector(&f, Some(&acct), &schema).unwrap();
        assert!(v.is_missing(schema.index_of("Trs_gap_avg").unwrap()));
        assert!(v.is_missing(schema.index_of("Trs_gap_sdev").unwrap()));
        assert_eq!(v.get(schema.index_of("Balance").unwrap()), Some(5.0));
        assert_eq!(v.get(schema.index_of("Lifetime").unwrap()), Some(0.0));
    }

    #[test]
    fn feature_vector_json_uses_null_for_missing() {
        let v = FeatureVector(vec![1.0, f64::NAN]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.0,null]");
        let back: FeatureVector = serde_json::from_str(&s).unwrap();
        assert!(back.is_missing(1));
    }
}
