//! Linear EVM bytecode disassembly.
//!
//! The opcode table is the Istanbul-era instruction set (no `PUSH0`, no
//! `BASEFEE`). Every byte value resolves to an entry: bytes without an
//! assigned instruction decode as `INVALID` rather than failing, so
//! disassembly is total and re-serializing its output reproduces the input.

use std::fmt::{self, Write as _};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Instruction-set version the table was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fork {
    Istanbul,
}

/// Static description of one opcode byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpcodeSpec {
    pub value: u8,
    pub mnemonic: &'static str,
    /// Immediate bytes following the opcode; non-zero only for PUSH1..PUSH32.
    pub immediate_len: u8,
    pub family: &'static str,
}

impl OpcodeSpec {
    pub fn is_push(&self) -> bool {
        self.immediate_len > 0
    }

    pub fn is_invalid(&self) -> bool {
        self.family == INVALID
    }
}

pub const INVALID: &str = "INVALID";

const ISTANBUL: &[(u8, &str)] = &[
    (0x00, "STOP"),
    (0x01, "ADD"),
    (0x02, "MUL"),
    (0x03, "SUB"),
    (0x04, "DIV"),
    (0x05, "SDIV"),
    (0x06, "MOD"),
    (0x07, "SMOD"),
    (0x08, "ADDMOD"),
    (0x09, "MULMOD"),
    (0x0a, "EXP"),
    (0x0b, "SIGNEXTEND"),
    (0x10, "LT"),
    (0x11, "GT"),
    (0x12, "SLT"),
    (0x13, "SGT"),
    (0x14, "EQ"),
    (0x15, "ISZERO"),
    (0x16, "AND"),
    (0x17, "OR"),
    (0x18, "XOR"),
    (0x19, "NOT"),
    (0x1a, "BYTE"),
    (0x1b, "SHL"),
    (0x1c, "SHR"),
    (0x1d, "SAR"),
    (0x20, "SHA3"),
    (0x30, "ADDRESS"),
    (0x31, "BALANCE"),
    (0x32, "ORIGIN"),
    (0x33, "CALLER"),
    (0x34, "CALLVALUE"),
    (0x35, "CALLDATALOAD"),
    (0x36, "CALLDATASIZE"),
    (0x37, "CALLDATACOPY"),
    (0x38, "CODESIZE"),
    (0x39, "CODECOPY"),
    (0x3a, "GASPRICE"),
    (0x3b, "EXTCODESIZE"),
    (0x3c, "EXTCODECOPY"),
    (0x3d, "RETURNDATASIZE"),
    (0x3e, "RETURNDATACOPY"),
    (0x3f, "EXTCODEHASH"),
    (0x40, "BLOCKHASH"),
    (0x41, "COINBASE"),
    (0x42, "TIMESTAMP"),
    (0x43, "NUMBER"),
    (0x44, "DIFFICULTY"),
    (0x45, "GASLIMIT"),
    (0x46, "CHAINID"),
    (0x47, "SELFBALANCE"),
    (0x50, "POP"),
    (0x51, "MLOAD"),
    (0x52, "MSTORE"),
    (0x53, "MSTORE8"),
    (0x54, "SLOAD"),
    (0x55, "SSTORE"),
    (0x56, "JUMP"),
    (0x57, "JUMPI"),
    (0x58, "PC"),
    (0x59, "MSIZE"),
    (0x5a, "GAS"),
    (0x5b, "JUMPDEST"),
    (0xf0, "CREATE"),
    (0xf1, "CALL"),
    (0xf2, "CALLCODE"),
    (0xf3, "RETURN"),
    (0xf4, "DELEGATECALL"),
    (0xf5, "CREATE2"),
    (0xfa, "STATICCALL"),
    (0xfd, "REVERT"),
    (0xfe, INVALID),
    (0xff, "SELFDESTRUCT"),
];

const PUSH_NAMES: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10",
    "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19",
    "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28",
    "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];
const DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11",
    "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];
const SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10",
    "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];
const LOG_NAMES: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

/// A complete 256-entry opcode table for one fork.
#[derive(Debug)]
pub struct OpcodeTable {
    fork: Fork,
    entries: [OpcodeSpec; 256],
}

impl OpcodeTable {
    fn build(fork: Fork) -> Self {
        let mut entries: [OpcodeSpec; 256] = std::array::from_fn(|v| OpcodeSpec {
            value: v as u8,
            mnemonic: INVALID,
            immediate_len: 0,
            family: INVALID,
        });
        let mut set = |value: u8, mnemonic: &'static str, immediate_len: u8| {
            entries[value as usize] = OpcodeSpec {
                value,
                mnemonic,
                immediate_len,
                family: merge_family(mnemonic),
            };
        };
        match fork {
            Fork::Istanbul => {
                for &(value, mnemonic) in ISTANBUL {
                    set(value, mnemonic, 0);
                }
            }
        }
        for (i, name) in PUSH_NAMES.iter().enumerate() {
            set(0x60 + i as u8, name, i as u8 + 1);
        }
        for (i, name) in DUP_NAMES.iter().enumerate() {
            set(0x80 + i as u8, name, 0);
        }
        for (i, name) in SWAP_NAMES.iter().enumerate() {
            set(0x90 + i as u8, name, 0);
        }
        for (i, name) in LOG_NAMES.iter().enumerate() {
            set(0xa0 + i as u8, name, 0);
        }
        OpcodeTable { fork, entries }
    }

    pub fn istanbul() -> &'static OpcodeTable {
        static TABLE: LazyLock<OpcodeTable> = LazyLock::new(|| OpcodeTable::build(Fork::Istanbul));
        &TABLE
    }

    pub fn fork(&self) -> Fork {
        self.fork
    }

    pub fn get(&self, value: u8) -> OpcodeSpec {
        self.entries[value as usize]
    }

    pub fn entries(&self) -> &[OpcodeSpec; 256] {
        &self.entries
    }

    /// Distinct families ordered by the smallest byte value that maps to each.
    pub fn families(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for spec in &self.entries {
            if !out.contains(&spec.family) {
                out.push(spec.family);
            }
        }
        out
    }
}

/// Family name of a mnemonic: the numeric suffix of PUSH/DUP/SWAP/LOG is dropped.
pub fn merge_family(mnemonic: &str) -> &str {
    for family in ["PUSH", "DUP", "SWAP", "LOG"] {
        if let Some(rest) = mnemonic.strip_prefix(family) {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                return &mnemonic[..family.len()];
            }
        }
    }
    mnemonic
}

pub fn opcode_lookup(value: u8) -> OpcodeSpec {
    OpcodeTable::istanbul().get(value)
}

/// Where a byte string came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeSource {
    HexFile,
    JsonlRecord,
    Rpc,
    #[default]
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bytecode {
    pub bytes: Vec<u8>,
    pub source: CodeSource,
}

impl Bytecode {
    pub fn new(bytes: Vec<u8>, source: CodeSource) -> Self {
        Bytecode { bytes, source }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Empty code is what an externally owned account reports.
    pub fn is_contract(&self) -> bool {
        !self.bytes.is_empty()
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(2 + 2 * self.bytes.len());
        s.push_str("0x");
        for b in &self.bytes {
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

/// Decodes hex text with an optional `0x`/`0X` prefix and surrounding whitespace.
pub fn parse_hex(text: &str) -> Result<Bytecode> {
    let leading = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    let (digits, base) = match trimmed
        .strip_prefix("0x")
        .or_else(|| trimmed.strip_prefix("0X"))
    {
        Some(rest) => (rest, leading + 2),
        None => (trimmed, leading),
    };
    if let Some((i, c)) = digits.char_indices().find(|(_, c)| !c.is_ascii_hexdigit()) {
        return Err(Error::NonHexCharacter {
            position: base + i,
            character: c,
        });
    }
    if digits.len() % 2 != 0 {
        return Err(Error::OddLength {
            digits: digits.len(),
        });
    }
    let raw = digits.as_bytes();
    let bytes = raw
        .chunks_exact(2)
        .map(|pair| (nibble(pair[0]) << 4) | nibble(pair[1]))
        .collect();
    Ok(Bytecode::new(bytes, CodeSource::Inline))
}

fn nibble(c: u8) -> u8 {
    match c {
        b'0'..=b'9' => c - b'0',
        b'a'..=b'f' => c - b'a' + 10,
        b'A'..=b'F' => c - b'A' + 10,
        _ => unreachable!("validated as hex digit"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub offset: usize,
    pub spec: OpcodeSpec,
    pub immediate: Vec<u8>,
    /// Code ended before the PUSH immediate was complete.
    pub truncated: bool,
}

impl Instruction {
    pub fn encoded_len(&self) -> usize {
        1 + self.immediate.len()
    }

    /// Appends the opcode byte and immediate to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.spec.value);
        out.extend_from_slice(&self.immediate);
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}: {}", self.offset, self.spec.mnemonic)?;
        if !self.immediate.is_empty() {
            f.write_str(" 0x")?;
            for b in &self.immediate {
                write!(f, "{b:02x}")?;
            }
        }
        Ok(())
    }
}

/// Iterator over the instructions of a byte string.
#[derive(Debug, Clone)]
pub struct Instructions<'a> {
    code: &'a [u8],
    pos: usize,
    table: &'static OpcodeTable,
}

impl Iterator for Instructions<'_> {
    type Item = Instruction;

    fn next(&mut self) -> Option<Instruction> {
        let &byte = self.code.get(self.pos)?;
        let spec = self.table.get(byte);
        let offset = self.pos;
        let start = offset + 1;
        let end = (start + spec.immediate_len as usize).min(self.code.len());
        let immediate = self.code[start..end].to_vec();
        let truncated = immediate.len() < spec.immediate_len as usize;
        self.pos = end;
        Some(Instruction {
            offset,
            spec,
            immediate,
            truncated,
        })
    }
}

pub fn instructions(code: &[u8]) -> Instructions<'_> {
    Instructions {
        code,
        pos: 0,
        table: OpcodeTable::istanbul(),
    }
}

pub fn disassemble(code: &Bytecode) -> Vec<Instruction> {
    instructions(&code.bytes).collect()
}

/// Inverse of [`disassemble`].
pub fn assemble(instructions: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::with_capacity(instructions.iter().map(Instruction::encoded_len).sum());
    for ins in instructions {
        ins.encode_into(&mut out);
    }
    out
}

/// One `<offset>: <MNEMONIC> [0x<immediate>]` line per instruction.
pub fn listing(instructions: &[Instruction]) -> String {
    let mut out = String::new();
    for ins in instructions {
        let _ = writeln!(out, "{ins}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(bytes: &[u8]) -> Bytecode {
        Bytecode::new(bytes.to_vec(), CodeSource::Inline)
    }

    #[test]
    fn parse_hex_examples() {
        assert_eq!(parse_hex("0x6001").unwrap().bytes, vec![0x60, 0x01]);
        assert!(parse_hex("").unwrap().bytes.is_empty());
        assert!(matches!(parse_hex("0x6"), Err(Error::OddLength { digits: 1 })));
    }

    #[test]
    fn parse_hex_prefix_case_and_whitespace() {
        assert_eq!(parse_hex("  0XaBcD\n").unwrap().bytes, vec![0xab, 0xcd]);
        assert_eq!(parse_hex("ff00").unwrap().bytes, vec![0xff, 0x00]);
        assert!(parse_hex("0x").unwrap().is_empty());
    }

    #[test]
    fn parse_hex_reports_position() {
        match parse_hex(" 0x60zz") {
            Err(Error::NonHexCharacter {
                position,
                character,
            }) => {
                assert_eq!(position, 5);
                assert_eq!(character, 'z');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lookup_examples() {
        assert_eq!(opcode_lookup(0x06).mnemonic, "MOD");
        assert_eq!(opcode_lookup(0x33).mnemonic, "CALLER");
        assert_eq!(opcode_lookup(0xfe).family, INVALID);
        let unassigned = opcode_lookup(0x0c);
        assert_eq!(unassigned.family, INVALID);
        assert_eq!(unassigned.immediate_len, 0);
        assert_eq!(unassigned.value, 0x0c);
        // No PUSH0 in this table.
        assert!(opcode_lookup(0x5f).is_invalid());
    }

    #[test]
    fn immediate_lengths_follow_push_index() {
        for v in 0u8..=255 {
            let spec = opcode_lookup(v);
            let expect = if (0x60..=0x7f).contains(&v) { v - 0x5f } else { 0 };
            assert_eq!(spec.immediate_len, expect, "{v:#04x}");
        }
        assert_eq!(opcode_lookup(0x66).mnemonic, "PUSH7");
        assert_eq!(opcode_lookup(0x66).family, "PUSH");
    }

    #[test]
    fn family_rule() {
        assert_eq!(merge_family("PUSH1"), "PUSH");
        assert_eq!(merge_family("PUSH32"), "PUSH");
        assert_eq!(merge_family("DUP16"), "DUP");
        assert_eq!(merge_family("LOG3"), "LOG");
        assert_eq!(merge_family("ADD"), "ADD");
        assert_eq!(merge_family("SHA3"), "SHA3");
        assert_eq!(merge_family("CREATE2"), "CREATE2");
    }

    #[test]
    fn families_ordered_by_first_value() {
        let fams = OpcodeTable::istanbul().families();
        assert_eq!(&fams[..3], &["STOP", "ADD", "MUL"]);
        // 0x0c is the first unassigned byte, so INVALID lands right after SIGNEXTEND.
        let se = fams.iter().position(|f| *f == "SIGNEXTEND").unwrap();
        assert_eq!(fams[se + 1], INVALID);
        let push = fams.iter().position(|f| *f == "PUSH").unwrap();
        assert_eq!(fams[push - 1], "JUMPDEST");
        assert_eq!(*fams.last().unwrap(), "SELFDESTRUCT");
        assert_eq!(fams.len(), 77);
    }

    #[test]
    fn disassemble_examples() {
        let out = disassemble(&code(&[0x60, 0x01]));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].offset, 0);
        assert_eq!(out[0].spec.mnemonic, "PUSH1");
        assert_eq!(out[0].immediate, vec![0x01]);
        assert!(!out[0].truncated);

        assert!(disassemble(&code(&[])).is_empty());

        let out = disassemble(&code(&[0x60, 0x01, 0x60, 0x01, 0x54, 0x01]));
        let names: Vec<_> = out.iter().map(|i| i.spec.mnemonic).collect();
        assert_eq!(names, ["PUSH1", "PUSH1", "SLOAD", "ADD"]);
        let offsets: Vec<_> = out.iter().map(|i| i.offset).collect();
        assert_eq!(offsets, [0, 2, 4, 5]);

        let out = disassemble(&code(&[0x61, 0xaa]));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].spec.mnemonic, "PUSH2");
        assert_eq!(out[0].immediate, vec![0xaa]);
        assert!(out[0].truncated);
    }

    #[test]
    fn listing_format() {
        let out = disassemble(&parse_hex("0x6001fe61aa").unwrap());
        assert_eq!(listing(&out), "0000: PUSH1 0x01\n0002: INVALID\n0003: PUSH2 0xaa\n");
    }
}
