//! EVM instruction table, bytecode decoder, and basic-block splitter.
//!
//! The table covers all 256 byte values; bytes without an assigned opcode
//! decode to `is_known = false` entries so that decoding is total. Blocks end
//! only at the six control-flow opcodes (STOP, JUMP, JUMPI, RETURN,
//! SELFDESTRUCT, REVERT) or at the end of code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::U256;

/// Raw opcode byte values used throughout the crate.
pub mod op {
    pub const STOP: u8 = 0x00;
    pub const ADD: u8 = 0x01;
    pub const MUL: u8 = 0x02;
    pub const SUB: u8 = 0x03;
    pub const DIV: u8 = 0x04;
    pub const SDIV: u8 = 0x05;
    pub const MOD: u8 = 0x06;
    pub const SMOD: u8 = 0x07;
    pub const ADDMOD: u8 = 0x08;
    pub const MULMOD: u8 = 0x09;
    pub const EXP: u8 = 0x0a;
    pub const SIGNEXTEND: u8 = 0x0b;
    pub const LT: u8 = 0x10;
    pub const GT: u8 = 0x11;
    pub const SLT: u8 = 0x12;
    pub const SGT: u8 = 0x13;
    pub const EQ: u8 = 0x14;
    pub const ISZERO: u8 = 0x15;
    pub const AND: u8 = 0x16;
    pub const OR: u8 = 0x17;
    pub const XOR: u8 = 0x18;
    pub const NOT: u8 = 0x19;
    pub const BYTE: u8 = 0x1a;
    pub const SHL: u8 = 0x1b;
    pub const SHR: u8 = 0x1c;
    pub const SAR: u8 = 0x1d;
    pub const KECCAK256: u8 = 0x20;
    pub const ADDRESS: u8 = 0x30;
    pub const BALANCE: u8 = 0x31;
    pub const ORIGIN: u8 = 0x32;
    pub const CALLER: u8 = 0x33;
    pub const CALLVALUE: u8 = 0x34;
    pub const CALLDATALOAD: u8 = 0x35;
    pub const CALLDATASIZE: u8 = 0x36;
    pub const CALLDATACOPY: u8 = 0x37;
    pub const CODESIZE: u8 = 0x38;
    pub const CODECOPY: u8 = 0x39;
    pub const GASPRICE: u8 = 0x3a;
    pub const EXTCODESIZE: u8 = 0x3b;
    pub const EXTCODECOPY: u8 = 0x3c;
    pub const RETURNDATASIZE: u8 = 0x3d;
    pub const RETURNDATACOPY: u8 = 0x3e;
    pub const EXTCODEHASH: u8 = 0x3f;
    pub const BLOCKHASH: u8 = 0x40;
    pub const COINBASE: u8 = 0x41;
    pub const TIMESTAMP: u8 = 0x42;
    pub const NUMBER: u8 = 0x43;
    pub const DIFFICULTY: u8 = 0x44;
    pub const GASLIMIT: u8 = 0x45;
    pub const CHAINID: u8 = 0x46;
    pub const SELFBALANCE: u8 = 0x47;
    pub const BASEFEE: u8 = 0x48;
    pub const POP: u8 = 0x50;
    pub const MLOAD: u8 = 0x51;
    pub const MSTORE: u8 = 0x52;
    pub const MSTORE8: u8 = 0x53;
    pub const SLOAD: u8 = 0x54;
    pub const SSTORE: u8 = 0x55;
    pub const JUMP: u8 = 0x56;
    pub const JUMPI: u8 = 0x57;
    pub const PC: u8 = 0x58;
    pub const MSIZE: u8 = 0x59;
    pub const GAS: u8 = 0x5a;
    pub const JUMPDEST: u8 = 0x5b;
    pub const PUSH0: u8 = 0x5f;
    pub const PUSH1: u8 = 0x60;
    pub const PUSH20: u8 = 0x73;
    pub const PUSH32: u8 = 0x7f;
    pub const DUP1: u8 = 0x80;
    pub const DUP16: u8 = 0x8f;
    pub const SWAP1: u8 = 0x90;
    pub const SWAP16: u8 = 0x9f;
    pub const LOG0: u8 = 0xa0;
    pub const LOG4: u8 = 0xa4;
    pub const CREATE: u8 = 0xf0;
    pub const CALL: u8 = 0xf1;
    pub const CALLCODE: u8 = 0xf2;
    pub const RETURN: u8 = 0xf3;
    pub const DELEGATECALL: u8 = 0xf4;
    pub const CREATE2: u8 = 0xf5;
    pub const STATICCALL: u8 = 0xfa;
    pub const REVERT: u8 = 0xfd;
    pub const SELFDESTRUCT: u8 = 0xff;
}

/// Instruction-set revision used to decide which byte values are assigned.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fork {
    Frontier,
    Homestead,
    Byzantium,
    Constantinople,
    #[default]
    Istanbul,
    Berlin,
    London,
    Shanghai,
}

impl Fork {
    pub const ALL: [Fork; 8] = [
        Fork::Frontier,
        Fork::Homestead,
        Fork::Byzantium,
        Fork::Constantinople,
        Fork::Istanbul,
        Fork::Berlin,
        Fork::London,
        Fork::Shanghai,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Fork::Frontier => "frontier",
            Fork::Homestead => "homestead",
            Fork::Byzantium => "byzantium",
            Fork::Constantinople => "constantinople",
            Fork::Istanbul => "istanbul",
            Fork::Berlin => "berlin",
            Fork::London => "london",
            Fork::Shanghai => "shanghai",
        }
    }
}

impl FromStr for Fork {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Fork::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fork {s:?}"))
    }
}

impl fmt::Display for Fork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Static description of one opcode byte.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OpcodeInfo {
    pub byte_value: u8,
    pub mnemonic: &'static str,
    /// Stack items consumed.
    pub pops: u8,
    /// Stack items produced.
    pub pushes: u8,
    /// Inline data bytes following the opcode (only PUSH1..PUSH32 are nonzero).
    pub immediate_len: u8,
    /// True exactly for STOP, JUMP, JUMPI, RETURN, SELFDESTRUCT, REVERT.
    pub is_terminator: bool,
    /// False for byte values with no assigned opcode under the chosen fork.
    pub is_known: bool,
}

impl OpcodeInfo {
    fn unknown(byte_value: u8) -> Self {
        OpcodeInfo {
            byte_value,
            mnemonic: "UNKNOWN",
            pops: 0,
            pushes: 0,
            immediate_len: 0,
            is_terminator: false,
            is_known: false,
        }
    }
}

struct Entry {
    mnemonic: &'static str,
    pops: u8,
    pushes: u8,
    immediate_len: u8,
    is_terminator: bool,
    since: Fork,
}

macro_rules! entry {
    ($m:expr, $pops:expr, $pushes:expr) => {
        entry!($m, $pops, $pushes, 0, false, Fork::Frontier)
    };
    ($m:expr, $pops:expr, $pushes:expr, since: $since:expr) => {
        entry!($m, $pops, $pushes, 0, false, $since)
    };
    ($m:expr, $pops:expr, $pushes:expr, terminator) => {
        entry!($m, $pops, $pushes, 0, true, Fork::Frontier)
    };
    ($m:expr, $pops:expr, $pushes:expr, terminator, since: $since:expr) => {
        entry!($m, $pops, $pushes, 0, true, $since)
    };
    ($m:expr, $pops:expr, $pushes:expr, $imm:expr, $term:expr, $since:expr) => {
        Some(Entry {
            mnemonic: $m,
            pops: $pops,
            pushes: $pushes,
            immediate_len: $imm,
            is_terminator: $term,
            since: $since,
        })
    };
}

static PUSH_NAMES: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10",
    "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19",
    "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28",
    "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];
static DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11",
    "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];
static SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10",
    "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];
static LOG_NAMES: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

fn table_entry(byte: u8) -> Option<Entry> {
    use Fork::*;
    match byte {
        0x00 => entry!("STOP", 0, 0, terminator),
        0x01 => entry!("ADD", 2, 1),
        0x02 => entry!("MUL", 2, 1),
        0x03 => entry!("SUB", 2, 1),
        0x04 => entry!("DIV", 2, 1),
        0x05 => entry!("SDIV", 2, 1),
        0x06 => entry!("MOD", 2, 1),
        0x07 => entry!("SMOD", 2, 1),
        0x08 => entry!("ADDMOD", 3, 1),
        0x09 => entry!("MULMOD", 3, 1),
        0x0a => entry!("EXP", 2, 1),
        0x0b => entry!("SIGNEXTEND", 2, 1),
        0x10 => entry!("LT", 2, 1),
        0x11 => entry!("GT", 2, 1),
        0x12 => entry!("SLT", 2, 1),
        0x13 => entry!("SGT", 2, 1),
        0x14 => entry!("EQ", 2, 1),
        0x15 => entry!("ISZERO", 1, 1),
        0x16 => entry!("AND", 2, 1),
        0x17 => entry!("OR", 2, 1),
        0x18 => entry!("XOR", 2, 1),
        0x19 => entry!("NOT", 1, 1),
        0x1a => entry!("BYTE", 2, 1),
        0x1b => entry!("SHL", 2, 1, since: Constantinople),
        0x1c => entry!("SHR", 2, 1, since: Constantinople),
        0x1d => entry!("SAR", 2, 1, since: Constantinople),
        0x20 => entry!("KECCAK256", 2, 1),
        0x30 => entry!("ADDRESS", 0, 1),
        0x31 => entry!("BALANCE", 1, 1),
        0x32 => entry!("ORIGIN", 0, 1),
        0x33 => entry!("CALLER", 0, 1),
        0x34 => entry!("CALLVALUE", 0, 1),
        0x35 => entry!("CALLDATALOAD", 1, 1),
        0x36 => entry!("CALLDATASIZE", 0, 1),
        0x37 => entry!("CALLDATACOPY", 3, 0),
        0x38 => entry!("CODESIZE", 0, 1),
        0x39 => entry!("CODECOPY", 3, 0),
        0x3a => entry!("GASPRICE", 0, 1),
        0x3b => entry!("EXTCODESIZE", 1, 1),
        0x3c => entry!("EXTCODECOPY", 4, 0),
        0x3d => entry!("RETURNDATASIZE", 0, 1, since: Byzantium),
        0x3e => entry!("RETURNDATACOPY", 3, 0, since: Byzantium),
        0x3f => entry!("EXTCODEHASH", 1, 1, since: Constantinople),
        0x40 => entry!("BLOCKHASH", 1, 1),
        0x41 => entry!("COINBASE", 0, 1),
        0x42 => entry!("TIMESTAMP", 0, 1),
        0x43 => entry!("NUMBER", 0, 1),
        0x44 => entry!("DIFFICULTY", 0, 1),
        0x45 => entry!("GASLIMIT", 0, 1),
        0x46 => entry!("CHAINID", 0, 1, since: Istanbul),
        0x47 => entry!("SELFBALANCE", 0, 1, since: Istanbul),
        0x48 => entry!("BASEFEE", 0, 1, since: London),
        0x50 => entry!("POP", 1, 0),
        0x51 => entry!("MLOAD", 1, 1),
        0x52 => entry!("MSTORE", 2, 0),
        0x53 => entry!("MSTORE8", 2, 0),
        0x54 => entry!("SLOAD", 1, 1),
        0x55 => entry!("SSTORE", 2, 0),
        0x56 => entry!("JUMP", 1, 0, terminator),
        0x57 => entry!("JUMPI", 2, 0, terminator),
        0x58 => entry!("PC", 0, 1),
        0x59 => entry!("MSIZE", 0, 1),
        0x5a => entry!("GAS", 0, 1),
        0x5b => entry!("JUMPDEST", 0, 0),
        0x5f => entry!("PUSH0", 0, 1, since: Shanghai),
        0x60..=0x7f => {
            let n = byte - 0x5f;
            entry!(PUSH_NAMES[(n - 1) as usize], 0, 1, n, false, Frontier)
        }
        0x80..=0x8f => {
            let n = byte - 0x7f;
            entry!(DUP_NAMES[(n - 1) as usize], n, n + 1)
        }
        0x90..=0x9f => {
            let n = byte - 0x8f;
            entry!(SWAP_NAMES[(n - 1) as usize], n + 1, n + 1)
        }
        0xa0..=0xa4 => {
            let n = byte - 0xa0;
            entry!(LOG_NAMES[n as usize], n + 2, 0)
        }
        0xf0 => entry!("CREATE", 3, 1),
        0xf1 => entry!("CALL", 7, 1),
        0xf2 => entry!("CALLCODE", 7, 1),
        0xf3 => entry!("RETURN", 2, 0, terminator),
        0xf4 => entry!("DELEGATECALL", 6, 1, since: Homestead),
        0xf5 => entry!("CREATE2", 4, 1, since: Constantinople),
        0xfa => entry!("STATICCALL", 6, 1, since: Byzantium),
        0xfd => entry!("REVERT", 2, 0, terminator, since: Byzantium),
        0xff => entry!("SELFDESTRUCT", 1, 0, terminator),
        _ => None,
    }
}

/// Looks up the instruction table for `fork`. Total over all 256 byte values;
/// unassigned bytes come back with `is_known = false` and zero arity.
pub fn opcode_info_at(byte: u8, fork: Fork) -> OpcodeInfo {
    match table_entry(byte) {
        Some(e) if e.since <= fork => OpcodeInfo {
            byte_value: byte,
            mnemonic: e.mnemonic,
            pops: e.pops,
            pushes: e.pushes,
            immediate_len: e.immediate_len,
            is_terminator: e.is_terminator,
            is_known: true,
        },
        _ => OpcodeInfo::unknown(byte),
    }
}

/// Table lookup under the default fork (Istanbul).
pub fn opcode_info(byte: u8) -> OpcodeInfo {
    opcode_info_at(byte, Fork::default())
}

/// Resolves a mnemonic like "EXTCODESIZE" to its byte value under `fork`.
pub fn byte_for_mnemonic(mnemonic: &str, fork: Fork) -> Option<u8> {
    (0u8..=255).find(|b| {
        let info = opcode_info_at(*b, fork);
        info.is_known && info.mnemonic.eq_ignore_ascii_case(mnemonic)
    })
}

/// A decoded instruction: opcode plus any inline immediate data.
///
/// The immediate is always `immediate_len` bytes long; a PUSH that runs past
/// the end of code is zero-padded to its declared width, mirroring the EVM's
/// implicit zero extension of code.
#[derive(Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Byte position of the opcode in the code (the program counter).
    pub offset: usize,
    pub info: OpcodeInfo,
    pub immediate: Vec<u8>,
}

impl Instruction {
    pub fn opcode(&self) -> u8 {
        self.info.byte_value
    }

    /// Offset of the instruction that follows this one.
    pub fn next_offset(&self) -> usize {
        self.offset + 1 + self.info.immediate_len as usize
    }

    /// The immediate interpreted as a big-endian word; None unless a PUSH.
    pub fn push_value(&self) -> Option<U256> {
        if self.info.immediate_len > 0 {
            Some(U256::from_big_endian(&self.immediate))
        } else {
            None
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.info.is_known {
            write!(f, "UNKNOWN(0x{:02x})", self.info.byte_value)
        } else if self.immediate.is_empty() {
            f.write_str(self.info.mnemonic)
        } else {
            write!(
                f,
                "{} 0x{}",
                self.info.mnemonic,
                hex::encode(&self.immediate)
            )
        }
    }
}

impl fmt::Debug for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}: {}", self.offset, self)
    }
}

/// Decodes a full byte sequence under `fork`. Every input byte is covered
/// exactly once; PUSH immediates are consumed as data, never as opcodes.
pub fn decode_at(code: &[u8], fork: Fork) -> Vec<Instruction> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    while offset < code.len() {
        let info = opcode_info_at(code[offset], fork);
        let imm_len = info.immediate_len as usize;
        let imm_start = offset + 1;
        let mut immediate = vec![0u8; imm_len];
        let avail = code.len().saturating_sub(imm_start).min(imm_len);
        immediate[..avail].copy_from_slice(&code[imm_start..imm_start + avail]);
        out.push(Instruction {
            offset,
            info,
            immediate,
        });
        offset = imm_start + imm_len;
    }
    out
}

/// Decodes under the default fork.
pub fn decode(code: &[u8]) -> Vec<Instruction> {
    decode_at(code, Fork::default())
}

/// Re-emits opcode bytes and immediates. Because truncated trailing PUSH
/// immediates were zero-padded during decoding, the result may extend past
/// the original code length; truncate to that length to recover it exactly.
pub fn reassemble(instrs: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::new();
    for ins in instrs {
        out.push(ins.info.byte_value);
        out.extend_from_slice(&ins.immediate);
    }
    out
}

/// A maximal straight-line run of instructions.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BasicBlock {
    pub instructions: Vec<Instruction>,
    pub start_offset: usize,
    pub ends_with_terminator: bool,
}

impl BasicBlock {
    pub fn contains_opcode(&self, byte: u8) -> bool {
        self.instructions.iter().any(|i| i.opcode() == byte)
    }
}

/// Splits a decoded instruction sequence into basic blocks. A block ends at a
/// terminator or at the end of code; unknown opcodes and JUMPDEST do not open
/// or close blocks.
pub fn split_blocks(instrs: Vec<Instruction>) -> Vec<BasicBlock> {
    let mut blocks = Vec::new();
    let mut current: Vec<Instruction> = Vec::new();
    for ins in instrs {
        let terminates = ins.info.is_terminator;
        current.push(ins);
        if terminates {
            let start_offset = current[0].offset;
            blocks.push(BasicBlock {
                instructions: std::mem::take(&mut current),
                start_offset,
                ends_with_terminator: true,
            });
        }
    }
    if !current.is_empty() {
        let start_offset = current[0].offset;
        blocks.push(BasicBlock {
            instructions: current,
            start_offset,
            ends_with_terminator: false,
        });
    }
    blocks
}

/// The entry block of a bytecode, executed by every call to the contract.
pub fn first_block_at(code: &[u8], fork: Fork) -> Option<BasicBlock> {
    let mut blocks = split_blocks(decode_at(code, fork));
    if blocks.is_empty() {
        None
    } else {
        Some(blocks.swap_remove(0))
    }
}

/// Entry block under the default fork.
pub fn first_block(code: &[u8]) -> Option<BasicBlock> {
    first_block_at(code, Fork::default())
}
