//! The account classifiers.
//!
//! Contract rules inspect runtime bytecode: entry-byte STOP, REVERT or
//! SELFDESTRUCT in the entry block, guaranteed stack faults, unassigned
//! opcodes in the entry block, single-block resource-exhaustion patterns,
//! and hardcoded calls into removed library contracts. EOA rules inspect
//! state fields and transaction history: leftovers of failed deployments and
//! the 1-Wei accounts minted by contract spam. Each account gets the set of
//! labels that fire plus one primary label under a fixed precedence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{AccountHistory, AccountState};
use crate::isa::{self, op, Fork};
use crate::symexec::{self, CallTarget, DepthOutcome, ExecBudget};
use crate::types::{Address, U256};

/// The removed multi-sig library that bricked its dependent wallets.
pub const PARITY_WALLET_LIBRARY: Address = Address([
    0x86, 0x3d, 0xf6, 0xbf, 0xa4, 0x46, 0x9f, 0x3e, 0xad, 0x0b, 0xe8, 0xf9, 0xf2, 0xaa, 0xe5, 0x1c,
    0x91, 0xa9, 0x07, 0xb4,
]);

/// Account categories. Variant order is the precedence used to pick the
/// primary label: structural impossibility outranks behavioral classes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "MC_S")]
    McS,
    OpcodeError,
    StackError,
    #[serde(rename = "MC_RS")]
    McRs,
    ParityDependent,
    #[serde(rename = "DoSMalicious")]
    DosMalicious,
    EmptyAccount,
    #[serde(rename = "DoSEOA")]
    DosEoa,
}

impl Label {
    pub const ALL: [Label; 8] = [
        Label::McS,
        Label::OpcodeError,
        Label::StackError,
        Label::McRs,
        Label::ParityDependent,
        Label::DosMalicious,
        Label::EmptyAccount,
        Label::DosEoa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Label::McS => "MC_S",
            Label::OpcodeError => "OpcodeError",
            Label::StackError => "StackError",
            Label::McRs => "MC_RS",
            Label::ParityDependent => "ParityDependent",
            Label::DosMalicious => "DoSMalicious",
            Label::EmptyAccount => "EmptyAccount",
            Label::DosEoa => "DoSEOA",
        }
    }

    /// True for the two labels the reports group as "DoS contract".
    pub fn is_dos_contract(&self) -> bool {
        matches!(self, Label::ParityDependent | Label::DosMalicious)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Detector knobs; the defaults match the deployed-attack patterns the
/// detectors were built around.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Known removed contracts whose callers are out of service.
    pub removed_contracts: BTreeSet<Address>,
    /// A single-block contract is malicious when its count of DoS-related
    /// operations strictly exceeds this.
    pub dos_op_threshold: usize,
    /// The DoS-related operations, by opcode byte.
    pub dos_ops: BTreeSet<u8>,
    pub exec_budget: ExecBudget,
    pub fork: Fork,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            removed_contracts: BTreeSet::from([PARITY_WALLET_LIBRARY]),
            dos_op_threshold: 100,
            dos_ops: BTreeSet::from([
                op::EXTCODESIZE,
                op::EXTCODECOPY,
                op::BALANCE,
                op::CALL,
                op::DELEGATECALL,
                op::CALLCODE,
                op::SELFDESTRUCT,
            ]),
            exec_budget: ExecBudget::default(),
            fork: Fork::default(),
        }
    }
}

/// Per-account result: all labels that fired, the headline label, and
/// human-readable evidence per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub address: Address,
    pub labels: BTreeSet<Label>,
    pub primary: Option<Label>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<Label, String>,
    /// Set when analysis of this account was cut short (panic or exhausted
    /// exploration budget); the labels present are still valid.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub evidence_incomplete: bool,
}

impl Classification {
    pub fn empty(address: Address) -> Self {
        Classification {
            address,
            labels: BTreeSet::new(),
            primary: None,
            evidence: BTreeMap::new(),
            evidence_incomplete: false,
        }
    }

    fn add(&mut self, label: Label, evidence: String) {
        self.labels.insert(label);
        self.evidence.insert(label, evidence);
        // BTreeSet iterates in variant order, which is the precedence order.
        self.primary = self.labels.iter().next().copied();
    }

    pub fn is_flagged(&self) -> bool {
        !self.labels.is_empty()
    }
}

/// First runtime byte is STOP: every call halts before reading calldata.
pub fn detect_mc_s(code: &[u8]) -> bool {
    code.first() == Some(&op::STOP)
}

/// REVERT or SELFDESTRUCT in the entry block: every call reverts or removes
/// the contract.
pub fn detect_mc_rs(code: &[u8], fork: Fork) -> bool {
    match isa::first_block_at(code, fork) {
        Some(block) => block.contains_opcode(op::REVERT) || block.contains_opcode(op::SELFDESTRUCT),
        None => false,
    }
}

/// Entry-block depth verdict; `Underflow`/`Overflow` means every call faults.
pub fn entry_block_depth(code: &[u8], fork: Fork) -> Option<DepthOutcome> {
    isa::first_block_at(code, fork).map(|b| symexec::simulate_depth(&b))
}

/// Guaranteed stack fault in the entry block (underflow, or the rarer
/// overflow, distinguished in evidence by the caller).
pub fn detect_stack_error(code: &[u8], fork: Fork) -> bool {
    !matches!(
        entry_block_depth(code, fork),
        None | Some(DepthOutcome::Ok { .. })
    )
}

/// Unassigned opcode in the entry block: every call hits a bad instruction.
pub fn detect_opcode_error(code: &[u8], fork: Fork) -> bool {
    match isa::first_block_at(code, fork) {
        Some(block) => block.instructions.iter().any(|i| !i.info.is_known),
        None => false,
    }
}

/// Number of DoS-related operations in the decoded code.
pub fn dos_op_count(code: &[u8], config: &DetectorConfig) -> usize {
    isa::decode_at(code, config.fork)
        .iter()
        .filter(|i| i.info.is_known && config.dos_ops.contains(&i.opcode()))
        .count()
}

/// Single basic block packed with more than `dos_op_threshold` DoS-related
/// operations: the resource-exhaustion attack pattern.
pub fn detect_dos_malicious(code: &[u8], config: &DetectorConfig) -> bool {
    let blocks = isa::split_blocks(isa::decode_at(code, config.fork));
    blocks.len() == 1 && dos_op_count(code, config) > config.dos_op_threshold
}

/// Outcome of the removed-library check.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParityVerdict {
    pub hit: bool,
    pub matched: BTreeSet<Address>,
    /// True when exploration was cut short before any match was found.
    pub inconclusive: bool,
}

/// Symbolic execution finds a call-family operation whose concrete target is
/// one of the removed contracts. Contracts without any call-family opcode are
/// rejected up front without executing anything.
pub fn detect_parity_dep(code: &[u8], config: &DetectorConfig) -> ParityVerdict {
    if !symexec::contains_call_opcode_at(code, config.fork) {
        return ParityVerdict::default();
    }
    let outcome = symexec::sym_exec_at(code, &config.exec_budget, config.fork);
    let matched: BTreeSet<Address> = outcome
        .calls
        .iter()
        .filter_map(|ev| match ev.target {
            CallTarget::Concrete(addr) if config.removed_contracts.contains(&addr) => Some(addr),
            _ => None,
        })
        .collect();
    ParityVerdict {
        hit: !matched.is_empty(),
        inconclusive: matched.is_empty() && !outcome.terminated_normally,
        matched,
    }
}

/// Zero balance, zero nonce, no code, and the oldest transaction is a
/// contract deployment: the husk a failed deployment left behind. The
/// deployment need not carry an error status; the creation shape is the gate.
pub fn detect_empty_account(state: &AccountState, hist: &AccountHistory<'_>) -> bool {
    state.balance.is_zero()
        && state.nonce == 0
        && state.code.is_empty()
        && hist
            .oldest
            .is_some_and(|tx| tx.is_creation() && tx.created_address == Some(state.address))
}

/// 1-Wei balance, zero nonce, no code, no external transactions at all, no
/// outgoing internal transactions, and exactly one error-free incoming
/// internal transaction (the 1-Wei mint). Errored incoming internals are the
/// attack traffic itself and do not disqualify; they are surfaced as a count
/// in the evidence instead.
pub fn detect_dos_eoa(state: &AccountState, hist: &AccountHistory<'_>) -> bool {
    state.balance == U256::one()
        && state.nonce == 0
        && state.code.is_empty()
        && hist.external_count() == 0
        && hist.internal_out.is_empty()
        && hist
            .internal_in
            .iter()
            .filter(|tx| tx.error.is_none())
            .count()
            == 1
}

/// Runs the contract rules on code-bearing accounts and the EOA rules on the
/// rest, and folds the results into one `Classification`.
pub fn classify(
    state: &AccountState,
    hist: &AccountHistory<'_>,
    config: &DetectorConfig,
) -> Classification {
    let mut result = Classification::empty(state.address);
    if !state.code.is_empty() {
        classify_contract(state, config, &mut result);
    } else {
        classify_eoa(state, hist, &mut result);
    }
    result
}

fn classify_contract(state: &AccountState, config: &DetectorConfig, result: &mut Classification) {
    let code = &state.code;
    if detect_mc_s(code) {
        result.add(Label::McS, "first code byte is 0x00 (STOP)".into());
    }
    if detect_mc_rs(code, config.fork) {
        let block = isa::first_block_at(code, config.fork).expect("code non-empty");
        let hit = block
            .instructions
            .iter()
            .find(|i| matches!(i.opcode(), op::REVERT | op::SELFDESTRUCT))
            .expect("detector fired");
        result.add(
            Label::McRs,
            format!("{} at offset {}", hit.info.mnemonic, hit.offset),
        );
    }
    match entry_block_depth(code, config.fork) {
        Some(DepthOutcome::Underflow { at_offset }) => {
            result.add(
                Label::StackError,
                format!("stack underflow at offset {at_offset}"),
            );
        }
        Some(DepthOutcome::Overflow { at_offset }) => {
            result.add(
                Label::StackError,
                format!("stack overflow at offset {at_offset}"),
            );
        }
        _ => {}
    }
    if detect_opcode_error(code, config.fork) {
        let block = isa::first_block_at(code, config.fork).expect("code non-empty");
        let hit = block
            .instructions
            .iter()
            .find(|i| !i.info.is_known)
            .expect("detector fired");
        result.add(
            Label::OpcodeError,
            format!(
                "unknown opcode 0x{:02x} at offset {} ({} fork)",
                hit.opcode(),
                hit.offset,
                config.fork
            ),
        );
    }
    if detect_dos_malicious(code, config) {
        result.add(
            Label::DosMalicious,
            format!(
                "single basic block with {} DoS-related operations (threshold {})",
                dos_op_count(code, config),
                config.dos_op_threshold
            ),
        );
    }
    let parity = detect_parity_dep(code, config);
    if parity.hit {
        let addresses: Vec<String> = parity.matched.iter().map(|a| a.to_string()).collect();
        result.add(
            Label::ParityDependent,
            format!("calls removed contract(s): {}", addresses.join(", ")),
        );
    } else if parity.inconclusive {
        // Not a label: record that exploration was truncated without a hit.
        result
            .evidence
            .entry(Label::ParityDependent)
            .or_insert_with(|| "inconclusive: execution budget exhausted before any match".into());
        result.evidence_incomplete = true;
    }
}

fn classify_eoa(state: &AccountState, hist: &AccountHistory<'_>, result: &mut Classification) {
    if detect_empty_account(state, hist) {
        let tx = hist.oldest.expect("detector fired");
        result.add(
            Label::EmptyAccount,
            format!("failed deployment {} at block {}", tx.hash, tx.block_number),
        );
    }
    if detect_dos_eoa(state, hist) {
        let mint = hist
            .internal_in
            .iter()
            .find(|tx| tx.error.is_none())
            .expect("detector fired");
        let errored = hist.internal_in.len() - 1;
        result.add(
            Label::DosEoa,
            format!(
                "minted by internal transaction {} ({} errored internals ignored)",
                mint.hash, errored
            ),
        );
    }
}
