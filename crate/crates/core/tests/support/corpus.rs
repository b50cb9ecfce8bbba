//! Deterministic corpus generator: plants a configured number of accounts of
//! each category among clean accounts, with matching transaction histories,
//! and remembers the ground truth for exact-count assertions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use deadwood_core::detect::{Label, PARITY_WALLET_LIBRARY};
use deadwood_core::ingest::{AccountState, TxKind, TxRecord};
use deadwood_core::types::{Address, Hash32, U256};

use super::fixtures;

#[derive(Clone, Copy, Debug)]
pub struct PlantCounts {
    pub mc_s: usize,
    pub mc_rs: usize,
    pub stack_error: usize,
    pub opcode_error: usize,
    pub dos_malicious: usize,
    pub parity_dependent: usize,
    pub empty_account: usize,
    pub dos_eoa: usize,
    /// Clean EOAs in the remainder (clean contracts are the real bytecodes).
    pub clean_eoa: usize,
}

impl PlantCounts {
    /// 1,000 accounts: 285 planted, 715 clean (708 EOAs + 7 real contracts).
    pub fn thousand() -> Self {
        PlantCounts {
            mc_s: 50,
            mc_rs: 40,
            stack_error: 10,
            opcode_error: 10,
            dos_malicious: 20,
            parity_dependent: 30,
            empty_account: 25,
            dos_eoa: 100,
            clean_eoa: 708,
        }
    }

    pub fn total_with_clean_contracts(&self) -> usize {
        self.mc_s
            + self.mc_rs
            + self.stack_error
            + self.opcode_error
            + self.dos_malicious
            + self.parity_dependent
            + self.empty_account
            + self.dos_eoa
            + self.clean_eoa
            + fixtures::real_contracts().len()
    }
}

pub struct Corpus {
    pub accounts: Vec<AccountState>,
    pub txs: Vec<TxRecord>,
    /// Ground truth: expected primary label per planted account.
    pub expected: BTreeMap<Address, Label>,
    /// Accounts that must come out with an empty label set.
    pub clean: BTreeSet<Address>,
    /// Creation timestamp (of the oldest transaction) per account that has
    /// any history; the independent input for creation-time checks.
    pub creation_ts: BTreeMap<Address, u64>,
}

impl Corpus {
    pub fn expected_count(&self, label: Label) -> u64 {
        self.expected.values().filter(|l| **l == label).count() as u64
    }

    /// Writes account and transaction dumps into `dir`.
    pub fn write_jsonl(&self, dir: &Path) -> (PathBuf, PathBuf) {
        let accounts_path = dir.join("accounts.jsonl");
        let txs_path = dir.join("txs.jsonl");
        let mut out = String::new();
        for account in &self.accounts {
            out.push_str(&serde_json::to_string(account).expect("serializable"));
            out.push('\n');
        }
        std::fs::write(&accounts_path, out).expect("write accounts");
        let mut out = String::new();
        for tx in &self.txs {
            out.push_str(&serde_json::to_string(tx).expect("serializable"));
            out.push('\n');
        }
        std::fs::write(&txs_path, out).expect("write txs");
        (accounts_path, txs_path)
    }
}

struct Builder {
    rng: StdRng,
    counter: u64,
    corpus: Corpus,
}

impl Builder {
    fn address(&mut self) -> Address {
        self.counter += 1;
        let mut bytes = [0u8; 20];
        bytes[..8].copy_from_slice(&self.counter.to_be_bytes());
        bytes[8..16].copy_from_slice(&self.rng.gen::<u64>().to_be_bytes());
        Address(bytes)
    }

    fn hash(&mut self) -> Hash32 {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&self.rng.gen::<u64>().to_be_bytes());
        bytes[8..16].copy_from_slice(&self.counter.to_be_bytes());
        Hash32(bytes)
    }

    fn timestamp(&mut self) -> u64 {
        // 2015..2020-ish range.
        self.rng.gen_range(1_440_000_000..1_590_000_000)
    }

    fn push_account(&mut self, state: AccountState, label: Option<Label>) {
        match label {
            Some(label) => {
                self.corpus.expected.insert(state.address, label);
            }
            None => {
                self.corpus.clean.insert(state.address);
            }
        }
        self.corpus.accounts.push(state);
    }

    fn base_block(&self) -> u64 {
        self.counter * 16
    }

    fn tx(
        &mut self,
        kind: TxKind,
        from: Address,
        to: Option<Address>,
        created: Option<Address>,
        block_offset: u64,
        ts: u64,
    ) -> TxRecord {
        TxRecord {
            hash: self.hash(),
            kind,
            from,
            to,
            created_address: created,
            value: U256::zero(),
            gas_used: self.rng.gen_range(21_000..200_000),
            gas_price: U256::from(self.rng.gen_range(1u64..100)),
            input: Vec::new(),
            error: None,
            timestamp: ts,
            block_number: self.base_block() + block_offset,
            index: None,
        }
    }

    /// Contract account with a creation transaction and a few calls.
    fn plant_contract(&mut self, code: Vec<u8>, label: Option<Label>) {
        let address = self.address();
        let deployer = self.address();
        let balance = if self.rng.gen_bool(0.3) {
            U256::from(self.rng.gen_range(1u64..10_000_000))
        } else {
            U256::zero()
        };
        let created_ts = self.timestamp();
        self.corpus.creation_ts.insert(address, created_ts);

        let mut creation = self.tx(
            TxKind::External,
            deployer,
            None,
            Some(address),
            0,
            created_ts,
        );
        creation.gas_used = self.rng.gen_range(100_000..1_000_000);
        self.corpus.txs.push(creation);
        for k in 0..self.rng.gen_range(0..4u64) {
            let caller = self.address();
            let call = self.tx(
                TxKind::External,
                caller,
                Some(address),
                None,
                k + 1,
                created_ts + 1000 * (k + 1),
            );
            self.corpus.txs.push(call);
        }

        self.push_account(
            AccountState {
                address,
                nonce: 1,
                balance,
                storage_root: None,
                code,
            },
            label,
        );
    }

    fn random_suffix(&mut self) -> Vec<u8> {
        let len = self.rng.gen_range(0..24usize);
        (0..len).map(|_| self.rng.gen()).collect()
    }

    fn plant_mc_s(&mut self) {
        let mut code = fixtures::mc_s();
        code.extend(self.random_suffix());
        self.plant_contract(code, Some(Label::McS));
    }

    fn plant_mc_rs(&mut self) {
        let mut code = if self.rng.gen_bool(0.5) {
            fixtures::mc_rs_selfdestruct()
        } else {
            fixtures::mc_rs_revert()
        };
        code.extend(self.random_suffix());
        self.plant_contract(code, Some(Label::McRs));
    }

    fn plant_stack_error(&mut self) {
        // Entry-block underflow with known opcodes only: either DIV-first or
        // a one-operand ADD.
        let mut code = if self.rng.gen_bool(0.5) {
            fixtures::stack_error()
        } else {
            vec![0x60, 0x01, 0x01, 0x00] // PUSH1 1, ADD, STOP
        };
        code.extend(self.random_suffix());
        self.plant_contract(code, Some(Label::StackError));
    }

    fn plant_opcode_error(&mut self) {
        let mut code = fixtures::opcode_error();
        code.extend(self.random_suffix());
        self.plant_contract(code, Some(Label::OpcodeError));
    }

    fn plant_dos_malicious(&mut self) {
        // Single block; no suffix, which would add a second block.
        let n = self.rng.gen_range(101..=300);
        self.plant_contract(fixtures::dos_block(n), Some(Label::DosMalicious));
    }

    fn plant_parity_dependent(&mut self) {
        let mut code = if self.rng.gen_bool(0.5) {
            fixtures::wallet_stub(PARITY_WALLET_LIBRARY)
        } else {
            fixtures::wallet_dispatcher(PARITY_WALLET_LIBRARY)
        };
        code.extend(self.random_suffix());
        self.plant_contract(code, Some(Label::ParityDependent));
    }

    fn plant_empty_account(&mut self) {
        let address = self.address();
        let deployer = self.address();
        let created_ts = self.timestamp();
        self.corpus.creation_ts.insert(address, created_ts);

        let mut creation = self.tx(
            TxKind::External,
            deployer,
            None,
            Some(address),
            0,
            created_ts,
        );
        if self.rng.gen_bool(0.7) {
            creation.error = Some("Out of Gas Error".into());
        }
        self.corpus.txs.push(creation);
        // Later calls into the empty husk, wasting gas.
        for k in 0..self.rng.gen_range(0..3u64) {
            let caller = self.address();
            let call = self.tx(
                TxKind::External,
                caller,
                Some(address),
                None,
                k + 1,
                created_ts + 500 * (k + 1),
            );
            self.corpus.txs.push(call);
        }

        self.push_account(
            AccountState {
                address,
                nonce: 0,
                balance: U256::zero(),
                storage_root: None,
                code: Vec::new(),
            },
            Some(Label::EmptyAccount),
        );
    }

    fn plant_dos_eoa(&mut self) {
        let address = self.address();
        let minter_contract = self.address();
        let attacker_eoa = self.address();
        let created_ts = self.timestamp();
        self.corpus.creation_ts.insert(address, created_ts);

        // The 1-Wei mint, plus the external transaction that triggered it
        // (same hash: one on-chain transaction).
        let mut mint = self.tx(
            TxKind::Internal,
            minter_contract,
            Some(address),
            None,
            0,
            created_ts,
        );
        mint.value = U256::one();
        let mut trigger = self.tx(
            TxKind::External,
            attacker_eoa,
            Some(minter_contract),
            None,
            0,
            created_ts,
        );
        trigger.hash = mint.hash;
        self.corpus.txs.push(mint);
        self.corpus.txs.push(trigger);

        // Errored spray traffic against the same account is part of the
        // attack and must not disqualify it.
        for k in 0..self.rng.gen_range(0..3u64) {
            let mut spam = self.tx(
                TxKind::Internal,
                minter_contract,
                Some(address),
                None,
                k + 1,
                created_ts + k + 1,
            );
            spam.error = Some("Out of Gas Error".into());
            self.corpus.txs.push(spam);
        }

        self.push_account(
            AccountState {
                address,
                nonce: 0,
                balance: U256::one(),
                storage_root: None,
                code: Vec::new(),
            },
            Some(Label::DosEoa),
        );
    }

    /// Clean EOAs: each variant violates at least one feature of both EOA
    /// rules.
    fn plant_clean_eoa(&mut self, variant: usize) {
        let address = self.address();
        let peer = self.address();
        let ts = self.timestamp();
        let mut nonce = 0u64;
        let mut balance = U256::from(self.rng.gen_range(2u64..1_000_000));

        match variant % 6 {
            0 => {
                // Ordinary active user.
                nonce = self.rng.gen_range(1..500);
                let out = self.tx(TxKind::External, address, Some(peer), None, 0, ts);
                self.corpus.txs.push(out);
                let inc = self.tx(TxKind::External, peer, Some(address), None, 1, ts + 10);
                self.corpus.txs.push(inc);
                self.corpus.creation_ts.insert(address, ts);
            }
            1 => {
                // Zero state but oldest is a plain transfer, not a creation.
                balance = U256::zero();
                let inc = self.tx(TxKind::External, peer, Some(address), None, 0, ts);
                self.corpus.txs.push(inc);
                self.corpus.creation_ts.insert(address, ts);
            }
            2 => {
                // 1 Wei but two clean internal mints.
                balance = U256::one();
                let a = self.tx(TxKind::Internal, peer, Some(address), None, 0, ts);
                let b = self.tx(TxKind::Internal, peer, Some(address), None, 1, ts + 5);
                self.corpus.txs.push(a);
                self.corpus.txs.push(b);
                self.corpus.creation_ts.insert(address, ts);
            }
            3 => {
                // 1 Wei, one clean internal, but an external transaction too.
                balance = U256::one();
                let mint = self.tx(TxKind::Internal, peer, Some(address), None, 0, ts);
                let ext = self.tx(TxKind::External, peer, Some(address), None, 1, ts + 5);
                self.corpus.txs.push(mint);
                self.corpus.txs.push(ext);
                self.corpus.creation_ts.insert(address, ts);
            }
            4 => {
                // No history at all.
                balance = U256::zero();
            }
            _ => {
                // 1 Wei, clean mint, but it spent an internal transaction.
                balance = U256::one();
                let mint = self.tx(TxKind::Internal, peer, Some(address), None, 0, ts);
                let spend = self.tx(TxKind::Internal, address, Some(peer), None, 1, ts + 5);
                self.corpus.txs.push(mint);
                self.corpus.txs.push(spend);
                self.corpus.creation_ts.insert(address, ts);
            }
        }

        self.push_account(
            AccountState {
                address,
                nonce,
                balance,
                storage_root: None,
                code: Vec::new(),
            },
            None,
        );
    }
}

/// Builds a corpus with exactly the planted counts, shuffled by seed.
pub fn generate(counts: &PlantCounts, seed: u64) -> Corpus {
    let mut builder = Builder {
        rng: StdRng::seed_from_u64(seed),
        counter: 0,
        corpus: Corpus {
            accounts: Vec::new(),
            txs: Vec::new(),
            expected: BTreeMap::new(),
            clean: BTreeSet::new(),
            creation_ts: BTreeMap::new(),
        },
    };

    for _ in 0..counts.mc_s {
        builder.plant_mc_s();
    }
    for _ in 0..counts.mc_rs {
        builder.plant_mc_rs();
    }
    for _ in 0..counts.stack_error {
        builder.plant_stack_error();
    }
    for _ in 0..counts.opcode_error {
        builder.plant_opcode_error();
    }
    for _ in 0..counts.dos_malicious {
        builder.plant_dos_malicious();
    }
    for _ in 0..counts.parity_dependent {
        builder.plant_parity_dependent();
    }
    for _ in 0..counts.empty_account {
        builder.plant_empty_account();
    }
    for _ in 0..counts.dos_eoa {
        builder.plant_dos_eoa();
    }
    for code in fixtures::real_contracts() {
        builder.plant_contract(code, None);
    }
    for variant in 0..counts.clean_eoa {
        builder.plant_clean_eoa(variant);
    }

    builder.corpus
}
