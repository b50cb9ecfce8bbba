//! Account-state and transaction-history ingestion.
//!
//! Dumps are line-delimited JSON records, UTF-8, LF-terminated: one account
//! or one transaction per line. Malformed lines are rejected individually
//! with their line numbers; an unreadable file fails the whole load. Amounts
//! are exact unsigned integers in Wei end to end.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{hex_serde, u256_serde, Address, Hash32, U256};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The four-field world-state record of one account.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountState {
    pub address: Address,
    pub nonce: u64,
    #[serde(with = "u256_serde")]
    pub balance: U256,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_root: Option<Hash32>,
    #[serde(default, with = "hex_serde")]
    pub code: Vec<u8>,
}

impl AccountState {
    /// An account is externally owned iff it stores no code.
    pub fn is_eoa(&self) -> bool {
        self.code.is_empty()
    }
}

/// Transaction origin: sent from an EOA (external) or emitted by a contract
/// during execution (internal).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    External,
    Internal,
}

/// One external or internal transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub hash: Hash32,
    pub kind: TxKind,
    pub from: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_address: Option<Address>,
    #[serde(with = "u256_serde")]
    pub value: U256,
    pub gas_used: u64,
    #[serde(with = "u256_serde")]
    pub gas_price: U256,
    #[serde(default, with = "hex_serde")]
    pub input: Vec<u8>,
    /// Absent means the transaction succeeded; otherwise the error text
    /// verbatim, e.g. "Out of Gas Error" or "Reverted Error".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: u64,
    pub block_number: u64,
    /// Explicit intra-block position; records without one keep file order
    /// within their block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
}

impl TxRecord {
    pub fn is_creation(&self) -> bool {
        self.to.is_none() && self.created_address.is_some()
    }

    /// True when the error text reports a revert (value returned to sender).
    pub fn is_reverted(&self) -> bool {
        self.error
            .as_deref()
            .is_some_and(|e| e.to_ascii_lowercase().contains("revert"))
    }

    /// Wei spent on gas: gas_used times gas_price.
    pub fn gas_cost(&self) -> U256 {
        self.gas_price.saturating_mul(U256::from(self.gas_used))
    }
}

/// Per-line problems found while loading a dump.
#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub rejected: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

/// Immutable account index, last occurrence wins for duplicate addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccountStore {
    accounts: BTreeMap<Address, AccountState>,
}

impl AccountStore {
    pub fn from_states(states: impl IntoIterator<Item = AccountState>) -> Self {
        let mut store = AccountStore::default();
        for state in states {
            store.accounts.insert(state.address, state);
        }
        store
    }

    pub fn get(&self, address: &Address) -> Option<&AccountState> {
        self.accounts.get(address)
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.accounts.contains_key(address)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AccountState> {
        self.accounts.values()
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }
}

/// Transaction store indexed by every address a record mentions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TxStore {
    records: Vec<TxRecord>,
    by_address: BTreeMap<Address, Vec<usize>>,
}

/// History of one account, partitioned by direction and origin.
/// `oldest` is the earliest record by (block number, intra-block order).
#[derive(Clone, Debug, Default)]
pub struct AccountHistory<'a> {
    pub external_in: Vec<&'a TxRecord>,
    pub external_out: Vec<&'a TxRecord>,
    pub internal_in: Vec<&'a TxRecord>,
    pub internal_out: Vec<&'a TxRecord>,
    pub oldest: Option<&'a TxRecord>,
}

impl AccountHistory<'_> {
    pub fn external_count(&self) -> usize {
        self.external_in.len() + self.external_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oldest.is_none()
    }
}

impl TxStore {
    pub fn from_records(records: impl IntoIterator<Item = TxRecord>) -> Self {
        let mut store = TxStore {
            records: records.into_iter().collect(),
            by_address: BTreeMap::new(),
        };
        store.build_index();
        store
    }

    fn build_index(&mut self) {
        // Stable sort: within a block, explicitly indexed records follow
        // index order; unindexed ones keep file order (and precede indexed
        // ones when a block mixes both).
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by_key(|&i| (self.records[i].block_number, self.records[i].index));
        self.by_address.clear();
        for &i in &order {
            let tx = &self.records[i];
            let mut touched = vec![tx.from];
            for extra in [tx.to, tx.created_address].into_iter().flatten() {
                if !touched.contains(&extra) {
                    touched.push(extra);
                }
            }
            for address in touched {
                let slots = self.by_address.entry(address).or_default();
                if slots.last() != Some(&i) {
                    slots.push(i);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TxRecord] {
        &self.records
    }

    /// Stable identifiers (positions in the underlying record list) of every
    /// transaction touching `address`, in (block, index) order.
    pub fn touching(&self, address: &Address) -> &[usize] {
        self.by_address
            .get(address)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn record(&self, id: usize) -> &TxRecord {
        &self.records[id]
    }

    /// Partitions the transactions touching `address`. Unknown addresses get
    /// an all-empty history.
    pub fn history(&self, address: &Address) -> AccountHistory<'_> {
        let mut hist = AccountHistory::default();
        for &id in self.touching(address) {
            let tx = &self.records[id];
            if hist.oldest.is_none() {
                hist.oldest = Some(tx);
            }
            let incoming = tx.to == Some(*address) || tx.created_address == Some(*address);
            let outgoing = tx.from == *address;
            match tx.kind {
                TxKind::External => {
                    if incoming {
                        hist.external_in.push(tx);
                    }
                    if outgoing {
                        hist.external_out.push(tx);
                    }
                }
                TxKind::Internal => {
                    if incoming {
                        hist.internal_in.push(tx);
                    }
                    if outgoing {
                        hist.internal_out.push(tx);
                    }
                }
            }
        }
        hist
    }
}

fn load_lines<T, F>(reader: impl Read, mut accept: F) -> LoadReport
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T, &mut LoadReport) -> Result<(), String>,
{
    let mut report = LoadReport::default();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = lineno + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                report
                    .rejected
                    .push((lineno, format!("unreadable line: {e}")));
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(record) => match accept(record, &mut report) {
                Ok(()) => report.loaded += 1,
                Err(msg) => report.rejected.push((lineno, msg)),
            },
            Err(e) => report.rejected.push((lineno, e.to_string())),
        }
    }
    report
}

/// Loads an account dump from any reader.
pub fn read_accounts(reader: impl Read) -> (AccountStore, LoadReport) {
    let mut store = AccountStore::default();
    let report = load_lines::<AccountState, _>(reader, |state, report| {
        if let Some(previous) = store.accounts.insert(state.address, state) {
            let warning = format!(
                "duplicate account {}; keeping the last occurrence",
                previous.address
            );
            log::warn!("{warning}");
            report.warnings.push(warning);
        }
        Ok(())
    });
    (store, report)
}

/// Loads a transaction dump from any reader.
pub fn read_transactions(reader: impl Read) -> (TxStore, LoadReport) {
    let mut records = Vec::new();
    let report = load_lines::<TxRecord, _>(reader, |tx, _| {
        if tx.to.is_none() && tx.created_address.is_none() {
            return Err("creation transaction (to = null) missing created_address".into());
        }
        records.push(tx);
        Ok(())
    });
    (TxStore::from_records(records), report)
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an account dump file.
pub fn load_accounts(path: impl AsRef<Path>) -> Result<(AccountStore, LoadReport), IngestError> {
    Ok(read_accounts(open(path.as_ref())?))
}

/// Loads a transaction dump file.
pub fn load_transactions(path: impl AsRef<Path>) -> Result<(TxStore, LoadReport), IngestError> {
    Ok(read_transactions(open(path.as_ref())?))
}
