//! Quantity, waste, and creation-time reporting, plus the end-to-end
//! pipeline that ties ingestion, classification, graphs, and reports
//! together.
//!
//! Money stays in exact integer units (gas, Wei) through every sum; the
//! configured ETH price turns them into dollars only at presentation time.
//! Gas attribution is per primary label so the category totals stay
//! additive. Two exclusions apply: gas spent calling wallets of the removed
//! library before the attack was not wasted, and value attached to reverted
//! transactions went back to its senders.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{classify, Classification, DetectorConfig, Label};
use crate::graph::{self, AccountGraph, CallGraphEntry};
use crate::ingest::{self, AccountStore, IngestError, LoadReport, TxStore};
use crate::symexec;
use crate::types::{Address, U256};

/// Unix timestamp of the multi-sig library removal (November 6, 2017);
/// gas spent on its wallets before this moment bought real service.
pub const DEFAULT_PARITY_ATTACK_TIMESTAMP: u64 = 1_509_978_827;

/// ETH price (USD) used by default for the presentation-time conversion.
pub const DEFAULT_ETH_PRICE_USD: f64 = 204.36;

/// Exact integer waste sums for one category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WasteCategory {
    pub accounts: u64,
    /// Transactions whose gas was counted (exclusions not included).
    pub transactions: u64,
    /// Wasted gas in gas units.
    pub gas_wasted: u128,
    /// The same gas priced in Wei (gas_used x gas_price per transaction).
    #[serde(with = "crate::types::u256_serde")]
    pub gas_cost_wei: U256,
    /// Balances stuck in accounts nobody can use or drain.
    #[serde(with = "crate::types::u256_serde")]
    pub eth_locked: U256,
    /// Value attached to reverted transactions: returned, hence excluded.
    #[serde(with = "crate::types::u256_serde")]
    pub eth_returned_excluded: U256,
    /// (gas_cost_wei + eth_locked) at the configured price.
    pub usd_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionRule {
    PreAttackParityGas,
    RevertedValueReturn,
}

/// One applied exclusion, with what it removed from the totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub rule: ExclusionRule,
    pub category: Label,
    pub transactions: u64,
    pub gas: u128,
    #[serde(with = "crate::types::u256_serde")]
    pub wei: U256,
}

/// Waste accounting across all categories.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WasteReport {
    pub eth_price_usd: f64,
    pub parity_attack_timestamp: u64,
    pub categories: BTreeMap<Label, WasteCategory>,
    pub exclusions: Vec<Exclusion>,
    pub totals: WasteCategory,
}

/// Converts Wei to dollars at `price` per ETH. Presentation only.
pub fn wei_to_usd(wei: U256, price: f64) -> f64 {
    // Wei amounts can exceed u128; go through text for the general case.
    let as_f64 = if wei.bits() <= 128 {
        wei.as_u128() as f64
    } else {
        wei.to_string().parse::<f64>().unwrap_or(f64::MAX)
    };
    as_f64 / 1e18 * price
}

/// Balances count as locked for the categories nobody can recover funds
/// from: wallets of a removed library, attack contracts, and the 1-Wei
/// accounts whose keys nobody holds.
fn locks_balance(label: Label) -> bool {
    matches!(
        label,
        Label::ParityDependent | Label::DosMalicious | Label::DosEoa
    )
}

/// Sums wasted gas and locked ETH per primary label.
pub fn compute_waste(
    classifications: &[Classification],
    accounts: &AccountStore,
    txs: &TxStore,
    eth_price_usd: f64,
    parity_attack_timestamp: u64,
) -> WasteReport {
    let mut report = WasteReport {
        eth_price_usd,
        parity_attack_timestamp,
        ..Default::default()
    };
    // Transactions touching several accounts of one category count once.
    let mut touched: BTreeMap<Label, BTreeSet<usize>> = BTreeMap::new();

    for classification in classifications {
        let Some(label) = classification.primary else {
            continue;
        };
        let entry = report.categories.entry(label).or_default();
        entry.accounts += 1;
        if locks_balance(label) {
            if let Some(state) = accounts.get(&classification.address) {
                entry.eth_locked += state.balance;
            }
        }
        touched
            .entry(label)
            .or_default()
            .extend(txs.touching(&classification.address).iter().copied());
    }

    for (label, ids) in touched {
        let entry = report.categories.entry(label).or_default();
        let mut pre_attack = Exclusion {
            rule: ExclusionRule::PreAttackParityGas,
            category: label,
            transactions: 0,
            gas: 0,
            wei: U256::zero(),
        };
        let mut reverted = Exclusion {
            rule: ExclusionRule::RevertedValueReturn,
            category: label,
            transactions: 0,
            gas: 0,
            wei: U256::zero(),
        };
        for id in ids {
            let tx = txs.record(id);
            if label == Label::ParityDependent && tx.timestamp < parity_attack_timestamp {
                pre_attack.transactions += 1;
                pre_attack.gas += tx.gas_used as u128;
                pre_attack.wei += tx.gas_cost();
                continue;
            }
            entry.transactions += 1;
            entry.gas_wasted += tx.gas_used as u128;
            entry.gas_cost_wei += tx.gas_cost();
            if tx.is_reverted() && !tx.value.is_zero() {
                reverted.transactions += 1;
                reverted.wei += tx.value;
                entry.eth_returned_excluded += tx.value;
            }
        }
        if pre_attack.transactions > 0 {
            report.exclusions.push(pre_attack);
        }
        if reverted.transactions > 0 {
            report.exclusions.push(reverted);
        }
    }

    for entry in report.categories.values_mut() {
        entry.usd_value = wei_to_usd(entry.gas_cost_wei + entry.eth_locked, eth_price_usd);
        report.totals.accounts += entry.accounts;
        report.totals.transactions += entry.transactions;
        report.totals.gas_wasted += entry.gas_wasted;
        report.totals.gas_cost_wei += entry.gas_cost_wei;
        report.totals.eth_locked += entry.eth_locked;
        report.totals.eth_returned_excluded += entry.eth_returned_excluded;
    }
    report.totals.usd_value = wei_to_usd(
        report.totals.gas_cost_wei + report.totals.eth_locked,
        eth_price_usd,
    );
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub timestamp: u64,
    pub cumulative: u64,
}

/// Cumulative creation counts over time for one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesCdf {
    pub category: Label,
    pub points: Vec<CdfPoint>,
}

/// Creation time of each flagged account is the timestamp of its oldest
/// transaction. Accounts without any transaction are excluded and counted.
pub fn compute_cdf(
    classifications: &[Classification],
    txs: &TxStore,
) -> (Vec<TimeSeriesCdf>, BTreeMap<Label, u64>) {
    let mut times: BTreeMap<Label, Vec<u64>> = BTreeMap::new();
    let mut excluded: BTreeMap<Label, u64> = BTreeMap::new();
    for classification in classifications {
        let Some(label) = classification.primary else {
            continue;
        };
        match txs.history(&classification.address).oldest {
            Some(oldest) => times.entry(label).or_default().push(oldest.timestamp),
            None => *excluded.entry(label).or_default() += 1,
        }
    }
    let series = times
        .into_iter()
        .map(|(category, mut stamps)| {
            stamps.sort_unstable();
            let mut points: Vec<CdfPoint> = Vec::new();
            for (count, ts) in stamps.iter().enumerate() {
                let cumulative = count as u64 + 1;
                match points.last_mut() {
                    Some(last) if last.timestamp == *ts => last.cumulative = cumulative,
                    _ => points.push(CdfPoint {
                        timestamp: *ts,
                        cumulative,
                    }),
                }
            }
            TimeSeriesCdf { category, points }
        })
        .collect();
    (series, excluded)
}

/// Pipeline-level settings on top of the detector knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub eth_price_usd: f64,
    pub parity_attack_timestamp: u64,
    /// Worker threads for classification; None uses all processors.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorConfig::default(),
            eth_price_usd: DEFAULT_ETH_PRICE_USD,
            parity_attack_timestamp: DEFAULT_PARITY_ATTACK_TIMESTAMP,
            workers: None,
        }
    }
}

/// Per-category counts arranged the way the quantity table groups them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accounts_scanned: u64,
    pub account_lines_rejected: u64,
    pub transactions_loaded: u64,
    pub transaction_lines_rejected: u64,
    pub flagged_total: u64,
    /// Primary-label counts; every category key is present.
    pub categories: BTreeMap<Label, u64>,
    pub erasable_contracts: ContractGroup,
    pub erasable_eoas: EoaGroup,
    pub total_usd_wasted: f64,
    /// Flagged accounts with no transaction history, per category
    /// (excluded from the creation-time series).
    pub cdf_excluded_no_history: BTreeMap<Label, u64>,
    pub creation_warnings: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractGroup {
    pub total: u64,
    pub meaningless: u64,
    pub stack_or_opcode_error: u64,
    pub dos_contract: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EoaGroup {
    pub total: u64,
    pub empty_account: u64,
    pub dos_eoa: u64,
}

/// Everything one pipeline run produces.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub classifications: Vec<Classification>,
    pub call_graph: AccountGraph,
    pub creation_graph: AccountGraph,
    pub creation_warnings: Vec<String>,
    pub waste: WasteReport,
    pub cdfs: Vec<TimeSeriesCdf>,
    pub cdf_excluded: BTreeMap<Label, u64>,
    pub summary: Summary,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("worker pool: {0}")]
    ThreadPool(String),
}

fn classify_all(
    accounts: &AccountStore,
    txs: &TxStore,
    config: &PipelineConfig,
) -> Vec<Classification> {
    let states: Vec<_> = accounts.iter().collect();
    let mut classifications: Vec<Classification> = states
        .par_iter()
        .map(|state| {
            // A single pathological account must not sink the run.
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                classify(state, &txs.history(&state.address), &config.detector)
            }))
            .unwrap_or_else(|_| {
                log::error!(
                    "classification of {} panicked; marking evidence-incomplete",
                    state.address
                );
                let mut aborted = Classification::empty(state.address);
                aborted.evidence_incomplete = true;
                aborted
            })
        })
        .collect();
    classifications.sort_by_key(|c| c.address);
    classifications
}

fn summarize(
    classifications: &[Classification],
    account_report: &LoadReport,
    tx_report: &LoadReport,
    waste: &WasteReport,
    cdf_excluded: &BTreeMap<Label, u64>,
    creation_warnings: usize,
) -> Summary {
    let mut summary = Summary {
        accounts_scanned: account_report.loaded as u64,
        account_lines_rejected: account_report.rejected.len() as u64,
        transactions_loaded: tx_report.loaded as u64,
        transaction_lines_rejected: tx_report.rejected.len() as u64,
        total_usd_wasted: waste.totals.usd_value,
        cdf_excluded_no_history: cdf_excluded.clone(),
        creation_warnings: creation_warnings as u64,
        ..Default::default()
    };
    for label in Label::ALL {
        summary.categories.insert(label, 0);
    }
    for classification in classifications {
        let Some(label) = classification.primary else {
            continue;
        };
        summary.flagged_total += 1;
        *summary
            .categories
            .get_mut(&label)
            .expect("all keys present") += 1;
    }
    let count = |label: Label| summary.categories[&label];
    summary.erasable_contracts = ContractGroup {
        meaningless: count(Label::McS) + count(Label::McRs),
        stack_or_opcode_error: count(Label::StackError) + count(Label::OpcodeError),
        dos_contract: count(Label::ParityDependent) + count(Label::DosMalicious),
        total: 0,
    };
    summary.erasable_contracts.total = summary.erasable_contracts.meaningless
        + summary.erasable_contracts.stack_or_opcode_error
        + summary.erasable_contracts.dos_contract;
    summary.erasable_eoas = EoaGroup {
        empty_account: count(Label::EmptyAccount),
        dos_eoa: count(Label::DosEoa),
        total: count(Label::EmptyAccount) + count(Label::DosEoa),
    };
    summary
}

/// Classifies loaded stores and derives graphs and reports from the results.
/// All parallel stages run on a pool sized by `config.workers`.
pub fn run_pipeline_on(
    accounts: &AccountStore,
    account_report: &LoadReport,
    txs: &TxStore,
    tx_report: &LoadReport,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    match config.workers {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))?
            .install(|| run_stages(accounts, account_report, txs, tx_report, config)),
        None => run_stages(accounts, account_report, txs, tx_report, config),
    }
}

/// Builds the call graph (over DoS-labeled contracts' symbolic results) and
/// the creation graph (over every flagged account).
pub fn build_graphs(
    classifications: &[Classification],
    accounts: &AccountStore,
    txs: &TxStore,
    config: &PipelineConfig,
) -> (AccountGraph, AccountGraph, Vec<String>) {
    let dos_contracts: Vec<&Classification> = classifications
        .iter()
        .filter(|c| c.primary.is_some_and(|l| l.is_dos_contract()))
        .collect();
    let outcomes: Vec<symexec::SymExecOutcome> = dos_contracts
        .par_iter()
        .map(|c| {
            let code = accounts
                .get(&c.address)
                .map(|a| a.code.as_slice())
                .unwrap_or(&[]);
            symexec::sym_exec_at(code, &config.detector.exec_budget, config.detector.fork)
        })
        .collect();
    let entries: Vec<CallGraphEntry<'_>> = dos_contracts
        .iter()
        .zip(&outcomes)
        .map(|(c, outcome)| CallGraphEntry {
            address: c.address,
            label: c.primary,
            balance: accounts
                .get(&c.address)
                .map(|a| a.balance)
                .unwrap_or_default(),
            outcome,
        })
        .collect();
    let call_graph =
        graph::build_call_graph(&entries, &config.detector.removed_contracts, accounts);

    let flagged: Vec<(Address, Option<Label>)> = classifications
        .iter()
        .filter(|c| c.is_flagged())
        .map(|c| (c.address, c.primary))
        .collect();
    let (creation_graph, creation_warnings) = graph::build_creation_graph(&flagged, accounts, txs);
    (call_graph, creation_graph, creation_warnings)
}

fn run_stages(
    accounts: &AccountStore,
    account_report: &LoadReport,
    txs: &TxStore,
    tx_report: &LoadReport,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let classifications = classify_all(accounts, txs, config);
    let (call_graph, creation_graph, creation_warnings) =
        build_graphs(&classifications, accounts, txs, config);

    let waste = compute_waste(
        &classifications,
        accounts,
        txs,
        config.eth_price_usd,
        config.parity_attack_timestamp,
    );
    let (cdfs, cdf_excluded) = compute_cdf(&classifications, txs);
    let summary = summarize(
        &classifications,
        account_report,
        tx_report,
        &waste,
        &cdf_excluded,
        creation_warnings.len(),
    );

    Ok(PipelineOutput {
        classifications,
        call_graph,
        creation_graph,
        creation_warnings,
        waste,
        cdfs,
        cdf_excluded,
        summary,
    })
}

/// Loads the two dumps and runs the full pipeline.
pub fn run_pipeline(
    accounts_path: impl AsRef<Path>,
    txs_path: impl AsRef<Path>,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let (accounts, account_report) = ingest::load_accounts(accounts_path)?;
    let (txs, tx_report) = ingest::load_transactions(txs_path)?;
    run_pipeline_on(&accounts, &account_report, &txs, &tx_report, config)
}

/// Writes every artifact of a run into `dir`: summary.json,
/// classifications.jsonl, waste.json, one cdf_<category>.csv per non-empty
/// series, and the two DOT graphs (plus flat .edges files on request).
pub fn write_outputs(
    output: &PipelineOutput,
    dir: impl AsRef<Path>,
    edge_lists: bool,
) -> io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let summary = serde_json::to_string_pretty(&output.summary).expect("serializable");
    std::fs::write(dir.join("summary.json"), summary + "\n")?;

    let mut lines = String::new();
    for classification in &output.classifications {
        if classification.is_flagged() {
            lines.push_str(&serde_json::to_string(classification).expect("serializable"));
            lines.push('\n');
        }
    }
    std::fs::write(dir.join("classifications.jsonl"), lines)?;

    let waste = serde_json::to_string_pretty(&output.waste).expect("serializable");
    std::fs::write(dir.join("waste.json"), waste + "\n")?;

    for series in &output.cdfs {
        let mut csv = String::from("timestamp,cumulative\n");
        for point in &series.points {
            csv.push_str(&format!("{},{}\n", point.timestamp, point.cumulative));
        }
        std::fs::write(dir.join(format!("cdf_{}.csv", series.category)), csv)?;
    }

    graph::write_dot(&output.call_graph, dir.join("call_graph.dot"))?;
    graph::write_dot(&output.creation_graph, dir.join("creation_graph.dot"))?;
    if edge_lists {
        std::fs::write(
            dir.join("call_graph.edges"),
            graph::export_edge_list(&output.call_graph),
        )?;
        std::fs::write(
            dir.join("creation_graph.edges"),
            graph::export_edge_list(&output.creation_graph),
        )?;
    }
    Ok(())
}
