//! Account interaction graphs.
//!
//! The call graph links flagged contracts to the accounts their bytecode can
//! reach: call-family targets resolved symbolically, plus the addresses fed
//! to account-probing opcodes (BALANCE, EXTCODESIZE, EXTCODECOPY), which the
//! resource-exhaustion contracts hammer in bulk. The creation graph links
//! each flagged account to whatever created it, and when the creator is a
//! contract, to the external sender that triggered the creation. Exports are
//! deterministic: nodes and edges are emitted in sorted order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::Label;
use crate::ingest::{AccountStore, TxStore};
use crate::symexec::{CallOpcode, CallTarget, ProbeOpcode, SymExecOutcome};
use crate::types::{Address, U256};

/// Edge flavor; call and probe edges participate in shape classification,
/// creation and trigger edges do not.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum EdgeKind {
    Call(CallOpcode),
    Probe(ProbeOpcode),
    Creation,
    Trigger,
}

impl EdgeKind {
    pub fn name(&self) -> &'static str {
        match self {
            EdgeKind::Call(op) => op.mnemonic(),
            EdgeKind::Probe(op) => op.mnemonic(),
            EdgeKind::Creation => "creation",
            EdgeKind::Trigger => "trigger",
        }
    }

    fn is_interaction(&self) -> bool {
        matches!(self, EdgeKind::Call(_) | EdgeKind::Probe(_))
    }
}

/// Display attributes attached to a node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub label: Option<Label>,
    #[serde(with = "crate::types::u256_serde")]
    pub balance: U256,
    /// The account is known to be removed (self-destructed).
    pub removed: bool,
    /// Creator of two or more flagged accounts.
    pub multi_creator: bool,
}

/// Directed multigraph over accounts with per-kind edge multiplicities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccountGraph {
    nodes: BTreeMap<Address, NodeInfo>,
    edges: BTreeMap<(Address, Address, EdgeKind), u64>,
}

impl AccountGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.nodes.contains_key(address)
    }

    pub fn node(&self, address: &Address) -> Option<&NodeInfo> {
        self.nodes.get(address)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&Address, &NodeInfo)> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(Address, Address, EdgeKind), &u64)> {
        self.edges.iter()
    }

    /// Inserts or refreshes a node; existing attributes win only when the new
    /// ones carry no information.
    pub fn upsert_node(&mut self, address: Address, info: NodeInfo) {
        let slot = self.nodes.entry(address).or_default();
        if info.label.is_some() {
            slot.label = info.label;
        }
        if !info.balance.is_zero() {
            slot.balance = info.balance;
        }
        slot.removed |= info.removed;
        slot.multi_creator |= info.multi_creator;
    }

    /// Adds one occurrence of an edge, creating endpoints as bare nodes.
    pub fn add_edge(&mut self, from: Address, to: Address, kind: EdgeKind) {
        self.nodes.entry(from).or_default();
        self.nodes.entry(to).or_default();
        *self.edges.entry((from, to, kind)).or_insert(0) += 1;
    }

    /// Distinct counterpart accounts on incoming interaction edges,
    /// excluding self-loops.
    pub fn interaction_in_neighbors(&self, node: &Address) -> BTreeSet<Address> {
        self.edges
            .keys()
            .filter(|(from, to, kind)| to == node && from != node && kind.is_interaction())
            .map(|(from, _, _)| *from)
            .collect()
    }

    /// Distinct counterpart accounts on outgoing interaction edges,
    /// excluding self-loops.
    pub fn interaction_out_neighbors(&self, node: &Address) -> BTreeSet<Address> {
        self.edges
            .keys()
            .filter(|(from, to, kind)| from == node && to != node && kind.is_interaction())
            .map(|(_, to, _)| *to)
            .collect()
    }

    /// Creation out-degree of `node` (distinct accounts it created).
    pub fn creations_by(&self, node: &Address) -> usize {
        self.edges
            .keys()
            .filter(|(from, _, kind)| from == node && *kind == EdgeKind::Creation)
            .count()
    }
}

/// Interaction topology of one node.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum GraphShape {
    /// Hardcoded by many, calling none: a shared dependency, e.g. a library.
    ManyToOne {
        center: Address,
        fan_in: usize,
    },
    /// Reaches out to many, called by none: a probing/spraying contract.
    OneToMany {
        source: Address,
        fan_out: usize,
    },
    Other,
}

/// Classifies `node` by its interaction edges (calls and probes); creation
/// and trigger edges are ignored, as are self-loops.
pub fn classify_shape(graph: &AccountGraph, node: &Address) -> GraphShape {
    if !graph.contains(node) {
        return GraphShape::Other;
    }
    let fan_in = graph.interaction_in_neighbors(node).len();
    let fan_out = graph.interaction_out_neighbors(node).len();
    if fan_in >= 2 && fan_out == 0 {
        GraphShape::ManyToOne {
            center: *node,
            fan_in,
        }
    } else if fan_out >= 2 && fan_in == 0 {
        GraphShape::OneToMany {
            source: *node,
            fan_out,
        }
    } else {
        GraphShape::Other
    }
}

/// One flagged contract together with its symbolic-execution results.
pub struct CallGraphEntry<'a> {
    pub address: Address,
    pub label: Option<Label>,
    pub balance: U256,
    pub outcome: &'a SymExecOutcome,
}

/// Builds the call graph: one node per analyzed contract and per concrete
/// target, one edge per distinct (caller, target, opcode) with multiplicity
/// equal to the number of distinct sites that produce it.
pub fn build_call_graph(
    entries: &[CallGraphEntry<'_>],
    removed: &BTreeSet<Address>,
    accounts: &AccountStore,
) -> AccountGraph {
    let mut graph = AccountGraph::default();
    for entry in entries {
        graph.upsert_node(
            entry.address,
            NodeInfo {
                label: entry.label,
                balance: entry.balance,
                removed: removed.contains(&entry.address),
                multi_creator: false,
            },
        );
        let touch_target = |graph: &mut AccountGraph, target: Address| {
            let balance = accounts.get(&target).map(|a| a.balance).unwrap_or_default();
            graph.upsert_node(
                target,
                NodeInfo {
                    label: None,
                    balance,
                    // Unknown to the state dump or explicitly listed: gone.
                    removed: removed.contains(&target) || !accounts.contains(&target),
                    multi_creator: false,
                },
            );
        };
        for call in &entry.outcome.calls {
            if let CallTarget::Concrete(target) = call.target {
                touch_target(&mut graph, target);
                graph.add_edge(entry.address, target, EdgeKind::Call(call.call_opcode));
            }
        }
        for probe in &entry.outcome.probes {
            touch_target(&mut graph, probe.target);
            graph.add_edge(entry.address, probe.target, EdgeKind::Probe(probe.opcode));
        }
    }
    graph
}

/// Builds the creation graph for the flagged accounts. For each account the
/// creation transaction is the one that deployed it (created_address) or,
/// for EOAs, the first transaction that touched it. A contract creator also
/// gets a trigger edge from the external sender whose transaction drove the
/// internal creation (matched by transaction hash). Accounts without any
/// transaction become isolated nodes with a warning.
pub fn build_creation_graph(
    flagged: &[(Address, Option<Label>)],
    accounts: &AccountStore,
    txs: &TxStore,
) -> (AccountGraph, Vec<String>) {
    let mut graph = AccountGraph::default();
    let mut warnings = Vec::new();
    // One driving transaction gets one trigger edge, however many accounts
    // it minted.
    let mut triggers_seen: BTreeSet<(Address, Address, crate::types::Hash32)> = BTreeSet::new();

    for (address, label) in flagged {
        let balance = accounts.get(address).map(|a| a.balance).unwrap_or_default();
        graph.upsert_node(
            *address,
            NodeInfo {
                label: *label,
                balance,
                removed: false,
                multi_creator: false,
            },
        );

        let ids = txs.touching(address);
        // Contracts exist only through deployment; EOAs spring into existence
        // at their first incoming transfer.
        let is_eoa = accounts.get(address).map(|a| a.is_eoa()).unwrap_or(true);
        let creation = ids
            .iter()
            .map(|&id| txs.record(id))
            .find(|tx| tx.created_address == Some(*address))
            .or_else(|| {
                is_eoa
                    .then(|| {
                        ids.iter()
                            .map(|&id| txs.record(id))
                            .find(|tx| tx.to == Some(*address))
                    })
                    .flatten()
            });
        let Some(creation) = creation else {
            warnings.push(format!("{address}: no creation transaction on record"));
            continue;
        };

        let creator = creation.from;
        graph.add_edge(creator, *address, EdgeKind::Creation);

        let creator_is_contract = accounts.get(&creator).is_some_and(|a| !a.is_eoa())
            || creation.kind == crate::ingest::TxKind::Internal;
        if creator_is_contract {
            // The external transaction with the same hash drove this creation.
            let trigger = txs
                .touching(&creator)
                .iter()
                .map(|&id| txs.record(id))
                .find(|tx| {
                    tx.kind == crate::ingest::TxKind::External
                        && tx.hash == creation.hash
                        && tx.from != creator
                });
            if let Some(trigger) = trigger {
                if triggers_seen.insert((trigger.from, creator, trigger.hash)) {
                    graph.add_edge(trigger.from, creator, EdgeKind::Trigger);
                }
            }
        }
    }

    // Flag creators of two or more flagged accounts.
    let multi: Vec<Address> = graph
        .nodes
        .keys()
        .copied()
        .filter(|a| graph.creations_by(a) >= 2)
        .collect();
    for address in multi {
        graph
            .nodes
            .get_mut(&address)
            .expect("key just listed")
            .multi_creator = true;
    }

    (graph, warnings)
}

fn node_color(info: &NodeInfo) -> &'static str {
    if info.removed {
        "indianred"
    } else if !info.balance.is_zero() {
        "gray40"
    } else {
        "gray85"
    }
}

/// Renders the graph as deterministic DOT text: nodes and edges sorted by
/// address, short labels (first three bytes of the address), fill color
/// encoding removed status and nonzero balance.
pub fn export_dot(graph: &AccountGraph) -> String {
    let mut out = String::new();
    out.push_str("digraph accounts {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=ellipse, style=filled, fontname=\"Helvetica\"];\n");
    for (address, info) in &graph.nodes {
        let mut label = address.short();
        if let Some(cat) = info.label {
            let _ = write!(label, "\\n{cat}");
        }
        if info.multi_creator {
            label.push_str("\\n(multi-creator)");
        }
        let _ = writeln!(
            out,
            "  \"{address}\" [label=\"{label}\", fillcolor=\"{color}\"{font}];",
            color = node_color(info),
            font = if info.removed || !info.balance.is_zero() {
                ", fontcolor=\"white\""
            } else {
                ""
            },
        );
    }
    for ((from, to, kind), multiplicity) in &graph.edges {
        let mut attrs = format!("label=\"{}\"", kind.name());
        if *multiplicity > 1 {
            let _ = write!(attrs, ", taillabel=\"x{multiplicity}\"");
        }
        if *kind == EdgeKind::Trigger {
            attrs.push_str(", style=dashed");
        }
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\" [{attrs}];");
    }
    out.push_str("}\n");
    out
}

/// Writes the DOT rendering to a file.
pub fn write_dot(graph: &AccountGraph, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, export_dot(graph))
}

/// Flat edge list, one `from to kind multiplicity` line per edge.
pub fn export_edge_list(graph: &AccountGraph) -> String {
    let mut out = String::new();
    for ((from, to, kind), multiplicity) in &graph.edges {
        let _ = writeln!(out, "{from} {to} {} {multiplicity}", kind.name());
    }
    out
}
