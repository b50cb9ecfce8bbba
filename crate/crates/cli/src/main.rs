//! Command-line interface: classify account dumps, fetch state over
//! JSON-RPC, and rebuild graphs and reports from saved classifications.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deadwood_core::config::FileConfig;
use deadwood_core::detect::Classification;
use deadwood_core::graph as account_graph;
use deadwood_core::ingest::{self, AccountStore, LoadReport, TxStore};
use deadwood_core::report::{self, PipelineConfig, PipelineOutput};
use deadwood_core::rpc::RpcClient;
use deadwood_core::types::{Address, Hash32};

#[derive(Parser)]
#[command(
    name = "deadwood",
    version,
    about = "Finds dead-weight Ethereum accounts: contracts that cannot work and EOAs nobody controls"
)]
struct Cli {
    /// TOML configuration file (flags override its values).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify an account dump against its transaction dump and write all
    /// reports, graphs, and series files.
    Classify(ClassifyArgs),
    /// Fetch account states (and, optionally, transactions by hash) from a
    /// JSON-RPC endpoint into local dump files.
    Fetch(FetchArgs),
    /// Rebuild the call and creation graphs from saved classifications.
    Graph(GraphArgs),
    /// Recompute the waste and creation-time reports from saved
    /// classifications.
    Report(ReportArgs),
}

#[derive(Args)]
struct PipelineFlags {
    /// Worker threads for classification (default: all processors).
    #[arg(long)]
    workers: Option<usize>,
    /// Symbolic execution: maximum explored paths per contract.
    #[arg(long)]
    max_paths: Option<u32>,
    /// Symbolic execution: maximum steps per path.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Symbolic execution: wall-clock limit per contract, in milliseconds.
    #[arg(long)]
    time_limit_ms: Option<u64>,
    /// Instruction-set revision (frontier..shanghai).
    #[arg(long)]
    fork: Option<String>,
    /// Extra removed-contract address; repeatable. Replaces the default set.
    #[arg(long = "removed-contract")]
    removed_contracts: Vec<String>,
    /// Single-block DoS rule fires strictly above this operation count.
    #[arg(long)]
    dos_op_threshold: Option<usize>,
    /// Unix timestamp of the library-removal attack (gas before it is not
    /// counted as wasted for dependent wallets).
    #[arg(long)]
    attack_timestamp: Option<u64>,
    /// ETH price in USD for the presentation-time conversion.
    #[arg(long)]
    usd_price: Option<f64>,
}

impl PipelineFlags {
    fn apply(&self, mut config: PipelineConfig) -> Result<PipelineConfig> {
        if let Some(workers) = self.workers {
            config.workers = Some(workers);
        }
        if let Some(paths) = self.max_paths {
            config.detector.exec_budget.max_paths = paths;
        }
        if let Some(steps) = self.max_steps {
            config.detector.exec_budget.max_steps_per_path = steps;
        }
        if let Some(ms) = self.time_limit_ms {
            config.detector.exec_budget.time_limit = Duration::from_millis(ms);
        }
        if let Some(fork) = &self.fork {
            config.detector.fork = fork.parse().map_err(anyhow::Error::msg)?;
        }
        if !self.removed_contracts.is_empty() {
            let mut set = BTreeSet::new();
            for text in &self.removed_contracts {
                set.insert(
                    text.parse::<Address>()
                        .map_err(|e| anyhow::anyhow!("{text}: {e}"))?,
                );
            }
            config.detector.removed_contracts = set;
        }
        if let Some(threshold) = self.dos_op_threshold {
            if threshold == 0 {
                bail!("--dos-op-threshold must be at least 1");
            }
            config.detector.dos_op_threshold = threshold;
        }
        if let Some(ts) = self.attack_timestamp {
            config.parity_attack_timestamp = ts;
        }
        if let Some(price) = self.usd_price {
            config.eth_price_usd = price;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct ClassifyArgs {
    /// Account dump (JSON lines).
    #[arg(long)]
    accounts: PathBuf,
    /// Transaction dump (JSON lines).
    #[arg(long)]
    txs: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write flat .edges files next to the DOT graphs.
    #[arg(long)]
    edge_list: bool,
    #[command(flatten)]
    flags: PipelineFlags,
}

#[derive(Args)]
struct FetchArgs {
    /// File with one account address per line.
    #[arg(long)]
    addresses: PathBuf,
    /// Optional file with one transaction hash per line.
    #[arg(long)]
    tx_hashes: Option<PathBuf>,
    /// JSON-RPC endpoint URL.
    #[arg(long, env = "DEADWOOD_RPC_URL")]
    rpc_url: Option<String>,
    /// Response cache directory (enables resuming).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Pin state queries to this block tag instead of the node's latest.
    #[arg(long)]
    block_tag: Option<String>,
    /// Maximum concurrent requests.
    #[arg(long)]
    max_concurrent: Option<usize>,
    /// Per-request timeout in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Output directory for accounts.jsonl (and txs.jsonl).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    accounts: PathBuf,
    #[arg(long)]
    txs: PathBuf,
    /// classifications.jsonl from a previous `classify` run.
    #[arg(long)]
    classifications: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    edge_list: bool,
    #[command(flatten)]
    flags: PipelineFlags,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    accounts: PathBuf,
    #[arg(long)]
    txs: PathBuf,
    /// classifications.jsonl from a previous `classify` run.
    #[arg(long)]
    classifications: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    flags: PipelineFlags,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(error) = run() {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let file_config = match &cli.config {
        Some(path) => {
            FileConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Classify(args) => run_classify(args, &file_config),
        Command::Fetch(args) => run_fetch(args, &file_config),
        Command::Graph(args) => run_graph(args, &file_config),
        Command::Report(args) => run_report(args, &file_config),
    }
}

fn load_stores(
    accounts: &Path,
    txs: &Path,
) -> Result<(AccountStore, LoadReport, TxStore, LoadReport)> {
    let (account_store, account_report) = ingest::load_accounts(accounts)?;
    report_rejects("account", accounts, &account_report);
    let (tx_store, tx_report) = ingest::load_transactions(txs)?;
    report_rejects("transaction", txs, &tx_report);
    Ok((account_store, account_report, tx_store, tx_report))
}

fn report_rejects(what: &str, path: &Path, report: &LoadReport) {
    for (line, reason) in &report.rejected {
        log::warn!(
            "{}:{line}: rejected {what} record: {reason}",
            path.display()
        );
    }
}

fn load_classifications(path: &Path) -> Result<Vec<Classification>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: Classification = serde_json::from_str(line).with_context(|| {
            format!(
                "{}:{}: bad classification record",
                path.display(),
                lineno + 1
            )
        })?;
        out.push(c);
    }
    Ok(out)
}

fn print_summary(output: &PipelineOutput) {
    let summary = &output.summary;
    println!("accounts scanned:      {}", summary.accounts_scanned);
    println!("flagged total:         {}", summary.flagged_total);
    println!(
        "  erasable contracts:  {}",
        summary.erasable_contracts.total
    );
    println!(
        "    meaningless:       {}",
        summary.erasable_contracts.meaningless
    );
    println!(
        "    stack/opcode err:  {}",
        summary.erasable_contracts.stack_or_opcode_error
    );
    println!(
        "    dos contracts:     {}",
        summary.erasable_contracts.dos_contract
    );
    println!("  erasable EOAs:       {}", summary.erasable_eoas.total);
    println!(
        "    empty accounts:    {}",
        summary.erasable_eoas.empty_account
    );
    println!("    dos EOAs:          {}", summary.erasable_eoas.dos_eoa);
    println!("per primary label:");
    for (label, count) in &summary.categories {
        println!("    {label:<16} {count}");
    }
    println!(
        "wasted (USD at configured price): {:.2}",
        summary.total_usd_wasted
    );
}

fn run_classify(args: ClassifyArgs, file_config: &FileConfig) -> Result<()> {
    let config = args.flags.apply(file_config.pipeline_config()?)?;
    let (accounts, account_report, txs, tx_report) = load_stores(&args.accounts, &args.txs)?;
    let output = report::run_pipeline_on(&accounts, &account_report, &txs, &tx_report, &config)?;
    report::write_outputs(&output, &args.out, args.edge_list)
        .with_context(|| format!("writing outputs to {}", args.out.display()))?;
    print_summary(&output);
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn run_fetch(args: FetchArgs, file_config: &FileConfig) -> Result<()> {
    let url = args
        .rpc_url
        .clone()
        .or_else(|| file_config.rpc.url.clone())
        .context("no RPC endpoint: pass --rpc-url, set DEADWOOD_RPC_URL, or configure [rpc] url")?;
    let mut endpoint = file_config.rpc_endpoint(url);
    if let Some(n) = args.max_concurrent {
        endpoint.max_concurrent_requests = n.max(1);
    }
    if let Some(ms) = args.timeout_ms {
        endpoint.request_timeout = Duration::from_millis(ms);
    }

    let mut client = RpcClient::new(endpoint)?;
    let cache_dir = args
        .cache_dir
        .clone()
        .or_else(|| file_config.rpc.cache_dir.as_ref().map(PathBuf::from));
    if let Some(dir) = cache_dir {
        client = client.with_cache(dir)?;
    }
    if let Some(tag) = &args.block_tag {
        client.set_block_tag(tag.clone());
    }

    let addresses = read_lines_as(&args.addresses, |line| {
        line.parse::<Address>()
            .map_err(|e| anyhow::anyhow!("{line}: {e}"))
    })?;
    std::fs::create_dir_all(&args.out)?;

    let (states, failures) = client.fetch_accounts(&addresses);
    let accounts_path = args.out.join("accounts.jsonl");
    let mut file = std::fs::File::create(&accounts_path)?;
    for state in &states {
        writeln!(file, "{}", serde_json::to_string(state)?)?;
    }
    println!(
        "fetched {} accounts to {} ({} failed)",
        states.len(),
        accounts_path.display(),
        failures.len()
    );
    for (address, reason) in &failures {
        log::warn!("{address}: {reason}");
    }

    if let Some(hashes_path) = &args.tx_hashes {
        let hashes = read_lines_as(hashes_path, |line| {
            line.parse::<Hash32>()
                .map_err(|e| anyhow::anyhow!("{line}: {e}"))
        })?;
        let txs_path = args.out.join("txs.jsonl");
        let mut file = std::fs::File::create(&txs_path)?;
        let mut fetched = 0usize;
        for hash in &hashes {
            match client.fetch_transaction(hash) {
                Ok(tx) => {
                    writeln!(file, "{}", serde_json::to_string(&tx)?)?;
                    fetched += 1;
                }
                Err(e) => log::warn!("{hash}: {e}"),
            }
        }
        println!(
            "fetched {fetched}/{} transactions to {}",
            hashes.len(),
            txs_path.display()
        );
    }

    if !failures.is_empty() {
        bail!(
            "{} account fetches failed; re-run with --cache-dir to resume",
            failures.len()
        );
    }
    Ok(())
}

fn read_lines_as<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(parse)
        .collect()
}

fn run_graph(args: GraphArgs, file_config: &FileConfig) -> Result<()> {
    let config = args.flags.apply(file_config.pipeline_config()?)?;
    let (accounts, _, txs, _) = load_stores(&args.accounts, &args.txs)?;
    let classifications = load_classifications(&args.classifications)?;

    let (call_graph, creation_graph, warnings) =
        report::build_graphs(&classifications, &accounts, &txs, &config);
    for warning in &warnings {
        log::warn!("{warning}");
    }
    std::fs::create_dir_all(&args.out)?;
    account_graph::write_dot(&call_graph, args.out.join("call_graph.dot"))?;
    account_graph::write_dot(&creation_graph, args.out.join("creation_graph.dot"))?;
    if args.edge_list {
        std::fs::write(
            args.out.join("call_graph.edges"),
            account_graph::export_edge_list(&call_graph),
        )?;
        std::fs::write(
            args.out.join("creation_graph.edges"),
            account_graph::export_edge_list(&creation_graph),
        )?;
    }
    println!(
        "call graph: {} nodes, {} edges; creation graph: {} nodes, {} edges; written to {}",
        call_graph.node_count(),
        call_graph.edge_count(),
        creation_graph.node_count(),
        creation_graph.edge_count(),
        args.out.display()
    );
    Ok(())
}

fn run_report(args: ReportArgs, file_config: &FileConfig) -> Result<()> {
    let config = args.flags.apply(file_config.pipeline_config()?)?;
    let (accounts, _, txs, _) = load_stores(&args.accounts, &args.txs)?;
    let classifications = load_classifications(&args.classifications)?;

    let waste = report::compute_waste(
        &classifications,
        &accounts,
        &txs,
        config.eth_price_usd,
        config.parity_attack_timestamp,
    );
    let (cdfs, excluded) = report::compute_cdf(&classifications, &txs);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("waste.json"),
        serde_json::to_string_pretty(&waste)? + "\n",
    )?;
    for series in &cdfs {
        let mut csv = String::from("timestamp,cumulative\n");
        for point in &series.points {
            csv.push_str(&format!("{},{}\n", point.timestamp, point.cumulative));
        }
        std::fs::write(args.out.join(format!("cdf_{}.csv", series.category)), csv)?;
    }
    for (label, count) in &excluded {
        log::warn!("{count} {label} account(s) had no transactions; excluded from the series");
    }
    println!(
        "waste total: {:.2} USD at {:.2} $/ETH; reports written to {}",
        waste.totals.usd_value,
        waste.eth_price_usd,
        args.out.display()
    );
    Ok(())
}
