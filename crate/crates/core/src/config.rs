//! TOML configuration file support.
//!
//! Every knob has a default, so an empty file (or no file) is valid. DoS
//! operations are written as mnemonics and resolved against the configured
//! fork's instruction table.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetectorConfig;
use crate::isa::{byte_for_mnemonic, opcode_info_at, Fork};
use crate::report::{PipelineConfig, DEFAULT_ETH_PRICE_USD, DEFAULT_PARITY_ATTACK_TIMESTAMP};
use crate::rpc::{RetryPolicy, RpcEndpoint};
use crate::types::Address;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad address {0:?}")]
    BadAddress(String),
    #[error("unknown mnemonic {0:?} under fork {1}")]
    BadMnemonic(String, Fork),
    #[error("bad value: {0}")]
    BadValue(String),
}

/// On-disk configuration; all sections and fields optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub detector: DetectorSection,
    pub report: ReportSection,
    pub rpc: RpcSection,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// Addresses of removed contracts, hex with optional 0x.
    pub removed_contracts: Option<Vec<String>>,
    pub dos_op_threshold: Option<usize>,
    /// Mnemonics, e.g. ["EXTCODESIZE", "BALANCE"].
    pub dos_ops: Option<Vec<String>>,
    pub max_paths: Option<u32>,
    pub max_steps_per_path: Option<u64>,
    pub time_limit_ms: Option<u64>,
    pub fork: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub eth_price_usd: Option<f64>,
    pub parity_attack_timestamp: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcSection {
    pub url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_concurrent_requests: Option<usize>,
    pub retry_attempts: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub cache_dir: Option<String>,
}

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    /// Applies the file's detector settings over the defaults.
    pub fn detector_config(&self) -> Result<DetectorConfig, ConfigError> {
        let mut config = DetectorConfig::default();
        let section = &self.detector;
        if let Some(fork) = &section.fork {
            config.fork = fork.parse().map_err(ConfigError::BadValue)?;
        }
        if let Some(listed) = &section.removed_contracts {
            let mut set = BTreeSet::new();
            for text in listed {
                set.insert(
                    text.parse::<Address>()
                        .map_err(|_| ConfigError::BadAddress(text.clone()))?,
                );
            }
            config.removed_contracts = set;
        }
        if let Some(threshold) = section.dos_op_threshold {
            if threshold == 0 {
                return Err(ConfigError::BadValue(
                    "dos_op_threshold must be >= 1".into(),
                ));
            }
            config.dos_op_threshold = threshold;
        }
        if let Some(ops) = &section.dos_ops {
            let mut set = BTreeSet::new();
            for mnemonic in ops {
                let byte = byte_for_mnemonic(mnemonic, config.fork)
                    .ok_or_else(|| ConfigError::BadMnemonic(mnemonic.clone(), config.fork))?;
                set.insert(byte);
            }
            config.dos_ops = set;
        }
        if let Some(paths) = section.max_paths {
            config.exec_budget.max_paths = paths;
        }
        if let Some(steps) = section.max_steps_per_path {
            config.exec_budget.max_steps_per_path = steps;
        }
        if let Some(ms) = section.time_limit_ms {
            config.exec_budget.time_limit = Duration::from_millis(ms);
        }
        Ok(config)
    }

    /// Full pipeline settings from the file over the defaults.
    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        Ok(PipelineConfig {
            detector: self.detector_config()?,
            eth_price_usd: self.report.eth_price_usd.unwrap_or(DEFAULT_ETH_PRICE_USD),
            parity_attack_timestamp: self
                .report
                .parity_attack_timestamp
                .unwrap_or(DEFAULT_PARITY_ATTACK_TIMESTAMP),
            workers: self.report.workers,
        })
    }

    /// RPC endpoint from the file; `url` must come from somewhere (file,
    /// flag, or environment), so it is a parameter.
    pub fn rpc_endpoint(&self, url: String) -> RpcEndpoint {
        RpcEndpoint {
            url,
            request_timeout: Duration::from_millis(self.rpc.timeout_ms.unwrap_or(30_000)),
            max_concurrent_requests: self.rpc.max_concurrent_requests.unwrap_or(8).max(1),
            retry: RetryPolicy {
                max_attempts: self.rpc.retry_attempts.unwrap_or(3).max(1),
                backoff: Duration::from_millis(self.rpc.retry_backoff_ms.unwrap_or(100)),
            },
        }
    }
}

/// Human-readable description of the DoS operation set (mnemonics).
pub fn dos_ops_mnemonics(config: &DetectorConfig) -> Vec<&'static str> {
    config
        .dos_ops
        .iter()
        .map(|b| opcode_info_at(*b, config.fork).mnemonic)
        .collect()
}
