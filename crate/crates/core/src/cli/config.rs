use std::path::Path;
use std::time::Duration;

use ruint::aliases::U256;
use serde::Deserialize;

use super::{Common, InputError, SearchArgs};
use crate::interp::GasTable;
use crate::ir::word::parse_u256;
use crate::queries::Query;
use crate::synth::SynthConfig;

/// Keys accepted in a `--config` TOML file. Numbers in the initial-state
/// section may be decimal or `0x` strings.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub query: Option<String>,
    pub max_len: Option<usize>,
    pub jobs: Option<usize>,
    pub timeout: Option<u64>,
    pub solver_cmd: Option<String>,
    pub unroll: Option<usize>,
    pub reentrancy_depth: Option<u32>,
    pub seed: Option<u64>,
    pub all: Option<bool>,
    pub array_capacity: Option<usize>,
    pub gas_table: Option<GasTable>,
    pub initial: Option<InitialConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InitialConfig {
    pub attacker: Option<String>,
    pub victim: Option<String>,
    pub balance: Option<String>,
    pub gas: Option<String>,
    /// Fixes the block timestamp; symbolic when absent.
    pub timestamp: Option<String>,
    pub symbolic_caller: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub queries: Vec<Query>,
    pub synth: SynthConfig,
}

fn number(key: &str, s: &Option<String>) -> Result<Option<U256>, InputError> {
    s.as_ref().map(|s| parse_u256(s).ok_or_else(|| InputError(format!("`{key}`: bad number `{s}`")))).transpose()
}

impl RunConfig {
    pub fn resolve(common: &Common, search: Option<&SearchArgs>) -> Result<RunConfig, InputError> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let default = SearchArgs::default();
        let search = search.unwrap_or(&default);
        let mut cfg = SynthConfig::default();

        let query = search.query.clone().or(file.query).unwrap_or_else(|| "all".into());
        let queries = Query::parse_list(&query)?;
        if let Some(k) = search.max_len.or(file.max_len) {
            cfg.max_len = k;
        }
        if let Some(j) = search.jobs.or(file.jobs) {
            if j == 0 {
                return Err(InputError("--jobs must be at least 1".into()));
            }
            cfg.jobs = j;
        }
        let timeout = search.timeout.or(file.timeout).unwrap_or(600);
        if timeout == 0 {
            return Err(InputError("--timeout must be positive".into()));
        }
        cfg.timeout = Some(Duration::from_secs(timeout));
        cfg.solver.timeout = Duration::from_secs(timeout);
        if let Some(s) = common.solver_cmd.clone().or(file.solver_cmd) {
            cfg.solver.command = s;
        }
        if let Some(s) = common.seed.or(file.seed) {
            cfg.solver.seed = s;
        }
        cfg.all = search.all || file.all.unwrap_or(false);
        if let Some(u) = common.unroll.or(file.unroll) {
            cfg.eval.unroll = u;
        }
        if let Some(d) = common.reentrancy_depth.or(file.reentrancy_depth) {
            cfg.eval.reentrancy_depth = d;
        }
        if let Some(n) = file.array_capacity {
            cfg.eval.array_capacity = n;
        }
        if let Some(g) = file.gas_table {
            cfg.eval.gas = g;
        }
        if let Some(init) = &file.initial {
            let st = &mut cfg.state;
            if let Some(v) = number("attacker", &init.attacker)? {
                st.attacker = v;
            }
            if let Some(v) = number("victim", &init.victim)? {
                st.victim_address = v;
            }
            if let Some(v) = number("balance", &init.balance)? {
                st.balance = v;
            }
            if let Some(v) = number("gas", &init.gas)? {
                st.gas = v;
            }
            st.timestamp = number("timestamp", &init.timestamp)?;
            if let Some(b) = init.symbolic_caller {
                st.symbolic_caller = b;
            }
        }
        Ok(RunConfig { queries, synth: cfg })
    }
}
