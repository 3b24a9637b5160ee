//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::algos::Algo;
use crate::traces::TraceKind;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

/// Parses `key = value` lines; `#` starts a comment. Later keys win.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax(i + 1));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Settings of one experiment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algos: Vec<Algo>,
    pub kinds: Vec<TraceKind>,
    /// Trace seeds; one trace per (kind, seed).
    pub seeds: Vec<u64>,
    pub n: u32,
    pub d: usize,
    pub b: u32,
    pub c: u32,
    pub count: usize,
    pub deadline_slack: Option<u64>,
    /// Router seeds per row for randomized algorithms.
    pub rand_runs: u64,
    pub gamma: f64,
    pub horizon: Option<u64>,
    pub oracle: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algos: vec![Algo::Det],
            kinds: vec![TraceKind::Uniform],
            seeds: vec![0],
            n: 16,
            d: 1,
            b: 3,
            c: 3,
            count: 100,
            deadline_slack: None,
            rand_runs: 10,
            gamma: 200.0,
            horizon: None,
            oracle: false,
        }
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: ToString,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), msg: e.to_string() }))
        .collect()
}

fn one<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: ToString,
{
    v.parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), msg: e.to_string() })
}

/// `a..b` (exclusive) or a comma list.
fn seeds(key: &str, v: &str) -> Result<Vec<u64>, ConfigError> {
    match v.split_once("..") {
        Some((a, b)) => Ok((one::<u64>(key, a.trim())?..one::<u64>(key, b.trim())?).collect()),
        None => list(key, v),
    }
}

impl ExperimentConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in map {
            match k.as_str() {
                "algos" | "algo" => cfg.algos = list(k, v)?,
                "kinds" | "kind" => cfg.kinds = list(k, v)?,
                "seeds" | "seed" => cfg.seeds = seeds(k, v)?,
                "n" => cfg.n = one(k, v)?,
                "d" => cfg.d = one(k, v)?,
                "B" | "b" => cfg.b = one(k, v)?,
                "c" => cfg.c = one(k, v)?,
                "count" => cfg.count = one(k, v)?,
                "deadline_slack" => cfg.deadline_slack = Some(one(k, v)?),
                "rand_runs" => cfg.rand_runs = one(k, v)?,
                "gamma" => cfg.gamma = one(k, v)?,
                "horizon" => cfg.horizon = Some(one(k, v)?),
                "oracle" => cfg.oracle = one(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }
        if cfg.rand_runs == 0 {
            return Err(ConfigError::Value { key: "rand_runs".into(), msg: "must be positive".into() });
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_map(&parse_flat(text)?)
    }
}
