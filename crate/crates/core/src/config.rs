//! Run configuration: a flat `key = value` file, overridable key by key.
//!
//! ```text
//! # comment
//! table_limit = 2000000
//! cache_dir = .rslab-cache
//! thread_count = 0
//! output_format = json
//! window.moments.delta4_slope = 0, 3.1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::checks::default_windows;
use crate::{Error, Result};

pub const THREADS_ENV: &str = "RSLAB_THREADS";

/// Closed acceptance interval [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Config(format!("window [{lo}, {hi}] has lo > hi")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

impl Serialize for Window {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.lo, self.hi].serialize(s)
    }
}

impl FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!("window {s:?} must be \"lo, hi\"")));
        }
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::Config(format!("window bound {p:?} is not a number")))
        };
        Window::new(num(parts[0])?, num(parts[1])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("output_format must be csv or json, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Limit of the tau / c_n table.
    pub table_limit: usize,
    /// Limit of the d4 table.
    pub d4_limit: usize,
    pub cache_dir: PathBuf,
    /// 0 means one worker per core.
    pub thread_count: usize,
    pub output_format: OutputFormat,
    pub acceptance_windows: BTreeMap<String, Window>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            table_limit: 2_000_000,
            d4_limit: 1_000_000,
            cache_dir: PathBuf::from(".rslab-cache"),
            thread_count: 0,
            output_format: OutputFormat::Json,
            acceptance_windows: default_windows(),
        }
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: {value:?} is not a nonnegative integer")))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "table_limit" => {
                self.table_limit = parse_usize(key, value)?;
                if self.table_limit == 0 {
                    return Err(Error::Config("table_limit must be >= 1".into()));
                }
            }
            "d4_limit" => {
                self.d4_limit = parse_usize(key, value)?;
                if self.d4_limit == 0 {
                    return Err(Error::Config("d4_limit must be >= 1".into()));
                }
            }
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "thread_count" => self.thread_count = parse_usize(key, value)?,
            "output_format" => self.output_format = value.parse()?,
            k => match k.strip_prefix("window.") {
                Some(name) if self.acceptance_windows.contains_key(name) => {
                    self.acceptance_windows.insert(name.to_string(), value.parse()?);
                }
                Some(name) => return Err(Error::Config(format!("unknown check {name:?}"))),
                None => return Err(Error::Config(format!("unknown key {k:?}"))),
            },
        }
        Ok(())
    }

    /// Applies every setting of a config text on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Applies the thread-count override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            self.thread_count = parse_usize(THREADS_ENV, &v)?;
        }
        Ok(())
    }

    pub fn window(&self, name: &str) -> Window {
        self.acceptance_windows
            .get(name)
            .copied()
            .unwrap_or_else(|| panic!("no acceptance window registered for {name}"))
    }
}
