//! Lazily built tables shared by the verify suites, with the on-disk cache.

use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use crate::cache;
use crate::coefficients::{build_tau_table, CoefficientTable, TauTable};
use crate::d4::{D4ErrorTerm, D4Table};
use crate::error_term::ErrorTermModel;
use crate::Result;

/// Whether a table came from the cache or was computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheEvent {
    Loaded(PathBuf),
    Built(PathBuf),
    /// Built without a cache directory.
    Computed(&'static str),
}

pub struct Context {
    limit: usize,
    d4_limit: usize,
    cache_dir: Option<PathBuf>,
    tau: OnceLock<TauTable>,
    table: OnceLock<CoefficientTable>,
    model: OnceLock<ErrorTermModel>,
    d4: OnceLock<D4ErrorTerm>,
    events: Mutex<Vec<CacheEvent>>,
}

pub fn tau_path(dir: &Path, limit: usize) -> PathBuf {
    dir.join(format!("tau_{limit}.bin"))
}

pub fn coeff_path(dir: &Path, limit: usize) -> PathBuf {
    dir.join(format!("coeff_{limit}.bin"))
}

pub fn d4_path(dir: &Path, limit: usize) -> PathBuf {
    dir.join(format!("d4_{limit}.bin"))
}

fn init<T>(cell: &OnceLock<T>, make: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = make()?;
    Ok(cell.get_or_init(|| v))
}

impl Context {
    pub fn new(limit: usize, d4_limit: usize, cache_dir: Option<PathBuf>) -> Self {
        Self {
            limit,
            d4_limit,
            cache_dir,
            tau: OnceLock::new(),
            table: OnceLock::new(),
            model: OnceLock::new(),
            d4: OnceLock::new(),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn d4_limit(&self) -> usize {
        self.d4_limit
    }

    pub fn events(&self) -> Vec<CacheEvent> {
        self.events.lock().unwrap().clone()
    }

    fn record(&self, e: CacheEvent) {
        self.events.lock().unwrap().push(e);
    }

    /// Loads from `path` when it exists, otherwise builds and writes it.
    /// A present but unreadable file is an error, never silently rebuilt.
    fn cached<T>(
        &self,
        path: Option<PathBuf>,
        what: &'static str,
        read: impl FnOnce(&Path) -> Result<T>,
        write: impl FnOnce(&Path, &T) -> Result<()>,
        build: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        match path {
            Some(p) if p.exists() => {
                let v = read(&p)?;
                self.record(CacheEvent::Loaded(p));
                Ok(v)
            }
            Some(p) => {
                let v = build()?;
                write(&p, &v)?;
                self.record(CacheEvent::Built(p));
                Ok(v)
            }
            None => {
                let v = build()?;
                self.record(CacheEvent::Computed(what));
                Ok(v)
            }
        }
    }

    pub fn tau(&self) -> Result<&TauTable> {
        init(&self.tau, || {
            let path = self.cache_dir.as_deref().map(|d| tau_path(d, self.limit));
            self.cached(path, "tau", cache::read_tau, cache::write_tau, || build_tau_table(self.limit))
        })
    }

    pub fn table(&self) -> Result<&CoefficientTable> {
        init(&self.table, || {
            let path = self.cache_dir.as_deref().map(|d| coeff_path(d, self.limit));
            self.cached(path, "coefficients", cache::read_coefficients, cache::write_coefficients, || {
                Ok(CoefficientTable::from_tau(self.tau()?))
            })
        })
    }

    pub fn model(&self) -> Result<&ErrorTermModel> {
        init(&self.model, || ErrorTermModel::new(self.table()?.clone()))
    }

    pub fn d4(&self) -> Result<&D4ErrorTerm> {
        init(&self.d4, || {
            let path = self.cache_dir.as_deref().map(|d| d4_path(d, self.d4_limit));
            let table = self.cached(path, "d4", cache::read_d4, cache::write_d4, || D4Table::build(self.d4_limit))?;
            D4ErrorTerm::fit(table)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_then_warm() {
        let dir = tempfile::tempdir().unwrap();
        let cold = Context::new(3_000, 1_000, Some(dir.path().to_path_buf()));
        let a = cold.table().unwrap().clone();
        assert!(matches!(cold.events()[..], [CacheEvent::Built(_), CacheEvent::Built(_)]));
        let warm = Context::new(3_000, 1_000, Some(dir.path().to_path_buf()));
        assert_eq!(warm.table().unwrap(), &a);
        assert!(matches!(warm.events()[..], [CacheEvent::Loaded(_)]));
    }

    #[test]
    fn corrupt_cache_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(coeff_path(dir.path(), 100), b"garbage").unwrap();
        let ctx = Context::new(100, 100, Some(dir.path().to_path_buf()));
        assert!(matches!(ctx.table(), Err(crate::Error::CacheCorrupt { .. })));
    }
}
