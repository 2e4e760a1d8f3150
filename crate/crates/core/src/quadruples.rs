//! Counting quadruples (n1, n2, n3, n4) in (N, 2N]^4 with
//! |n1^{1/k} + n2^{1/k} - n3^{1/k} - n4^{1/k}| < delta N^{1/k}.
//!
//! Both counters work from the same table of f64 pair sums r_i + r_j and
//! apply the same predicate to s_a - s_b, so they make identical decisions;
//! they differ only in how the pairs of pair sums are enumerated.

use rayon::prelude::*;
use serde::Serialize;

use crate::{Error, Result};

pub const BRUTEFORCE_MAX_N: usize = 64;
pub const SORTED_MAX_N: usize = 4096;
/// Relative width of the band inside which two pair sums are treated as a
/// possible exact tie.
pub const GUARD_RELATIVE: f64 = 1.0 / (1u64 << 40) as f64;

/// n^{1/k} in f64; k = 2 and k = 4 go through correctly rounded square roots.
pub fn integer_root(n: u64, k: u32) -> f64 {
    let x = n as f64;
    match k {
        2 => x.sqrt(),
        4 => x.sqrt().sqrt(),
        _ => {
            // One Newton step on y^k = x polishes the powf estimate.
            let y = x.powf(1.0 / k as f64);
            let kf = k as f64;
            y - (y.powi(k as i32) - x) / (kf * y.powi(k as i32 - 1))
        }
    }
}

/// k^{1/4} + l^{1/4} - m^{1/4} - n^{1/4}.
pub fn quadruple_phase(k: u64, l: u64, m: u64, n: u64) -> f64 {
    (integer_root(k, 4) + integer_root(l, 4)) - (integer_root(m, 4) + integer_root(n, 4))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadrupleCount {
    pub n: usize,
    pub k_root: u32,
    pub delta: f64,
    /// Ordered quadruples satisfying the strict inequality.
    pub count: u64,
    /// N^4 delta + N^2.
    pub bound_value: f64,
    /// Pairs of pair sums inside the guard band whose integer multisets
    /// differ. Counted by the float predicate and reported here.
    pub anomalies: u64,
}

impl QuadrupleCount {
    pub fn ratio(&self) -> f64 {
        self.count as f64 / self.bound_value
    }
}

fn check_args(n: usize, k_root: u32, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Precondition("N must be positive".into()));
    }
    if k_root < 2 {
        return Err(Error::Precondition(format!("root index must be >= 2, got {k_root}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Precondition(format!("delta must be positive and finite, got {delta}")));
    }
    Ok(())
}

fn bound_value(n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    nf.powi(4) * delta + nf * nf
}

/// All N^2 ordered pair sums for one (N, k), with the integers behind each.
#[derive(Debug, Clone)]
pub struct PairSums {
    n: usize,
    k_root: u32,
    /// N^{1/k}, the scale of the window.
    scale: f64,
    guard: f64,
    /// (sum, i, j) with i, j in 0..N standing for N+1+i, N+1+j.
    entries: Vec<(f64, u32, u32)>,
    sorted: bool,
}

impl PairSums {
    fn build(n: usize, k_root: u32, sorted: bool) -> Self {
        let roots: Vec<f64> = (1..=n as u64).map(|i| integer_root(n as u64 + i, k_root)).collect();
        let mut entries: Vec<(f64, u32, u32)> = Vec::with_capacity(n * n);
        for (i, &ri) in roots.iter().enumerate() {
            for (j, &rj) in roots.iter().enumerate() {
                entries.push((ri + rj, i as u32, j as u32));
            }
        }
        if sorted {
            entries.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        }
        let max_sum = 2.0 * integer_root(2 * n as u64, k_root);
        Self {
            n,
            k_root,
            scale: integer_root(n as u64, k_root),
            guard: GUARD_RELATIVE * max_sum,
            entries,
            sorted,
        }
    }

    /// Sorted pair sums for repeated counting at several delta.
    pub fn sorted(n: usize, k_root: u32) -> Result<Self> {
        check_args(n, k_root, 1.0)?;
        if n > SORTED_MAX_N {
            return Err(Error::Precondition(format!(
                "sorted counter limited to N <= {SORTED_MAX_N}, got {n}"
            )));
        }
        Ok(Self::build(n, k_root, true))
    }

    fn same_multiset(a: &(f64, u32, u32), b: &(f64, u32, u32)) -> bool {
        (a.1 == b.1 && a.2 == b.2) || (a.1 == b.2 && a.2 == b.1)
    }

    /// Sliding-window count over the sorted sums.
    pub fn count(&self, delta: f64) -> Result<QuadrupleCount> {
        check_args(self.n, self.k_root, delta)?;
        debug_assert!(self.sorted);
        let width = delta * self.scale;
        let guard = self.guard;
        let e = &self.entries;
        let len = e.len();
        const CHUNK: usize = 1 << 14;
        let (pairs, anomalies) = (0..len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(len);
                let mut pairs = 0u64;
                let mut anomalies = 0u64;
                // First index whose sum is not within the window of e[lo].
                let mut end = lo + 1 + e[lo + 1..].partition_point(|x| x.0 - e[lo].0 < width);
                for a in lo..hi {
                    if end < a + 1 {
                        end = a + 1;
                    }
                    while end < len && e[end].0 - e[a].0 < width {
                        end += 1;
                    }
                    pairs += (end - a - 1) as u64;
                    let mut b = a + 1;
                    while b < len && e[b].0 - e[a].0 <= guard {
                        if !Self::same_multiset(&e[a], &e[b]) {
                            anomalies += 1;
                        }
                        b += 1;
                    }
                }
                (pairs, anomalies)
            })
            .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
        Ok(QuadrupleCount {
            n: self.n,
            k_root: self.k_root,
            delta,
            count: len as u64 + 2 * pairs,
            bound_value: bound_value(self.n, delta),
            anomalies: 2 * anomalies,
        })
    }
}

/// Direct enumeration of all N^4 ordered quadruples.
pub fn count_bruteforce(n: usize, k_root: u32, delta: f64) -> Result<QuadrupleCount> {
    check_args(n, k_root, delta)?;
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::Precondition(format!(
            "brute force limited to N <= {BRUTEFORCE_MAX_N}, got {n}"
        )));
    }
    let sums = PairSums::build(n, k_root, false);
    let width = delta * sums.scale;
    let guard = sums.guard;
    let (count, anomalies) = sums
        .entries
        .par_iter()
        .map(|p| {
            let mut count = 0u64;
            let mut anomalies = 0u64;
            for q in &sums.entries {
                let d = (p.0 - q.0).abs();
                if d < width {
                    count += 1;
                }
                if d <= guard && !PairSums::same_multiset(p, q) {
                    anomalies += 1;
                }
            }
            (count, anomalies)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(QuadrupleCount {
        n,
        k_root,
        delta,
        count,
        bound_value: bound_value(n, delta),
        anomalies,
    })
}

pub fn count_sorted(n: usize, k_root: u32, delta: f64) -> Result<QuadrupleCount> {
    check_args(n, k_root, delta)?;
    PairSums::sorted(n, k_root)?.count(delta)
}

/// How the delta values of a scan are given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeltaGrid {
    Absolute(Vec<f64>),
    /// delta = N^e for each exponent e.
    PowersOfN(Vec<f64>),
}

impl DeltaGrid {
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            DeltaGrid::Absolute(v) => v.clone(),
            DeltaGrid::PowersOfN(es) => es.iter().map(|&e| (n as f64).powf(e)).collect(),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            DeltaGrid::Absolute(v) | DeltaGrid::PowersOfN(v) => v.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRatioScan {
    pub rows: Vec<QuadrupleCount>,
    pub max_ratio: f64,
}

/// count / (N^4 delta + N^2) over the grid; rows ordered by N then delta.
pub fn bound_ratio_scan(ns: &[usize], deltas: &DeltaGrid, k_root: u32) -> Result<BoundRatioScan> {
    if ns.is_empty() || deltas.is_empty() {
        return Err(Error::Precondition("bound ratio scan needs nonempty N and delta lists".into()));
    }
    let mut rows = Vec::new();
    for &n in ns {
        let sums = PairSums::sorted(n, k_root)?;
        for d in deltas.values(n) {
            rows.push(sums.count(d)?);
        }
    }
    let max_ratio = rows.iter().map(QuadrupleCount::ratio).fold(0.0, f64::max);
    Ok(BoundRatioScan { rows, max_ratio })
}
