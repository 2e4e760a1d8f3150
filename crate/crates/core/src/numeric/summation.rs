use rayon::prelude::*;

/// Neumaier's variant of Kahan summation.
///
/// Keeps a running correction term so that adding values of very different
/// magnitude does not lose the low-order bits of the small ones.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one, keeping both correction terms.
    #[inline]
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Recursive pairwise summation; used as a second summation order when
/// checking order robustness.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Fixed block size for parallel reductions. Results depend only on this
/// constant, never on the number of worker threads.
pub const REDUCTION_BLOCK: usize = 4096;

/// Sums `term(i)` for `i in 0..len` with compensated arithmetic.
///
/// The index range is cut into blocks of [`REDUCTION_BLOCK`]; blocks are
/// evaluated in parallel and merged in index order, so the result is
/// bit-identical for any thread count.
pub fn chunked_sum<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let blocks = len.div_ceil(REDUCTION_BLOCK);
    let partials: Vec<CompensatedSum> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * REDUCTION_BLOCK;
            let hi = (lo + REDUCTION_BLOCK).min(len);
            (lo..hi).map(&term).collect()
        })
        .collect();
    let mut total = CompensatedSum::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}
