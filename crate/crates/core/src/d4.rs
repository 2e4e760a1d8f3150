//! The four-fold divisor function d4 = 1*1*1*1 and its error term
//! Delta_4(x) = sum_{n<=x} d4(n) - x P3(log x), used as a comparison
//! baseline for the moment harness.
//!
//! The main-term polynomial P3 is fitted to the table, not derived from the
//! Laurent coefficients of zeta^4.

use serde::Serialize;

use crate::error::out_of_range;
use crate::{Error, Result};

/// Guard against absurd allocations; d4 itself stays tiny in 64 bits.
pub const D4_MAX_LIMIT: usize = 200_000_000;

/// Smallest table accepted by [`fit_main_term`].
pub const FIT_MIN_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct D4Table {
    d4: Vec<u64>,
    prefix: Vec<f64>,
}

/// Dirichlet convolution of `f` with the constant function 1.
fn convolve_with_one(f: &[u64]) -> Vec<u64> {
    let limit = f.len() - 1;
    let mut out = vec![0u64; limit + 1];
    for d in 1..=limit {
        let v = f[d];
        let mut m = d;
        while m <= limit {
            out[m] += v;
            m += d;
        }
    }
    out
}

fn check_limit(limit: usize) -> Result<()> {
    if limit == 0 {
        return Err(Error::Precondition("d4 table needs limit >= 1".into()));
    }
    if limit > D4_MAX_LIMIT {
        return Err(Error::LimitTooLarge {
            limit,
            max: D4_MAX_LIMIT,
        });
    }
    Ok(())
}

impl D4Table {
    /// Three sieve passes 1 -> d2 -> d3 -> d4.
    pub fn build(limit: usize) -> Result<Self> {
        check_limit(limit)?;
        let mut f = vec![1u64; limit + 1];
        f[0] = 0;
        for _ in 0..3 {
            f = convolve_with_one(&f);
        }
        Ok(Self::from_values(f))
    }

    /// Same function computed as (1*1)*(1*1); used to check associativity.
    pub fn build_as_square(limit: usize) -> Result<Self> {
        check_limit(limit)?;
        let mut ones = vec![1u64; limit + 1];
        ones[0] = 0;
        let d2 = convolve_with_one(&ones);
        let mut d4 = vec![0u64; limit + 1];
        for a in 1..=limit {
            let mut b = 1;
            while a * b <= limit {
                d4[a * b] += d2[a] * d2[b];
                b += 1;
            }
        }
        Ok(Self::from_values(d4))
    }

    fn from_values(d4: Vec<u64>) -> Self {
        let mut prefix = vec![0.0; d4.len()];
        let mut acc: u64 = 0;
        for n in 1..d4.len() {
            acc += d4[n];
            prefix[n] = acc as f64;
        }
        Self { d4, prefix }
    }

    /// Synthetic table from an arbitrary prefix-sum array (index 0 ignored).
    pub fn from_prefix(prefix: Vec<f64>) -> Result<Self> {
        if prefix.len() < 2 {
            return Err(Error::Precondition("prefix needs limit >= 1".into()));
        }
        let mut prefix = prefix;
        prefix[0] = 0.0;
        Ok(Self {
            d4: vec![0; prefix.len()],
            prefix,
        })
    }

    pub(crate) fn from_arrays(d4: Vec<u64>, prefix: Vec<f64>) -> Self {
        Self { d4, prefix }
    }

    pub fn limit(&self) -> usize {
        self.d4.len() - 1
    }

    pub fn get(&self, n: usize) -> u64 {
        self.d4[n]
    }

    pub fn values(&self) -> &[u64] {
        &self.d4
    }

    pub fn prefix(&self, n: usize) -> f64 {
        self.prefix[n]
    }

    pub fn prefixes(&self) -> &[f64] {
        &self.prefix
    }
}

/// x (a3 L^3 + a2 L^2 + a1 L + a0) with L = ln x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MainTerm {
    /// a0, a1, a2, a3.
    pub coeffs: [f64; 4],
    pub window: (usize, usize),
}

impl MainTerm {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let l = x.ln();
        let [a0, a1, a2, a3] = self.coeffs;
        x * (((a3 * l + a2) * l + a1) * l + a0)
    }
}

/// Fit window and weighting for [`fit_main_term`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// Inclusive integer range of n used in the fit.
    pub window: (usize, usize),
    /// Residuals are weighted by n^{-weight_exponent}.
    pub weight_exponent: f64,
}

impl FitOptions {
    /// Window [sqrt(N), N] with weight n^{-7/4}: residuals of size n^{3/8}
    /// then carry equal weight per logarithmic scale.
    pub fn default_for(limit: usize) -> Self {
        Self {
            window: (((limit as f64).sqrt().ceil() as usize).max(2), limit),
            weight_exponent: 1.75,
        }
    }
}

/// Weighted least squares of prefix(n) on {n L^3, n L^2, n L, n}.
///
/// Columns are scaled and orthogonalized with modified Gram-Schmidt before
/// solving, so the near-collinear log basis does not go through the normal
/// equations.
pub fn fit_main_term(table: &D4Table, options: FitOptions) -> Result<MainTerm> {
    let (lo, hi) = options.window;
    if hi > table.limit() || lo < 2 || hi < lo + 8 {
        return Err(Error::Precondition(format!(
            "fit window [{lo}, {hi}] invalid for limit {}",
            table.limit()
        )));
    }
    let rows = hi - lo + 1;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); 4];
    let mut rhs = Vec::with_capacity(rows);
    for n in lo..=hi {
        let x = n as f64;
        let l = x.ln();
        let sw = x.powf(-0.5 * options.weight_exponent);
        let mut p = x * sw;
        for col in cols.iter_mut() {
            col.push(p);
            p *= l;
        }
        rhs.push(table.prefix(n) * sw);
    }
    // Scale columns to unit norm so R's diagonal measures conditioning.
    let mut scale = [0.0; 4];
    for (j, col) in cols.iter_mut().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        scale[j] = norm;
        col.iter_mut().for_each(|v| *v /= norm);
    }
    let mut r = [[0.0f64; 4]; 4];
    for j in 0..4 {
        // Two sweeps: a single one loses orthogonality for this basis.
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                r[i][j] += dot;
                let (qi, qj) = split_pair(&mut cols, i, j);
                qj.iter_mut().zip(qi.iter()).for_each(|(b, a)| *b -= dot * a);
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-13 {
            return Err(Error::IllConditioned(format!(
                "basis column {j} collinear after orthogonalization (residual norm {norm:e})"
            )));
        }
        r[j][j] = norm;
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut qty = [0.0; 4];
    for j in 0..4 {
        qty[j] = cols[j].iter().zip(&rhs).map(|(q, y)| q * y).sum();
    }
    let mut sol = [0.0; 4];
    for j in (0..4).rev() {
        let mut s = qty[j];
        for k in (j + 1)..4 {
            s -= r[j][k] * sol[k];
        }
        sol[j] = s / r[j][j];
    }
    Ok(MainTerm {
        coeffs: [
            sol[0] / scale[0],
            sol[1] / scale[1],
            sol[2] / scale[2],
            sol[3] / scale[3],
        ],
        window: (lo, hi),
    })
}

fn split_pair(cols: &mut [Vec<f64>], i: usize, j: usize) -> (&Vec<f64>, &mut Vec<f64>) {
    debug_assert!(i < j);
    let (a, b) = cols.split_at_mut(j);
    (&a[i], &mut b[0])
}

/// A d4 table together with a fitted main term.
#[derive(Debug, Clone)]
pub struct D4ErrorTerm {
    table: D4Table,
    main: MainTerm,
}

impl D4ErrorTerm {
    pub fn new(table: D4Table, main: MainTerm) -> Self {
        Self { table, main }
    }

    pub fn fit(table: D4Table) -> Result<Self> {
        if table.limit() < FIT_MIN_LIMIT {
            return Err(Error::TableTooShort {
                need: FIT_MIN_LIMIT,
                have: table.limit(),
            });
        }
        let main = fit_main_term(&table, FitOptions::default_for(table.limit()))?;
        Ok(Self { table, main })
    }

    pub fn table(&self) -> &D4Table {
        &self.table
    }

    pub fn main_term(&self) -> &MainTerm {
        &self.main
    }

    pub fn limit(&self) -> usize {
        self.table.limit()
    }

    pub fn delta4(&self, x: f64) -> Result<f64> {
        let hi = self.limit() as f64;
        if !(0.0..=hi).contains(&x) {
            return Err(out_of_range("x", x, 0.0, hi));
        }
        Ok(self.table.prefix(x.floor() as usize) - self.main.eval(x))
    }

    /// Delta_4 at n + t, 0 <= t < 1.
    #[inline]
    pub fn delta4_local(&self, n: usize, t: f64) -> f64 {
        self.table.prefix(n) - self.main.eval(n as f64 + t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        let t = D4Table::build(16).unwrap();
        assert_eq!(t.get(1), 1);
        assert_eq!(t.get(2), 4);
        assert_eq!(t.get(3), 4);
        assert_eq!(t.get(4), 10);
        assert_eq!(t.get(6), 16);
        assert_eq!(t.get(8), 20);
        assert_eq!(t.prefix(4), (1 + 4 + 4 + 10) as f64);
    }

    #[test]
    fn associativity_of_sieve_passes() {
        assert_eq!(D4Table::build(5_000).unwrap(), D4Table::build_as_square(5_000).unwrap());
    }

    #[test]
    fn guards() {
        assert!(D4Table::build(0).is_err());
        assert!(matches!(
            D4Table::build(D4_MAX_LIMIT + 1),
            Err(Error::LimitTooLarge { .. })
        ));
        let short = D4Table::build(1_000).unwrap();
        assert!(matches!(D4ErrorTerm::fit(short), Err(Error::TableTooShort { .. })));
    }

    #[test]
    fn exact_basis_member_is_recovered() {
        let n = 100_000;
        let prefix: Vec<f64> = (0..=n)
            .map(|i| {
                let x = i as f64;
                if i == 0 { 0.0 } else { x * x.ln().powi(3) }
            })
            .collect();
        let table = D4Table::from_prefix(prefix).unwrap();
        let fit = fit_main_term(&table, FitOptions::default_for(n)).unwrap();
        let [a0, a1, a2, a3] = fit.coeffs;
        assert!((a3 - 1.0).abs() < 1e-9, "a3 = {a3}");
        assert!(a2.abs() < 1e-7 && a1.abs() < 1e-6 && a0.abs() < 1e-5, "{:?}", fit.coeffs);
    }

    #[test]
    fn delta4_near_one() {
        let table = D4Table::build(200_000).unwrap();
        let err = D4ErrorTerm::fit(table).unwrap();
        let a0 = err.main_term().coeffs[0];
        let x = 1.0 + 1e-12;
        assert!((err.delta4(x).unwrap() - (1.0 - a0)).abs() < 1e-9);
        assert!(err.delta4(200_001.0).is_err());
    }
}
