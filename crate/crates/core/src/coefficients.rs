//! Exact Ramanujan tau values, normalized Hecke eigenvalues and the
//! Rankin-Selberg convolution coefficients c_n.
//!
//! The tau table is the coefficient sequence of q * prod_{m>=1} (1 - q^m)^24,
//! computed with exact 128-bit integer series arithmetic. Everything in the
//! floating-point [`CoefficientTable`] is derived from it.

use rayon::prelude::*;
use serde::Serialize;

use crate::numeric::dd::DoubleDouble;
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

/// Weight of the cusp form whose coefficients are tabulated (the discriminant form).
pub const WEIGHT: u32 = 12;

/// Default table size for experiment runs.
pub const DEFAULT_LIMIT: usize = 1_000_000;

/// Largest supported limit. Beyond this, tau(n) ~ n^{11/2} starts to crowd
/// the 128-bit range and intermediate series coefficients may overflow.
pub const MAX_LIMIT: usize = 20_000_000;

/// Largest limit accepted by the quadratic Eisenstein cross-check route.
pub const EISENSTEIN_MAX_LIMIT: usize = 1_500;

const SERIES_BLOCK: usize = 4096;

/// Divisor power sums sigma_3 and sigma_5, indexed 1..=limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaTables {
    sigma3: Vec<i128>,
    sigma5: Vec<i128>,
}

impl SigmaTables {
    pub fn limit(&self) -> usize {
        self.sigma3.len() - 1
    }

    pub fn sigma3(&self, n: usize) -> i128 {
        self.sigma3[n]
    }

    pub fn sigma5(&self, n: usize) -> i128 {
        self.sigma5[n]
    }

    /// sigma_3(1..=limit) and sigma_5(1..=limit).
    pub fn as_slices(&self) -> (&[i128], &[i128]) {
        (&self.sigma3[1..], &self.sigma5[1..])
    }
}

/// Builds sigma_3 and sigma_5 by a divisor sieve with checked additions.
pub fn build_sigma_tables(limit: usize) -> Result<SigmaTables> {
    if limit == 0 {
        return Err(Error::Precondition("sigma tables need limit >= 1".into()));
    }
    if limit > MAX_LIMIT {
        return Err(Error::LimitTooLarge {
            limit,
            max: MAX_LIMIT,
        });
    }
    let mut sigma3 = vec![0i128; limit + 1];
    let mut sigma5 = vec![0i128; limit + 1];
    for d in 1..=limit {
        let d = d as i128;
        let d3 = d * d * d;
        let d5 = d3 * d * d;
        let mut m = d as usize;
        while m <= limit {
            sigma3[m] = sigma3[m]
                .checked_add(d3)
                .ok_or(Error::Overflow { stage: "sigma_3" })?;
            sigma5[m] = sigma5[m]
                .checked_add(d5)
                .ok_or(Error::Overflow { stage: "sigma_5" })?;
            m += d as usize;
        }
    }
    Ok(SigmaTables { sigma3, sigma5 })
}

/// Exact tau(n) for 1 <= n <= limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauTable {
    tau: Vec<i128>,
}

impl TauTable {
    pub(crate) fn from_values(values: Vec<i128>) -> Self {
        let mut tau = Vec::with_capacity(values.len() + 1);
        tau.push(0);
        tau.extend(values);
        Self { tau }
    }

    pub fn limit(&self) -> usize {
        self.tau.len() - 1
    }

    pub fn get(&self, n: usize) -> i128 {
        self.tau[n]
    }

    /// tau(1..=limit).
    pub fn values(&self) -> &[i128] {
        &self.tau[1..]
    }

    pub fn truncated(&self, limit: usize) -> Self {
        let limit = limit.min(self.limit());
        Self {
            tau: self.tau[..=limit].to_vec(),
        }
    }
}

/// Sparse q-expansion of prod (1 - q^m)^3 = sum_k (-1)^k (2k+1) q^{k(k+1)/2}.
fn cube_terms(max_degree: usize) -> Vec<(usize, i64)> {
    let mut terms = Vec::new();
    let mut k: usize = 0;
    loop {
        let t = k * (k + 1) / 2;
        if t > max_degree {
            break;
        }
        let sign = if k % 2 == 0 { 1 } else { -1 };
        terms.push((t, sign * (2 * k as i64 + 1)));
        k += 1;
    }
    terms
}

/// dense(q) * sparse(q) truncated to `dense.len()` coefficients.
///
/// Output blocks are independent, so the result does not depend on how rayon
/// schedules them. Products cannot overflow once `max|dense| * max|sparse|`
/// fits; accumulations are checked.
fn mul_dense_sparse(dense: &[i128], sparse: &[(usize, i64)]) -> Result<Vec<i128>> {
    let len = dense.len();
    let max_dense = dense.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    let max_sparse = sparse.iter().map(|&(_, s)| s.unsigned_abs()).max().unwrap_or(0) as u128;
    match max_dense.checked_mul(max_sparse) {
        Some(p) if p <= i128::MAX as u128 => {}
        _ => return Err(Error::Overflow { stage: "tau series product" }),
    }
    let mut out = vec![0i128; len];
    let overflowed = out
        .par_chunks_mut(SERIES_BLOCK)
        .enumerate()
        .map(|(b, block)| {
            let lo = b * SERIES_BLOCK;
            let hi = lo + block.len();
            let mut overflow = false;
            for &(t, s) in sparse {
                if t >= hi {
                    break;
                }
                let start = lo.max(t);
                let out_slice = &mut block[start - lo..];
                let in_slice = &dense[start - t..hi - t];
                // |s| as a zero-extended 128-bit factor keeps the product at two
                // 64-bit multiplies; the sign is applied by add versus subtract.
                let magnitude = s.unsigned_abs() as u128;
                if s >= 0 {
                    for (o, &d) in out_slice.iter_mut().zip(in_slice) {
                        let p = (d as u128).wrapping_mul(magnitude) as i128;
                        let (v, of) = o.overflowing_add(p);
                        *o = v;
                        overflow |= of;
                    }
                } else {
                    for (o, &d) in out_slice.iter_mut().zip(in_slice) {
                        let p = (d as u128).wrapping_mul(magnitude) as i128;
                        let (v, of) = o.overflowing_sub(p);
                        *o = v;
                        overflow |= of;
                    }
                }
            }
            overflow
        })
        .reduce(|| false, |a, b| a || b);
    if overflowed {
        return Err(Error::Overflow { stage: "tau series accumulation" });
    }
    Ok(out)
}

/// Computes tau(1..=limit) from the product expansion.
///
/// The sixth power of the eta product is formed sparse-times-sparse from the
/// Jacobi cube series, then six dense-times-sparse passes by the cube reach
/// the 24th power. Cost is O(limit^{3/2}) exact integer operations.
pub fn build_tau_table(limit: usize) -> Result<TauTable> {
    if limit == 0 {
        return Err(Error::Precondition("tau table needs limit >= 1".into()));
    }
    if limit > MAX_LIMIT {
        return Err(Error::LimitTooLarge {
            limit,
            max: MAX_LIMIT,
        });
    }
    // tau(n) is the coefficient of q^{n-1} in prod (1 - q^m)^24.
    let max_degree = limit - 1;
    let cube = cube_terms(max_degree);

    let mut series = vec![0i128; limit];
    for &(ta, sa) in &cube {
        for &(tb, sb) in &cube {
            let t = ta + tb;
            if t > max_degree {
                break;
            }
            series[t] += sa as i128 * sb as i128;
        }
    }
    for _ in 0..6 {
        series = mul_dense_sparse(&series, &cube)?;
    }
    Ok(TauTable::from_values(series))
}

/// Independent route through Eisenstein series: 1728 * Delta = E4^3 - E6^2.
///
/// Quadratic cost and rapidly growing intermediates restrict it to
/// `limit <= EISENSTEIN_MAX_LIMIT`; it exists to cross-check [`build_tau_table`].
pub fn tau_via_eisenstein(limit: usize) -> Result<TauTable> {
    if limit > EISENSTEIN_MAX_LIMIT {
        return Err(Error::LimitTooLarge {
            limit,
            max: EISENSTEIN_MAX_LIMIT,
        });
    }
    let sigma = build_sigma_tables(limit)?;
    let mut e4 = vec![0i128; limit + 1];
    let mut e6 = vec![0i128; limit + 1];
    e4[0] = 1;
    e6[0] = 1;
    for n in 1..=limit {
        e4[n] = 240 * sigma.sigma3(n);
        e6[n] = -504 * sigma.sigma5(n);
    }
    let overflow = || Error::Overflow { stage: "Eisenstein product" };
    let square = |a: &[i128]| -> Result<Vec<i128>> {
        let mut out = vec![0i128; limit + 1];
        for i in 0..=limit {
            for j in 0..=limit - i {
                let p = a[i].checked_mul(a[j]).ok_or_else(overflow)?;
                out[i + j] = out[i + j].checked_add(p).ok_or_else(overflow)?;
            }
        }
        Ok(out)
    };
    let e4_sq = square(&e4)?;
    let e6_sq = square(&e6)?;
    let mut values = Vec::with_capacity(limit);
    for n in 1..=limit {
        let mut cube = 0i128;
        for i in 0..=n {
            let p = e4_sq[i].checked_mul(e4[n - i]).ok_or_else(overflow)?;
            cube = cube.checked_add(p).ok_or_else(overflow)?;
        }
        let diff = cube.checked_sub(e6_sq[n]).ok_or_else(overflow)?;
        if diff % 1728 != 0 {
            return Err(Error::Precondition(format!(
                "E4^3 - E6^2 not divisible by 1728 at n = {n}"
            )));
        }
        values.push(diff / 1728);
    }
    Ok(TauTable::from_values(values))
}

/// a(n) * n^{-(weight-1)/2}, correctly rounded up to a few units in the
/// 106-bit intermediate.
pub fn normalize_coefficient(a: i128, n: u64, weight: u32) -> f64 {
    let exponent = weight - 1;
    let nf = n as f64;
    let mut denom = DoubleDouble::from_f64(1.0);
    for _ in 0..exponent / 2 {
        denom = denom.mul_f64(nf);
    }
    if exponent % 2 == 1 {
        denom = denom.mul(DoubleDouble::sqrt_f64(nf));
    }
    DoubleDouble::from_i128(a).div(denom).to_f64()
}

/// Counts of failed structural checks on a tau table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TauAudit {
    pub coprime_pairs_checked: u64,
    pub multiplicativity_failures: u64,
    pub recursion_checked: u64,
    pub recursion_failures: u64,
    pub deligne_failures: u64,
}

impl TauAudit {
    pub fn violations(&self) -> u64 {
        self.multiplicativity_failures + self.recursion_failures + self.deligne_failures
    }
}

pub(crate) fn primes_up_to(limit: usize) -> Vec<usize> {
    if limit < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for i in 2..=limit {
        if !composite[i] {
            primes.push(i);
            let mut j = i * i;
            while j <= limit {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

pub(crate) fn divisor_counts(limit: usize) -> Vec<u32> {
    let mut d = vec![0u32; limit + 1];
    for a in 1..=limit {
        let mut m = a;
        while m <= limit {
            d[m] += 1;
            m += a;
        }
    }
    d
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Checks multiplicativity on every coprime pair with mn <= `upto`, the Hecke
/// recursion at every prime power, and |tau(n)| <= d(n) n^{11/2}.
pub fn audit_tau(table: &TauTable, upto: usize) -> TauAudit {
    let upto = upto.min(table.limit());
    let mut audit = TauAudit::default();
    for m in 2..=upto {
        for n in (m + 1)..=(upto / m) {
            if gcd(m, n) != 1 {
                continue;
            }
            audit.coprime_pairs_checked += 1;
            let ok = table
                .get(m)
                .checked_mul(table.get(n))
                .is_some_and(|p| p == table.get(m * n));
            if !ok {
                audit.multiplicativity_failures += 1;
            }
        }
    }
    // Only primes with p^2 <= upto have a recursion step to check.
    for p in primes_up_to(upto).into_iter().take_while(|&p| p * p <= upto) {
        let p11 = (p as i128).pow(11);
        // tau[p^{k+1}] = tau[p] tau[p^k] - p^11 tau[p^{k-1}], k >= 1
        let mut prev = 1usize;
        let mut cur = p;
        while let Some(next) = cur.checked_mul(p).filter(|&v| v <= upto) {
            audit.recursion_checked += 1;
            let rhs = table
                .get(p)
                .checked_mul(table.get(cur))
                .zip(p11.checked_mul(table.get(prev)))
                .and_then(|(a, b)| a.checked_sub(b));
            if rhs != Some(table.get(next)) {
                audit.recursion_failures += 1;
            }
            prev = cur;
            cur = next;
        }
    }
    let d = divisor_counts(upto);
    for n in 1..=upto {
        let lambda = normalize_coefficient(table.get(n), n as u64, WEIGHT);
        if lambda.abs() > d[n] as f64 * (1.0 + 1e-12) {
            audit.deligne_failures += 1;
        }
    }
    audit
}

/// Normalized eigenvalues, convolution coefficients and their running sums.
///
/// Arrays are indexed by n with a zero entry at index 0, so `prefix[n]` is
/// S(n) = sum_{k<=n} c_k and `prefix[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    lambda: Vec<f64>,
    c: Vec<f64>,
    prefix: Vec<f64>,
}

impl CoefficientTable {
    /// Builds c_n = sum_{m^2 | n} lambda(n/m^2)^2 by sieving over m.
    pub fn from_tau(tau: &TauTable) -> Self {
        let limit = tau.limit();
        let mut lambda = vec![0.0; limit + 1];
        lambda[1..]
            .par_iter_mut()
            .zip(tau.values().par_iter())
            .enumerate()
            .for_each(|(i, (l, &t))| *l = normalize_coefficient(t, i as u64 + 1, WEIGHT));
        let mut c = vec![0.0; limit + 1];
        let mut m = 1usize;
        while m * m <= limit {
            let m2 = m * m;
            for j in 1..=limit / m2 {
                c[j * m2] += lambda[j] * lambda[j];
            }
            m += 1;
        }
        Self::from_lambda_and_c(lambda, c)
    }

    /// Table from explicit coefficient arrays indexed 1..=limit (index 0 is
    /// ignored). Used for synthetic experiments.
    pub fn from_parts(lambda: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if lambda.len() != c.len() || c.len() < 2 {
            return Err(Error::Precondition(
                "lambda and c must have equal length >= 2 (index 0 unused)".into(),
            ));
        }
        let mut lambda = lambda;
        let mut c = c;
        lambda[0] = 0.0;
        c[0] = 0.0;
        Ok(Self::from_lambda_and_c(lambda, c))
    }

    /// Synthetic table with the given c_n (index 0 ignored) and lambda = 0.
    pub fn from_c(c: Vec<f64>) -> Result<Self> {
        let lambda = vec![0.0; c.len()];
        Self::from_parts(lambda, c)
    }

    pub(crate) fn from_arrays(lambda: Vec<f64>, c: Vec<f64>, prefix: Vec<f64>) -> Self {
        Self { lambda, c, prefix }
    }

    fn from_lambda_and_c(lambda: Vec<f64>, c: Vec<f64>) -> Self {
        let mut prefix = vec![0.0; c.len()];
        let mut acc = CompensatedSum::new();
        for n in 1..c.len() {
            acc.add(c[n]);
            prefix[n] = acc.value();
        }
        Self { lambda, c, prefix }
    }

    pub fn limit(&self) -> usize {
        self.c.len() - 1
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.lambda[n]
    }

    pub fn c(&self, n: usize) -> f64 {
        self.c[n]
    }

    /// S(n) = sum_{k <= n} c_k.
    pub fn prefix(&self, n: usize) -> f64 {
        self.prefix[n]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn cs(&self) -> &[f64] {
        &self.c
    }

    pub fn prefixes(&self) -> &[f64] {
        &self.prefix
    }

    pub fn truncated(&self, limit: usize) -> Self {
        let limit = limit.min(self.limit());
        Self {
            lambda: self.lambda[..=limit].to_vec(),
            c: self.c[..=limit].to_vec(),
            prefix: self.prefix[..=limit].to_vec(),
        }
    }
}

/// The series sum_n c_n^2 n^{-7/4} truncated at `terms_used`, with an
/// estimate of the omitted tail kept separate from the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesConstant {
    pub value: f64,
    pub tail_bound: f64,
    pub terms_used: usize,
}

pub const SERIES_CONSTANT_MIN_TERMS: usize = 1_000;

/// Sums all terms of the table. See [`series_constant_b_upto`].
pub fn series_constant_b(table: &CoefficientTable) -> Result<SeriesConstant> {
    series_constant_b_upto(table, table.limit())
}

/// Partial sum over n <= terms. The tail estimate is
/// (4/3) terms^{-3/4} times the mean of c_n^2 over (terms/10, terms].
pub fn series_constant_b_upto(table: &CoefficientTable, terms: usize) -> Result<SeriesConstant> {
    if terms < SERIES_CONSTANT_MIN_TERMS {
        return Err(Error::TableTooShort {
            need: SERIES_CONSTANT_MIN_TERMS,
            have: terms,
        });
    }
    if terms > table.limit() {
        return Err(Error::TableTooShort {
            need: terms,
            have: table.limit(),
        });
    }
    let value: CompensatedSum = (1..=terms)
        .map(|n| {
            let c = table.c(n);
            c * c * (n as f64).powf(-1.75)
        })
        .collect();
    let lo = terms / 10;
    let tail_sq: CompensatedSum = ((lo + 1)..=terms).map(|n| table.c(n) * table.c(n)).collect();
    let mean_sq = tail_sq.value() / (terms - lo) as f64;
    Ok(SeriesConstant {
        value: value.value(),
        tail_bound: 4.0 / 3.0 * (terms as f64).powf(-0.75) * mean_sq,
        terms_used: terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_small_values() {
        let s = build_sigma_tables(1).unwrap();
        assert_eq!(s.as_slices(), (&[1i128][..], &[1i128][..]));
        let s = build_sigma_tables(6).unwrap();
        assert_eq!(s.sigma3(2), 9);
        assert_eq!(s.sigma5(2), 33);
        assert_eq!(s.sigma3(6), 1 + 8 + 27 + 216);
    }

    #[test]
    fn sigma_rejects_zero_and_huge() {
        assert!(matches!(build_sigma_tables(0), Err(Error::Precondition(_))));
        assert!(matches!(
            build_sigma_tables(MAX_LIMIT + 1),
            Err(Error::LimitTooLarge { .. })
        ));
    }

    #[test]
    fn tau_first_values() {
        let t = build_tau_table(12).unwrap();
        let expect = [1, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920, 534612, -370944];
        assert_eq!(t.values(), &expect[..]);
    }

    #[test]
    fn tau_guard() {
        assert!(matches!(
            build_tau_table(MAX_LIMIT + 1),
            Err(Error::LimitTooLarge { .. })
        ));
        assert!(build_tau_table(0).is_err());
        assert_eq!(build_tau_table(1).unwrap().values(), &[1]);
    }

    #[test]
    fn eisenstein_route_agrees() {
        let a = build_tau_table(500).unwrap();
        let b = tau_via_eisenstein(500).unwrap();
        assert_eq!(a, b);
        assert!(tau_via_eisenstein(EISENSTEIN_MAX_LIMIT + 1).is_err());
        assert!(tau_via_eisenstein(EISENSTEIN_MAX_LIMIT).is_ok());
    }

    #[test]
    fn dense_sparse_product_detects_overflow() {
        let dense = vec![i128::MAX / 2 + 1, i128::MAX / 2 + 1, 1];
        let sparse = vec![(0usize, 1i64), (1, 1)];
        assert!(matches!(
            mul_dense_sparse(&dense, &sparse),
            Err(Error::Overflow { .. })
        ));
        let dense = vec![i128::MAX / 3 + 1; 3];
        let sparse = vec![(0usize, 1i64), (1, 1), (2, 1)];
        assert!(matches!(
            mul_dense_sparse(&dense, &sparse),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn normalization_matches_direct_division() {
        assert_eq!(normalize_coefficient(1, 1, WEIGHT), 1.0);
        let l2 = normalize_coefficient(-24, 2, WEIGHT);
        assert!((l2 - (-24.0 / 2f64.powf(5.5))).abs() < 1e-15);
    }

    #[test]
    fn coefficient_table_small_entries() {
        let tau = build_tau_table(16).unwrap();
        let t = CoefficientTable::from_tau(&tau);
        assert_eq!(t.c(1), 1.0);
        let l2 = 24.0 / 2f64.powf(5.5);
        assert!((t.c(2) - l2 * l2).abs() < 1e-15);
        let l4 = t.lambda(4);
        assert!((t.c(4) - (l4 * l4 + 1.0)).abs() < 1e-15);
        assert_eq!(t.prefix(0), 0.0);
        assert!((t.prefix(2) - (1.0 + l2 * l2)).abs() < 1e-15);
    }

    #[test]
    fn audit_clean_table() {
        let tau = build_tau_table(20_000).unwrap();
        let audit = audit_tau(&tau, 20_000);
        assert_eq!(audit.violations(), 0);
        assert!(audit.coprime_pairs_checked > 1_000);
        assert!(audit.recursion_checked > 10);
    }

    #[test]
    fn audit_detects_corruption() {
        let mut values = build_tau_table(100).unwrap().values().to_vec();
        values[5] += 1; // tau(6)
        let audit = audit_tau(&TauTable::from_values(values), 100);
        assert!(audit.multiplicativity_failures >= 1);
    }

    #[test]
    fn series_constant_single_term() {
        let mut c = vec![0.0; 1001];
        c[1] = 1.0;
        let table = CoefficientTable::from_c(c).unwrap();
        let b = series_constant_b(&table).unwrap();
        assert_eq!(b.value, 1.0);
        assert_eq!(b.tail_bound, 0.0);
        assert_eq!(b.terms_used, 1000);
    }

    #[test]
    fn series_constant_needs_data() {
        let table = CoefficientTable::from_c(vec![0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            series_constant_b(&table),
            Err(Error::TableTooShort { .. })
        ));
    }

    #[test]
    fn truncation_is_prefix_identical() {
        let tau = build_tau_table(3_000).unwrap();
        let big = CoefficientTable::from_tau(&tau);
        let small = CoefficientTable::from_tau(&build_tau_table(1_000).unwrap());
        assert_eq!(big.truncated(1_000), small);
        assert_eq!(tau.truncated(1_000).values(), &tau.values()[..1_000]);
    }
}
