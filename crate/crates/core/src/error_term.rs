//! The error terms Delta(x) = S(x) - Cx and Delta_1(x) = int_0^x Delta.
//!
//! Delta is piecewise linear with slope -C and an upward jump c_n at each
//! integer n (right-continuous). Delta_1 is therefore piecewise quadratic and
//! is kept as exact per-unit-interval integrals.

use serde::Serialize;

use crate::coefficients::CoefficientTable;
use crate::error::out_of_range;
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

/// Smallest table accepted by the constant estimators.
pub const MIN_ESTIMATION_LIMIT: usize = 10_000;

/// Estimated mean-value constant and an auditable uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub value: f64,
    pub uncertainty: f64,
}

fn require_estimation_limit(table: &CoefficientTable) -> Result<()> {
    if table.limit() < MIN_ESTIMATION_LIMIT {
        return Err(Error::TableTooShort {
            need: MIN_ESTIMATION_LIMIT,
            have: table.limit(),
        });
    }
    Ok(())
}

/// Least-squares slope of S(n) against n over N/2 < n <= N, with the
/// disagreement from the secant estimator (S(N) - S(N/2)) / (N - N/2) as the
/// uncertainty.
pub fn estimate_c(table: &CoefficientTable) -> Result<ConstantEstimate> {
    require_estimation_limit(table)?;
    let n_max = table.limit();
    let half = n_max / 2;
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for n in (half + 1)..=n_max {
        let nf = n as f64;
        num.add(nf * table.prefix(n));
        den.add(nf * nf);
    }
    let ls = num.value() / den.value();
    let secant = (table.prefix(n_max) - table.prefix(half)) / (n_max - half) as f64;
    Ok(ConstantEstimate {
        value: ls,
        uncertainty: (ls - secant).abs(),
    })
}

/// Smooth bump on (lo, 1) built from exp(-1/(v(1-v))).
fn window_weight(u: f64, lo: f64) -> f64 {
    if u <= lo || u >= 1.0 {
        return 0.0;
    }
    let v = (u - lo) / (1.0 - lo);
    (-1.0 / (v * (1.0 - v))).exp()
}

fn smoothed_mean(table: &CoefficientTable, lo: f64) -> f64 {
    let n_max = table.limit() as f64;
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for n in 1..=table.limit() {
        let w = window_weight(n as f64 / n_max, lo);
        if w > 0.0 {
            num.add(w * table.c(n));
            den.add(w);
        }
    }
    num.value() / den.value()
}

/// Window starts for the two smoothed estimators.
pub const SMOOTH_WINDOWS: [f64; 2] = [0.1, 0.3];

/// C as the smoothly weighted mean sum c_n w(n/N) / sum w(n/N).
///
/// A compactly supported smooth weight suppresses the oscillating part of
/// the summatory function far below what the sharp-cutoff estimators reach,
/// which Delta_1 needs: an error dC in C shifts Delta_1(x) by dC x^2/2. The
/// uncertainty is the disagreement between two different windows.
pub fn estimate_c_smoothed(table: &CoefficientTable) -> Result<ConstantEstimate> {
    require_estimation_limit(table)?;
    let a = smoothed_mean(table, SMOOTH_WINDOWS[0]);
    let b = smoothed_mean(table, SMOOTH_WINDOWS[1]);
    Ok(ConstantEstimate {
        value: a,
        uncertainty: (a - b).abs(),
    })
}

/// Coefficient table plus the constant C, with Delta_1 at integers
/// precomputed.
#[derive(Debug, Clone)]
pub struct ErrorTermModel {
    table: CoefficientTable,
    c: f64,
    c_uncertainty: f64,
    delta1_prefix: Vec<f64>,
}

impl ErrorTermModel {
    /// Model with C from [`estimate_c_smoothed`].
    pub fn new(table: CoefficientTable) -> Result<Self> {
        let est = estimate_c_smoothed(&table)?;
        Ok(Self::with_constant(table, est.value, est.uncertainty))
    }

    /// Model with an externally supplied constant (synthetic experiments,
    /// sensitivity studies).
    pub fn with_constant(table: CoefficientTable, c: f64, c_uncertainty: f64) -> Self {
        let limit = table.limit();
        let mut delta1_prefix = vec![0.0; limit + 1];
        let mut acc = CompensatedSum::new();
        for n in 1..=limit {
            // int_{n-1}^{n} (S(n-1) - C u) du
            acc.add(table.prefix(n - 1) - c * (n as f64 - 0.5));
            delta1_prefix[n] = acc.value();
        }
        Self {
            table,
            c,
            c_uncertainty,
            delta1_prefix,
        }
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn limit(&self) -> usize {
        self.table.limit()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn c_uncertainty(&self) -> f64 {
        self.c_uncertainty
    }

    pub fn delta1_prefix(&self) -> &[f64] {
        &self.delta1_prefix
    }

    fn check_range(&self, x: f64) -> Result<()> {
        let hi = self.limit() as f64;
        if !(0.0..=hi).contains(&x) {
            return Err(out_of_range("x", x, 0.0, hi));
        }
        Ok(())
    }

    /// Delta(x) with the right-limit convention at integers.
    pub fn delta(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        Ok(self.table.prefix(x.floor() as usize) - self.c * x)
    }

    /// Delta(n) = S(n) - Cn at an integer (right limit).
    #[inline]
    pub fn delta_at(&self, n: usize) -> f64 {
        self.table.prefix(n) - self.c * n as f64
    }

    /// Delta(n-) = S(n-1) - Cn, the left limit at an integer n >= 1.
    #[inline]
    pub fn delta_left_at(&self, n: usize) -> f64 {
        self.table.prefix(n - 1) - self.c * n as f64
    }

    /// Delta_1(n + t) for integer n and 0 <= t <= 1 (n + t <= limit).
    #[inline]
    pub fn delta1_local(&self, n: usize, t: f64) -> f64 {
        if t == 0.0 {
            return self.delta1_prefix[n];
        }
        self.delta1_prefix[n] + self.delta_at(n) * t - 0.5 * self.c * t * t
    }

    pub fn delta1(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        let n = x.floor() as usize;
        Ok(self.delta1_local(n, x - n as f64))
    }

    /// Compares Delta(X) with its average over [X-H, X+H].
    pub fn window_average_check(&self, x: f64, h: f64) -> Result<WindowCheck> {
        if !(h >= 1.0 && h <= 0.5 * x) {
            return Err(out_of_range("H", h, 1.0, 0.5 * x));
        }
        if x + h > self.limit() as f64 {
            return Err(out_of_range("X + H", x + h, 0.0, self.limit() as f64));
        }
        let lhs = self.delta(x)?;
        let rhs = (self.delta1(x + h)? - self.delta1(x - h)?) / (2.0 * h);
        Ok(WindowCheck {
            x,
            h,
            lhs,
            rhs,
            ratio: (lhs - rhs).abs() / h,
        })
    }
}

/// Delta(X) against its symmetric window average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowCheck {
    pub x: f64,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// |lhs - rhs| / H.
    pub ratio: f64,
}

/// max_{x <= X} |Delta(x)| for each X in `xs` (ascending), evaluated exactly
/// from the breakpoint values.
pub fn running_max_abs(model: &ErrorTermModel, xs: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut best: f64 = 0.0;
    let mut n = 1usize;
    for &x in xs {
        model.check_range(x)?;
        while (n as f64) <= x {
            best = best.max(model.delta_left_at(n).abs()).max(model.delta_at(n).abs());
            n += 1;
        }
        best = best.max(model.delta(x)?.abs());
        out.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(c: Vec<f64>) -> CoefficientTable {
        CoefficientTable::from_c(c).unwrap()
    }

    #[test]
    fn constant_from_unit_coefficients() {
        let n = 20_000;
        let mut c = vec![1.0; n + 1];
        c[0] = 0.0;
        let est = estimate_c(&synthetic(c)).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(est.uncertainty < 1e-15);
    }

    #[test]
    fn constant_from_alternating_coefficients() {
        let n = 20_001;
        let c: Vec<f64> = (0..=n)
            .map(|i| if i == 0 { 0.0 } else { 1.0 + (-1f64).powi(i as i32) })
            .collect();
        let est = estimate_c(&synthetic(c.clone())).unwrap();
        assert!((est.value - 1.0).abs() < 2.0 / n as f64);
        let smooth = estimate_c_smoothed(&synthetic(c)).unwrap();
        assert!((smooth.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn estimators_reject_short_tables() {
        let t = synthetic(vec![0.0; 100]);
        assert!(matches!(estimate_c(&t), Err(Error::TableTooShort { .. })));
        assert!(estimate_c_smoothed(&t).is_err());
    }

    #[test]
    fn delta_basic_values() {
        let mut c = vec![0.0; 11];
        c[1] = 1.0;
        c[3] = 2.0;
        let model = ErrorTermModel::with_constant(synthetic(c), 0.25, 0.0);
        assert_eq!(model.delta(0.0).unwrap(), 0.0);
        assert_eq!(model.delta(1.0).unwrap(), 1.0 - 0.25);
        assert_eq!(model.delta(2.5).unwrap(), 1.0 - 0.625);
        assert!(model.delta(11.0).is_err());
        assert!(model.delta(-0.1).is_err());
        // jump of c_3 at 3
        assert_eq!(model.delta_at(3) - model.delta_left_at(3), 2.0);
    }

    #[test]
    fn delta1_on_first_interval_is_pure_quadratic() {
        let mut c = vec![0.0; 11];
        c[1] = 1.0;
        let model = ErrorTermModel::with_constant(synthetic(c), 0.7, 0.0);
        assert_eq!(model.delta1(0.0).unwrap(), 0.0);
        for x in [0.1, 0.5, 0.999] {
            let expect = -0.7 * x * x / 2.0;
            assert!((model.delta1(x).unwrap() - expect).abs() < 1e-16);
        }
    }

    #[test]
    fn delta1_prefix_increments() {
        let c: Vec<f64> = (0..50).map(|i| (i % 3) as f64 * 0.5).collect();
        let table = synthetic(c);
        let model = ErrorTermModel::with_constant(table.clone(), 0.5, 0.0);
        let d1 = model.delta1_prefix();
        for n in 1..50 {
            let inc = table.prefix(n - 1) - 0.5 * (n as f64 - 0.5);
            assert!((d1[n] - d1[n - 1] - inc).abs() < 1e-13);
        }
    }

    #[test]
    fn window_check_on_trivial_model() {
        let model = ErrorTermModel::with_constant(synthetic(vec![0.0; 1001]), 0.0, 0.0);
        let w = model.window_average_check(500.0, 20.0).unwrap();
        assert_eq!(w.lhs, 0.0);
        assert_eq!(w.rhs, 0.0);
        assert_eq!(w.ratio, 0.0);
        assert!(model.window_average_check(500.0, 300.0).is_err());
        assert!(model.window_average_check(990.0, 20.0).is_err());
    }

    #[test]
    fn running_max_matches_dense_sampling() {
        let c: Vec<f64> = (0..200).map(|i| ((i * 7) % 5) as f64 * 0.4).collect();
        let model = ErrorTermModel::with_constant(synthetic(c), 0.8, 0.0);
        let maxes = running_max_abs(&model, &[50.0, 120.5, 199.0]).unwrap();
        let mut brute: f64 = 0.0;
        let mut k = 0;
        let mut x = 0.0;
        let targets = [50.0, 120.5, 199.0];
        while x <= 199.0 {
            brute = brute.max(model.delta(x).unwrap().abs());
            let left = x.floor() as usize + 1;
            if (left as f64) <= 199.0 && ((left as f64) - x) < 1e-3 + 1e-9 {
                brute = brute.max(model.delta_left_at(left).abs());
            }
            if k < 3 && x + 1e-3 > targets[k] {
                assert!(maxes[k] >= brute - 1e-9);
                k += 1;
            }
            x += 1e-3;
        }
        assert!((maxes[2] - brute).abs() < 1e-2);
    }
}
