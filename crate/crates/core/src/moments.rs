//! Moment integrals int_0^X f^k for the piecewise error terms, power-law
//! exponent fits, the Delta_1 mean-square ratio and the large-values scan.
//!
//! All integrals are exact per unit interval (closed forms for the linear
//! Delta, exact-degree Gauss-Legendre for the quadratic Delta_1), so results
//! do not depend on any sampling density.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::SeriesConstant;
use crate::d4::D4ErrorTerm;
use crate::error::out_of_range;
use crate::error_term::ErrorTermModel;
use crate::numeric::summation::REDUCTION_BLOCK;
use crate::numeric::{fit_line, CompensatedSum, GaussLegendre};
use crate::{Error, Result};

/// Which error term a moment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Delta,
    Delta1,
    Delta4,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Delta => "delta",
            Target::Delta1 => "delta1",
            Target::Delta4 => "delta4",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Target::Delta),
            "delta1" => Ok(Target::Delta1),
            "delta4" => Ok(Target::Delta4),
            other => Err(Error::Precondition(format!("unknown target {other:?}"))),
        }
    }
}

/// A function that is smooth on every [n, n+1) and whose powers can be
/// integrated piece by piece.
pub trait PiecewiseTerm: Sync {
    fn limit(&self) -> usize;

    /// int_{n+t0}^{n+t1} f(u)^k du for 0 <= t0 <= t1 <= 1.
    fn piece_power_integral(&self, n: usize, t0: f64, t1: f64, k: u32) -> f64;
}

/// Delta viewed through the moment harness.
pub struct DeltaTerm<'a>(pub &'a ErrorTermModel);

/// Delta_1 viewed through the moment harness.
pub struct Delta1Term<'a> {
    model: &'a ErrorTermModel,
    rule: GaussLegendre,
}

impl<'a> Delta1Term<'a> {
    pub fn new(model: &'a ErrorTermModel) -> Self {
        Self {
            model,
            rule: GaussLegendre::new(5),
        }
    }
}

/// Delta_4 viewed through the moment harness.
pub struct Delta4Term<'a> {
    err: &'a D4ErrorTerm,
    rule: GaussLegendre,
}

impl<'a> Delta4Term<'a> {
    pub fn new(err: &'a D4ErrorTerm) -> Self {
        Self {
            err,
            rule: GaussLegendre::new(8),
        }
    }
}

/// int_0^len of the k-th power of a linear function running from a to b.
#[inline]
fn linear_power_integral(a: f64, b: f64, len: f64, k: u32) -> f64 {
    // (a^{k+1} - b^{k+1}) / ((k+1)(a-b)) written without the division by a - b.
    let mut sum = 0.0;
    let mut ap = 1.0;
    let mut powers_b = [1.0; 16];
    for j in 1..=k as usize {
        powers_b[j] = powers_b[j - 1] * b;
    }
    for j in (0..=k as usize).rev() {
        sum += ap * powers_b[j];
        ap *= a;
    }
    len * sum / (k as f64 + 1.0)
}

impl PiecewiseTerm for DeltaTerm<'_> {
    fn limit(&self) -> usize {
        self.0.limit()
    }

    fn piece_power_integral(&self, n: usize, t0: f64, t1: f64, k: u32) -> f64 {
        let base = self.0.delta_at(n);
        let c = self.0.c();
        linear_power_integral(base - c * t0, base - c * t1, t1 - t0, k)
    }
}

impl PiecewiseTerm for Delta1Term<'_> {
    fn limit(&self) -> usize {
        self.model.limit()
    }

    fn piece_power_integral(&self, n: usize, t0: f64, t1: f64, k: u32) -> f64 {
        let d1 = self.model.delta1_prefix()[n];
        let d = self.model.delta_at(n);
        let c = self.model.c();
        self.rule
            .integrate(t0, t1, |s| (d1 + d * s - 0.5 * c * s * s).powi(k as i32))
    }
}

impl PiecewiseTerm for Delta4Term<'_> {
    fn limit(&self) -> usize {
        self.err.limit()
    }

    fn piece_power_integral(&self, n: usize, t0: f64, t1: f64, k: u32) -> f64 {
        self.rule
            .integrate(t0, t1, |s| self.err.delta4_local(n, s).powi(k as i32))
    }
}

fn check_power(target_is_delta1: bool, k: u32) -> Result<()> {
    // Delta_1^k has degree 2k per piece; the 5-node rule is exact through 9.
    let max = if target_is_delta1 { 4 } else { 8 };
    if k == 0 || k > max {
        return Err(Error::Precondition(format!("moment power {k} not in 1..={max}")));
    }
    Ok(())
}

fn check_upper(term: &dyn PiecewiseTerm, x: f64) -> Result<()> {
    let hi = term.limit() as f64;
    if !(0.0..=hi).contains(&x) {
        return Err(out_of_range("X", x, 0.0, hi));
    }
    Ok(())
}

/// int_0^X f^k for every X in `xs` (each <= limit).
///
/// Unit pieces are summed in fixed blocks of [`REDUCTION_BLOCK`] in
/// parallel; each X merges the blocks below it in index order, so values are
/// independent of the thread count.
pub fn moment_ladder<T: PiecewiseTerm>(term: &T, k: u32, xs: &[f64]) -> Result<Vec<f64>> {
    for &x in xs {
        check_upper(term, x)?;
    }
    let x_max = xs.iter().cloned().fold(0.0, f64::max);
    let full_pieces = x_max.floor() as usize;
    let blocks = full_pieces / REDUCTION_BLOCK;
    let block_sums: Vec<CompensatedSum> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            (b * REDUCTION_BLOCK..(b + 1) * REDUCTION_BLOCK)
                .map(|n| term.piece_power_integral(n, 0.0, 1.0, k))
                .collect()
        })
        .collect();
    Ok(xs
        .iter()
        .map(|&x| {
            let whole = x.floor() as usize;
            let nb = whole / REDUCTION_BLOCK;
            let mut acc = CompensatedSum::new();
            for b in &block_sums[..nb] {
                acc.merge(b);
            }
            for n in nb * REDUCTION_BLOCK..whole {
                acc.add(term.piece_power_integral(n, 0.0, 1.0, k));
            }
            let frac = x - whole as f64;
            if frac > 0.0 {
                acc.add(term.piece_power_integral(whole, 0.0, frac, k));
            }
            acc.value()
        })
        .collect())
}

pub fn moment<T: PiecewiseTerm>(term: &T, k: u32, x: f64) -> Result<f64> {
    Ok(moment_ladder(term, k, &[x])?[0])
}

/// int_a^b f^k for 0 <= a <= b <= limit.
pub fn moment_between<T: PiecewiseTerm>(term: &T, k: u32, a: f64, b: f64) -> Result<f64> {
    check_upper(term, a)?;
    check_upper(term, b)?;
    if a > b {
        return Err(Error::Precondition(format!("moment_between needs a <= b, got {a} > {b}")));
    }
    let na = a.floor() as usize;
    let nb = b.floor() as usize;
    let ta = a - na as f64;
    let tb = b - nb as f64;
    if na == nb {
        return Ok(term.piece_power_integral(na, ta, tb, k));
    }
    let mut acc = CompensatedSum::new();
    acc.add(term.piece_power_integral(na, ta, 1.0, k));
    for n in (na + 1)..nb {
        acc.add(term.piece_power_integral(n, 0.0, 1.0, k));
    }
    if tb > 0.0 {
        acc.add(term.piece_power_integral(nb, 0.0, tb, k));
    }
    Ok(acc.value())
}

/// int_0^X Delta^k, k in {2, 4} (any 1..=8 accepted).
pub fn moment_delta_exact(model: &ErrorTermModel, k: u32, x: f64) -> Result<f64> {
    check_power(false, k)?;
    moment(&DeltaTerm(model), k, x)
}

/// int_0^X Delta_1^k, k in 1..=4.
pub fn moment_delta1_exact(model: &ErrorTermModel, k: u32, x: f64) -> Result<f64> {
    check_power(true, k)?;
    moment(&Delta1Term::new(model), k, x)
}

/// The coefficient (2/13)(2 pi)^{-4} of the Delta_1 mean-square asymptotic.
pub fn mean_square_coefficient() -> f64 {
    2.0 / 13.0 * (2.0 * PI).powi(-4)
}

pub const MEAN_SQUARE_MIN_X: f64 = 1e4;

/// int_0^X Delta_1^2 divided by (2/13)(2 pi)^{-4} B X^{13/4}.
pub fn mean_square_ratio(model: &ErrorTermModel, b: &SeriesConstant, x: f64) -> Result<f64> {
    if x < MEAN_SQUARE_MIN_X {
        return Err(out_of_range("X", x, MEAN_SQUARE_MIN_X, model.limit() as f64));
    }
    let m2 = moment_delta1_exact(model, 2, x)?;
    Ok(m2 / (mean_square_coefficient() * b.value * x.powf(3.25)))
}

/// Least-squares exponent of a power law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Twice the standard error of the slope.
    pub ci: f64,
}

pub const MIN_FIT_POINTS: usize = 4;

/// OLS of log(moment) on log(X).
pub fn exponent_fit(xs: &[f64], values: &[f64]) -> Result<ExponentFit> {
    if xs.len() != values.len() {
        return Err(Error::Precondition("exponent_fit: length mismatch".into()));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Precondition(format!(
            "exponent_fit needs >= {MIN_FIT_POINTS} points, got {}",
            xs.len()
        )));
    }
    for (i, (&x, &v)) in xs.iter().zip(values).enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositive { index: i, value: v });
        }
        if !(x > 0.0) {
            return Err(Error::NonPositive { index: i, value: x });
        }
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&lx, &ly)
        .ok_or_else(|| Error::Precondition("exponent_fit: X values must differ".into()))?;
    Ok(ExponentFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci: 2.0 * fit.slope_stderr,
    })
}

/// X_min * 2^j for j = 0.. while <= X_max.
pub fn dyadic_ladder(x_min: f64, x_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x = x_min;
    while x <= x_max * (1.0 + 1e-12) {
        out.push(x);
        x *= 2.0;
    }
    out
}

/// Moment values over a ladder of X with their fitted exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub power: u32,
    pub target: Target,
    pub x_values: Vec<f64>,
    pub moment_values: Vec<f64>,
    pub fitted_slope: f64,
    pub slope_ci: f64,
}

fn report_from<T: PiecewiseTerm>(term: &T, target: Target, k: u32, xs: &[f64]) -> Result<MomentReport> {
    check_power(target == Target::Delta1, k)?;
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("X values must be strictly increasing".into()));
    }
    let values = moment_ladder(term, k, xs)?;
    let fit = exponent_fit(xs, &values)?;
    Ok(MomentReport {
        power: k,
        target,
        x_values: xs.to_vec(),
        moment_values: values,
        fitted_slope: fit.slope,
        slope_ci: fit.ci,
    })
}

pub fn delta_moment_report(model: &ErrorTermModel, k: u32, xs: &[f64]) -> Result<MomentReport> {
    report_from(&DeltaTerm(model), Target::Delta, k, xs)
}

pub fn delta1_moment_report(model: &ErrorTermModel, k: u32, xs: &[f64]) -> Result<MomentReport> {
    report_from(&Delta1Term::new(model), Target::Delta1, k, xs)
}

pub fn delta4_moment_report(err: &D4ErrorTerm, k: u32, xs: &[f64]) -> Result<MomentReport> {
    report_from(&Delta4Term::new(err), Target::Delta4, k, xs)
}

/// (int Delta_1^2)^2 <= X int Delta_1^4 at each X; returns the X values
/// where it fails.
pub fn cauchy_schwarz_violations(xs: &[f64], second: &[f64], fourth: &[f64]) -> Vec<f64> {
    xs.iter()
        .zip(second.iter().zip(fourth))
        .filter(|(&x, (&m2, &m4))| m2 * m2 > x * m4)
        .map(|(&x, _)| x)
        .collect()
}

/// Large values of |Delta| on [X, 2X] cut into subintervals of length H.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeValuesReport {
    pub x: f64,
    pub h: f64,
    /// V = X^{3/5} 2^{-j} down to X^{1/2}.
    pub v_values: Vec<f64>,
    /// Subintervals whose sup |Delta| lies in [V, 2V).
    pub r_values: Vec<u64>,
    /// R V^5 / X^3.
    pub bound_ratios: Vec<f64>,
    /// int over {x in [X,2X] : V <= |Delta(x)| < 2V} of Delta^4, exact.
    pub restricted_integrals: Vec<f64>,
    /// Buckets covering every subinterval once: [lo, hi) with count.
    pub partition: Vec<(f64, f64, u64)>,
    pub subintervals: u64,
    pub global_max: f64,
}

impl LargeValuesReport {
    pub fn max_bound_ratio(&self) -> f64 {
        self.bound_ratios.iter().cloned().fold(0.0, f64::max)
    }

    pub fn partition_total(&self) -> u64 {
        self.partition.iter().map(|p| p.2).sum()
    }
}

/// sup of |Delta| over [a, b] from the breakpoint values.
fn sup_abs_delta(model: &ErrorTermModel, a: f64, b: f64) -> f64 {
    let mut best = model.delta(a).unwrap_or(0.0).abs();
    let first = a.floor() as usize + 1;
    let last_int = b.floor() as usize;
    for n in first..=last_int {
        best = best.max(model.delta_left_at(n).abs());
        best = best.max(model.delta_at(n).abs());
    }
    // value approaching b from the left on the last linear piece
    if b > b.floor() {
        let nb = b.floor() as usize;
        best = best.max((model.table().prefix(nb) - model.c() * b).abs());
    }
    best
}

/// Measure-exact int of Delta^4 where V <= |Delta| < 2V on [lo, hi].
fn restricted_fourth_moment(model: &ErrorTermModel, lo: f64, hi: f64, v: f64) -> f64 {
    let c = model.c();
    let mut acc = CompensatedSum::new();
    let mut n = lo.floor() as usize;
    while (n as f64) < hi {
        let t0 = (lo - n as f64).max(0.0);
        let t1 = (hi - n as f64).min(1.0);
        if t1 > t0 {
            let base = model.delta_at(n);
            // Delta = base - c t on [t0, t1]: intersect {V <= |.| < 2V}.
            for (band_lo, band_hi) in [(v, 2.0 * v), (-2.0 * v, -v)] {
                let (s0, s1) = if c > 0.0 {
                    // base - c t in [band_lo, band_hi) <=> t in ((base-band_hi)/c, (base-band_lo)/c]
                    ((base - band_hi) / c, (base - band_lo) / c)
                } else if base >= band_lo && base < band_hi {
                    (t0, t1)
                } else {
                    (t1, t1)
                };
                let a = s0.max(t0);
                let b = s1.min(t1);
                if b > a {
                    acc.add(linear_power_integral(base - c * a, base - c * b, b - a, 4));
                }
            }
        }
        n += 1;
    }
    acc.value()
}

/// Splits [X, 2X] into subintervals of length H (last one shorter) and
/// counts, for each dyadic V, those whose sup |Delta| falls in [V, 2V).
pub fn large_values_scan(model: &ErrorTermModel, x: f64, h: f64) -> Result<LargeValuesReport> {
    if !(x >= 4.0) {
        return Err(out_of_range("X", x, 4.0, f64::INFINITY));
    }
    if 2.0 * x > model.limit() as f64 {
        return Err(out_of_range("2X", 2.0 * x, 0.0, model.limit() as f64));
    }
    let h_min = x.sqrt();
    if !(h >= h_min && h <= 0.5 * x) {
        return Err(out_of_range("H", h, h_min, 0.5 * x));
    }
    let count = ((x / h).ceil() as u64).max(1);
    let sups: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let a = x + i as f64 * h;
            let b = (a + h).min(2.0 * x);
            sup_abs_delta(model, a, b)
        })
        .collect();
    let global_max = sups.iter().cloned().fold(0.0, f64::max);

    let v_top = x.powf(0.6);
    let v_floor = x.sqrt();
    let mut v_values = Vec::new();
    let mut v = v_top;
    while v >= v_floor * (1.0 - 1e-12) {
        v_values.push(v);
        v *= 0.5;
    }
    let in_bucket = |lo: f64, hi: f64| sups.iter().filter(|&&s| s >= lo && s < hi).count() as u64;
    let r_values: Vec<u64> = v_values.iter().map(|&v| in_bucket(v, 2.0 * v)).collect();
    let x3 = x.powi(3);
    let bound_ratios = v_values
        .iter()
        .zip(&r_values)
        .map(|(&v, &r)| r as f64 * v.powi(5) / x3)
        .collect();
    let restricted_integrals = v_values
        .iter()
        .map(|&v| restricted_fourth_moment(model, x, 2.0 * x, v))
        .collect();

    // Full dyadic ladder: [2 V_top, inf), the V buckets continued downward
    // until below the smallest sup, then [0, V_last).
    let mut partition = vec![(2.0 * v_top, f64::INFINITY, in_bucket(2.0 * v_top, f64::INFINITY))];
    let min_sup = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut v = v_top;
    loop {
        partition.push((v, 2.0 * v, in_bucket(v, 2.0 * v)));
        if v <= min_sup || v < 1e-300 {
            break;
        }
        v *= 0.5;
    }
    partition.push((0.0, v, in_bucket(0.0, v)));

    Ok(LargeValuesReport {
        x,
        h,
        v_values,
        r_values,
        bound_ratios,
        restricted_integrals,
        partition,
        subintervals: count,
        global_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientTable;

    fn synthetic_model(c: Vec<f64>, constant: f64) -> ErrorTermModel {
        ErrorTermModel::with_constant(CoefficientTable::from_c(c).unwrap(), constant, 0.0)
    }

    #[test]
    fn linear_power_closed_form() {
        // int_0^1 (3 - 2s)^4 ds = (3^5 - 1^5) / (5 * 2)
        let v = linear_power_integral(3.0, 1.0, 1.0, 4);
        assert!((v - 24.2).abs() < 1e-13);
        assert_eq!(linear_power_integral(2.0, 2.0, 0.5, 4), 8.0);
    }

    #[test]
    fn zero_model_has_zero_moments() {
        let m = synthetic_model(vec![0.0; 101], 0.0);
        assert_eq!(moment_delta_exact(&m, 4, 100.0).unwrap(), 0.0);
        assert_eq!(moment_delta1_exact(&m, 4, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn single_jump_step_function() {
        let mut c = vec![0.0; 11];
        c[1] = 1.0;
        let m = synthetic_model(c, 0.0);
        assert_eq!(moment_delta_exact(&m, 4, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn pure_quadratic_delta1() {
        let m = synthetic_model(vec![0.0; 11], 1.0);
        let v = moment_delta1_exact(&m, 4, 1.0).unwrap();
        assert!((v - 1.0 / 144.0).abs() < 1e-16);
    }

    #[test]
    fn power_guards() {
        let m = synthetic_model(vec![0.0; 11], 1.0);
        assert!(moment_delta1_exact(&m, 5, 1.0).is_err());
        assert!(moment_delta_exact(&m, 0, 1.0).is_err());
        assert!(moment_delta_exact(&m, 2, 11.0).is_err());
    }

    #[test]
    fn exponent_fit_exact_power() {
        let xs: Vec<f64> = dyadic_ladder(1e4, 1e6);
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(3)).collect();
        let f = exponent_fit(&xs, &ys).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!(f.ci < 1e-10);
    }

    #[test]
    fn exponent_fit_errors() {
        assert!(exponent_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(matches!(
            exponent_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 3.0, 4.0]),
            Err(Error::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn ladder_matches_individual_moments() {
        let c: Vec<f64> = (0..20_000).map(|i| ((i * 13) % 7) as f64 / 3.0).collect();
        let m = synthetic_model(c, 1.0);
        let xs = [10.5, 4096.0, 9000.25, 19_999.0];
        let ladder = moment_ladder(&DeltaTerm(&m), 2, &xs).unwrap();
        for (&x, &v) in xs.iter().zip(&ladder) {
            let direct = moment_between(&DeltaTerm(&m), 2, 0.0, x).unwrap();
            assert!((v - direct).abs() <= 1e-12 * direct, "{x}: {v} vs {direct}");
        }
    }

    #[test]
    fn large_values_trivial_buckets() {
        let c: Vec<f64> = (0..=4_000).map(|i| if i == 0 { 0.0 } else { 1.0 + ((i % 5) as f64 - 2.0) * 0.3 }).collect();
        let m = synthetic_model(c, 1.0);
        let r = large_values_scan(&m, 1_000.0, 40.0).unwrap();
        assert_eq!(r.partition_total(), r.subintervals);
        assert!(r.subintervals as f64 <= 1_000.0 / 40.0 + 1.0);
        for (&v, &count) in r.v_values.iter().zip(&r.r_values) {
            if v > r.global_max {
                assert_eq!(count, 0);
            }
        }
        assert!(large_values_scan(&m, 1_000.0, 10.0).is_err());
        assert!(large_values_scan(&m, 3_000.0, 100.0).is_err());
    }
}
