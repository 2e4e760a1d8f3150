//! Truncated Voronoi-type expansions of Delta and Delta_1, truncation-error
//! scans against the exact error terms, and the weighted oscillatory
//! integral int phi(x) e(4 pi D x^{1/4}) dx.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::CoefficientTable;
use crate::error::out_of_range;
use crate::error_term::ErrorTermModel;
use crate::numeric::{fit_line, pairwise_sum, GaussLegendre};
use crate::{Error, Result};

/// Which error term an expansion approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    /// x^{3/8}/(2 pi) sum c_k k^{-5/8} sin(8 pi (kx)^{1/4} + 3 pi/4), K0 <= x.
    Delta,
    /// x^{9/8}/(2 pi)^2 sum c_k k^{-7/8} sin(8 pi (kx)^{1/4} + pi/4), K0 <= x^2.
    Delta1,
}

impl Expansion {
    /// Size of the remainder the expansion is stated with, without the
    /// x^eps factor.
    pub fn error_scale(self, x: f64, k0: usize) -> f64 {
        let k = k0 as f64;
        match self {
            Expansion::Delta => x.powf(0.75) * k.powf(-0.25),
            Expansion::Delta1 => x.powf(1.5) * k.powf(-0.5) + x,
        }
    }

    fn max_k0(self, x: f64) -> f64 {
        match self {
            Expansion::Delta => x,
            Expansion::Delta1 => x * x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Expansion::Delta => "delta",
            Expansion::Delta1 => "delta1",
        }
    }
}

/// Parameters of a truncated expansion
/// x^a * normalizer * sum_{k <= K0} c_k k^b sin(8 pi (kx)^{1/4} + phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoronoiSeries {
    pub expansion: Expansion,
    pub amplitude_exponent: f64,
    pub normalizer: f64,
    pub coeff_exponent: f64,
    pub phase: f64,
    pub k0: usize,
}

impl VoronoiSeries {
    pub fn for_delta(k0: usize) -> Self {
        Self {
            expansion: Expansion::Delta,
            amplitude_exponent: 3.0 / 8.0,
            normalizer: 1.0 / (2.0 * PI),
            coeff_exponent: -5.0 / 8.0,
            phase: 0.75 * PI,
            k0,
        }
    }

    pub fn for_delta1(k0: usize) -> Self {
        Self {
            expansion: Expansion::Delta1,
            amplitude_exponent: 9.0 / 8.0,
            normalizer: (2.0 * PI).powi(-2),
            coeff_exponent: -7.0 / 8.0,
            phase: 0.25 * PI,
            k0,
        }
    }

    pub fn standard(expansion: Expansion, k0: usize) -> Self {
        match expansion {
            Expansion::Delta => Self::for_delta(k0),
            Expansion::Delta1 => Self::for_delta1(k0),
        }
    }

    pub fn with_k0(self, k0: usize) -> Self {
        Self { k0, ..self }
    }

    fn check(&self, table: &CoefficientTable, x: f64) -> Result<()> {
        if !(x >= 1.0) {
            return Err(out_of_range("x", x, 1.0, f64::INFINITY));
        }
        if self.k0 > table.limit() {
            return Err(Error::TableTooShort {
                need: self.k0,
                have: table.limit(),
            });
        }
        let cap = self.expansion.max_k0(x);
        if self.k0 as f64 > cap {
            return Err(out_of_range("K0", self.k0 as f64, 0.0, cap));
        }
        Ok(())
    }

    #[inline]
    fn term(&self, table: &CoefficientTable, x: f64, k: usize) -> f64 {
        let kf = k as f64;
        table.c(k) * kf.powf(self.coeff_exponent) * (8.0 * PI * (kf * x).powf(0.25) + self.phase).sin()
    }

    fn prefactor(&self, x: f64) -> f64 {
        x.powf(self.amplitude_exponent) * self.normalizer
    }
}

/// The truncated sum, accumulated from k = K0 down to 1.
pub fn eval_truncated(series: &VoronoiSeries, table: &CoefficientTable, x: f64) -> Result<f64> {
    series.check(table, x)?;
    let mut sum = 0.0;
    for k in (1..=series.k0).rev() {
        sum += series.term(table, x, k);
    }
    Ok(series.prefactor(x) * sum)
}

/// Same sum in pairwise order, for summation-order comparisons.
pub fn eval_truncated_pairwise(series: &VoronoiSeries, table: &CoefficientTable, x: f64) -> Result<f64> {
    series.check(table, x)?;
    let terms: Vec<f64> = (1..=series.k0).map(|k| series.term(table, x, k)).collect();
    Ok(series.prefactor(x) * pairwise_sum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub x: f64,
    pub k0: usize,
    pub exact: f64,
    pub truncated: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationScan {
    pub expansion: Expansion,
    /// Grouped by K0 in the order given, x ascending within each group.
    pub rows: Vec<ScanRow>,
    pub k0_values: Vec<usize>,
    pub rms: Vec<f64>,
    /// Slope of log RMS against log K0.
    pub slope: f64,
    /// max over x of abs_err / error_scale(x, K0), per K0.
    pub max_normalized: Vec<f64>,
}

impl TruncationScan {
    pub fn rms_strictly_decreasing(&self) -> bool {
        self.rms.windows(2).all(|w| w[1] < w[0])
    }

    pub fn normalized_range(&self) -> (f64, f64) {
        let lo = self.max_normalized.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.max_normalized.iter().cloned().fold(0.0, f64::max);
        (lo, hi)
    }
}

/// RMS over `xs` of exact minus truncated, for each K0 in `k0_values`.
pub fn truncation_error_scan(
    model: &ErrorTermModel,
    series: &VoronoiSeries,
    xs: &[f64],
    k0_values: &[usize],
) -> Result<TruncationScan> {
    if xs.is_empty() {
        return Err(Error::Precondition("truncation scan needs at least one sample".into()));
    }
    if k0_values.is_empty() {
        return Err(Error::Precondition("truncation scan needs at least one K0".into()));
    }
    let table = model.table();
    let exact: Vec<f64> = xs
        .iter()
        .map(|&x| match series.expansion {
            Expansion::Delta => model.delta(x),
            Expansion::Delta1 => model.delta1(x),
        })
        .collect::<Result<_>>()?;
    let grid: Vec<(usize, usize)> = k0_values
        .iter()
        .flat_map(|&k0| (0..xs.len()).map(move |i| (k0, i)))
        .collect();
    let rows: Vec<ScanRow> = grid
        .par_iter()
        .map(|&(k0, i)| {
            let truncated = eval_truncated(&series.with_k0(k0), table, xs[i])?;
            Ok(ScanRow {
                x: xs[i],
                k0,
                exact: exact[i],
                truncated,
                abs_err: (exact[i] - truncated).abs(),
            })
        })
        .collect::<Result<_>>()?;
    let mut rms = Vec::with_capacity(k0_values.len());
    let mut max_normalized = Vec::with_capacity(k0_values.len());
    for group in rows.chunks(xs.len()) {
        let ms = group.iter().map(|r| r.abs_err * r.abs_err).sum::<f64>() / xs.len() as f64;
        rms.push(ms.sqrt());
        max_normalized.push(
            group
                .iter()
                .map(|r| r.abs_err / series.expansion.error_scale(r.x, r.k0))
                .fold(0.0, f64::max),
        );
    }
    let slope = if k0_values.len() >= 2 && rms.iter().all(|&r| r > 0.0) {
        let lk: Vec<f64> = k0_values.iter().map(|&k| (k as f64).ln()).collect();
        let lr: Vec<f64> = rms.iter().map(|r| r.ln()).collect();
        fit_line(&lk, &lr).map_or(f64::NAN, |f| f.slope)
    } else {
        f64::NAN
    };
    Ok(TruncationScan {
        expansion: series.expansion,
        rows,
        k0_values: k0_values.to_vec(),
        rms,
        slope,
        max_normalized,
    })
}

/// n + 1/2 sample points spread evenly over [x, x + width]; half-integers
/// keep the samples away from the jumps of Delta.
pub fn half_integer_samples(x: f64, width: f64, count: usize) -> Vec<f64> {
    let step = width / count as f64;
    (0..count)
        .map(|i| (x + i as f64 * step).floor() + 0.5)
        .collect()
}

/// 2^a, 2^{a+1}, ..., 2^b.
pub fn dyadic_k0(a: u32, b: u32) -> Vec<usize> {
    (a..=b).map(|j| 1usize << j).collect()
}

/// Number of nodes in the rule that defines the smooth ramp.
const RAMP_NODES: usize = 48;

fn psi(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        (-1.0 / (u * (1.0 - u))).exp()
    }
}

/// Weight phi on [X/2, 5X/2] equal to 1 on [X, 2X] with C-infinity ramps
/// R(t) = int_0^t psi / int_0^1 psi, psi(u) = exp(-1/(u(1-u))), or the bare
/// plateau indicator.
#[derive(Debug, Clone)]
pub struct SmoothWeight {
    x: f64,
    smooth: bool,
    rule: GaussLegendre,
    ramp_norm: f64,
}

impl SmoothWeight {
    pub fn new(x: f64) -> Result<Self> {
        Self::build(x, true)
    }

    /// phi = 1 on [X, 2X], 0 elsewhere.
    pub fn plateau_only(x: f64) -> Result<Self> {
        Self::build(x, false)
    }

    fn build(x: f64, smooth: bool) -> Result<Self> {
        if !(x >= 1.0) || !x.is_finite() {
            return Err(out_of_range("X", x, 1.0, f64::INFINITY));
        }
        let rule = GaussLegendre::new(RAMP_NODES);
        let ramp_norm = rule.integrate(0.0, 1.0, psi);
        Ok(Self {
            x,
            smooth,
            rule,
            ramp_norm,
        })
    }

    pub fn scale(&self) -> f64 {
        self.x
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// R(t) for t in [0, 1]. The rule is rescaled to [0, t] so R is smooth
    /// in t; R(0) = 0 and R(1) = 1 exactly.
    fn ramp(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            (self.rule.integrate(0.0, t, psi) / self.ramp_norm).min(1.0)
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let x = self.x;
        if y >= x && y <= 2.0 * x {
            return 1.0;
        }
        if !self.smooth {
            return 0.0;
        }
        if y > 0.5 * x && y < x {
            self.ramp((y - 0.5 * x) / (0.5 * x))
        } else if y > 2.0 * x && y < 2.5 * x {
            self.ramp((2.5 * x - y) / (0.5 * x))
        } else {
            0.0
        }
    }

    /// int phi: X for the plateau plus X/2 for the two shoulders.
    pub fn mass(&self) -> f64 {
        if self.smooth {
            1.5 * self.x
        } else {
            self.x
        }
    }

    /// int of phi over the two shoulders.
    pub fn shoulder_mass(&self) -> f64 {
        0.5 * self.x
    }
}

/// Nodes per panel of the oscillatory rule.
const PANEL_NODES: usize = 16;
/// Agreement required between successive panel doublings, relative to the
/// mass of phi.
pub const OSCILLATORY_TOLERANCE: f64 = 1e-11;
const MAX_REFINEMENTS: u32 = 6;

/// int phi(x) e(4 pi D x^{1/4}) dx with e(z) = exp(2 pi i z).
///
/// With u = x^{1/4} the phase 8 pi^2 D u is linear; each of the three pieces
/// (shoulder, plateau, shoulder) is cut into panels no wider than a quarter
/// period and integrated with a 16-point Gauss-Legendre rule. The panel count
/// is doubled until two successive values agree.
pub fn oscillatory_integral(weight: &SmoothWeight, d: f64) -> Result<Complex64> {
    if !d.is_finite() {
        return Err(Error::Precondition(format!("D must be finite, got {d}")));
    }
    let x = weight.scale();
    let omega = 8.0 * PI * PI * d;
    let breaks: Vec<f64> = if weight.is_smooth() {
        vec![0.5 * x, x, 2.0 * x, 2.5 * x]
    } else {
        vec![x, 2.0 * x]
    };
    let us: Vec<f64> = breaks.iter().map(|b| b.powf(0.25)).collect();
    let rule = GaussLegendre::new(PANEL_NODES);
    let quarter = if omega == 0.0 {
        f64::INFINITY
    } else {
        0.5 * PI / omega.abs()
    };
    let integrand = |u: f64| {
        let u2 = u * u;
        let w = weight.eval(u2 * u2) * 4.0 * u2 * u;
        let (s, c) = (omega * u).sin_cos();
        Complex64::new(w * c, w * s)
    };
    let evaluate = |refine: u32| -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for seg in us.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let base = ((b - a) / quarter).ceil().max(4.0) as usize;
            let panels = base << refine;
            let h = (b - a) / panels as f64;
            let parts: Vec<Complex64> = (0..panels)
                .into_par_iter()
                .map(|p| {
                    let lo = a + p as f64 * h;
                    let hi = if p + 1 == panels { b } else { lo + h };
                    rule.mapped(lo, hi)
                        .fold(Complex64::new(0.0, 0.0), |acc, (u, w)| acc + integrand(u) * w)
                })
                .collect();
            for part in parts {
                total += part;
            }
        }
        total
    };
    let tol = OSCILLATORY_TOLERANCE * weight.mass();
    let mut prev = evaluate(0);
    for refine in 1..=MAX_REFINEMENTS {
        let next = evaluate(refine);
        let change = (next - prev).norm();
        if change <= tol {
            return Ok(next);
        }
        prev = next;
        if refine == MAX_REFINEMENTS {
            return Err(Error::NonConvergence { change });
        }
    }
    unreachable!()
}

/// |I(D)| / |I(0)| for each entry of `scaled`, where D = scaled / X^{1/4}.
pub fn decay_table(weight: &SmoothWeight, scaled: &[f64]) -> Result<Vec<f64>> {
    let i0 = oscillatory_integral(weight, 0.0)?.norm();
    let xq = weight.scale().powf(0.25);
    scaled
        .iter()
        .map(|&s| Ok(oscillatory_integral(weight, s / xq)?.norm() / i0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with_c1_only(n: usize) -> CoefficientTable {
        let mut c = vec![0.0; n + 1];
        c[1] = 1.0;
        CoefficientTable::from_c(c).unwrap()
    }

    #[test]
    fn empty_and_single_term() {
        let t = table_with_c1_only(100);
        assert_eq!(eval_truncated(&VoronoiSeries::for_delta(0), &t, 50.0).unwrap(), 0.0);
        let x: f64 = 50.0;
        let want = x.powf(0.375) / (2.0 * PI) * (8.0 * PI * x.powf(0.25) + 0.75 * PI).sin();
        let got = eval_truncated(&VoronoiSeries::for_delta(1), &t, x).unwrap();
        assert!((got - want).abs() < 1e-13 * want.abs().max(1.0));
    }

    #[test]
    fn k0_guards() {
        let t = table_with_c1_only(100);
        assert!(eval_truncated(&VoronoiSeries::for_delta(60), &t, 50.0).is_err());
        assert!(eval_truncated(&VoronoiSeries::for_delta1(60), &t, 50.0).is_ok());
        assert!(eval_truncated(&VoronoiSeries::for_delta1(101), &t, 50.0).is_err());
        assert!(eval_truncated(&VoronoiSeries::for_delta(1), &t, 0.5).is_err());
    }

    #[test]
    fn exhausted_series_rms_flat() {
        let t = table_with_c1_only(2_000);
        let model = ErrorTermModel::with_constant(t, 0.0, 0.0);
        let xs = half_integer_samples(1_000.0, 100.0, 8);
        let scan = truncation_error_scan(&model, &VoronoiSeries::for_delta(1), &xs, &[1, 2, 8, 64]).unwrap();
        assert!(scan.rms.iter().all(|&r| r == scan.rms[0]));
        assert!(truncation_error_scan(&model, &VoronoiSeries::for_delta(1), &[], &[1]).is_err());
    }

    #[test]
    fn weight_shape() {
        let w = SmoothWeight::new(16.0).unwrap();
        assert_eq!(w.eval(7.9), 0.0);
        assert_eq!(w.eval(16.0), 1.0);
        assert_eq!(w.eval(32.0), 1.0);
        assert_eq!(w.eval(40.1), 0.0);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = w.eval(8.0 + 8.0 * i as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v) && v >= prev);
            prev = v;
        }
        // shoulders are mirror images, so R(t) + R(1-t) = 1
        assert!((w.eval(10.0) + w.eval(14.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_frequency_is_mass() {
        let w = SmoothWeight::new(1e4).unwrap();
        let i0 = oscillatory_integral(&w, 0.0).unwrap();
        assert!((i0.re - 1.5e4).abs() < 1e-7);
        assert!(i0.im.abs() < 1e-12);
        let p = oscillatory_integral(&SmoothWeight::plateau_only(1e4).unwrap(), 0.0).unwrap();
        assert!((p.re - 1e4).abs() < 1e-8);
    }

    #[test]
    fn conjugate_symmetry() {
        let w = SmoothWeight::new(1e4).unwrap();
        let a = oscillatory_integral(&w, 0.03).unwrap();
        let b = oscillatory_integral(&w, -0.03).unwrap();
        assert!((a - b.conj()).norm() < 1e-9);
    }
}
