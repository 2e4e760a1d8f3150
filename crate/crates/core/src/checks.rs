//! Verify suites: named measurements compared against acceptance windows.
//!
//! Measurement parameters are fixed constants here; the windows live in the
//! run configuration so frozen baselines can be updated without code edits.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

use crate::coefficients::{audit_tau, tau_via_eisenstein};
use crate::config::{RunConfig, Window};
use crate::context::Context;
use crate::d4::{fit_main_term, D4ErrorTerm, FitOptions};
use crate::error_term::{estimate_c, ConstantEstimate};
use crate::moments::{
    cauchy_schwarz_violations, delta1_moment_report, delta4_moment_report, delta_moment_report,
    dyadic_ladder, large_values_scan, mean_square_ratio,
};
use crate::coefficients::series_constant_b;
use crate::quadruples::{bound_ratio_scan, count_bruteforce, count_sorted, DeltaGrid, PairSums};
use crate::voronoi::{
    dyadic_k0, eval_truncated, eval_truncated_pairwise, half_integer_samples, oscillatory_integral,
    truncation_error_scan, SmoothWeight, VoronoiSeries,
};
use crate::{Error, Result};

pub const AUDIT_UPTO: usize = 10_000;
pub const ORACLE_UPTO: usize = crate::coefficients::EISENSTEIN_MAX_LIMIT;
/// N at which the two C estimators are compared.
pub const C_REFERENCE: usize = 1_000_000;

pub const VORONOI_X: f64 = 1e5;
pub const VORONOI_WIDTH: f64 = 1e4;
pub const VORONOI_SAMPLES: usize = 64;
pub const VORONOI_K0_EXPONENTS: (u32, u32) = (4, 14);

pub const OSCILLATORY_X: f64 = 1e6;
/// |D| X^{1/4} values of the decay table.
pub const OSCILLATORY_SCALED: [f64; 3] = [1.0, 10.0, 100.0];

pub const MOMENT_X_MIN: f64 = 1e4;
pub const MOMENT_X_MAX: f64 = 1e6;
pub const MEAN_SQUARE_X: [f64; 3] = [1e4, 1e5, 1e6];

pub const LARGE_VALUES_X: f64 = 5e5;

pub const QUAD_ORACLE_N: [usize; 5] = [4, 8, 16, 32, 64];
pub const QUAD_ORACLE_DELTA: [f64; 4] = [1e-6, 1e-3, 1e-1, 1.0];
pub const QUAD_LARGE_DELTA: f64 = 2.0;
pub const QUAD_ZERO_DELTA: f64 = 1e-12;
pub const QUAD_SWEEP_N: [usize; 5] = [128, 256, 512, 1024, 2048];
pub const QUAD_SWEEP_EXPONENTS: [f64; 6] = [-3.0, -2.5, -2.0, -1.5, -1.0, -0.5];
pub const QUAD_SLOPE_N: usize = 1024;
pub const QUAD_SLOPE_EXPONENTS: [f64; 5] = [-1.5, -1.25, -1.0, -0.75, -0.5];

/// Leading coefficient of the log^3 term in sum_{n<=x} d4(n).
pub const D4_LEADING: f64 = 1.0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Coefficients,
    Voronoi,
    Moments,
    LargeValues,
    Quadruples,
    D4,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Coefficients,
        Suite::Voronoi,
        Suite::Moments,
        Suite::LargeValues,
        Suite::Quadruples,
        Suite::D4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Coefficients => "coefficients",
            Suite::Voronoi => "voronoi",
            Suite::Moments => "moments",
            Suite::LargeValues => "largevalues",
            Suite::Quadruples => "quadruples",
            Suite::D4 => "d4",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

/// Suites named on the command line; `all` expands to every suite.
pub fn parse_suites(name: &str) -> Result<Vec<Suite>> {
    if name == "all" {
        Ok(Suite::ALL.to_vec())
    } else {
        Ok(vec![name.parse()?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub window: Window,
    pub pass: bool,
}

fn w(lo: f64, hi: f64) -> Window {
    Window { lo, hi }
}

/// Frozen acceptance windows, keyed by check name.
pub fn default_windows() -> BTreeMap<String, Window> {
    let big = 1e300;
    [
        ("coefficients.audit_violations", w(0.0, 0.0)),
        ("coefficients.oracle_mismatches", w(0.0, 0.0)),
        ("coefficients.tau2", w(-24.0, -24.0)),
        ("coefficients.tau3", w(252.0, 252.0)),
        ("coefficients.tau6", w(-6048.0, -6048.0)),
        ("coefficients.c_relative_disagreement", w(0.0, 1e-3)),
        ("coefficients.c_doubling_ratio", w(0.0, 0.999)),
        ("voronoi.delta.samples", w(32.0, 1e9)),
        ("voronoi.delta.rms_decreasing", w(1.0, 1.0)),
        ("voronoi.delta.rms_slope", w(-10.0, -0.15)),
        ("voronoi.delta1.normalized_max", w(0.0, 0.1)),
        ("voronoi.summation_order_rel_diff", w(0.0, 1e-9)),
        ("voronoi.oscillatory.zero_mass_rel_err", w(0.0, 1e-10)),
        ("voronoi.oscillatory.monotone", w(1.0, 1.0)),
        ("voronoi.oscillatory.decay_1_10", w(5.0, big)),
        ("voronoi.oscillatory.decay_10_100", w(5.0, big)),
        // Equality holds at D = 0; the slack covers the quadrature tolerance.
        ("voronoi.oscillatory.plateau_excess", w(0.0, 1.0 + 1e-9)),
        ("moments.mean_square.ratio_1e6", w(0.8, 1.2)),
        ("moments.mean_square.deviation_decreasing", w(1.0, 1.0)),
        ("moments.delta4_slope", w(0.0, 3.1)),
        ("moments.delta1_4_slope", w(5.3, 5.7)),
        ("moments.cauchy_schwarz_violations", w(0.0, 0.0)),
        ("largevalues.max_bound_ratio", w(0.0, 1.0)),
        ("largevalues.partition_fraction", w(0.0, 1.0)),
        ("largevalues.max_r_fraction", w(0.0, 1.0)),
        ("quadruples.oracle_mismatches", w(0.0, 0.0)),
        ("quadruples.delta_large_mismatches", w(0.0, 0.0)),
        ("quadruples.delta_zero_mismatches", w(0.0, 0.0)),
        ("quadruples.max_bound_ratio", w(0.0, 7.5)),
        ("quadruples.delta_slope", w(0.8, 1.2)),
        ("d4.mean_square_slope", w(0.0, 1.85)),
        ("d4.fourth_slope", w(0.0, 2.85)),
        ("d4.fourth_slope_minus_delta", w(-100.0, -1e-9)),
        ("d4.a3_relative_error", w(0.0, 0.2)),
        ("d4.fit_window_stability", w(0.0, 0.05)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    out: Vec<Check>,
}

impl Recorder<'_> {
    fn push(&mut self, name: &str, value: f64) {
        let window = self.cfg.window(name);
        self.out.push(Check {
            name: name.to_string(),
            value,
            window,
            pass: window.contains(value),
        });
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.push(name, if ok { 1.0 } else { 0.0 });
    }
}

fn relative_disagreement(e: &ConstantEstimate) -> f64 {
    e.uncertainty / e.value
}

fn coefficients_suite(ctx: &Context, r: &mut Recorder) -> Result<()> {
    let tau = ctx.tau()?;
    let audit_n = AUDIT_UPTO.min(tau.limit());
    r.push("coefficients.audit_violations", audit_tau(tau, audit_n).violations() as f64);
    let oracle_n = ORACLE_UPTO.min(tau.limit());
    let oracle = tau_via_eisenstein(oracle_n)?;
    let mismatches = (1..=oracle_n).filter(|&n| oracle.get(n) != tau.get(n)).count();
    r.push("coefficients.oracle_mismatches", mismatches as f64);
    r.push("coefficients.tau2", tau.get(2) as f64);
    r.push("coefficients.tau3", tau.get(3) as f64);
    r.push("coefficients.tau6", tau.get(6) as f64);
    let table = ctx.table()?;
    if table.limit() < C_REFERENCE {
        return Err(Error::TableTooShort {
            need: C_REFERENCE,
            have: table.limit(),
        });
    }
    let at_ref = estimate_c(&table.truncated(C_REFERENCE))?;
    r.push("coefficients.c_relative_disagreement", relative_disagreement(&at_ref));
    if table.limit() >= 2 * C_REFERENCE {
        let doubled = estimate_c(&table.truncated(2 * C_REFERENCE))?;
        r.push(
            "coefficients.c_doubling_ratio",
            doubled.uncertainty / at_ref.uncertainty,
        );
    }
    Ok(())
}

fn voronoi_suite(ctx: &Context, r: &mut Recorder) -> Result<()> {
    let model = ctx.model()?;
    let xs = half_integer_samples(VORONOI_X, VORONOI_WIDTH, VORONOI_SAMPLES);
    let ks = dyadic_k0(VORONOI_K0_EXPONENTS.0, VORONOI_K0_EXPONENTS.1);
    let plain = truncation_error_scan(model, &VoronoiSeries::for_delta(1), &xs, &ks)?;
    r.push("voronoi.delta.samples", xs.len() as f64);
    r.flag("voronoi.delta.rms_decreasing", plain.rms_strictly_decreasing());
    r.push("voronoi.delta.rms_slope", plain.slope);
    let integrated = truncation_error_scan(model, &VoronoiSeries::for_delta1(1), &xs, &ks)?;
    r.push("voronoi.delta1.normalized_max", integrated.normalized_range().1);

    let k0_max = *ks.last().unwrap();
    let mut worst: f64 = 0.0;
    for series in [VoronoiSeries::for_delta(k0_max), VoronoiSeries::for_delta1(k0_max)] {
        for &x in &xs {
            let a = eval_truncated(&series, model.table(), x)?;
            let b = eval_truncated_pairwise(&series, model.table(), x)?;
            worst = worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
        }
    }
    r.push("voronoi.summation_order_rel_diff", worst);

    let weight = SmoothWeight::new(OSCILLATORY_X)?;
    let plateau = SmoothWeight::plateau_only(OSCILLATORY_X)?;
    let i0 = oscillatory_integral(&weight, 0.0)?;
    r.push(
        "voronoi.oscillatory.zero_mass_rel_err",
        (i0 - weight.mass()).norm() / weight.mass(),
    );
    let xq = OSCILLATORY_X.powf(0.25);
    let mut ratios = Vec::new();
    let mut excess: f64 = 0.0;
    for s in std::iter::once(0.0).chain(OSCILLATORY_SCALED) {
        let smooth = oscillatory_integral(&weight, s / xq)?;
        let bare = oscillatory_integral(&plateau, s / xq)?;
        excess = excess.max((smooth - bare).norm() / weight.shoulder_mass());
        if s > 0.0 {
            ratios.push(smooth.norm() / i0.norm());
        }
    }
    r.flag("voronoi.oscillatory.monotone", ratios.windows(2).all(|p| p[1] < p[0]));
    r.push("voronoi.oscillatory.decay_1_10", ratios[0] / ratios[1]);
    r.push("voronoi.oscillatory.decay_10_100", ratios[1] / ratios[2]);
    r.push("voronoi.oscillatory.plateau_excess", excess);
    Ok(())
}

fn moment_ladder_x() -> Vec<f64> {
    dyadic_ladder(MOMENT_X_MIN, MOMENT_X_MAX)
}

fn moments_suite(ctx: &Context, r: &mut Recorder) -> Result<()> {
    let model = ctx.model()?;
    let b = series_constant_b(model.table())?;
    let ratios: Vec<f64> = MEAN_SQUARE_X
        .iter()
        .map(|&x| mean_square_ratio(model, &b, x))
        .collect::<Result<_>>()?;
    r.push("moments.mean_square.ratio_1e6", ratios[2]);
    r.flag(
        "moments.mean_square.deviation_decreasing",
        ratios.windows(2).all(|p| (p[1] - 1.0).abs() < (p[0] - 1.0).abs()),
    );
    let xs = moment_ladder_x();
    r.push("moments.delta4_slope", delta_moment_report(model, 4, &xs)?.fitted_slope);
    let m2 = delta1_moment_report(model, 2, &xs)?;
    let m4 = delta1_moment_report(model, 4, &xs)?;
    r.push("moments.delta1_4_slope", m4.fitted_slope);
    r.push(
        "moments.cauchy_schwarz_violations",
        cauchy_schwarz_violations(&xs, &m2.moment_values, &m4.moment_values).len() as f64,
    );
    Ok(())
}

/// H used by the large-values scan when none is given.
pub fn default_large_values_h(x: f64) -> f64 {
    x.sqrt().ceil()
}

fn large_values_suite(ctx: &Context, r: &mut Recorder) -> Result<()> {
    let model = ctx.model()?;
    let h = default_large_values_h(LARGE_VALUES_X);
    let rep = large_values_scan(model, LARGE_VALUES_X, h)?;
    let cap = LARGE_VALUES_X / h + 1.0;
    r.push("largevalues.max_bound_ratio", rep.max_bound_ratio());
    r.push("largevalues.partition_fraction", rep.partition_total() as f64 / cap);
    r.push(
        "largevalues.max_r_fraction",
        rep.r_values.iter().copied().max().unwrap_or(0) as f64 / cap,
    );
    Ok(())
}

fn quadruples_suite(r: &mut Recorder) -> Result<()> {
    let mut oracle = 0;
    let mut large = 0;
    let mut zero = 0;
    for &n in &QUAD_ORACLE_N {
        for &d in &QUAD_ORACLE_DELTA {
            if count_bruteforce(n, 4, d)?.count != count_sorted(n, 4, d)?.count {
                oracle += 1;
            }
        }
        let n4 = (n as u64).pow(4);
        if count_bruteforce(n, 4, QUAD_LARGE_DELTA)?.count != n4
            || count_sorted(n, 4, QUAD_LARGE_DELTA)?.count != n4
        {
            large += 1;
        }
        let diag = 2 * (n as u64).pow(2) - n as u64;
        if count_bruteforce(n, 4, QUAD_ZERO_DELTA)?.count != diag
            || count_sorted(n, 4, QUAD_ZERO_DELTA)?.count != diag
        {
            zero += 1;
        }
    }
    r.push("quadruples.oracle_mismatches", oracle as f64);
    r.push("quadruples.delta_large_mismatches", large as f64);
    r.push("quadruples.delta_zero_mismatches", zero as f64);
    let scan = bound_ratio_scan(&QUAD_SWEEP_N, &DeltaGrid::PowersOfN(QUAD_SWEEP_EXPONENTS.to_vec()), 4)?;
    r.push("quadruples.max_bound_ratio", scan.max_ratio);
    let sums = PairSums::sorted(QUAD_SLOPE_N, 4)?;
    let deltas: Vec<f64> = QUAD_SLOPE_EXPONENTS
        .iter()
        .map(|&e| (QUAD_SLOPE_N as f64).powf(e))
        .collect();
    let counts: Vec<f64> = deltas
        .iter()
        .map(|&d| Ok(sums.count(d)?.count as f64))
        .collect::<Result<_>>()?;
    let fit = crate::moments::exponent_fit(&deltas, &counts)?;
    r.push("quadruples.delta_slope", fit.slope);
    Ok(())
}

/// Mean-square and fourth-moment slopes of Delta_4 over the moment ladder.
pub fn d4_slopes(err: &D4ErrorTerm, xs: &[f64]) -> Result<(f64, f64)> {
    Ok((
        delta4_moment_report(err, 2, xs)?.fitted_slope,
        delta4_moment_report(err, 4, xs)?.fitted_slope,
    ))
}

fn d4_suite(ctx: &Context, r: &mut Recorder) -> Result<()> {
    let err = ctx.d4()?;
    let xs: Vec<f64> = moment_ladder_x()
        .into_iter()
        .filter(|&x| x <= err.limit() as f64 / 2.0)
        .collect();
    let (ms, fourth) = d4_slopes(err, &xs)?;
    r.push("d4.mean_square_slope", ms);
    r.push("d4.fourth_slope", fourth);
    let delta_fourth = delta_moment_report(ctx.model()?, 4, &xs)?.fitted_slope;
    r.push("d4.fourth_slope_minus_delta", fourth - delta_fourth);
    r.push(
        "d4.a3_relative_error",
        (err.main_term().coeffs[3] - D4_LEADING).abs() / D4_LEADING,
    );
    // Refit on the lower half of the default window and compare slopes.
    let full = FitOptions::default_for(err.limit());
    let half = FitOptions {
        window: (full.window.0, err.limit() / 2),
        ..full
    };
    let refit = D4ErrorTerm::new(err.table().clone(), fit_main_term(err.table(), half)?);
    let (ms2, fourth2) = d4_slopes(&refit, &xs)?;
    r.push(
        "d4.fit_window_stability",
        (ms2 - ms).abs().max((fourth2 - fourth).abs()),
    );
    Ok(())
}

pub fn run_suite(ctx: &Context, cfg: &RunConfig, suite: Suite) -> Result<Vec<Check>> {
    let mut r = Recorder { cfg, out: Vec::new() };
    match suite {
        Suite::Coefficients => coefficients_suite(ctx, &mut r)?,
        Suite::Voronoi => voronoi_suite(ctx, &mut r)?,
        Suite::Moments => moments_suite(ctx, &mut r)?,
        Suite::LargeValues => large_values_suite(ctx, &mut r)?,
        Suite::Quadruples => quadruples_suite(&mut r)?,
        Suite::D4 => d4_suite(ctx, &mut r)?,
    }
    Ok(r.out)
}

pub fn run_suites(ctx: &Context, cfg: &RunConfig, suites: &[Suite]) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &s in suites {
        out.extend(run_suite(ctx, cfg, s)?);
    }
    Ok(out)
}

/// The JSON report of a verify run.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub config: &'a RunConfig,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl<'a> Report<'a> {
    pub fn new(config: &'a RunConfig, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { config, checks, pass }
    }
}
