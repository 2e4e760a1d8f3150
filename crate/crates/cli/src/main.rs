use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rslab::checks::{default_large_values_h, parse_suites, run_suites, Report};
use rslab::config::{OutputFormat, RunConfig};
use rslab::context::{CacheEvent, Context};
use rslab::error_term::{estimate_c, estimate_c_smoothed};
use rslab::moments::{
    delta1_moment_report, delta4_moment_report, delta_moment_report, dyadic_ladder,
    large_values_scan, MomentReport, Target,
};
use rslab::quadruples::{bound_ratio_scan, count_bruteforce, BoundRatioScan, DeltaGrid};
use rslab::voronoi::{dyadic_k0, half_integer_samples, truncation_error_scan, Expansion, VoronoiSeries};
use rslab::coefficients::series_constant_b;

/// Experiments on the Rankin-Selberg error term of the Ramanujan cusp form.
#[derive(Parser, Debug)]
#[command(name = "rslab", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides table_limit.
    #[arg(long, global = true)]
    limit: Option<usize>,
    #[arg(long, global = true)]
    d4_limit: Option<usize>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Build tables in memory without reading or writing the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Worker threads, 0 for one per core. Overrides RSLAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Acceptance window override, `name=lo,hi`. Repeatable.
    #[arg(long = "window", global = true, value_name = "NAME=LO,HI")]
    windows: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or load the coefficient tables and print a summary.
    Coeffs,
    /// Evaluate Delta and Delta_1 at the given points.
    Delta {
        #[arg(required = true)]
        x: Vec<f64>,
    },
    /// Truncation error of the Voronoi-type expansions.
    Voronoi(VoronoiArgs),
    /// Power moments over a dyadic ladder.
    Moments(MomentArgs),
    /// Large-values scan of Delta on [X, 2X].
    Largevalues(LargeValuesArgs),
    /// Counts of near-equal sums of k-th roots.
    Quadruples(QuadrupleArgs),
    /// Fitted main term and Delta_4 values.
    D4 {
        x: Vec<f64>,
    },
    /// Run a verify suite against the acceptance windows.
    Verify {
        /// coefficients, voronoi, moments, largevalues, quadruples, d4 or all.
        suite: String,
    },
    /// Emit a scan table as CSV.
    Scan {
        #[command(subcommand)]
        scan: Scan,
    },
}

#[derive(Subcommand, Debug)]
enum Scan {
    Voronoi(VoronoiArgs),
    Moments(MomentArgs),
    Largevalues(LargeValuesArgs),
    Quadruples(QuadrupleArgs),
}

#[derive(Args, Debug, Clone)]
struct VoronoiArgs {
    /// delta or delta1.
    #[arg(long, default_value = "delta")]
    expansion: String,
    #[arg(long, default_value_t = 1e5)]
    x: f64,
    #[arg(long, default_value_t = 1e4)]
    width: f64,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Smallest K0 is 2^this.
    #[arg(long, default_value_t = 4)]
    k0_min_exp: u32,
    #[arg(long, default_value_t = 14)]
    k0_max_exp: u32,
}

#[derive(Args, Debug, Clone)]
struct MomentArgs {
    /// delta, delta1 or delta4.
    #[arg(long, default_value = "delta")]
    target: String,
    #[arg(long, default_value_t = 4)]
    power: u32,
    #[arg(long, default_value_t = 1e4)]
    x_min: f64,
    #[arg(long, default_value_t = 1e6)]
    x_max: f64,
}

#[derive(Args, Debug, Clone)]
struct LargeValuesArgs {
    #[arg(long, default_value_t = 5e5)]
    x: f64,
    /// Subinterval length, default ceil(sqrt X).
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct QuadrupleArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![128usize, 256, 512, 1024, 2048])]
    n: Vec<usize>,
    /// Absolute delta values. Takes precedence over --delta-exp.
    #[arg(long, value_delimiter = ',')]
    delta: Vec<f64>,
    /// delta = N^e for each e.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_values_t = vec![-3.0, -2.5, -2.0, -1.5, -1.0, -0.5])]
    delta_exp: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    k: u32,
    /// Use the brute-force counter instead of the sorted one.
    #[arg(long)]
    bruteforce: bool,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(n) = cli.limit {
        cfg.set("table_limit", &n.to_string())?;
    }
    if let Some(n) = cli.d4_limit {
        cfg.set("d4_limit", &n.to_string())?;
    }
    if let Some(d) = &cli.cache_dir {
        cfg.cache_dir = d.clone();
    }
    if let Some(t) = cli.threads {
        cfg.thread_count = t;
    }
    if let Some(f) = &cli.format {
        cfg.set("output_format", f)?;
    }
    for w in &cli.windows {
        let Some((name, range)) = w.split_once('=') else {
            bail!("--window expects NAME=LO,HI, got {w:?}");
        };
        cfg.set(&format!("window.{name}"), range)?;
    }
    Ok(cfg)
}

/// Rows of plain values written as CSV with a header.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: &[&dyn Display]) {
        self.rows.push(cells.iter().map(|c| c.to_string()).collect());
    }

    fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        Ok(())
    }
}

/// A command result in both output shapes.
struct Output {
    json: Value,
    table: Table,
}

fn emit(out: Output, format: OutputFormat) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match format {
        OutputFormat::Json => writeln!(lock, "{}", serde_json::to_string_pretty(&out.json)?)?,
        OutputFormat::Csv => out.table.write(&mut lock)?,
    }
    Ok(())
}

fn coeffs(ctx: &Context) -> anyhow::Result<Output> {
    let table = ctx.table()?;
    let ls = estimate_c(table).ok();
    let smooth = estimate_c_smoothed(table).ok();
    let b = series_constant_b(table).ok();
    let mut t = Table::new(&["key", "value"]);
    t.row(&[&"n", &table.limit()]);
    t.row(&[&"c_1", &table.c(1)]);
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    t.row(&[&"c_estimate", &opt(ls.map(|e| e.value))]);
    t.row(&[&"c_uncertainty", &opt(ls.map(|e| e.uncertainty))]);
    t.row(&[&"c_smoothed", &opt(smooth.map(|e| e.value))]);
    t.row(&[&"c_smoothed_uncertainty", &opt(smooth.map(|e| e.uncertainty))]);
    t.row(&[&"b", &opt(b.map(|e| e.value))]);
    t.row(&[&"b_tail_bound", &opt(b.map(|e| e.tail_bound))]);
    Ok(Output {
        json: json!({
            "n": table.limit(),
            "c_1": table.c(1),
            "c_estimate": ls,
            "c_smoothed": smooth,
            "b": b,
        }),
        table: t,
    })
}

fn delta(ctx: &Context, xs: &[f64]) -> anyhow::Result<Output> {
    let model = ctx.model()?;
    let mut t = Table::new(&["x", "delta", "delta1"]);
    let mut rows = Vec::new();
    for &x in xs {
        let (d, d1) = (model.delta(x)?, model.delta1(x)?);
        t.row(&[&x, &d, &d1]);
        rows.push(json!({"x": x, "delta": d, "delta1": d1}));
    }
    Ok(Output {
        json: json!({"c": model.c(), "values": rows}),
        table: t,
    })
}

fn voronoi(ctx: &Context, a: &VoronoiArgs) -> anyhow::Result<Output> {
    let expansion = match a.expansion.as_str() {
        "delta" => Expansion::Delta,
        "delta1" => Expansion::Delta1,
        other => bail!("expansion must be delta or delta1, got {other:?}"),
    };
    if a.k0_min_exp > a.k0_max_exp {
        bail!("k0_min_exp exceeds k0_max_exp");
    }
    let xs = half_integer_samples(a.x, a.width, a.samples);
    let ks = dyadic_k0(a.k0_min_exp, a.k0_max_exp);
    let scan = truncation_error_scan(ctx.model()?, &VoronoiSeries::standard(expansion, 1), &xs, &ks)?;
    let mut t = Table::new(&["x", "k0", "exact", "truncated", "abs_err"]);
    for r in &scan.rows {
        t.row(&[&r.x, &r.k0, &r.exact, &r.truncated, &r.abs_err]);
    }
    Ok(Output {
        json: serde_json::to_value(&scan)?,
        table: t,
    })
}

fn moment_report(ctx: &Context, a: &MomentArgs) -> anyhow::Result<MomentReport> {
    let target: Target = a.target.parse()?;
    let xs = dyadic_ladder(a.x_min, a.x_max);
    Ok(match target {
        Target::Delta => delta_moment_report(ctx.model()?, a.power, &xs)?,
        Target::Delta1 => delta1_moment_report(ctx.model()?, a.power, &xs)?,
        Target::Delta4 => delta4_moment_report(ctx.d4()?, a.power, &xs)?,
    })
}

fn moments(ctx: &Context, a: &MomentArgs) -> anyhow::Result<Output> {
    let rep = moment_report(ctx, a)?;
    let mut t = Table::new(&["x", "moment"]);
    for (x, m) in rep.x_values.iter().zip(&rep.moment_values) {
        t.row(&[x, m]);
    }
    Ok(Output {
        json: serde_json::to_value(&rep)?,
        table: t,
    })
}

fn large_values(ctx: &Context, a: &LargeValuesArgs) -> anyhow::Result<Output> {
    let h = a.h.unwrap_or_else(|| default_large_values_h(a.x));
    let rep = large_values_scan(ctx.model()?, a.x, h)?;
    let mut t = Table::new(&["v", "r", "bound_ratio", "restricted_integral"]);
    for i in 0..rep.v_values.len() {
        t.row(&[&rep.v_values[i], &rep.r_values[i], &rep.bound_ratios[i], &rep.restricted_integrals[i]]);
    }
    Ok(Output {
        json: serde_json::to_value(&rep)?,
        table: t,
    })
}

fn quadruples(a: &QuadrupleArgs) -> anyhow::Result<Output> {
    let grid = if a.delta.is_empty() {
        DeltaGrid::PowersOfN(a.delta_exp.clone())
    } else {
        DeltaGrid::Absolute(a.delta.clone())
    };
    let scan = if a.bruteforce {
        let mut rows = Vec::new();
        for &n in &a.n {
            for d in grid.values(n) {
                rows.push(count_bruteforce(n, a.k, d)?);
            }
        }
        let max_ratio = rows.iter().map(|r| r.ratio()).fold(0.0, f64::max);
        BoundRatioScan { rows, max_ratio }
    } else {
        bound_ratio_scan(&a.n, &grid, a.k)?
    };
    let mut t = Table::new(&["n", "k", "delta", "count", "bound", "ratio", "anomalies"]);
    for r in &scan.rows {
        t.row(&[&r.n, &r.k_root, &r.delta, &r.count, &r.bound_value, &r.ratio(), &r.anomalies]);
    }
    Ok(Output {
        json: serde_json::to_value(&scan)?,
        table: t,
    })
}

fn d4(ctx: &Context, xs: &[f64]) -> anyhow::Result<Output> {
    let err = ctx.d4()?;
    let main = err.main_term();
    let mut t = Table::new(&["x", "main", "delta4"]);
    let mut rows = Vec::new();
    for &x in xs {
        let d = err.delta4(x)?;
        t.row(&[&x, &main.eval(x), &d]);
        rows.push(json!({"x": x, "main": main.eval(x), "delta4": d}));
    }
    Ok(Output {
        json: json!({"limit": err.limit(), "main_term": main, "values": rows}),
        table: t,
    })
}

enum Outcome {
    Done,
    ChecksFailed,
}

fn verify(ctx: &Context, cfg: &RunConfig, suite: &str) -> anyhow::Result<Outcome> {
    let suites = parse_suites(suite)?;
    let checks = run_suites(ctx, cfg, &suites)?;
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {} outside [{}, {}]", c.name, c.value, c.window.lo, c.window.hi))
        .collect();
    let mut t = Table::new(&["name", "value", "lo", "hi", "pass"]);
    for c in &checks {
        t.row(&[&c.name, &c.value, &c.window.lo, &c.window.hi, &c.pass]);
    }
    let report = Report::new(cfg, checks);
    emit(
        Output {
            json: serde_json::to_value(&report)?,
            table: t,
        },
        cfg.output_format,
    )?;
    if failing.is_empty() {
        Ok(Outcome::Done)
    } else {
        for f in &failing {
            eprintln!("FAIL {f}");
        }
        Ok(Outcome::ChecksFailed)
    }
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let cache = (!cli.no_cache).then(|| cfg.cache_dir.clone());
    let ctx = Context::new(cfg.table_limit, cfg.d4_limit, cache);
    let format = cfg.output_format;
    let result = match &cli.command {
        Command::Coeffs => emit(coeffs(&ctx)?, format),
        Command::Delta { x } => emit(delta(&ctx, x)?, format),
        Command::Voronoi(a) => emit(voronoi(&ctx, a)?, format),
        Command::Moments(a) => emit(moments(&ctx, a)?, format),
        Command::Largevalues(a) => emit(large_values(&ctx, a)?, format),
        Command::Quadruples(a) => emit(quadruples(a)?, format),
        Command::D4 { x } => emit(d4(&ctx, x)?, format),
        Command::Scan { scan } => {
            let out = match scan {
                Scan::Voronoi(a) => voronoi(&ctx, a)?,
                Scan::Moments(a) => moments(&ctx, a)?,
                Scan::Largevalues(a) => large_values(&ctx, a)?,
                Scan::Quadruples(a) => quadruples(a)?,
            };
            emit(out, OutputFormat::Csv)
        }
        Command::Verify { suite } => {
            let outcome = verify(&ctx, cfg, suite)?;
            log_events(&ctx);
            return Ok(outcome);
        }
    };
    result?;
    log_events(&ctx);
    Ok(Outcome::Done)
}

fn log_events(ctx: &Context) {
    for e in ctx.events() {
        match e {
            CacheEvent::Loaded(p) => eprintln!("cache: loaded {}", p.display()),
            CacheEvent::Built(p) => eprintln!("cache: built {}", p.display()),
            CacheEvent::Computed(what) => eprintln!("cache: computed {what} in memory"),
        }
    }
}

/// Exit codes: 0 success, 1 failed checks, 2 error, 3 corrupt cache.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load_config(&cli).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.thread_count)
            .build()?;
        pool.install(|| run(&cli, &cfg))
    });
    match outcome {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let corrupt = e
                .chain()
                .any(|c| matches!(c.downcast_ref(), Some(rslab::Error::CacheCorrupt { .. })));
            ExitCode::from(if corrupt { 3 } else { 2 })
        }
    }
}
