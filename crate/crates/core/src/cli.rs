//! The `hypoell` command-line tool.
//!
//! Exit codes: 0 when every check passes, 1 when a mathematical check fails,
//! 2 for usage and configuration errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FitMode, ResolventMethod, RunConfig};
use crate::decay::{fit_decay, log_grid, DecayFitResult, DecaySource};
use crate::error::{Error, Result};
use crate::exponents::{lemma34_suite_with, qh_eval, qh_eval_mutated, qh_table_csv};
use crate::grid::{write_atomic, GridFunction};
use crate::kalman::hypoellipticity_report;
use crate::norms::{anisotropic_norm, isotropic_norm};
use crate::ou::{OUKernel, QuadConfig};
use crate::solver::{
    interior_half_box, resolvent_apply, resolvent_direct, semigroup_apply, SolveConfig,
};
use crate::suites::{bernstein_suite, rank_suite, trace_suite};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "HYPOELL_OUT";

const IOTA_FLOOR: f64 = 2.0 - 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "hypoell",
    version,
    about = "Analyze degenerate hypoelliptic operators and check their semigroup estimates"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed for randomized suites.
    #[arg(long, global = true, value_name = "U64", default_value_t = 0)]
    pub seed: u64,
    /// Inject a known defect to exercise the checks (`qh`).
    #[arg(long, global = true, value_name = "NAME")]
    pub mutate: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Hypoellipticity report and adapted block structure.
    Analyze,
    /// Exhaustive and randomized property suites.
    Verify,
    /// Run the regularized solver and compare with the exact kernel.
    Simulate,
    /// Fit the small-time decay of a derivative.
    FitDecay,
    /// Resolvent contraction and Schauder-type norm ratios.
    Schauder,
}

/// Outcome of a command: exit code and a summary for stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
}

impl Outcome {
    fn new(pass: bool, summary: String) -> Self {
        Self {
            code: if pass { EXIT_PASS } else { EXIT_FAIL },
            summary,
        }
    }
}

/// Exit code for an error escaping a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch(_)
        | Error::EmptySamples
        | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_FAIL,
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    mutate: Option<String>,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        write_atomic(&self.out.join(name), contents.as_bytes())
    }
}

/// Parses arguments, runs the command, prints the summary and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
        }
    };
    match run(&cli) {
        Ok(o) => {
            print!("{}", o.summary);
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml_str("")?,
    };
    if let Some(m) = &cli.mutate {
        if m != "qh" {
            return Err(Error::Config(format!("unknown mutation '{m}' (known: qh)")));
        }
        if cli.command != Command::Verify {
            return Err(Error::Config("--mutate applies to verify only".into()));
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| default_out_dir().to_path_buf());
    let ctx = Ctx {
        cfg,
        out,
        seed: cli.seed,
        mutate: cli.mutate.clone(),
    };
    let job = || match cli.command {
        Command::Analyze => cmd_analyze(&ctx),
        Command::Verify => cmd_verify(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::FitDecay => cmd_fit_decay(&ctx),
        Command::Schauder => cmd_schauder(&ctx),
    };
    match cli.jobs {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(job),
        None => job(),
    }
}

fn kv_csv(rows: &[(String, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

fn cmd_analyze(ctx: &Ctx) -> Result<Outcome> {
    let op = ctx.cfg.operator()?;
    let spec = op.constant_spec()?;
    let probes = ctx.cfg.analyze.clone().unwrap_or_default().probe_times;
    let report = hypoellipticity_report(&spec, &probes)?;
    let mut text = report.to_text();
    let mut kv = report.to_kv();
    let pass = report.hypoelliptic();
    if pass {
        let a = ctx.cfg.adapted_operator()?;
        let sizes: Vec<String> = a.structure.sizes.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(text, "block sizes: ({})", sizes.join(","));
        let _ = writeln!(text, "adapted basis U (columns):");
        for i in 0..a.structure.dim() {
            let row: Vec<String> = (0..a.structure.dim())
                .map(|j| format!("{:>10.6}", a.structure.basis_u[(i, j)]))
                .collect();
            let _ = writeln!(text, "  {}", row.join(" "));
        }
        kv.push(("block_sizes".into(), sizes.join(" ")));
    } else {
        let _ = writeln!(
            text,
            "{}",
            if report.consistent {
                "not hypoelliptic"
            } else {
                "not hypoelliptic: characterizations disagree"
            }
        );
    }
    ctx.write("analyze.txt", &text)?;
    ctx.write("analyze.csv", &kv_csv(&kv))?;
    Ok(Outcome::new(pass, text))
}

fn cmd_verify(ctx: &Ctx) -> Result<Outcome> {
    let v = ctx.cfg.verify.clone().unwrap_or_default();
    let bounds = v.suite_bounds()?;
    let mutated = ctx.mutate.as_deref() == Some("qh");
    let suite = if mutated {
        lemma34_suite_with(qh_eval_mutated, bounds)?
    } else {
        lemma34_suite_with(qh_eval, bounds)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let rank = rank_suite(&v.rank_config()?, &mut rng)?;
    let bern = bernstein_suite(v.bernstein_k_max, v.bernstein_r_max, &mut rng)?;
    let trace = trace_suite(v.trace_samples, v.trace_n_max, &mut rng)?;

    let mut text = String::new();
    let mut csv = String::from("suite,property,checked,status,witness\n");
    let _ = writeln!(
        text,
        "exponent suite (r <= {}, |beta| <= {}, h <= {}){}:",
        bounds.r_max,
        bounds.k_max,
        bounds.h_max,
        if mutated { " [mutated q_h]" } else { "" }
    );
    text.push_str(&suite.to_text());
    for r in &suite.results {
        let _ = writeln!(
            csv,
            "exponents,{},{},{},\"{}\"",
            r.name,
            r.checked,
            if r.passed() { "pass" } else { "fail" },
            r.counterexample.clone().unwrap_or_default()
        );
    }
    let _ = writeln!(
        text,
        "rank suite: {} matrices, smallest singular value {:.3e}{}",
        rank.matrices,
        rank.sigma_min,
        rank.failure
            .as_ref()
            .map_or(String::new(), |f| format!(", FAIL: {f}"))
    );
    let _ = writeln!(
        csv,
        "rank,full_column_rank,{},{},\"{}\"",
        rank.matrices,
        if rank.failure.is_none() {
            "pass"
        } else {
            "fail"
        },
        rank.failure.clone().unwrap_or_default()
    );
    for b in &bern {
        let pass = b.passed(IOTA_FLOOR);
        let _ = writeln!(
            text,
            "bernstein k = {}, r = {}: {} conditions, iota = {:.12}{}",
            b.k,
            b.r,
            b.conditions_checked,
            b.iota,
            if pass { "" } else { " FAIL" }
        );
        let witness: Vec<String> = b
            .failures
            .iter()
            .map(|f| format!("{}: {}", f.condition, f.detail))
            .collect();
        let _ = writeln!(
            csv,
            "bernstein,k{}_r{},{},{},\"{}\"",
            b.k,
            b.r,
            b.conditions_checked,
            if pass { "pass" } else { "fail" },
            witness.join("; ")
        );
    }
    let _ = writeln!(
        text,
        "trace inequality: {} samples, worst margin {:.3e}{}",
        trace.samples,
        trace.worst_margin,
        trace
            .failure
            .as_ref()
            .map_or(String::new(), |f| format!(", FAIL: {f}"))
    );
    let _ = writeln!(
        csv,
        "trace,inequality,{},{},\"{}\"",
        trace.samples,
        if trace.failure.is_none() {
            "pass"
        } else {
            "fail"
        },
        trace.failure.clone().unwrap_or_default()
    );
    let pass = suite.passed()
        && rank.failure.is_none()
        && bern.iter().all(|b| b.passed(IOTA_FLOOR))
        && trace.failure.is_none();
    ctx.write("verify.txt", &text)?;
    ctx.write("verify.csv", &csv)?;
    ctx.write("qh_table.csv", &qh_table_csv(bounds)?)?;
    Ok(Outcome::new(pass, text))
}

fn oracle_distance(kernel: &OUKernel, datum: &crate::ou::Datum, u: &GridFunction) -> Result<f64> {
    let inner = interior_half_box(u)?;
    let exact = kernel.apply_grid(datum, &inner, &QuadConfig::default())?;
    Ok(inner
        .values
        .iter()
        .zip(&exact.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn cmd_simulate(ctx: &Ctx) -> Result<Outcome> {
    let sim = ctx
        .cfg
        .simulate
        .clone()
        .ok_or_else(|| Error::Config("a [simulate] section is required".into()))?;
    let a = ctx.cfg.adapted_operator()?;
    let datum = sim.datum.to_datum(a.spec.dim_n)?;
    let t_final = *sim.times.last().expect("validated nonempty");
    let cfg = ctx.cfg.grid.solve_config(t_final)?;
    let tr = match semigroup_apply(&a.spec, &cfg, &datum, &sim.times) {
        Ok(t) => t,
        Err(Error::MaxPrinciple(m)) => {
            let s = format!("maximum principle violated: {m}\n");
            ctx.write("simulate.txt", &s)?;
            return Ok(Outcome::new(false, s));
        }
        Err(e) => return Err(e),
    };
    let mut csv = String::from("t,sup,min,oracle_distance\n");
    let mut pass = true;
    let mut worst = 0.0f64;
    for (k, (t, u)) in tr.times.iter().zip(&tr.snapshots).enumerate() {
        let dist = if a.has_f {
            None
        } else {
            Some(oracle_distance(
                &OUKernel::new(&a.constant, *t)?,
                &datum,
                u,
            )?)
        };
        let min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            csv,
            "{t:.6},{:.10e},{min:.10e},{}",
            u.sup_norm(),
            dist.map_or("NA".to_string(), |d| format!("{d:.10e}"))
        );
        if let Some(d) = dist {
            worst = worst.max(d);
        }
        ctx.write(&format!("u_{k:03}.csv"), &u.to_csv())?;
    }
    let mut text = format!(
        "{} snapshots, {} linear iterations, monotone scheme: {}, upwinded pairs: {}\n\
         initial sup {:.6e}, max sup {:.6e}, min value {:.6e}\n",
        tr.times.len(),
        tr.iterations,
        tr.monotone,
        tr.upwinded,
        tr.initial_sup,
        tr.max_sup,
        tr.min_value
    );
    if !a.has_f {
        let _ = writeln!(
            text,
            "largest interior half-box distance to the exact kernel: {worst:.6e}"
        );
    }
    if let Some(tol) = sim.oracle_tolerance {
        if a.has_f {
            return Err(Error::Config("oracle_tolerance needs f = 0".into()));
        }
        if worst > tol {
            pass = false;
            let _ = writeln!(text, "FAIL: distance exceeds {tol:e}");
        }
    }
    ctx.write("simulate.csv", &csv)?;
    ctx.write("simulate.txt", &text)?;
    Ok(Outcome::new(pass, text))
}

fn fit_row(mode: &str, r: &DecayFitResult, tol: f64) -> String {
    let a: Vec<String> = r.alpha.0.iter().map(|v| v.to_string()).collect();
    format!(
        "{mode},{},{},{:.6},{:.6},{:.6e},{:.6},{:.6},{:.6},{:.6},{}\n",
        a.join(" "),
        r.h,
        r.slope,
        r.intercept,
        r.residual,
        r.window.0,
        r.window.1,
        r.target.to_f64(),
        r.excess(),
        r.compliant(tol)
    )
}

fn cmd_fit_decay(ctx: &Ctx) -> Result<Outcome> {
    let fc = ctx
        .cfg
        .fit_decay
        .clone()
        .ok_or_else(|| Error::Config("a [fit_decay] section with alpha is required".into()))?;
    let a = ctx.cfg.adapted_operator()?;
    let n = a.spec.dim_n;
    let datum = fc.datum.to_datum(n)?;
    let ts = log_grid(fc.t_min, fc.t_max, fc.points)?;
    let w = fc.probe_half_width;
    let probes = GridFunction::new(
        vec![-w; n],
        vec![w; n],
        vec![fc.probe_points; n],
        vec![0.0; fc.probe_points.pow(n as u32)],
    )?;
    let mut modes = Vec::new();
    if matches!(fc.mode, FitMode::Oracle | FitMode::Both) {
        if a.has_f {
            return Err(Error::Config("oracle mode needs f = 0".into()));
        }
        modes.push((
            "oracle",
            DecaySource::Oracle {
                spec: a.constant.clone(),
                quad: QuadConfig::default(),
                step_factor: fc.step_factor,
            },
        ));
    }
    if matches!(fc.mode, FitMode::Solver | FitMode::Both) {
        modes.push((
            "solver",
            DecaySource::Solver {
                spec: a.spec.clone(),
                cfg: ctx.cfg.grid.solve_config(fc.t_max)?,
            },
        ));
    }
    let mut csv =
        String::from("mode,alpha,h,slope,intercept,residual,t_lo,t_hi,target,excess,compliant\n");
    let mut text = String::new();
    let mut pass = true;
    let mut slopes = Vec::new();
    for (name, src) in &modes {
        let r = match fit_decay(src, &a.structure, &fc.alpha, fc.h, &datum, &ts, &probes) {
            Ok(r) => r,
            Err(Error::DerivativeAnnihilated(m)) => {
                let s = format!("{name}: derivative annihilated: {m}\n");
                ctx.write("decay.txt", &s)?;
                return Ok(Outcome::new(false, s));
            }
            Err(e) => return Err(e),
        };
        csv.push_str(&fit_row(name, &r, fc.tolerance));
        ctx.write(&format!("decay_samples_{name}.csv"), &r.samples_csv())?;
        let ok = r.compliant(fc.tolerance) || !fc.check_target;
        pass &= ok;
        let _ = writeln!(
            text,
            "{name}: slope {:.4} over [{:.4}, {:.4}], target {} ({}), residual {:.2e}{}",
            r.slope,
            r.window.0,
            r.window.1,
            r.target,
            r.target.to_f64(),
            r.residual,
            if ok { "" } else { " FAIL" }
        );
        slopes.push(r.slope);
    }
    if slopes.len() == 2 {
        let d = (slopes[0] - slopes[1]).abs();
        let ok = d <= fc.agreement;
        pass &= ok;
        let _ = writeln!(
            text,
            "oracle/solver slope difference {d:.4} (allowed {}){}",
            fc.agreement,
            if ok { "" } else { " FAIL" }
        );
    }
    ctx.write("decay.csv", &csv)?;
    ctx.write("decay.txt", &text)?;
    Ok(Outcome::new(pass, text))
}

/// Per-datum record of the Schauder command.
#[derive(Debug, Clone, PartialEq)]
pub struct SchauderRow {
    pub f_sup: f64,
    pub lambda_r_sup: f64,
    pub tail_bound: f64,
    pub anisotropic: f64,
    pub isotropic: f64,
}

impl SchauderRow {
    pub fn ratio(&self) -> f64 {
        self.anisotropic / self.isotropic
    }
}

/// `lambda ||R f||`, and the anisotropic `2 + theta` estimate of `R f` over
/// the isotropic `theta` estimate of `f`, both on the interior half-box.
pub fn schauder_row(
    spec: &crate::operator::OperatorSpec,
    structure: &crate::basis::BlockStructure,
    cfg: &SolveConfig,
    method: ResolventMethod,
    datum: &crate::ou::Datum,
    lambda: f64,
    theta: f64,
) -> Result<SchauderRow> {
    let (grid, f_sup, tail_bound) = match method {
        ResolventMethod::Quadrature => {
            let r = resolvent_apply(spec, cfg, datum, lambda)?;
            (r.grid, r.f_sup, r.tail_bound)
        }
        ResolventMethod::Direct => {
            let g = resolvent_direct(spec, cfg, datum, lambda)?;
            let t = cfg.template(spec.dim_n)?;
            let f_sup = (0..t.len())
                .map(|i| datum.eval(&t.coords(i)).abs())
                .fold(0.0, f64::max);
            (g, f_sup, 0.0)
        }
    };
    let inner = interior_half_box(&grid)?;
    let f = inner.with_values(
        (0..inner.len())
            .map(|i| datum.eval(&inner.coords(i)))
            .collect(),
    )?;
    Ok(SchauderRow {
        f_sup,
        lambda_r_sup: lambda * grid.sup_norm(),
        tail_bound,
        anisotropic: anisotropic_norm(&inner, structure, 2.0 + theta)?,
        isotropic: isotropic_norm(&f, theta)?,
    })
}

fn cmd_schauder(ctx: &Ctx) -> Result<Outcome> {
    let sc = ctx
        .cfg
        .schauder
        .clone()
        .unwrap_or_default();
    let a = ctx.cfg.adapted_operator()?;
    let mut cfg = ctx.cfg.grid.solve_config(sc.horizon)?;
    cfg.dt = sc.dt;
    cfg.validate()?;
    let tol = 10.0 * cfg.tol;
    let mut csv = String::from("datum,f_sup,lambda_r_sup,tail_bound,anisotropic,isotropic,ratio\n");
    let mut text = String::new();
    let mut pass = true;
    let mut ratios = Vec::new();
    for (i, d) in sc.data.iter().enumerate() {
        let datum = d.to_datum(a.spec.dim_n)?;
        let row = schauder_row(
            &a.spec,
            &a.structure,
            &cfg,
            sc.method,
            &datum,
            sc.lambda,
            sc.theta,
        )?;
        let contraction = row.lambda_r_sup <= row.f_sup + tol;
        pass &= contraction;
        ratios.push(row.ratio());
        let _ = writeln!(
            csv,
            "{i},{:.10e},{:.10e},{:.3e},{:.10e},{:.10e},{:.10e}",
            row.f_sup,
            row.lambda_r_sup,
            row.tail_bound,
            row.anisotropic,
            row.isotropic,
            row.ratio()
        );
        let _ = writeln!(
            text,
            "datum {i}: lambda |R f| = {:.6} vs |f| = {:.6}{}, ratio {:.4}",
            row.lambda_r_sup,
            row.f_sup,
            if contraction { "" } else { " FAIL" },
            row.ratio()
        );
    }
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    let ok = spread < sc.max_spread;
    pass &= ok;
    let _ = writeln!(
        text,
        "ratio spread {spread:.4} (allowed < {}){}",
        sc.max_spread,
        if ok { "" } else { " FAIL" }
    );
    ctx.write("schauder.csv", &csv)?;
    ctx.write("schauder.txt", &text)?;
    Ok(Outcome::new(pass, text))
}

/// Default output directory when neither `--out`, the environment nor the
/// config names one.
pub fn default_out_dir() -> &'static Path {
    Path::new("hypoell-out")
}
