//! The `gofkit` command line.
//!
//! Exit status: 0 on success (whatever the test decides), 1 on invalid input
//! or configuration, 2 on runtime or numeric failure. Every subcommand that
//! draws random numbers requires `--seed`.
//!
//! `--config <file>` reads a TOML file whose top-level keys are the global
//! flags (`seed`, `workers`, `quiet`) and whose tables, named after the
//! subcommands, hold that subcommand's flags with dashes replaced by
//! underscores. Flags given on the command line take precedence.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gofkit_core::calibrate::NullCalibration;
use gofkit_core::dists::AlternativeSpec;
use gofkit_core::embedding::{run_test, TestKind, TestParams};
use gofkit_core::spectrum::SpectralBasis;
use serde::Deserialize;

use crate::bench::{emit, fig1_plan, run_plan, ExperimentPlan, Scale};
use crate::cache::{self, SpectrumCache};
use crate::calibration::{calibrate, save_calibration, load_calibration, with_workers, CalibrationChoice, RhoChoice, StatisticSpec};
use crate::io::{read_sample, write_sample};
use crate::report::render;
use crate::resolve::SpectrumRequest;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "gofkit", version, about = "Kernel-embedding goodness-of-fit tests (MMD, moderated MMD, adaptive)")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalArgs {
    /// Master seed; required by every Monte-Carlo path [default: none]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replicates and calibration [default: all cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML file with default flag values; command-line flags override it
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Suppress progress messages on stderr
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute and store the spectral decomposition of a kernel under a null
    Decompose(DecomposeArgs),
    /// Run one goodness-of-fit test on a sample
    Test(TestArgs),
    /// Simulate a null threshold and store it
    Calibrate(CalibrateArgs),
    /// Run a power/level experiment plan
    Power(PowerArgs),
    /// Re-run a packaged experiment
    Reproduce(ReproduceArgs),
    /// Draw a sample from a distribution spec and write it as CSV
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeArgs {
    /// Kernel id, e.g. `gaussian:bw=0.3`, `cosine`, `cosine:terms=200`, `linear`
    #[arg(long)]
    pub kernel: Option<String>,
    /// Null id, e.g. `uniform-cube:d=1`, `uniform-sphere:d=3` [default: uniform-cube:d=1]
    #[arg(long)]
    pub null: Option<String>,
    /// Truncation K (largest harmonic degree on spheres) [default: automatic]
    #[arg(long)]
    pub trunc: Option<usize>,
    /// Quadrature nodes N [default: max(4K, 256)]
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Output spectrum file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recompute even when a cached decomposition exists
    #[arg(long)]
    pub no_cache: bool,
    /// Cache directory [default: $GOFKIT_CACHE or .gofkit-cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestArgs {
    /// Test: mmd, m3d or adaptive
    #[arg(long)]
    pub kind: Option<String>,
    /// Spectrum file written by `gofkit decompose`
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Sample CSV, one row per observation
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Level [default: 0.05]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Moderation level for m3d
    #[arg(long)]
    pub rho: Option<f64>,
    /// Interpolation index for the m3d rho schedule (used when --rho is absent)
    #[arg(long)]
    pub theta: Option<f64>,
    /// Constant of the rho schedule [default: 1]
    #[arg(long)]
    pub rho_c: Option<f64>,
    /// Grid for the adaptive test; only `auto` [default: auto]
    #[arg(long)]
    pub grid: Option<String>,
    /// Calibration: mc[:REPS], chisq[:REPS], empirical[:REPS], normal, theory
    /// [default: chisq:100000 for mmd, normal for m3d, empirical:200 for adaptive]
    #[arg(long)]
    pub calibrate: Option<String>,
    /// Stored calibration from `gofkit calibrate` (instead of --calibrate)
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateArgs {
    /// Test: mmd, m3d or adaptive
    #[arg(long)]
    pub kind: Option<String>,
    /// Spectrum file written by `gofkit decompose`
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Sample size the threshold is for
    #[arg(long)]
    pub n: Option<usize>,
    /// Level [default: 0.05]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Replications [default: 100000 for chisq, 200 for empirical]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Method: chisq, empirical, normal, theory [default: chisq for mmd, normal for m3d, empirical for adaptive]
    #[arg(long)]
    pub method: Option<String>,
    /// Moderation level for m3d
    #[arg(long)]
    pub rho: Option<f64>,
    /// Interpolation index for the m3d rho schedule
    #[arg(long)]
    pub theta: Option<f64>,
    /// Constant of the rho schedule [default: 1]
    #[arg(long)]
    pub rho_c: Option<f64>,
    /// Output calibration file (TOML)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerArgs {
    /// Experiment plan (TOML)
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Output directory [default: the plan's `output`]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recompute the spectrum even when cached
    #[arg(long)]
    pub no_cache: bool,
    /// Cache directory [default: $GOFKIT_CACHE or .gofkit-cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Error versus sample size on product Marron–Wand and Gaussian-mixture alternatives
    Fig1,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceArgs {
    /// Experiment to run
    #[arg(value_enum)]
    #[serde(skip)]
    pub experiment: Option<Experiment>,
    /// Problem size: desk (d=5, minutes) or full (d=100, hours) [default: desk]
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// Output directory [default: <experiment>-<scale>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recompute the spectrum even when cached
    #[arg(long)]
    pub no_cache: bool,
    /// Cache directory [default: $GOFKIT_CACHE or .gofkit-cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleArgs {
    /// Distribution spec, e.g. `vmf:d=3,kappa=1` or `marron-wand:skewed-unimodal,d=2`
    #[arg(long)]
    pub alt: Option<String>,
    /// Number of observations
    #[arg(long)]
    pub n: Option<usize>,
    /// Output CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    workers: Option<usize>,
    quiet: bool,
    decompose: DecomposeArgs,
    test: TestArgs,
    calibrate: CalibrateArgs,
    power: PowerArgs,
    reproduce: ReproduceArgs,
    sample: SampleArgs,
}

macro_rules! overlay {
    ($cli:expr, $file:expr; opts: $($o:ident),*; flags: $($f:ident),*) => {{
        let mut out = $cli;
        let file = $file;
        $( if out.$o.is_none() { out.$o = file.$o; } )*
        $( out.$f = out.$f || file.$f; )*
        out
    }};
}

fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start].lines().count().max(1));
        Error::format(path, line, e.message().to_string())
    })
}

/// Fully resolved invocation.
struct Context<'a> {
    seed: Option<u64>,
    workers: Option<usize>,
    quiet: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Context<'_> {
    fn progress(&mut self, msg: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "{msg}");
        }
    }

    fn seed(&self) -> Result<u64> {
        self.seed.ok_or(Error::Missing("--seed"))
    }

    fn print(&mut self, text: &str) -> Result<()> {
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    }
}

fn required<T>(value: Option<T>, flag: &'static str) -> Result<T> {
    value.ok_or(Error::Missing(flag))
}

fn parse_kind(kind: Option<String>) -> Result<TestKind> {
    Ok(TestKind::parse(&required(kind, "--kind")?)?)
}

fn rho_choice(rho: Option<f64>, theta: Option<f64>, c: Option<f64>) -> Option<RhoChoice> {
    match (rho, theta) {
        (Some(r), _) => Some(RhoChoice::Fixed(r)),
        (None, Some(theta)) => Some(RhoChoice::Schedule {
            theta,
            c: c.unwrap_or(1.0),
        }),
        (None, None) => None,
    }
}

fn alpha_or_default(alpha: Option<f64>) -> Result<f64> {
    let alpha = alpha.unwrap_or(0.05);
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::invalid("--alpha", "alpha must lie in (0, 1)"))
    }
}

fn statistic_for(kind: TestKind, basis: &SpectralBasis, n: usize, rho: Option<RhoChoice>) -> Result<StatisticSpec> {
    if kind == TestKind::M3d && rho.is_none() {
        return Err(Error::Missing("--rho or --theta"));
    }
    StatisticSpec::new(kind, basis, n, rho, None)
}

fn cache_for(dir: Option<PathBuf>) -> SpectrumCache {
    dir.map_or_else(SpectrumCache::default_location, SpectrumCache::new)
}

fn decompose(args: DecomposeArgs, ctx: &mut Context<'_>) -> Result<()> {
    let request = SpectrumRequest {
        kernel: required(args.kernel, "--kernel")?,
        null: args.null.unwrap_or_else(|| "uniform-cube:d=1".into()),
        truncation: args.trunc,
        nodes: args.nodes,
        seed: ctx.seed,
    };
    let out = required(args.out, "--out")?;
    let cache = cache_for(args.cache_dir);
    let (basis, hit) = cache.get_or_build(&request, args.no_cache)?;
    ctx.progress(if hit { "spectrum loaded from cache" } else { "spectrum computed" });
    cache::save(&basis, &out)?;
    let eig = basis.eigenvalues();
    let head: Vec<String> = eig.iter().take(5).map(|l| format!("{l:.6e}")).collect();
    let mut text = String::new();
    text.push_str(&format!("kernel: {}\n", basis.kernel_id()));
    text.push_str(&format!("null: {}\n", basis.null().id()));
    text.push_str(&format!("blocks: {}\n", basis.len()));
    text.push_str(&format!("dimension: {}\n", basis.dimension()));
    text.push_str(&format!("leading_eigenvalues: {}\n", head.join(" ")));
    text.push_str(&format!("decay_exponent: {}\n", basis.decay_exponent()));
    text.push_str(&format!("degenerate: {}\n", basis.is_degenerate()));
    if let Some(p) = basis.nystrom_parts() {
        let amp = p.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        text.push_str(&format!("max_node_amplitude: {amp}\n"));
    }
    text.push_str(&format!("written: {}\n", out.display()));
    ctx.print(&text)
}

fn test(args: TestArgs, ctx: &mut Context<'_>) -> Result<()> {
    let kind = parse_kind(args.kind)?;
    let spectrum = required(args.spectrum, "--spectrum")?;
    let data = required(args.data, "--data")?;
    let alpha = alpha_or_default(args.alpha)?;
    if let Some(g) = args.grid.as_deref().filter(|g| *g != "auto") {
        return Err(Error::invalid("--grid", format!("unsupported grid `{g}`; only `auto`")));
    }
    if args.calibrate.is_some() && args.calibration.is_some() {
        return Err(Error::invalid("--calibration", "give either --calibrate or --calibration"));
    }
    let basis = cache::load(&spectrum)?;
    let sample = read_sample(&data, basis.domain())?;
    let n = sample.len();
    let rho = rho_choice(args.rho, args.theta, args.rho_c);
    let statistic = statistic_for(kind, &basis, n, rho)?;
    let calibration: NullCalibration = match args.calibration {
        Some(path) => {
            let (cal, id) = load_calibration(&path)?;
            if id.as_deref().is_some_and(|id| id != basis.kernel_id()) {
                return Err(Error::invalid("--calibration", "calibration was built for another spectrum"));
            }
            if cal.n.is_some_and(|m| m != n) {
                return Err(Error::invalid(
                    "--calibration",
                    format!("calibration is for n = {}, sample has n = {n}", cal.n.unwrap_or(0)),
                ));
            }
            cal
        }
        None => {
            let choice = match args.calibrate {
                Some(c) => CalibrationChoice::parse(&c, kind)?,
                None => CalibrationChoice::default_for(kind),
            };
            let seed = if choice.needs_seed() { Some(ctx.seed()?) } else { None };
            ctx.progress(&format!("calibrating ({choice})"));
            let workers = ctx.workers;
            with_workers(workers, || calibrate(&basis, &statistic, choice, n, alpha, seed))??
        }
    };
    let params = TestParams {
        alpha,
        rho: match &statistic {
            crate::calibration::StatisticSpec::M3d { rho } => Some(*rho),
            _ => None,
        },
        grid: match &statistic {
            crate::calibration::StatisticSpec::Adaptive { grid } => Some(grid.clone()),
            _ => None,
        },
    };
    let report = run_test(&basis, &sample, kind, &params, &calibration)?;
    ctx.print(&render(&report, basis.kernel_id()))
}

fn calibrate_cmd(args: CalibrateArgs, ctx: &mut Context<'_>) -> Result<()> {
    let kind = parse_kind(args.kind)?;
    let spectrum = required(args.spectrum, "--spectrum")?;
    let n = required(args.n, "--n")?;
    let out = required(args.out, "--out")?;
    let alpha = alpha_or_default(args.alpha)?;
    let basis = cache::load(&spectrum)?;
    let rho = rho_choice(args.rho, args.theta, args.rho_c);
    let statistic = statistic_for(kind, &basis, n, rho)?;
    let mut choice = match args.method {
        Some(m) => CalibrationChoice::parse(&m, kind)?,
        None => CalibrationChoice::default_for(kind),
    };
    if let Some(r) = args.reps {
        choice = match choice {
            CalibrationChoice::Chisq { .. } => CalibrationChoice::Chisq { reps: r },
            CalibrationChoice::Empirical { .. } => CalibrationChoice::Empirical { reps: r },
            other => return Err(Error::invalid("--reps", format!("`{other}` calibration has no replications"))),
        };
    }
    let seed = if choice.needs_seed() { Some(ctx.seed()?) } else { None };
    ctx.progress(&format!("calibrating ({choice})"));
    let workers = ctx.workers;
    let cal = with_workers(workers, || calibrate(&basis, &statistic, choice, n, alpha, seed))??;
    save_calibration(&cal, Some(basis.kernel_id()), &out)?;
    ctx.print(&format!(
        "method: {}\nalpha: {}\nquantile: {}\nreplications: {}\nwritten: {}\n",
        cal.method,
        cal.alpha,
        cal.quantile,
        cal.replications,
        out.display()
    ))
}

fn summarize(table: &crate::bench::PowerTable, null: &str) -> String {
    let mut text = String::from("alternative | test | n | reps | rejection_rate | error\n");
    for c in table.aggregate() {
        let error = if c.alternative == null { c.rejection_rate } else { c.acceptance_rate };
        text.push_str(&format!(
            "{} | {} | {} | {} | {:.3} | {:.3}\n",
            c.alternative, c.test, c.n, c.reps, c.rejection_rate, error
        ));
    }
    text
}

fn run_and_emit(plan: &ExperimentPlan, out: &Path, cache: Option<&SpectrumCache>, ctx: &mut Context<'_>) -> Result<()> {
    ctx.progress(&format!(
        "running {} alternatives x {} tests x {} sample sizes x {} replicates",
        plan.alternatives.len(),
        plan.tests.len(),
        plan.n.len(),
        plan.reps
    ));
    let workers = ctx.workers;
    let table = with_workers(workers, || run_plan(plan, cache))??;
    let mut files = emit(&table, out, &plan.null)?;
    let plan_path = out.join("plan.toml");
    std::fs::write(&plan_path, plan.to_toml()).map_err(|e| Error::io(&plan_path, e))?;
    files.push(plan_path);
    let mut text = summarize(&table, &plan.null);
    for f in files {
        text.push_str(&format!("written: {}\n", f.display()));
    }
    ctx.print(&text)
}

fn power(args: PowerArgs, ctx: &mut Context<'_>) -> Result<()> {
    let mut plan = ExperimentPlan::load(&required(args.plan, "--plan")?)?;
    if let Some(s) = ctx.seed {
        plan.seed = s;
    }
    let out = args.out.or_else(|| plan.output.clone()).ok_or(Error::Missing("--out"))?;
    let cache = (!args.no_cache).then(|| cache_for(args.cache_dir));
    run_and_emit(&plan, &out, cache.as_ref(), ctx)
}

fn reproduce(args: ReproduceArgs, ctx: &mut Context<'_>) -> Result<()> {
    let experiment = required(args.experiment, "<experiment>")?;
    let scale = args.scale.unwrap_or(Scale::Desk);
    let seed = ctx.seed()?;
    let plan = match experiment {
        Experiment::Fig1 => fig1_plan(scale, seed),
    };
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("fig1-{}", scale.name())));
    let cache = (!args.no_cache).then(|| cache_for(args.cache_dir));
    run_and_emit(&plan, &out, cache.as_ref(), ctx)
}

fn sample(args: SampleArgs, ctx: &mut Context<'_>) -> Result<()> {
    let spec = AlternativeSpec::parse(&required(args.alt, "--alt")?)?;
    let n = required(args.n, "--n")?;
    let out = required(args.out, "--out")?;
    let seed = ctx.seed()?;
    let s = spec.sample(n, seed)?;
    write_sample(&out, &s)?;
    ctx.print(&format!("written: {} ({} x {})\n", out.display(), s.len(), s.dim()))
}

/// Runs an already parsed invocation.
pub fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let file = match &cli.global.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    let mut ctx = Context {
        seed: cli.global.seed.or(file.seed),
        workers: cli.global.workers.or(file.workers),
        quiet: cli.global.quiet || file.quiet,
        out,
        err,
    };
    match cli.command {
        Command::Decompose(a) => decompose(
            overlay!(a, file.decompose; opts: kernel, null, trunc, nodes, out, cache_dir; flags: no_cache),
            &mut ctx,
        ),
        Command::Test(a) => test(
            overlay!(a, file.test; opts: kind, spectrum, data, alpha, rho, theta, rho_c, grid, calibrate, calibration; flags:),
            &mut ctx,
        ),
        Command::Calibrate(a) => calibrate_cmd(
            overlay!(a, file.calibrate; opts: kind, spectrum, n, alpha, reps, method, rho, theta, rho_c, out; flags:),
            &mut ctx,
        ),
        Command::Power(a) => power(
            overlay!(a, file.power; opts: plan, out, cache_dir; flags: no_cache),
            &mut ctx,
        ),
        Command::Reproduce(a) => reproduce(
            overlay!(a, file.reproduce; opts: scale, out, cache_dir; flags: no_cache),
            &mut ctx,
        ),
        Command::Sample(a) => sample(overlay!(a, file.sample; opts: alt, n, out; flags:), &mut ctx),
    }
}

/// Parses `argv` and runs it, writing to the given streams. Returns the exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
