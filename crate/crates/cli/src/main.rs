use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use induced_prior::experiment::{compare_priors_with, emit_csv, parse_spec_file, run_experiment, ExperimentReport};
use induced_prior::graphfilter::{build_kernel, load_filter, save_filter, sinkhorn_balance, GuideTag};
use induced_prior::imgcore::{bernoulli_mask, load_mask, load_pgm, save_mask, save_pgm, shepard_interpolate, ShepardParams};
use induced_prior::solvers::{admm_pnp, solve_cg, solve_cg_laplacian, solve_closed_form, solve_direct, Denoiser};
use induced_prior::spectral::{decompose, load_spectral, save_spectral};
use induced_prior::{
    configure_threads, Error, ForwardOperator, Image, KernelParams, PriorKind, SearchWindow, SmoothingFilter,
    SolveConfig, SolveReport, TruncTol,
};

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "induced-prior", version, about = "Smoothing-filter priors for image inpainting")]
struct Cli {
    /// Seed for every randomized step [default: 1, or the spec file's `seed`].
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 is fully sequential and bit-reproducible.
    #[arg(long, global = true, env = "INDUCED_PRIOR_THREADS", default_value_t = 1)]
    threads: usize,

    /// Print progress and timings to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a Bernoulli sampling mask and write it as a PGM.
    Mask(MaskArgs),
    /// Build a balanced NLM filter from a guide image and cache it.
    Filter(FilterArgs),
    /// Reconstruct an image from an observation, mask and filter.
    Solve(SolveArgs),
    /// Run an inpainting sweep described by a spec file.
    Experiment(ExperimentArgs),
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be > 0"))
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be >= 0"))
    }
}

#[derive(Args, Debug)]
struct MaskArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Probability of keeping each pixel.
    #[arg(long, value_parser = unit_interval)]
    ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Guide image (PGM).
    #[arg(long)]
    guide: PathBuf,
    #[arg(long, default_value_t = 2)]
    patch_radius: usize,
    /// Search window radius; `full` compares every pixel pair (dense storage).
    #[arg(long, default_value = "auto")]
    search_radius: String,
    /// Kernel bandwidth.
    #[arg(long, default_value_t = 0.5, value_parser = positive)]
    h: f64,
    /// Sinkhorn tolerance on row sums.
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Output AIPW cache file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the eigendecomposition as an AIPS cache for `solve --spectral`.
    #[arg(long)]
    spectral_out: Option<PathBuf>,
    /// Relative eigenvalue truncation threshold for --spectral-out.
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    trunc_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PriorArg {
    Laplacian,
    Induced,
}

impl From<PriorArg> for PriorKind {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Laplacian => PriorKind::Conventional,
            PriorArg::Induced => PriorKind::Induced,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Closed,
    Cg,
    Admm,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Observed image (PGM).
    #[arg(long)]
    y: PathBuf,
    /// Sampling mask (PGM, white = observed).
    #[arg(long)]
    mask: PathBuf,
    /// Filter cache written by `filter`.
    #[arg(long)]
    filter: PathBuf,
    /// Optional spectral cache; computed from the filter when absent.
    #[arg(long)]
    spectral: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PriorArg::Induced)]
    prior: PriorArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Closed)]
    solver: SolverArg,
    #[arg(long, default_value_t = 1.0, value_parser = nonnegative)]
    rho: f64,
    /// Relative eigenvalue truncation threshold.
    #[arg(long, default_value_t = 1e-6, value_parser = nonnegative)]
    trunc_tol: f64,
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Reconstruction (PGM, clamped to [0, 1]).
    #[arg(long)]
    out: PathBuf,
    /// key=value solve report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Residual history CSV for iterative solvers.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// key=value experiment spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_usage() { EXIT_USAGE } else { EXIT_IO },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn config_line(pairs: &[(&str, &dyn Display)]) {
    let parts: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("config: {}", parts.join(" "));
}

fn opt(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "-".to_string(), |p| p.display().to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let result = match &cli.command {
        Command::Mask(a) => cmd_mask(&cli, a),
        Command::Filter(a) => cmd_filter(&cli, a),
        Command::Solve(a) => cmd_solve(&cli, a),
        Command::Experiment(a) => cmd_experiment(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_mask(cli: &Cli, a: &MaskArgs) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(1);
    config_line(&[
        ("command", &"mask"),
        ("width", &a.width),
        ("height", &a.height),
        ("ratio", &a.ratio),
        ("seed", &seed),
        ("threads", &cli.threads),
        ("out", &a.out.display()),
    ]);
    let mask = bernoulli_mask(a.width, a.height, a.ratio, seed)?;
    save_mask(&mask, &a.out)?;
    if cli.verbose {
        eprintln!("kept {} of {} pixels", mask.kept_count(), mask.len());
    }
    Ok(())
}

fn parse_search(s: &str, n: usize) -> Result<SearchWindow, Failure> {
    match s {
        "auto" => Ok(SearchWindow::auto(n)),
        "full" => Ok(SearchWindow::Full),
        v => v
            .parse()
            .map(SearchWindow::Radius)
            .map_err(|_| usage(format!("--search-radius: expected `auto`, `full` or an integer, got `{v}`"))),
    }
}

fn cmd_filter(cli: &Cli, a: &FilterArgs) -> Result<(), Failure> {
    let guide = load_pgm(&a.guide)?;
    let params = KernelParams {
        patch_radius: a.patch_radius,
        search: parse_search(&a.search_radius, guide.len())?,
        h: a.h,
        guide_tag: GuideTag::Oracle,
    };
    config_line(&[
        ("command", &"filter"),
        ("guide", &a.guide.display()),
        ("size", &format!("{}x{}", guide.width(), guide.height())),
        ("patch_radius", &params.patch_radius),
        ("search", &params.search),
        ("h", &params.h),
        ("tol", &a.tol),
        ("max_iters", &a.max_iters),
        ("threads", &cli.threads),
        ("out", &a.out.display()),
        ("spectral_out", &opt(&a.spectral_out)),
        ("trunc_tol", &a.trunc_tol),
    ]);
    let started = Instant::now();
    let kernel = build_kernel(&guide, &params)?;
    let w = sinkhorn_balance(&kernel, a.tol, a.max_iters)?;
    save_filter(&w, &a.out)?;
    println!("n={}", w.n);
    println!("storage={}", if w.is_dense() { "dense" } else { "sparse" });
    println!("balance_residual={:e}", w.balance_residual);
    println!("sinkhorn_iterations={}", w.sinkhorn_iterations);
    if w.warning.is_some() {
        eprintln!("WARN sinkhorn residual={:e}", w.balance_residual);
    }
    if let Some(path) = &a.spectral_out {
        let f = decompose(&w, TruncTol::Relative(a.trunc_tol))?;
        save_spectral(&f, path)?;
        println!("rank={}", f.m());
    }
    if cli.verbose {
        eprintln!("built filter in {:.2?}", started.elapsed());
    }
    Ok(())
}

fn shape_of(img: &Image) -> String {
    format!("{}x{}", img.width(), img.height())
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<(), Failure> {
    let kind: PriorKind = a.prior.into();
    config_line(&[
        ("command", &"solve"),
        ("y", &a.y.display()),
        ("mask", &a.mask.display()),
        ("filter", &a.filter.display()),
        ("spectral", &opt(&a.spectral)),
        ("prior", &kind),
        ("solver", &format!("{:?}", a.solver).to_lowercase()),
        ("rho", &a.rho),
        ("trunc_tol", &a.trunc_tol),
        ("tol", &a.tol),
        ("max_iters", &a.max_iters),
        ("threads", &cli.threads),
        ("out", &a.out.display()),
        ("report", &opt(&a.report)),
    ]);
    let y = load_pgm(&a.y)?;
    let mask = load_mask(&a.mask)?;
    if mask.shape() != y.shape() {
        return Err(usage(format!(
            "dimension mismatch: --y is {} but --mask is {}x{}",
            shape_of(&y),
            mask.width(),
            mask.height()
        )));
    }
    let w = load_filter(&a.filter)?;
    if w.n != y.len() {
        return Err(usage(format!(
            "dimension mismatch: --y is {} ({} pixels) but --filter has n={}",
            shape_of(&y),
            y.len(),
            w.n
        )));
    }
    if a.solver == SolverArg::Closed && !w.is_dense() && a.spectral.is_none() {
        return Err(usage(
            "--solver closed needs a dense filter with a spectral decomposition; \
             this filter is sparse (banded search window), use --solver admm",
        ));
    }
    let cfg = SolveConfig {
        rho: a.rho,
        tol: a.tol,
        max_iters: a.max_iters,
        ..SolveConfig::default()
    };
    let op = ForwardOperator::Mask(mask.clone());
    let started = Instant::now();
    let spectral = || -> Result<_, Failure> {
        let f = match &a.spectral {
            Some(p) => load_spectral(p)?,
            None => decompose(&w, TruncTol::Relative(a.trunc_tol))?,
        };
        if f.n() != w.n {
            return Err(usage(format!("--spectral has n={} but --filter has n={}", f.n(), w.n)));
        }
        if cli.verbose {
            eprintln!("spectral rank {} of {} after {:.2?}", f.m(), f.n(), started.elapsed());
        }
        Ok(f)
    };
    let report = match (a.solver, kind) {
        (SolverArg::Closed, PriorKind::Induced) => solve_closed_form(&op, &y, &spectral()?, &cfg)?,
        (SolverArg::Closed, PriorKind::Conventional) => solve_direct(&op, &y, &spectral()?, kind, &cfg)?,
        (SolverArg::Cg, PriorKind::Induced) => solve_cg(&op, &y, &spectral()?, kind, &cfg)?,
        (SolverArg::Cg, PriorKind::Conventional) => solve_cg_laplacian(&op, &y, &w, &cfg)?,
        (SolverArg::Admm, _) => {
            if a.rho <= 0.0 {
                return Err(usage("--rho must be > 0 for --solver admm"));
            }
            let init = if mask.kept_count() > 0 {
                shepard_interpolate(&y, &mask, ShepardParams::default())?
            } else {
                Image::zeros(y.width(), y.height())
            };
            admm_denoised(&op, &y, &w, kind, &cfg, &init)?
        }
    };
    for warning in &report.warnings {
        eprintln!("WARN {warning}");
    }
    save_pgm(&report.solution.clamped(), &a.out)?;
    write_report(&report, a.report.as_deref(), a.residuals.as_deref())?;
    if cli.verbose {
        eprintln!("solved in {:.2?}", started.elapsed());
    }
    Ok(())
}

fn admm_denoised(
    op: &ForwardOperator,
    y: &Image,
    w: &SmoothingFilter,
    kind: PriorKind,
    cfg: &SolveConfig,
    init: &Image,
) -> Result<SolveReport, Failure> {
    let denoiser = match kind {
        PriorKind::Induced => Denoiser::Filter(w),
        PriorKind::Conventional => Denoiser::LaplacianProx(w),
    };
    Ok(admm_pnp(op, y, &denoiser, cfg, init)?)
}

fn write_report(report: &SolveReport, record: Option<&Path>, residuals: Option<&Path>) -> Result<(), Failure> {
    match record {
        Some(p) => report.write_record(p)?,
        None => print!("{}", report.to_record()),
    }
    if let Some(p) = residuals {
        report.write_residual_csv(p)?;
    }
    Ok(())
}

fn print_best(report: &ExperimentReport) {
    for row in &report.rows {
        match row.best() {
            Some((rho, psnr)) => println!(
                "missing={} w_source={} prior={} best_rho={rho} best_psnr_db={psnr:.4}",
                row.missing, row.w_source, row.prior
            ),
            None => println!(
                "missing={} w_source={} prior={} failed",
                row.missing, row.w_source, row.prior
            ),
        }
    }
}

fn cmd_experiment(cli: &Cli, a: &ExperimentArgs) -> Result<(), Failure> {
    let parsed = parse_spec_file(&a.spec)?;
    let mut spec = parsed.spec;
    spec.threads = cli.threads;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    config_line(&[
        ("command", &"experiment"),
        ("spec", &a.spec.display()),
        ("image", &spec.image_path.display()),
        (
            "crop",
            &spec.crop.map_or_else(|| "none".to_string(), |(w, h)| format!("{w}x{h}")),
        ),
        ("missing", &format!("{:?}", spec.missing_fractions)),
        ("sigma", &spec.sigma),
        ("w_source", &format!("{:?}", spec.w_sources)),
        ("prior", &format!("{:?}", spec.priors)),
        ("solver", &spec.solver),
        ("rho", &format!("{:?}", spec.rho_grid)),
        ("patch_radius", &spec.kernel.patch_radius),
        ("search", &spec.kernel.search),
        ("h", &spec.kernel.h),
        ("seed", &spec.seed),
        ("threads", &cli.threads),
        ("out_csv", &a.out_csv.display()),
    ]);
    for w in &parsed.warnings {
        eprintln!("WARN {w}");
    }
    let started = Instant::now();
    let report = if parsed.compare {
        let paired = compare_priors_with(&spec, spec.priors[0], spec.priors[1])?;
        print!("{}", paired.render_table());
        paired.report
    } else {
        let r = run_experiment(&spec)?;
        print_best(&r);
        r
    };
    for w in &report.warnings {
        eprintln!("WARN {w}");
    }
    emit_csv(&report, &a.out_csv)?;
    if cli.verbose {
        eprintln!("experiment finished in {:.2?}", started.elapsed());
    }
    Ok(())
}
