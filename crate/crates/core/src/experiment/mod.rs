//! Inpainting sweeps: masks, oracle or estimated filters, a `ρ` grid per prior,
//! best-PSNR selection and paired prior comparisons.

mod output;
mod specfile;

use std::fmt;
use std::path::PathBuf;

use faer::Mat;
use rayon::prelude::*;

pub use output::{emit_csv, parse_csv, render_csv, CsvRow};
pub use specfile::{parse_spec_file, parse_spec_str, ParsedSpec};

use crate::error::{Error, Result};
use crate::graphfilter::{build_kernel, sinkhorn_balance, GuideTag, KernelParams, SearchWindow, SinkhornOptions, SmoothingFilter};
use crate::imgcore::{
    self, bernoulli_mask, degrade, load_pgm, psnr, shepard_interpolate, Image, NoiseSpec, SamplingMask, ShepardParams,
};
use crate::solvers::{
    admm_pnp, solve_cg, solve_cg_laplacian, ClosedFormSystem, Denoiser, DirectSystem, ForwardOperator, SolveConfig,
};
use crate::spectral::{decompose, PriorKind, SpectralFilter, TruncTol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WSource {
    /// Filter built from the ground truth.
    Oracle,
    /// Filter built from a Shepard interpolation of the observation.
    Estimated,
}

impl WSource {
    pub fn as_str(self) -> &'static str {
        match self {
            WSource::Oracle => "oracle",
            WSource::Estimated => "estimated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(WSource::Oracle),
            "estimated" => Some(WSource::Estimated),
            _ => None,
        }
    }

    fn guide_tag(self) -> GuideTag {
        match self {
            WSource::Oracle => GuideTag::Oracle,
            WSource::Estimated => GuideTag::ShepardInit,
        }
    }
}

impl fmt::Display for WSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Reduced closed form for the induced prior, dense direct solve for the
    /// Laplacian.
    ClosedForm,
    Cg,
    Admm,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::ClosedForm => "closed",
            SolverKind::Cg => "cg",
            SolverKind::Admm => "admm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "closed" | "closed-form" => Some(SolverKind::ClosedForm),
            "cg" => Some(SolverKind::Cg),
            "admm" => Some(SolverKind::Admm),
            _ => None,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `count` points log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

pub fn default_rho_grid() -> Vec<f64> {
    log_grid(1e-3, 1e2, 15)
}

/// Kernel defaults for noise level `sigma`; `h` falls back to 0.1 when
/// `sigma = 0`.
pub fn default_kernel(sigma: f64, n: usize) -> KernelParams {
    let mut k = KernelParams::for_noise(sigma, n, GuideTag::Oracle);
    if sigma == 0.0 {
        k.h = 0.1;
    }
    k
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub image_path: PathBuf,
    /// Centre crop applied after loading.
    pub crop: Option<(usize, usize)>,
    /// Fractions of missing pixels, each in `[0, 1)`.
    pub missing_fractions: Vec<f64>,
    pub sigma: f64,
    pub w_sources: Vec<WSource>,
    pub priors: Vec<PriorKind>,
    pub solver: SolverKind,
    pub rho_grid: Vec<f64>,
    /// `guide_tag` is set per filter from its source.
    pub kernel: KernelParams,
    pub sinkhorn: SinkhornOptions,
    pub trunc: TruncTol,
    pub seed: u64,
    /// Iterative solver stopping rule.
    pub tol: f64,
    pub max_iters: usize,
    /// Recorded in the report metadata; the pool itself is configured by the caller.
    pub threads: usize,
}

impl ExperimentSpec {
    /// Desk-scale defaults: 64×64 crop, σ = 0.05, fractions 0.2..0.8, both
    /// filter sources and priors, closed-form solver.
    pub fn new(image_path: impl Into<PathBuf>) -> Self {
        let sigma = 0.05;
        ExperimentSpec {
            image_path: image_path.into(),
            crop: Some((64, 64)),
            missing_fractions: vec![0.2, 0.4, 0.6, 0.8],
            sigma,
            w_sources: vec![WSource::Oracle, WSource::Estimated],
            priors: vec![PriorKind::Conventional, PriorKind::Induced],
            solver: SolverKind::ClosedForm,
            rho_grid: default_rho_grid(),
            kernel: default_kernel(sigma, 64 * 64),
            sinkhorn: SinkhornOptions::default(),
            trunc: TruncTol::default(),
            seed: 1,
            tol: 1e-6,
            max_iters: 500,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config { line: None, message: m });
        if let Some(f) = self.missing_fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return bad(format!("missing fraction {f} outside [0, 1)"));
        }
        if self.rho_grid.is_empty() {
            return bad("rho grid is empty".into());
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return bad(format!("rho {r} must be > 0"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be >= 0", self.sigma));
        }
        if self.w_sources.is_empty() || self.priors.is_empty() {
            return bad("at least one w_source and one prior are required".into());
        }
        self.kernel.validate()
    }

    pub fn mask_seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9E37_79B9_7F4A_7C15)
    }

    fn solve_config(&self, rho: f64) -> SolveConfig {
        SolveConfig {
            rho,
            tol: self.tol,
            max_iters: self.max_iters,
            ..SolveConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub rho: f64,
    /// `None` when the solve failed.
    pub psnr_db: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub missing: f64,
    pub w_source: WSource,
    pub prior: PriorKind,
    pub sweep: Vec<SweepPoint>,
}

impl ReportRow {
    /// Best `(ρ, PSNR)` over the sweep; ties go to the smallest `ρ`.
    pub fn best(&self) -> Option<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.sweep.iter().filter_map(|p| p.psnr_db.map(|q| (p.rho, q))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.into_iter().fold(None, |best, (r, q)| match best {
            Some((_, bq)) if bq >= q => best,
            _ => Some((r, q)),
        })
    }

    pub fn best_psnr(&self) -> Option<f64> {
        self.best().map(|b| b.1)
    }

    pub fn best_rho(&self) -> Option<f64> {
        self.best().map(|b| b.0)
    }

    pub fn failed(&self) -> bool {
        self.sweep.iter().any(|p| p.error.is_some())
    }
}

/// Per-filter diagnostics recorded in the metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterDiagnostics {
    pub missing: f64,
    pub w_source: WSource,
    pub balance_residual: f64,
    pub sinkhorn_iterations: usize,
    /// Retained rank and extreme eigenvalues when a decomposition was needed.
    pub rank: Option<usize>,
    pub eig_range: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Ordered `key=value` pairs; contains no timing so reports are
    /// reproducible byte for byte.
    pub metadata: Vec<(String, String)>,
    pub diagnostics: Vec<FilterDiagnostics>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn row(&self, missing: f64, w_source: WSource, prior: PriorKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.missing == missing && r.w_source == w_source && r.prior == prior)
    }
}

/// Everything a sweep needs for one `(fraction, source)` cell.
pub struct Cell<'a> {
    pub truth: &'a Image,
    pub observed: &'a Image,
    pub mask: &'a SamplingMask,
    /// ADMM starting point.
    pub init: &'a Image,
}

/// `I − W` as a dense matrix.
pub fn laplacian_matrix(w: &SmoothingFilter) -> Mat<f64> {
    let n = w.n;
    let mut m = Mat::zeros(n, n);
    w.weights.for_each(|i, j, v| m[(i, j)] = -v);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    m
}

fn needs_spectrum(solver: SolverKind, priors: &[PriorKind]) -> bool {
    solver != SolverKind::Admm && priors.contains(&PriorKind::Induced)
}

/// Sweeps `rho_grid` for each prior with a fixed filter. `spectral` is
/// required for the induced prior with the closed-form and CG solvers.
pub fn sweep_priors(
    cell: &Cell<'_>,
    w: &SmoothingFilter,
    spectral: Option<&SpectralFilter>,
    priors: &[PriorKind],
    solver: SolverKind,
    rho_grid: &[f64],
    make_cfg: impl Fn(f64) -> SolveConfig + Sync,
) -> Vec<(PriorKind, Vec<SweepPoint>)> {
    let a = ForwardOperator::Mask(cell.mask.clone());
    let evaluate = |res: Result<Image>, rho: f64| match res.and_then(|x| psnr(cell.truth, &x.clamped())) {
        Ok(p) => SweepPoint {
            rho,
            psnr_db: Some(p),
            error: None,
        },
        Err(e) => SweepPoint {
            rho,
            psnr_db: None,
            error: Some(e.to_string()),
        },
    };
    let failed_all = |e: Error| -> Vec<SweepPoint> {
        rho_grid
            .iter()
            .map(|&rho| SweepPoint {
                rho,
                psnr_db: None,
                error: Some(e.to_string()),
            })
            .collect()
    };
    let need_spectral = || {
        spectral.ok_or_else(|| Error::contract("the induced prior needs a spectral decomposition with this solver"))
    };

    priors
        .iter()
        .map(|&kind| {
            let points = match (solver, kind) {
                (SolverKind::ClosedForm, PriorKind::Induced) => {
                    match need_spectral().and_then(|f| ClosedFormSystem::new(&a, cell.observed, f)) {
                        Ok(sys) => rho_grid
                            .par_iter()
                            .map(|&rho| {
                                let x = sys.solve(rho).and_then(|(x, _)| Image::with_shape_of(cell.observed, x));
                                evaluate(x, rho)
                            })
                            .collect(),
                        Err(e) => failed_all(e),
                    }
                }
                (SolverKind::ClosedForm, PriorKind::Conventional) => {
                    match DirectSystem::with_prior(&a, cell.observed, laplacian_matrix(w), kind) {
                        Ok(sys) => rho_grid
                            .par_iter()
                            .map(|&rho| {
                                let x = sys.solve(rho).and_then(|(x, _)| Image::with_shape_of(cell.observed, x));
                                evaluate(x, rho)
                            })
                            .collect(),
                        Err(e) => failed_all(e),
                    }
                }
                (SolverKind::Cg, PriorKind::Induced) => match need_spectral() {
                    Ok(f) => rho_grid
                        .par_iter()
                        .map(|&rho| {
                            let r = solve_cg(&a, cell.observed, f, kind, &make_cfg(rho)).map(|r| r.solution);
                            evaluate(r, rho)
                        })
                        .collect(),
                    Err(e) => failed_all(e),
                },
                (SolverKind::Cg, PriorKind::Conventional) => rho_grid
                    .par_iter()
                    .map(|&rho| {
                        let r = solve_cg_laplacian(&a, cell.observed, w, &make_cfg(rho)).map(|r| r.solution);
                        evaluate(r, rho)
                    })
                    .collect(),
                (SolverKind::Admm, _) => {
                    let denoiser = match kind {
                        PriorKind::Induced => Denoiser::Filter(w),
                        PriorKind::Conventional => Denoiser::LaplacianProx(w),
                    };
                    rho_grid
                        .par_iter()
                        .map(|&rho| {
                            let r = admm_pnp(&a, cell.observed, &denoiser, &make_cfg(rho), cell.init).map(|r| r.solution);
                            evaluate(r, rho)
                        })
                        .collect()
                }
            };
            (kind, points)
        })
        .collect()
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn unique<T: PartialEq + Copy>(v: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Loads the image named by the spec (cropped when requested) and runs the
/// protocol on it.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let img = load_pgm(&spec.image_path)?;
    let truth = match spec.crop {
        Some((w, h)) => img.center_crop(w, h)?,
        None => img,
    };
    run_experiment_on(spec, &truth)
}

/// [`run_experiment`] with the ground truth supplied directly.
pub fn run_experiment_on(spec: &ExperimentSpec, truth: &Image) -> Result<ExperimentReport> {
    spec.validate()?;
    let (width, height) = truth.shape();
    let n = truth.len();
    let fractions = dedup_sorted(spec.missing_fractions.clone());
    let sources = unique(&spec.w_sources);
    let priors = unique(&spec.priors);
    let rho_grid = dedup_sorted(spec.rho_grid.clone());
    let mut report = ExperimentReport::default();
    if fractions.len() != spec.missing_fractions.len() {
        report
            .warnings
            .push("duplicate missing fractions were removed".to_string());
    }
    if spec.kernel.search == SearchWindow::Full && n > crate::spectral::MAX_DENSE_DIM {
        return Err(Error::contract(format!("full-search filter on {n} pixels is too large")));
    }

    for &missing in &fractions {
        let mask = bernoulli_mask(width, height, 1.0 - missing, spec.mask_seed())?;
        let noise = NoiseSpec::new(spec.sigma, spec.noise_seed())?;
        let observed = degrade(truth, &mask, &noise)?;
        let masked = Image::with_shape_of(
            &observed,
            observed
                .data()
                .iter()
                .zip(mask.keep())
                .map(|(&v, &k)| if k { v } else { 0.0 })
                .collect(),
        )?;
        let shepard = if mask.kept_count() > 0 {
            shepard_interpolate(&masked, &mask, ShepardParams::default())?
        } else {
            Image::zeros(width, height)
        };
        for &source in &sources {
            let guide = match source {
                WSource::Oracle => truth,
                WSource::Estimated => &shepard,
            };
            let params = KernelParams {
                guide_tag: source.guide_tag(),
                ..spec.kernel
            };
            let w = sinkhorn_balance(&build_kernel(guide, &params)?, spec.sinkhorn.tol, spec.sinkhorn.max_iters)?;
            if let Some(msg) = &w.warning {
                report.warnings.push(format!("missing={missing} w_source={source}: {msg}"));
            }
            let spectral = if needs_spectrum(spec.solver, &priors) {
                Some(decompose(&w, spec.trunc)?)
            } else {
                None
            };
            report.diagnostics.push(FilterDiagnostics {
                missing,
                w_source: source,
                balance_residual: w.balance_residual,
                sinkhorn_iterations: w.sinkhorn_iterations,
                rank: spectral.as_ref().map(|f| f.m()),
                eig_range: spectral
                    .as_ref()
                    .and_then(|f| f.stats())
                    .map(|s| (s.min_eigenvalue, s.max_eigenvalue)),
            });
            let cell = Cell {
                truth,
                observed: &observed,
                mask: &mask,
                init: &shepard,
            };
            for (prior, sweep) in sweep_priors(&cell, &w, spectral.as_ref(), &priors, spec.solver, &rho_grid, |rho| {
                spec.solve_config(rho)
            }) {
                for p in sweep.iter().filter(|p| p.error.is_some()) {
                    report.warnings.push(format!(
                        "missing={missing} w_source={source} prior={prior} rho={}: {}",
                        p.rho,
                        p.error.as_deref().unwrap_or_default()
                    ));
                }
                report.rows.push(ReportRow {
                    missing,
                    w_source: source,
                    prior,
                    sweep,
                });
            }
        }
    }
    report.metadata = metadata(spec, truth, &fractions, &rho_grid, &report.diagnostics);
    Ok(report)
}

fn metadata(
    spec: &ExperimentSpec,
    truth: &Image,
    fractions: &[f64],
    rho_grid: &[f64],
    diagnostics: &[FilterDiagnostics],
) -> Vec<(String, String)> {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    let mut m = vec![
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("rng".to_string(), imgcore::RNG_ALGORITHM.to_string()),
        ("seed".to_string(), spec.seed.to_string()),
        ("mask_seed".to_string(), spec.mask_seed().to_string()),
        ("noise_seed".to_string(), spec.noise_seed().to_string()),
        ("image".to_string(), spec.image_path.display().to_string()),
        ("size".to_string(), format!("{}x{}", truth.width(), truth.height())),
        ("sigma".to_string(), spec.sigma.to_string()),
        ("missing".to_string(), join(fractions)),
        ("solver".to_string(), spec.solver.to_string()),
        ("rho_grid".to_string(), join(rho_grid)),
        ("patch_radius".to_string(), spec.kernel.patch_radius.to_string()),
        ("search".to_string(), spec.kernel.search.to_string()),
        ("h".to_string(), spec.kernel.h.to_string()),
        ("sinkhorn_tol".to_string(), spec.sinkhorn.tol.to_string()),
        ("sinkhorn_max_iters".to_string(), spec.sinkhorn.max_iters.to_string()),
        (
            "trunc".to_string(),
            match spec.trunc {
                TruncTol::Relative(r) => format!("relative:{r}"),
                TruncTol::Absolute(a) => format!("absolute:{a}"),
            },
        ),
        ("tol".to_string(), spec.tol.to_string()),
        ("max_iters".to_string(), spec.max_iters.to_string()),
        ("threads".to_string(), spec.threads.to_string()),
    ];
    for d in diagnostics {
        let mut v = format!(
            "balance_residual={:e} sinkhorn_iterations={}",
            d.balance_residual, d.sinkhorn_iterations
        );
        if let Some(r) = d.rank {
            v.push_str(&format!(" rank={r}"));
        }
        if let Some((lo, hi)) = d.eig_range {
            v.push_str(&format!(" eig_min={lo:e} eig_max={hi:e}"));
        }
        m.push((format!("filter.{}.{}", d.missing, d.w_source), v));
    }
    m
}

/// Best-PSNR pair for one `(fraction, source)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedRow {
    pub missing: f64,
    pub w_source: WSource,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

impl PairedRow {
    /// `right − left` in dB.
    pub fn gap(&self) -> Option<f64> {
        Some(self.right? - self.left?)
    }
}

#[derive(Clone, Debug)]
pub struct PairedReport {
    pub left: PriorKind,
    pub right: PriorKind,
    pub report: ExperimentReport,
    pub pairs: Vec<PairedRow>,
}

impl PairedReport {
    pub fn mean_gap(&self) -> Option<f64> {
        let gaps: Option<Vec<f64>> = self.pairs.iter().map(|p| p.gap()).collect();
        let gaps = gaps?;
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
    }

    pub fn render_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| format!("{x:.2}"));
        let mut s = format!(
            "{:<8} {:<10} {:>10} {:>10} {:>8}\n",
            "missing",
            "w_source",
            self.left.as_str(),
            self.right.as_str(),
            "gap"
        );
        for p in &self.pairs {
            s.push_str(&format!(
                "{:<8} {:<10} {:>10} {:>10} {:>8}\n",
                format!("{:.2}", p.missing),
                p.w_source.as_str(),
                cell(p.left),
                cell(p.right),
                p.gap().map_or_else(|| "-".to_string(), |g| format!("{g:+.2}"))
            ));
        }
        s
    }
}

/// Runs the Laplacian and the induced prior on identical masks, noise and
/// filters.
pub fn compare_priors(spec: &ExperimentSpec) -> Result<PairedReport> {
    compare_priors_with(spec, PriorKind::Conventional, PriorKind::Induced)
}

fn load_truth(spec: &ExperimentSpec) -> Result<Image> {
    let img = load_pgm(&spec.image_path)?;
    match spec.crop {
        Some((w, h)) => img.center_crop(w, h),
        None => Ok(img),
    }
}

pub fn compare_priors_with(spec: &ExperimentSpec, left: PriorKind, right: PriorKind) -> Result<PairedReport> {
    compare_priors_on(spec, &load_truth(spec)?, left, right)
}

pub fn compare_priors_on(spec: &ExperimentSpec, truth: &Image, left: PriorKind, right: PriorKind) -> Result<PairedReport> {
    let mut spec = spec.clone();
    spec.priors = unique(&[left, right]);
    let report = run_experiment_on(&spec, truth)?;
    Ok(pair_rows(report, left, right))
}

pub fn pair_rows(report: ExperimentReport, left: PriorKind, right: PriorKind) -> PairedReport {
    let mut pairs = Vec::new();
    for r in &report.rows {
        if pairs
            .iter()
            .any(|p: &PairedRow| p.missing == r.missing && p.w_source == r.w_source)
        {
            continue;
        }
        let best = |k| report.row(r.missing, r.w_source, k).and_then(ReportRow::best_psnr);
        pairs.push(PairedRow {
            missing: r.missing,
            w_source: r.w_source,
            left: best(left),
            right: best(right),
        });
    }
    PairedReport {
        left,
        right,
        report,
        pairs,
    }
}
