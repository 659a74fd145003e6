//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! Criteria 1-3 run the full cameraman protocol (8 filters of 4096 pixels,
//! 15 ρ values, both priors) and take several minutes on one core. Pass
//! criterion numbers to run a subset:
//! `cargo test --release --test acceptance -- 4 7`.

mod common;

use std::cell::LazyCell;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use faer::Mat;
use induced_prior::experiment::{compare_priors, default_kernel, ExperimentSpec, PairedReport, WSource};
use induced_prior::graphfilter::{build_kernel, sinkhorn_balance, SinkhornOptions};
use induced_prior::imgcore::{bernoulli_mask, degrade, load_pgm, shepard_interpolate, ShepardParams};
use induced_prior::solvers::{
    admm_pnp, solve_closed_form, Denoiser, ModularAdmm, RawAdmm, SolveConfig,
};
use induced_prior::spectral::{decompose, decompose_matrix, prior_gradient, prior_quadratic};
use induced_prior::{
    ForwardOperator, Image, NoiseSpec, PriorKind, SearchWindow, SmoothingFilter, SpectralFilter, TruncTol,
};
use rand::RngExt;

const FRACTIONS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn best(report: &PairedReport, missing: f64, src: WSource, prior: PriorKind) -> f64 {
    report
        .report
        .row(missing, src, prior)
        .and_then(|r| r.best_psnr())
        .unwrap_or(f64::NEG_INFINITY)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:+.2}")).collect();
    format!("[{}]", parts.join(" "))
}

fn ordering(report: &PairedReport, src: WSource) -> Outcome {
    let gaps: Vec<f64> = FRACTIONS
        .iter()
        .map(|&f| best(report, f, src, PriorKind::Induced) - best(report, f, src, PriorKind::Conventional))
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let pass = gaps.iter().all(|&g| g >= 0.0) && mean > 0.0;
    outcome(pass, format!("{src} W: induced - laplacian gaps {} dB, mean {mean:+.2}", fmt_list(&gaps)))
}

fn criterion_1(report: &PairedReport) -> Outcome {
    ordering(report, WSource::Oracle)
}

fn criterion_2(report: &PairedReport) -> Outcome {
    let o = ordering(report, WSource::Estimated);
    let mut dominance = Vec::new();
    for prior in [PriorKind::Conventional, PriorKind::Induced] {
        for &f in &FRACTIONS {
            dominance.push(best(report, f, WSource::Oracle, prior) - best(report, f, WSource::Estimated, prior));
        }
    }
    let dominated = dominance.iter().all(|&d| d >= 0.0);
    outcome(
        o.pass && dominated,
        format!("{}; oracle - estimated {} dB", o.detail, fmt_list(&dominance)),
    )
}

fn criterion_3(report: &PairedReport) -> Outcome {
    let mut inversions = Vec::new();
    let mut failures = 0;
    for src in [WSource::Oracle, WSource::Estimated] {
        for prior in [PriorKind::Conventional, PriorKind::Induced] {
            let series: Vec<f64> = FRACTIONS.iter().map(|&f| best(report, f, src, prior)).collect();
            for k in 1..series.len() {
                let rise = series[k] - series[k - 1];
                if rise >= 0.0 {
                    inversions.push(format!("{src}/{prior} at {}: {rise:+.3} dB", FRACTIONS[k]));
                    if rise > 0.05 {
                        failures += 1;
                    }
                }
            }
        }
    }
    let pass = failures == 0 && inversions.len() <= 1;
    let detail = if inversions.is_empty() {
        "strictly decreasing for all 4 series".to_string()
    } else {
        format!("regression flagged: {}", inversions.join(", "))
    };
    outcome(pass, detail)
}

fn criterion_4() -> Outcome {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    let trials = 200;
    for _ in 0..trials {
        let n = rng.random_range(4..=16usize);
        let (w, _) = random_full_rank(n, &mut rng);
        let lambda = 10f64.powf(rng.random_range(-1.0..1.0));
        let rho = 10f64.powf(rng.random_range(-2.0..2.0));
        let alpha = rho / (2.0 * lambda);
        let vt: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        // Stationarity of λα vᵀCv + (ρ/2)‖v − ṽ‖²: (2λαC + ρI)v = ρṽ.
        let c = induced_dense(&w);
        let sys = Mat::from_fn(n, n, |i, j| 2.0 * lambda * alpha * c[(i, j)] + if i == j { rho } else { 0.0 });
        let rhs: Vec<f64> = vt.iter().map(|v| rho * v).collect();
        let v = solve(&sys, &rhs);
        worst = worst.max(max_abs_diff(&v, &matvec(&w, &vt)));
    }
    outcome(worst <= 1e-8, format!("{trials} instances, max |v - W v~| = {worst:.2e}"))
}

struct Instance {
    a: ForwardOperator,
    a_dense: Mat<f64>,
    y: Image,
}

fn random_instance(width: usize, height: usize, conv: bool, rng: &mut rand_chacha::ChaCha8Rng) -> Instance {
    let (a, a_dense) = if conv {
        let s = random_stencil(rng);
        let dense = conv_matrix(width, height, &s);
        (ForwardOperator::conv2d(width, height, s), dense)
    } else {
        let m = random_mask(width, height, rng.random_range(0.2..0.9), rng);
        let dense = mask_matrix(&m);
        (ForwardOperator::Mask(m), dense)
    };
    let y = random_image(width, height, rng);
    Instance { a, a_dense, y }
}

fn criterion_5() -> Outcome {
    let mut rng = rng(5);
    let (mut worst_full, mut worst_def): (f64, f64) = (0.0, 0.0);
    let (mut full, mut deficient) = (0, 0);
    for t in 0..240 {
        let n = rng.random_range(4..=25usize);
        let (width, height) = grid(n);
        let inst = random_instance(width, height, t % 2 == 1, &mut rng);
        let rho = 10f64.powf(rng.random_range(-2.0..1.0));
        let cfg = SolveConfig {
            rho,
            ..SolveConfig::default()
        };
        let at = inst.a_dense.transpose().to_owned();
        let aty = matvec(&at, inst.y.data());
        let ata = &at * &inst.a_dense;
        if t % 4 < 2 {
            let (w, filter) = random_full_rank(n, &mut rng);
            let f = decompose(&filter, TruncTol::default()).unwrap();
            assert_eq!(f.m(), n);
            let c = induced_dense(&w);
            let sys = Mat::from_fn(n, n, |i, j| ata[(i, j)] + rho * c[(i, j)]);
            let x_ref = solve(&sys, &aty);
            let x = solve_closed_form(&inst.a, &inst.y, &f, &cfg).unwrap().solution;
            worst_full = worst_full.max(rel_diff(x.data(), &x_ref));
            full += 1;
        } else {
            // W = Q diag(s) Qᵀ with a known basis; C restricted to range(Q_m)
            // is diag((1 − s)/s).
            let q = orthonormal_with_constant(n, &mut rng);
            let m = rng.random_range(1..n);
            let mut s: Vec<f64> = (0..m).map(|k| if k == 0 { 1.0 } else { rng.random_range(0.3..1.0) }).collect();
            s[1..].sort_by(|a, b| b.total_cmp(a));
            let w = synthesize(&q, &s);
            let f = decompose_matrix(w.as_ref(), TruncTol::Absolute(1e-8)).unwrap();
            assert_eq!(f.m(), m);
            let qm = Mat::from_fn(n, m, |i, k| q[(i, k)]);
            let qt = qm.transpose().to_owned();
            let red = &(&qt * &ata) * &qm;
            let sys = Mat::from_fn(m, m, |i, j| red[(i, j)] + if i == j { rho * (1.0 - s[i]) / s[i] } else { 0.0 });
            let z = solve(&sys, &matvec(&qt, &aty));
            let x_ref = matvec(&qm, &z);
            let x = solve_closed_form(&inst.a, &inst.y, &f, &cfg).unwrap().solution;
            worst_def = worst_def.max(rel_diff(x.data(), &x_ref));
            deficient += 1;
        }
    }
    let worst = worst_full.max(worst_def);
    outcome(
        worst <= 1e-8,
        format!(
            "{full} full-rank (max rel err {worst_full:.2e}), {deficient} rank-deficient vs range-restricted solve (max rel err {worst_def:.2e})"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = rng(6);
    let trials = 30;
    let iters = 20;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (_, filter) = random_full_rank(36, &mut rng);
        let f = decompose(&filter, TruncTol::default()).unwrap();
        let inst = random_instance(6, 6, false, &mut rng);
        let init = random_image(6, 6, &mut rng);
        let cfg = SolveConfig {
            rho: 10f64.powf(rng.random_range(-1.0..1.0)),
            lambda: 10f64.powf(rng.random_range(-1.0..1.0)),
            ..SolveConfig::default()
        };
        let den = Denoiser::Prox(&f, PriorKind::Induced);
        let mut modular = ModularAdmm::new(&inst.a, &inst.y, &den, &cfg, &init).unwrap();
        let mut raw = RawAdmm::new(&inst.a, &inst.y, &f, &cfg, &init).unwrap();
        for _ in 0..iters {
            modular.step().unwrap();
            raw.step().unwrap();
            let st = modular.state();
            let u_bar: Vec<f64> = raw.u.iter().map(|u| u / cfg.rho).collect();
            worst = worst
                .max(max_abs_diff(&st.x, &raw.x))
                .max(max_abs_diff(&st.v, &raw.v))
                .max(max_abs_diff(&st.u_bar, &u_bar));
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{trials} instances x {iters} iterations, max iterate difference {worst:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = rng(7);
    let trials = 30;
    let (mut worst, mut max_iters_used, mut unconverged) = (0.0f64, 0, 0);
    for t in 0..trials {
        let (width, height) = (6, 6);
        let (_, filter) = random_full_rank(width * height, &mut rng);
        let f = decompose(&filter, TruncTol::default()).unwrap();
        let inst = random_instance(width, height, t % 2 == 1, &mut rng);
        let init = random_image(width, height, &mut rng);
        let rho = 10f64.powf(rng.random_range(-1.0..1.0));
        let den = Denoiser::Filter(&filter);
        let loose = SolveConfig {
            rho,
            tol: 1e-6,
            max_iters: 500,
            ..SolveConfig::default()
        };
        let r = admm_pnp(&inst.a, &inst.y, &den, &loose, &init).unwrap();
        if !r.converged {
            unconverged += 1;
        }
        max_iters_used = max_iters_used.max(r.iterations);
        let tight = SolveConfig {
            tol: 1e-12,
            max_iters: 50_000,
            ..loose
        };
        let limit = admm_pnp(&inst.a, &inst.y, &den, &tight, &init).unwrap().solution;
        let closed = solve_closed_form(&inst.a, &inst.y, &f, &loose).unwrap().solution;
        worst = worst.max(max_abs_diff(limit.data(), closed.data()));
    }
    outcome(
        unconverged == 0 && worst <= 1e-6,
        format!(
            "{trials} instances, {unconverged} unconverged, at most {max_iters_used} iterations to primal and dual residual 1e-6, max |limit - closed| = {worst:.2e}"
        ),
    )
}

/// Every filter the suite constructs for the corpus checks.
fn corpus() -> Vec<(String, SmoothingFilter)> {
    let mut out = Vec::new();
    let opts = SinkhornOptions::default();
    let mut build = |name: String, guide: &Image, search: Option<SearchWindow>| {
        let mut params = default_kernel(0.05, guide.len());
        if let Some(s) = search {
            params.search = s;
        }
        let k = build_kernel(guide, &params).unwrap();
        out.push((name, sinkhorn_balance(&k, opts.tol, opts.max_iters).unwrap()));
    };
    for image in ["cameraman64.pgm", "coins64.pgm", "moon64.pgm"] {
        let full = load_pgm(data(image)).unwrap();
        for (side, fractions) in [(64, &[0.2, 0.8][..]), (32, &FRACTIONS[..])] {
            let truth = full.center_crop(side, side).unwrap();
            build(format!("{image}@{side} oracle"), &truth, None);
            for &f in fractions {
                let mask = bernoulli_mask(side, side, 1.0 - f, 1).unwrap();
                let y = degrade(&truth, &mask, &NoiseSpec::new(0.05, 2).unwrap()).unwrap();
                let masked = Image::from_fn(side, side, |x, yy| {
                    let i = yy * side + x;
                    if mask.keep()[i] { y.data()[i] } else { 0.0 }
                });
                let guide = shepard_interpolate(&masked, &mask, ShepardParams::default()).unwrap();
                build(format!("{image}@{side} shepard {f}"), &guide, None);
            }
        }
        let truth = full.center_crop(64, 64).unwrap();
        build(format!("{image}@64 oracle window 5"), &truth, Some(SearchWindow::Radius(5)));
    }
    let s = 32;
    let synthetic = [
        ("constant", Image::filled(s, s, 0.5)),
        ("ramp", Image::from_fn(s, s, |x, _| x as f64 / (s - 1) as f64)),
        ("checkerboard", Image::from_fn(s, s, |x, y| ((x / 4 + y / 4) % 2) as f64)),
        ("step", Image::from_fn(s, s, |x, _| if x < s / 2 { 0.2 } else { 0.8 })),
        ("noise", random_image(s, s, &mut rng(8))),
    ];
    for (name, img) in synthetic {
        build(format!("{name}@{s}"), &img, None);
    }
    out
}

fn criterion_8(filters: &[(String, SmoothingFilter)], protocol: &PairedReport) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    for d in &protocol.report.diagnostics {
        if d.balance_residual > worst {
            worst = d.balance_residual;
            worst_name = format!("protocol {} {}", d.missing, d.w_source);
        }
    }
    for (name, w) in filters {
        let dev = w
            .row_sums()
            .iter()
            .chain(&w.col_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        if dev > worst {
            worst = dev;
            worst_name = name.clone();
        }
    }
    outcome(
        worst <= 1e-8,
        format!(
            "{} corpus + {} protocol filters, max |sum - 1| = {worst:.2e} ({worst_name})",
            filters.len(),
            protocol.report.diagnostics.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = rng(9);
    let trials = 200;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let n = rng.random_range(4..=16usize);
        let (width, height) = grid(n);
        let f: SpectralFilter = if t % 3 == 2 {
            let q = orthonormal_with_constant(n, &mut rng);
            let m = rng.random_range(1..=n);
            let mut s: Vec<f64> = (0..m).map(|k| if k == 0 { 1.0 } else { rng.random_range(0.2..1.0) }).collect();
            s[1..].sort_by(|a, b| b.total_cmp(a));
            decompose_matrix(synthesize(&q, &s).as_ref(), TruncTol::Absolute(1e-8)).unwrap()
        } else {
            let (_, w) = random_full_rank(n, &mut rng);
            decompose(&w, TruncTol::default()).unwrap()
        };
        let kind = if t % 2 == 0 { PriorKind::Induced } else { PriorKind::Conventional };
        let v = Image::from_fn(width, height, |_, _| rng.random::<f64>() - 0.5);
        let g = prior_gradient(&f, kind, &v).unwrap();
        let fd: Vec<f64> = (0..n)
            .map(|i| {
                let mut plus = v.data().to_vec();
                let mut minus = v.data().to_vec();
                plus[i] += h;
                minus[i] -= h;
                let qp = prior_quadratic(&f, kind, &Image::new(width, height, plus).unwrap()).unwrap();
                let qm = prior_quadratic(&f, kind, &Image::new(width, height, minus).unwrap()).unwrap();
                (qp - qm) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_diff(&fd, g.data()));
    }
    outcome(worst <= 1e-5, format!("{trials} triples, max relative error {worst:.2e}"))
}

fn criterion_10(filters: &[(String, SmoothingFilter)]) -> Outcome {
    let mut checked = 0usize;
    let mut violations = Vec::new();
    for (name, w) in filters {
        let f = decompose(w, TruncTol::default()).unwrap();
        let induced = f.penalty_weights(PriorKind::Induced);
        let conventional = f.penalty_weights(PriorKind::Conventional);
        for (k, (i, c)) in induced.iter().zip(&conventional).enumerate() {
            checked += 1;
            if !(i >= c) {
                violations.push(format!("{name} s={}", f.eigvals()[k]));
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{} filters, {checked} retained eigenvalues, {} violations{}",
            filters.len(),
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

/// Criterion numbers given on the command line select a subset; anything
/// else (including no arguments) runs all of them.
fn selected() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|k| (1..=10).contains(k))
        .collect();
    if picked.is_empty() {
        (1..=10).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let protocol = LazyCell::new(|| {
        let spec = ExperimentSpec::new(data("cameraman64.pgm"));
        let p = compare_priors(&spec).expect("cameraman protocol runs");
        println!("{}", p.render_table());
        p
    });
    let filters = LazyCell::new(corpus);
    let criteria: Vec<(&str, Criterion)> = vec![
        ("prior ordering, oracle W", Box::new(|| criterion_1(&protocol))),
        ("prior ordering, estimated W", Box::new(|| criterion_2(&protocol))),
        ("monotone in missing fraction", Box::new(|| criterion_3(&protocol))),
        ("induced prox equals W", Box::new(criterion_4)),
        ("closed form vs dense normal equations", Box::new(criterion_5)),
        ("raw vs modular ADMM iterates", Box::new(criterion_6)),
        ("PnP fixed point", Box::new(criterion_7)),
        ("doubly stochastic corpus", Box::new(|| criterion_8(&filters, &protocol))),
        ("prior gradient vs finite differences", Box::new(criterion_9)),
        ("spectral penalty ordering", Box::new(|| criterion_10(&filters))),
    ];
    let selected = selected();
    let mut failed = 0;
    for &k in &selected {
        let (name, run) = &criteria[k - 1];
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {k:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        selected.len() - failed,
        selected.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
