use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use induced_prior::imgcore::{load_pgm, psnr, save_mask, save_pgm};
use induced_prior::{Image, SamplingMask};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_induced-prior"));
    c.env_remove("INDUCED_PRIOR_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn textured(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        let v = 0.5 + 0.35 * ((x as f64) * 0.9).sin() * ((y as f64) * 0.6).cos();
        (v * 255.0).round() / 255.0
    })
}

#[test]
fn mask_ratio_one_is_all_white() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.pgm");
    let o = run(&["mask", "--width", "5", "--height", "3", "--ratio", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.ends_with(&[255u8; 15]));
    assert!(stderr(&o).contains("config: command=mask"));
}

#[test]
fn mask_ratio_out_of_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.pgm");
    let o = run(&["mask", "--width", "5", "--height", "3", "--ratio", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--ratio"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn mask_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"));
    for p in [&a, &b] {
        let o = run(&["mask", "--width", "16", "--height", "16", "--ratio", "0.5", "--seed", "7", "--out", s(p)]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.pgm");
    run(&["mask", "--width", "16", "--height", "16", "--ratio", "0.5", "--seed", "8", "--out", s(&c)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn filter_constant_guide_balances_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let guide = dir.path().join("g.pgm");
    save_pgm(&Image::filled(6, 6, 0.4), &guide).unwrap();
    let (a, b) = (dir.path().join("a.aipw"), dir.path().join("b.aipw"));
    for p in [&a, &b] {
        let o = run(&["filter", "--guide", s(&guide), "--out", s(p)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("n=36"), "{out}");
        let r: f64 = out
            .lines()
            .find_map(|l| l.strip_prefix("balance_residual="))
            .unwrap()
            .parse()
            .unwrap();
        assert!(r <= 1e-8);
        assert!(!stderr(&o).contains("WARN"));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn filter_warns_when_balancing_is_capped() {
    let dir = tempfile::tempdir().unwrap();
    let guide = dir.path().join("g.pgm");
    save_pgm(&textured(8, 8), &guide).unwrap();
    let out = dir.path().join("w.aipw");
    let o = run(&[
        "filter", "--guide", s(&guide), "--h", "0.1", "--max-iters", "1", "--tol", "1e-14", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("WARN sinkhorn residual="), "{}", stderr(&o));
}

#[test]
fn filter_without_guide_is_usage_error() {
    let o = run(&["filter", "--out", "/tmp/never.aipw"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_io_error() {
    let o = run(&["filter", "--guide", "/nonexistent/g.pgm", "--out", "/tmp/never.aipw"]);
    assert_eq!(o.status.code(), Some(1));
}

struct SolveFixture {
    dir: tempfile::TempDir,
    y: PathBuf,
    mask: PathBuf,
    dense: PathBuf,
    sparse: PathBuf,
}

fn fixture(keep_all: bool) -> SolveFixture {
    let dir = tempfile::tempdir().unwrap();
    let truth = textured(10, 10);
    let y = dir.path().join("y.pgm");
    let mask = dir.path().join("mask.pgm");
    let keep: Vec<bool> = (0..100).map(|i| keep_all || i % 3 != 0).collect();
    let m = SamplingMask::from_keep(10, 10, keep).unwrap();
    let observed = Image::new(
        10,
        10,
        truth.data().iter().zip(m.keep()).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
    )
    .unwrap();
    save_pgm(&observed, &y).unwrap();
    save_mask(&m, &mask).unwrap();
    let dense = dir.path().join("dense.aipw");
    let sparse = dir.path().join("sparse.aipw");
    for (p, search) in [(&dense, "full"), (&sparse, "2")] {
        let o = run(&["filter", "--guide", s(&y), "--search-radius", search, "--patch-radius", "1", "--out", s(p)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    SolveFixture {
        dir,
        y,
        mask,
        dense,
        sparse,
    }
}

#[test]
fn solve_full_mask_tiny_rho_reproduces_input() {
    let f = fixture(true);
    for solver in ["closed", "cg", "admm"] {
        let out = f.dir.path().join(format!("x-{solver}.pgm"));
        let rho = if solver == "admm" { "1e-6" } else { "1e-9" };
        let o = run(&[
            "solve", "--y", s(&f.y), "--mask", s(&f.mask), "--filter", s(&f.dense), "--solver", solver, "--rho", rho,
            "--out", s(&out),
        ]);
        assert!(o.status.success(), "{solver}: {}", stderr(&o));
        let p = psnr(&load_pgm(&f.y).unwrap(), &load_pgm(&out).unwrap()).unwrap();
        assert!(p >= 60.0, "{solver}: {p}");
        assert!(stdout(&o).contains(&format!("solver={solver}")) || solver == "closed");
    }
}

#[test]
fn solve_closed_with_sparse_filter_advises_admm() {
    let f = fixture(false);
    let out = f.dir.path().join("x.pgm");
    let o = run(&[
        "solve", "--y", s(&f.y), "--mask", s(&f.mask), "--filter", s(&f.sparse), "--solver", "closed", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--solver admm"), "{}", stderr(&o));
    let o = run(&[
        "solve", "--y", s(&f.y), "--mask", s(&f.mask), "--filter", s(&f.sparse), "--solver", "admm", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn solve_priors_differ_and_are_deterministic() {
    let f = fixture(false);
    let mut outputs = Vec::new();
    for prior in ["induced", "laplacian", "induced"] {
        let out = f.dir.path().join(format!("x-{}.pgm", outputs.len()));
        let report = f.dir.path().join(format!("r-{}.txt", outputs.len()));
        let o = run(&[
            "solve", "--y", s(&f.y), "--mask", s(&f.mask), "--filter", s(&f.dense), "--prior", prior, "--rho", "0.5",
            "--out", s(&out), "--report", s(&report),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let rec = fs::read_to_string(&report).unwrap();
        assert!(rec.contains("objective="), "{rec}");
        outputs.push(fs::read(&out).unwrap());
    }
    assert_ne!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn filter_spectral_cache_matches_recomputed_solve() {
    let f = fixture(false);
    let cache = f.dir.path().join("dense.aips");
    let again = f.dir.path().join("again.aipw");
    let o = run(&[
        "filter", "--guide", s(&f.y), "--search-radius", "full", "--patch-radius", "1", "--out", s(&again),
        "--spectral-out", s(&cache),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("rank="), "{}", stdout(&o));
    let mut outputs = Vec::new();
    for with_cache in [false, true] {
        let out = f.dir.path().join(format!("x-{with_cache}.pgm"));
        let mut args = vec![
            "solve", "--y", s(&f.y), "--mask", s(&f.mask), "--filter", s(&f.dense), "--rho", "0.5", "--out", s(&out),
        ];
        if with_cache {
            args.extend(["--spectral", s(&cache)]);
        }
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn solve_dimension_mismatch_prints_both_shapes() {
    let f = fixture(false);
    let small = f.dir.path().join("small.pgm");
    save_mask(&SamplingMask::full(4, 5), &small).unwrap();
    let out = f.dir.path().join("x.pgm");
    let o = run(&[
        "solve", "--y", s(&f.y), "--mask", s(&small), "--filter", s(&f.dense), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("10x10") && err.contains("4x5"), "{err}");
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("spec.txt");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn experiment_minimal_spec() {
    let dir = tempfile::tempdir().unwrap();
    save_pgm(&textured(12, 12), dir.path().join("img.pgm")).unwrap();
    let spec = write_spec(
        dir.path(),
        "image = img.pgm\ncrop = none\nmissing = 0.3\nrho = 0.1, 1\nw_source = oracle\nprior = induced\n",
    );
    let csv = dir.path().join("out.csv");
    let o = run(&["experiment", "--spec", s(&spec), "--out-csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.contains("\nmissing,w_source,prior,rho,psnr_db\n"), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(stdout(&o).contains("best_psnr_db="));
}

#[test]
fn experiment_duplicate_missing_warns() {
    let dir = tempfile::tempdir().unwrap();
    save_pgm(&textured(12, 12), dir.path().join("img.pgm")).unwrap();
    let spec = write_spec(
        dir.path(),
        "image = img.pgm\ncrop = none\nmissing = 0.5\nmissing = 0.5\nrho = 1\nw_source = oracle\nprior = laplacian\n",
    );
    let csv = dir.path().join("out.csv");
    let o = run(&["experiment", "--spec", s(&spec), "--out-csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("WARN") && stderr(&o).contains("duplicate"), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("0.5,")).count(), 1);
}

#[test]
fn experiment_unknown_key_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "image = img.pgm\nfrobnicate = 1\n");
    let o = run(&["experiment", "--spec", s(&spec), "--out-csv", "/tmp/never.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("frobnicate") && err.contains("line 2"), "{err}");
}

#[test]
fn experiment_table_shape_on_corpus_crop() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        &format!(
            "image = {}\ncrop = 24x24\nmissing = 0.2, 0.4, 0.6, 0.8\nsigma = 0.05\nw_source = both\nprior = both\n\
             rho_range = 1e-2, 1e1, 4\n",
            data("cameraman64.pgm").display()
        ),
    );
    let csv = dir.path().join("out.csv");
    let o = bin()
        .args(["--threads", "2", "experiment", "--spec", s(&spec), "--out-csv", s(&csv)])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 1 + 8, "{table}");
    let rows = induced_prior::experiment::parse_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 4 * 2 * 2 * 4);
    assert!(rows.iter().all(|r| r.psnr_db.is_some()));
    assert!(fs::read_to_string(&csv).unwrap().contains("# threads=2"));
}

#[test]
fn threads_env_fallback_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.pgm");
    let o = bin()
        .env("INDUCED_PRIOR_THREADS", "3")
        .args(["mask", "--width", "2", "--height", "2", "--ratio", "0.5", "--out", s(&out)])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stderr(&o).contains("threads=3"));
}

#[test]
fn help_lists_defaults() {
    for sub in ["mask", "filter", "solve", "experiment"] {
        let o = run(&[sub, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(text.contains("--seed") && text.contains("--threads"), "{sub}: {text}");
    }
    let text = stdout(&run(&["solve", "--help"]));
    assert!(text.contains("[default: closed]") && text.contains("[default: 1]"), "{text}");
}
