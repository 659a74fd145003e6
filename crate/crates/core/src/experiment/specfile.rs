//! Flat `key = value` experiment files.
//!
//! ```text
//! # cameraman sweep
//! image = cameraman64.pgm
//! crop = 64x64
//! missing = 0.2, 0.4, 0.6, 0.8
//! sigma = 0.05
//! w_source = both
//! prior = both
//! solver = closed
//! rho_range = 1e-3, 1e2, 15
//! seed = 1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. `missing` may repeat
//! and accumulates. Relative image paths are resolved against the directory
//! of the spec file.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{default_kernel, log_grid, ExperimentSpec, SolverKind, WSource};
use crate::error::{Error, Result};
use crate::graphfilter::{SearchWindow, FULL_SEARCH_MAX_PIXELS};
use crate::spectral::{PriorKind, TruncTol};

pub const SPEC_KEYS: &[&str] = &[
    "image",
    "crop",
    "missing",
    "sigma",
    "w_source",
    "prior",
    "solver",
    "rho",
    "rho_range",
    "patch_radius",
    "search",
    "h",
    "sinkhorn_tol",
    "sinkhorn_max_iters",
    "trunc",
    "seed",
    "tol",
    "max_iters",
    "threads",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSpec {
    pub spec: ExperimentSpec,
    /// Both priors were requested, so the run is a paired comparison.
    pub compare: bool,
    pub warnings: Vec<String>,
}

pub fn parse_spec_file(path: impl AsRef<Path>) -> Result<ParsedSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_spec_str(&text, base)
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line: Some(line),
        message: message.into(),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn parse_spec_str(text: &str, base_dir: &Path) -> Result<ParsedSpec> {
    let mut spec = ExperimentSpec::new("");
    let mut image = None;
    let mut missing: Vec<f64> = Vec::new();
    let mut h = None;
    let mut search = None;
    let mut compare = true;
    let mut seen = HashSet::new();
    let mut warnings = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !SPEC_KEYS.contains(&key) {
            return Err(cfg_err(line_no, format!("unknown key `{key}`")));
        }
        if key != "missing" && !seen.insert(key.to_string()) {
            warnings.push(format!("line {line_no}: `{key}` set again; last value wins"));
        }
        let bad = |what: &str| cfg_err(line_no, format!("invalid {what} `{value}` for `{key}`"));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad("number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("integer"));
        match key {
            "image" => image = Some(base_dir.join(value)),
            "crop" => {
                spec.crop = match value {
                    "none" => None,
                    v => {
                        let (w, hh) = v.split_once('x').unwrap_or((v, v));
                        Some((int(w.trim())?, int(hh.trim())?))
                    }
                }
            }
            "missing" => {
                for f in list(value) {
                    let f = float(f)?;
                    if missing.contains(&f) {
                        warnings.push(format!("line {line_no}: missing fraction {f} listed twice; duplicate removed"));
                    } else {
                        missing.push(f);
                    }
                }
            }
            "sigma" => spec.sigma = float(value)?,
            "w_source" => {
                spec.w_sources = match value {
                    "both" => vec![WSource::Oracle, WSource::Estimated],
                    v => list(v)
                        .map(|s| WSource::parse(s).ok_or_else(|| bad("w_source")))
                        .collect::<Result<_>>()?,
                }
            }
            "prior" => {
                spec.priors = match value {
                    "both" => vec![PriorKind::Conventional, PriorKind::Induced],
                    v => list(v)
                        .map(|s| PriorKind::parse(s).ok_or_else(|| bad("prior")))
                        .collect::<Result<_>>()?,
                };
                compare = spec.priors.len() == 2 && spec.priors[0] != spec.priors[1];
            }
            "solver" => spec.solver = SolverKind::parse(value).ok_or_else(|| bad("solver"))?,
            "rho" => spec.rho_grid = list(value).map(float).collect::<Result<_>>()?,
            "rho_range" => {
                let parts: Vec<&str> = list(value).collect();
                if parts.len() != 3 {
                    return Err(bad("range (want `lo, hi, count`)"));
                }
                spec.rho_grid = log_grid(float(parts[0])?, float(parts[1])?, int(parts[2])?);
            }
            "patch_radius" => spec.kernel.patch_radius = int(value)?,
            "search" => {
                search = Some(match value {
                    "full" => SearchWindow::Full,
                    v => SearchWindow::Radius(int(v)?),
                })
            }
            "h" => h = Some(float(value)?),
            "sinkhorn_tol" => spec.sinkhorn.tol = float(value)?,
            "sinkhorn_max_iters" => spec.sinkhorn.max_iters = int(value)?,
            "trunc" => {
                spec.trunc = match value.split_once(':') {
                    Some(("relative", v)) => TruncTol::Relative(float(v)?),
                    Some(("absolute", v)) => TruncTol::Absolute(float(v)?),
                    None => TruncTol::Relative(float(value)?),
                    _ => return Err(bad("truncation")),
                }
            }
            "seed" => spec.seed = value.parse().map_err(|_| bad("seed"))?,
            "tol" => spec.tol = float(value)?,
            "max_iters" => spec.max_iters = int(value)?,
            "threads" => spec.threads = int(value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }

    spec.image_path = image.ok_or(Error::Config {
        line: None,
        message: "missing required key `image`".into(),
    })?;
    if !missing.is_empty() {
        spec.missing_fractions = missing;
    }
    let n = spec.crop.map_or(FULL_SEARCH_MAX_PIXELS, |(w, hh)| w * hh);
    let defaults = default_kernel(spec.sigma, n);
    spec.kernel.h = h.unwrap_or(defaults.h);
    spec.kernel.search = search.unwrap_or(defaults.search);
    spec.validate()?;
    Ok(ParsedSpec {
        spec,
        compare,
        warnings,
    })
}
