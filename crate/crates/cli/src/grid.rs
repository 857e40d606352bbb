//! Simulation grids from `key = value` files and their long-format output.
//!
//! ```text
//! study = two-sided          # or upper-bound; sets the defaults below
//! methods = c-chart, calibrated-qp
//! generators = qp
//! H = 5, 10, 20, 100
//! lambda = 5, 20, 100
//! phi = 1.001, 3, 5
//! offsets = 3                # fixed n; `0.5..4` draws Uniform(0.5, 4)
//! alpha = 0.05
//! upper-only = false
//! k = 1.96                   # heuristic multiplier, default z(1 - alpha/2)
//! S = 500
//! B = 2000
//! seed = 1
//! variant = main-text
//! ```

use std::str::FromStr;

use hcl_core::calibration::Model;
use hcl_core::coverage::{CoverageReport, GridSpec, OffsetRule, SimCell};
use hcl_core::limits::prediction::NbVariant;
use hcl_core::limits::Method;

use crate::config::Config;
use crate::error::{invalid, Result};
use crate::format::sig6;

pub const GRID_KEYS: &[&str] = &[
    "study", "methods", "generators", "H", "lambda", "phi", "offsets", "alpha", "upper-only", "k", "S", "B", "seed",
    "variant",
];

/// The methods compared in the two-sided study.
pub const STUDY_METHODS: [Method; 8] = [
    Method::CChart,
    Method::UChart,
    Method::LaneyUChart,
    Method::MeanSd,
    Method::QuasiPoisson,
    Method::NegBinomial,
    Method::CalibratedQuasiPoisson,
    Method::CalibratedNegBinomial,
];

/// Offset rule as written in grid files: `3` or `0.5..4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OffsetItem(pub OffsetRule);

impl FromStr for OffsetItem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(OffsetItem(match s.split_once("..") {
            Some((lo, hi)) => OffsetRule::Uniform { lo: num(lo)?, hi: num(hi)? },
            None => OffsetRule::Fixed(num(s)?),
        }))
    }
}

/// Overrides applied on top of the grid file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GridOverrides {
    pub s: Option<usize>,
    pub b: Option<usize>,
    pub seed: Option<u64>,
}

pub fn grid_from_config(cfg: &Config, overrides: GridOverrides) -> Result<GridSpec> {
    cfg.check_keys(GRID_KEYS)?;
    let mut g = match cfg.raw("study").unwrap_or("two-sided") {
        "two-sided" => GridSpec::two_sided_study(STUDY_METHODS.to_vec()),
        "upper-bound" => GridSpec::upper_bound_study(
            vec![Model::QuasiPoisson, Model::NegBinomial],
            vec![Method::CalibratedQuasiPoisson, Method::CalibratedNegBinomial],
        ),
        other => return Err(invalid(format!("unknown study `{other}` (expected two-sided or upper-bound)"))),
    };
    if let Some(v) = cfg.list::<Method>("methods")? {
        g.methods = v;
    }
    if let Some(v) = cfg.list::<Model>("generators")? {
        g.generators = v;
    }
    if let Some(v) = cfg.list("H")? {
        g.h = v;
    }
    if let Some(v) = cfg.list("lambda")? {
        g.lambda = v;
    }
    if let Some(v) = cfg.list("phi")? {
        g.phi = v;
    }
    if let Some(v) = cfg.list::<OffsetItem>("offsets")? {
        g.offsets = v.into_iter().map(|o| o.0).collect();
    }
    if let Some(v) = cfg.get("alpha")? {
        g.alpha = v;
    }
    if let Some(v) = cfg.get("upper-only")? {
        g.upper_only = v;
    }
    g.k = cfg.get("k")?;
    if let Some(v) = cfg.get::<NbVariant>("variant")? {
        g.variant = v;
    }
    g.s = cfg.or(overrides.s, "S")?.unwrap_or(g.s);
    g.b = cfg.or(overrides.b, "B")?.unwrap_or(g.b);
    g.seed = cfg
        .or(overrides.seed, "seed")?
        .ok_or_else(|| invalid("simulate needs a seed: pass --seed or set `seed` in the grid file"))?;
    for cell in g.cells() {
        cell.validate()?;
    }
    Ok(g)
}

pub const GRID_HEADER: [&str; 14] = [
    "generator", "method", "H", "lambda", "phi", "offset_lo", "offset_hi", "n_star", "alpha", "S_used", "S_total",
    "psi_cp", "psi_l", "psi_u",
];

pub fn grid_row(cell: &SimCell, report: Option<&CoverageReport>) -> Vec<String> {
    let (lo, hi) = cell.offsets.bounds();
    let n_star = match cell.offsets {
        OffsetRule::Fixed(n) => sig6(n),
        OffsetRule::Uniform { .. } => "NA".into(),
    };
    let na = || "NA".to_string();
    vec![
        cell.generator.name().into(),
        cell.method.name().into(),
        cell.h.to_string(),
        sig6(cell.lambda),
        sig6(cell.phi),
        sig6(lo),
        sig6(hi),
        n_star,
        sig6(cell.alpha),
        report.map_or_else(na, |r| r.s_used.to_string()),
        cell.s.to_string(),
        report.map_or_else(na, |r| sig6(r.psi_cp)),
        report.map_or_else(na, |r| sig6(r.psi_l)),
        report.map_or_else(na, |r| sig6(r.psi_u)),
    ]
}
