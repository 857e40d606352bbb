use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hcl_core::calibration::{calibrate_fit_for_targets, CalibrationResult, CalibrationSettings, Model};
use hcl_core::coverage::{compute_limits, run_cell};
use hcl_core::estimation::{Dispersion, ModelFit};
use hcl_core::limits::prediction::{NbVariant, Sidedness, TargetDesign};
use hcl_core::limits::{Method, PredictionLimits, Scale};
use hcl_core::rng::RngState;
use hcl_core::sampling::{
    sample_neg_binomial, sample_quasi_poisson, sample_uniform_offsets, DesignSpec, NegBinParams, QuasiPoissonParams,
};
use hcl_core::special::normal_quantile;

use crate::chart::{Band, ChartPoint, ChartSpec};
use crate::config::Config;
use crate::error::{invalid, CliError, Result};
use crate::format::{dec2, sig6, sig6_opt};
use crate::grid::{grid_from_config, grid_row, GridOverrides, GRID_HEADER};
use crate::ingest::{ingest, write_dataset, Dataset};

/// Keys accepted in the file given to `--config`.
pub const CONFIG_KEYS: &[&str] = &[
    "alpha", "n-star", "k", "B", "seed", "variant", "model", "method", "upper-only", "clamp-zero", "levels",
];

#[derive(Debug, Parser)]
#[command(name = "hcl", version, about = "Historical control limits for overdispersed count data")]
pub struct Cli {
    /// Flat `key = value` file with defaults for command flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the quasi-Poisson and/or negative-binomial model.
    Fit(FitArgs),
    /// Control limits by one or more methods.
    Limits(LimitsArgs),
    /// Bootstrap-calibrated prediction limits with diagnostics.
    Calibrate(CalibrateArgs),
    /// Simulate a clustered count data set.
    Sample(SampleArgs),
    /// Run a coverage simulation grid.
    Simulate(SimulateArgs),
    /// Control chart with calibrated limits as SVG plus a CSV of the plotted values.
    Chart(ChartArgs),
}

#[derive(Debug, Args)]
pub struct Level {
    /// Miss probability; two-sided limits leave alpha/2 in each tail.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Offset of the future observation (default: mean historical offset).
    #[arg(long = "n-star")]
    pub n_star: Option<f64>,
    /// Upper limit only, at level 1 - alpha.
    #[arg(long)]
    pub upper_only: bool,
    /// Raise negative limits to zero.
    #[arg(long)]
    pub clamp_zero: bool,
    /// Estimation variance used by negative-binomial limits.
    #[arg(long)]
    pub variant: Option<NbVariant>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fit only this model.
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated methods, or `all` for every method without a bootstrap.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Multiplier for mean-sd and the charts (default 2 for mean-sd,
    /// z(1 - alpha/2) for the charts).
    #[arg(long)]
    pub k: Option<f64>,
    #[command(flatten)]
    pub level: Level,
    /// Bootstrap samples for calibrated methods.
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: Option<Model>,
    #[command(flatten)]
    pub level: Level,
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: Model,
    #[arg(long)]
    pub lambda: f64,
    /// Dispersion factor (quasi-Poisson; for nb it sets kappa = (phi-1)/(n̄ lambda)).
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Number of clusters.
    #[arg(long = "H")]
    pub h: usize,
    /// Common offset.
    #[arg(long, conflicts_with_all = ["offset_lo", "offset_hi"])]
    pub n: Option<f64>,
    /// Offsets drawn from Uniform(offset-lo, offset-hi).
    #[arg(long, requires = "offset_hi")]
    pub offset_lo: Option<f64>,
    #[arg(long, requires = "offset_lo")]
    pub offset_hi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Grid file; see the README for its keys.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long = "S")]
    pub s: Option<usize>,
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    /// Historical data the limits are computed from.
    #[arg(long)]
    pub data: PathBuf,
    /// Observations to plot against the limits (default: the historical data).
    /// Each point gets limits for its own offset.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<Model>,
    /// Comma-separated coverage levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,
    #[arg(long)]
    pub upper_only: bool,
    #[arg(long)]
    pub clamp_zero: bool,
    #[arg(long)]
    pub variant: Option<NbVariant>,
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub title: Option<String>,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of plotted values (default: the SVG path with a .csv extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => {
            let cfg = Config::load(path)?;
            cfg.check_keys(CONFIG_KEYS)?;
            cfg
        }
        None => Config::default(),
    };
    match cli.command {
        Command::Fit(a) => fit(&a, &cfg, stdout),
        Command::Limits(a) => limits(&a, &cfg, stdout),
        Command::Calibrate(a) => calibrate(&a, &cfg, stdout),
        Command::Sample(a) => sample(&a, &cfg, stdout),
        Command::Simulate(a) => simulate(&a, &cfg, stdout),
        Command::Chart(a) => chart(&a, &cfg, stdout),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| CliError::io(path, e))
}

fn print(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| invalid(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Left-aligned first column, right-aligned others.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                s += &format!("{c:<w$}");
            } else {
                s += &format!("  {c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

struct Resolved {
    alpha: f64,
    n_star: f64,
    sidedness: Sidedness,
    clamp_zero: bool,
    variant: NbVariant,
}

fn resolve_level(level: &Level, cfg: &Config, data: &Dataset) -> Result<Resolved> {
    let alpha = cfg.or(level.alpha, "alpha")?.unwrap_or(0.05);
    let n_star = cfg.or(level.n_star, "n-star")?.unwrap_or_else(|| data.data.n_bar());
    let upper_only = level.upper_only || cfg.get("upper-only")?.unwrap_or(false);
    Ok(Resolved {
        alpha,
        n_star,
        sidedness: if upper_only { Sidedness::UpperOnly } else { Sidedness::TwoSided },
        clamp_zero: level.clamp_zero || cfg.get("clamp-zero")?.unwrap_or(false),
        variant: cfg.or(level.variant, "variant")?.unwrap_or_default(),
    })
}

fn require_seed(flag: Option<u64>, cfg: &Config, command: &str) -> Result<u64> {
    cfg.or(flag, "seed")?
        .ok_or_else(|| invalid(format!("`{command}` is randomized and needs --seed (or `seed` in the config file)")))
}

fn settings(b: Option<usize>, cfg: &Config, seed: u64, variant: NbVariant) -> Result<CalibrationSettings> {
    let s = CalibrationSettings {
        b: cfg.or(b, "B")?.unwrap_or(CalibrationSettings::default().b),
        seed,
        variant,
        ..CalibrationSettings::default()
    };
    s.validate()?;
    Ok(s)
}

fn dispersion_cells(fit: &ModelFit) -> (&'static str, f64) {
    match fit.dispersion {
        Dispersion::QuasiPoisson { phi_hat } => ("phi", phi_hat),
        Dispersion::NegBinomial { kappa_hat } => ("kappa", kappa_hat),
    }
}

fn fit(a: &FitArgs, cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    let data = ingest(&a.data)?;
    let models = match cfg.or(a.model, "model")? {
        Some(m) => vec![m],
        None => vec![Model::QuasiPoisson, Model::NegBinomial],
    };
    let mut human = Vec::new();
    let mut rows = Vec::new();
    for m in models {
        let f = m.fit(&data.data)?;
        let (name, value) = dispersion_cells(&f);
        human.push(vec![
            m.name().to_string(),
            dec2(f.lambda_hat),
            format!("{name} = {}", sig6(value)),
            f.h.to_string(),
            dec2(f.n_bar),
            if f.converged { "yes".into() } else { "no".into() },
            f.iterations.to_string(),
        ]);
        rows.push(vec![
            m.name().to_string(),
            sig6(f.lambda_hat),
            name.to_string(),
            sig6(value),
            f.h.to_string(),
            sig6(f.n_bar),
            f.converged.to_string(),
            f.iterations.to_string(),
        ]);
    }
    print(stdout, &table(&["Model", "lambda", "Dispersion", "H", "n_bar", "Converged", "Iterations"], &human))?;
    if let Some(out) = &a.out {
        let header = ["model", "lambda_hat", "dispersion_parameter", "dispersion", "H", "n_bar", "converged", "iterations"];
        write_file(out, &csv_string(&header, &rows)?)?;
    }
    Ok(())
}

/// The methods `--method all` expands to.
pub const CLOSED_FORM: [Method; 7] = [
    Method::CChart,
    Method::UChart,
    Method::LaneyUChart,
    Method::MeanSd,
    Method::SimplePoisson,
    Method::NegBinomial,
    Method::QuasiPoisson,
];

fn parse_methods(raw: &[String], cfg: &Config) -> Result<Vec<Method>> {
    let items: Vec<String> = if raw.is_empty() {
        match cfg.list::<String>("method")? {
            Some(v) => v,
            None => return Err(invalid("no method given: pass --method (a method name or `all`)")),
        }
    } else {
        raw.to_vec()
    };
    let mut methods = Vec::new();
    for item in items {
        let item = item.trim();
        let add: Vec<Method> = if item == "all" { CLOSED_FORM.to_vec() } else { vec![item.parse::<Method>()?] };
        for m in add {
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
    }
    Ok(methods)
}

/// Raises negative finite limits to zero; an unbounded side stays unbounded.
fn clamp_zero(l: PredictionLimits) -> PredictionLimits {
    let clamp = |v: f64| if v.is_finite() { v.max(0.0) } else { v };
    PredictionLimits { lower: clamp(l.lower), upper: clamp(l.upper), ..l }
}

fn limit_cells(l: &PredictionLimits) -> (String, String) {
    match l.covered_counts() {
        Some(c) => {
            let fmt = |v: f64, bound: Option<i64>| match bound {
                Some(b) => format!("{} ({b})", dec2(v)),
                None => dec2(v),
            };
            (fmt(l.lower, c.low), fmt(l.upper, c.high))
        }
        None => (dec2(l.lower), dec2(l.upper)),
    }
}

fn limits(a: &LimitsArgs, cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    let data = ingest(&a.data)?;
    let r = resolve_level(&a.level, cfg, &data)?;
    let methods = parse_methods(&a.method, cfg)?;
    let target = TargetDesign::new(r.n_star, r.alpha, r.sidedness)?;
    let needs_boot = methods.iter().any(|m| m.is_calibrated());
    let settings = if needs_boot {
        settings(a.b, cfg, require_seed(a.seed, cfg, "limits")?, r.variant)?
    } else {
        CalibrationSettings { variant: r.variant, ..CalibrationSettings::default() }
    };
    let k_flag = cfg.or(a.k, "k")?;
    let z = match r.sidedness {
        Sidedness::TwoSided => normal_quantile(1.0 - r.alpha / 2.0),
        Sidedness::UpperOnly => normal_quantile(1.0 - r.alpha),
    };

    let mut human = Vec::new();
    let mut rows = Vec::new();
    let mut per_unit = false;
    for m in methods {
        let k = k_flag.unwrap_or(if m == Method::MeanSd { 2.0 } else { z });
        let mut l = compute_limits(m, &data.data, &target, k, &settings)?;
        if r.clamp_zero {
            l = clamp_zero(l);
        }
        let label = if m == Method::MeanSd { format!("Mean +- {} SD", trim(k)) } else { m.label().to_string() };
        let label = if l.scale == Scale::PerOffsetUnit {
            per_unit = true;
            label + "*"
        } else {
            label
        };
        let (lo, hi) = limit_cells(&l);
        human.push(vec![label, lo, hi, dec2(l.width())]);
        let counts = l.covered_counts();
        rows.push(vec![
            m.name().to_string(),
            match l.scale {
                Scale::Response => "response".into(),
                Scale::PerOffsetUnit => "per-unit".into(),
            },
            if m.uses_k() { sig6(k) } else { "NA".into() },
            sig6(r.alpha),
            sig6(r.n_star),
            sig6(l.lower),
            sig6(l.upper),
            sig6(l.width()),
            counts.and_then(|c| c.low).map_or("NA".into(), |v| v.to_string()),
            counts.and_then(|c| c.high).map_or("NA".into(), |v| v.to_string()),
        ]);
    }
    let mut text = table(&["Method", "Lower CL", "Upper CL", "Width"], &human);
    text += "Numbers in brackets: lowest and highest count covered.\n";
    if per_unit {
        text += &format!("* limits per offset unit; multiply by n* = {} for counts.\n", trim(r.n_star));
    }
    print(stdout, &text)?;
    if let Some(out) = &a.out {
        let header =
            ["method", "scale", "k", "alpha", "n_star", "lower", "upper", "width", "covered_low", "covered_high"];
        write_file(out, &csv_string(&header, &rows)?)?;
    }
    Ok(())
}

fn trim(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn calibrate(a: &CalibrateArgs, cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    let data = ingest(&a.data)?;
    let r = resolve_level(&a.level, cfg, &data)?;
    let model = cfg.or(a.model, "model")?.ok_or_else(|| invalid("calibrate needs --model (qp or nb)"))?;
    let seed = require_seed(a.seed, cfg, "calibrate")?;
    let s = settings(a.b, cfg, seed, r.variant)?;
    let target = TargetDesign::new(r.n_star, r.alpha, r.sidedness)?;
    let fit = model.fit(&data.data)?;
    let design = DesignSpec::new(data.data.offsets().collect())?;
    let res = calibrate_fit_for_targets(&fit, &design, &[target], &s)?.remove(0);
    let limits = if r.clamp_zero { clamp_zero(res.limits) } else { res.limits };

    let (lo, hi) = limit_cells(&limits);
    let mut text = table(&["Method", "Lower CL", "Upper CL", "Width"], &[vec![
        limits.method.label().to_string(),
        lo,
        hi,
        dec2(limits.width()),
    ]]);
    text += &format!(
        "q_lower = {}, q_upper = {}; bootstrap coverage lower = {}, upper = {} (target {})\n",
        res.q_lower.map_or("-".into(), |q| format!("{q:.4}")),
        format_args!("{:.4}", res.q_upper),
        res.achieved_psi_lower.map_or("-".into(), |p| format!("{p:.4}")),
        format_args!("{:.4}", res.achieved_psi_upper),
        format_args!("{:.4}", target.bound_level()),
    );
    text += &format!("bootstrap samples used: {}, dropped: {}\n", res.n_boot_used, res.n_dropped);
    if !res.within_tolerance {
        text += "warning: bootstrap coverage did not reach the tolerance band\n";
    }
    print(stdout, &text)?;
    if let Some(out) = &a.out {
        write_file(out, &calibration_csv(&res, &limits, &target, seed)?)?;
    }
    Ok(())
}

fn calibration_csv(res: &CalibrationResult, limits: &PredictionLimits, target: &TargetDesign, seed: u64) -> Result<String> {
    let (dname, dvalue) = dispersion_cells(&res.fit);
    let header = [
        "model", "lambda_hat", "dispersion_parameter", "dispersion", "alpha", "n_star", "upper_only", "q_lower",
        "q_upper", "psi_lower", "psi_upper", "within_tolerance", "B_used", "B_dropped", "seed", "lower", "upper",
    ];
    let row = vec![
        Model::of(&res.fit).name().to_string(),
        sig6(res.fit.lambda_hat),
        dname.to_string(),
        sig6(dvalue),
        sig6(target.alpha),
        sig6(target.n_star),
        (target.sidedness == Sidedness::UpperOnly).to_string(),
        sig6_opt(res.q_lower),
        sig6(res.q_upper),
        sig6_opt(res.achieved_psi_lower),
        sig6(res.achieved_psi_upper),
        res.within_tolerance.to_string(),
        res.n_boot_used.to_string(),
        res.n_dropped.to_string(),
        seed.to_string(),
        sig6(limits.lower),
        sig6(limits.upper),
    ];
    csv_string(&header, &[row])
}

fn sample(a: &SampleArgs, cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    let seed = require_seed(a.seed, cfg, "sample")?;
    if a.h == 0 {
        return Err(invalid("--H must be at least 1"));
    }
    let mut rng = RngState::new(seed, 0);
    let design = match (a.n, a.offset_lo, a.offset_hi) {
        (Some(n), None, None) => DesignSpec::constant(a.h, n)?,
        (None, Some(lo), Some(hi)) => sample_uniform_offsets(&mut rng, a.h, lo, hi)?,
        _ => return Err(invalid("give either --n or both --offset-lo and --offset-hi")),
    };
    let y = match a.model {
        Model::QuasiPoisson => {
            let phi = a.phi.ok_or_else(|| invalid("qp sampling needs --phi"))?;
            if a.kappa.is_some() {
                return Err(invalid("--kappa applies to nb sampling only"));
            }
            sample_quasi_poisson(&mut rng, &design, &QuasiPoissonParams::new(a.lambda, phi)?)?
        }
        Model::NegBinomial => {
            let kappa = match (a.kappa, a.phi) {
                (Some(k), None) => k,
                (None, Some(phi)) => (phi - 1.0) / (design.mean_offset() * a.lambda),
                _ => return Err(invalid("nb sampling needs exactly one of --kappa or --phi")),
            };
            sample_neg_binomial(&mut rng, &design, &NegBinParams::new(a.lambda, kappa)?)?
        }
    };
    let width = a.h.to_string().len();
    let ids: Vec<String> = (1..=a.h).map(|i| format!("c{i:0width$}")).collect();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &ids, &y, design.offsets()).map_err(|e| invalid(e.to_string()))?;
    match &a.out {
        Some(out) => std::fs::write(out, &buf).map_err(|e| CliError::io(out, e)),
        None => stdout.write_all(&buf).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn simulate(a: &SimulateArgs, _cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    let grid_cfg = Config::load(&a.grid)?;
    let grid = grid_from_config(&grid_cfg, GridOverrides { s: a.s, b: a.b, seed: a.seed })?;
    let mut rows = Vec::new();
    for cell in grid.cells() {
        let report = match run_cell(&cell) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!(
                    "cell {} / {} H={} lambda={} phi={}: {e}",
                    cell.generator, cell.method, cell.h, cell.lambda, cell.phi
                );
                None
            }
        };
        rows.push(grid_row(&cell, report.as_ref()));
    }
    let text = csv_string(&GRID_HEADER, &rows)?;
    match &a.out {
        Some(out) => write_file(out, &text),
        None => print(stdout, &text),
    }
}

fn chart(a: &ChartArgs, cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    let hist = ingest(&a.data)?;
    let points = match &a.points {
        Some(p) => ingest(p)?,
        None => hist.clone(),
    };
    let model = cfg.or(a.model, "model")?.unwrap_or(Model::QuasiPoisson);
    let mut levels = if a.levels.is_empty() { cfg.list("levels")?.unwrap_or(vec![0.95, 0.99]) } else { a.levels.clone() };
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(invalid("chart levels must lie strictly between 0 and 1"));
    }
    let upper_only = a.upper_only || cfg.get("upper-only")?.unwrap_or(false);
    let clamp = a.clamp_zero || cfg.get("clamp-zero")?.unwrap_or(false);
    let sidedness = if upper_only { Sidedness::UpperOnly } else { Sidedness::TwoSided };
    let seed = require_seed(a.seed, cfg, "chart")?;
    let s = settings(a.b, cfg, seed, cfg.or(a.variant, "variant")?.unwrap_or_default())?;

    let fit = model.fit(&hist.data)?;
    let design = DesignSpec::new(hist.data.offsets().collect())?;
    let mut n_stars: Vec<f64> = points.data.offsets().collect();
    n_stars.sort_by(f64::total_cmp);
    n_stars.dedup();
    let mut targets = Vec::new();
    for &n in &n_stars {
        for &l in &levels {
            targets.push(TargetDesign::new(n, 1.0 - l, sidedness)?);
        }
    }
    let results = calibrate_fit_for_targets(&fit, &design, &targets, &s)?;
    let band_for = |n: f64, li: usize| {
        let i = n_stars.iter().position(|&v| v == n).expect("offset was collected") * levels.len() + li;
        let l = if clamp { clamp_zero(results[i].limits) } else { results[i].limits };
        Band { lower: l.lower, upper: l.upper }
    };
    let chart_points = points
        .ids
        .iter()
        .zip(points.data.clusters())
        .map(|(id, c)| ChartPoint {
            id: id.clone(),
            y: c.y,
            n: c.n,
            center: c.n * fit.lambda_hat,
            bands: (0..levels.len()).map(|li| band_for(c.n, li)).collect(),
        })
        .collect();
    let title = a.title.clone().unwrap_or_else(|| {
        let kind = if upper_only { "upper prediction limits" } else { "prediction intervals" };
        format!("Calibrated {} {kind}", match model {
            Model::QuasiPoisson => "quasi-Poisson",
            Model::NegBinomial => "negative-binomial",
        })
    });
    let spec = ChartSpec { title, levels, points: chart_points };
    write_file(&a.out, &spec.to_svg()?)?;
    let csv_path = a.csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    write_file(&csv_path, &spec.to_csv()?)?;

    let text: String = spec.exceedances().iter().map(|e| e.summary() + "\n").collect();
    print(stdout, &text)
}
