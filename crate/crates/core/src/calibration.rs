//! Bootstrap calibration of prediction limits.
//!
//! A parametric bootstrap regenerates the historical design and a future
//! observation from the fitted model, refits the model to every replicate
//! and records `(center_b, se_b, y*_b)`. The lower and upper coefficients are
//! then searched independently by bisection so that each bound covers the
//! bootstrapped future observations at its target rate. The final limits
//! apply those coefficients to the original fit's center and standard error.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::estimation::{fit_neg_binomial, fit_quasi_poisson, Dispersion, HistoricalData, ModelFit};
use crate::limits::prediction::{limits_around, prediction_stderr, NbVariant, PredictionStdErr, Sidedness, TargetDesign};
use crate::limits::{Method, PredictionLimits};
use crate::rng::RngState;
use crate::sampling::{
    sample_neg_binomial, sample_poisson, sample_quasi_poisson, DesignSpec, NegBinParams, QuasiPoissonParams,
};

/// Dispersion floor used when generating quasi-Poisson bootstrap data.
pub const QP_SAMPLING_PHI_FLOOR: f64 = 1.001;
const BRACKET_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    QuasiPoisson,
    NegBinomial,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::QuasiPoisson => "qp",
            Model::NegBinomial => "nb",
        }
    }

    pub fn fit(self, data: &HistoricalData) -> Result<ModelFit> {
        match self {
            Model::QuasiPoisson => fit_quasi_poisson(data),
            Model::NegBinomial => fit_neg_binomial(data),
        }
    }

    pub fn of(fit: &ModelFit) -> Model {
        match fit.dispersion {
            Dispersion::QuasiPoisson { .. } => Model::QuasiPoisson,
            Dispersion::NegBinomial { .. } => Model::NegBinomial,
        }
    }

    pub fn calibrated_method(self) -> Method {
        match self {
            Model::QuasiPoisson => Method::CalibratedQuasiPoisson,
            Model::NegBinomial => Method::CalibratedNegBinomial,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qp" => Ok(Model::QuasiPoisson),
            "nb" => Ok(Model::NegBinomial),
            _ => Err(domain(format!("unknown model `{s}` (expected qp or nb)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationSettings {
    /// Number of bootstrap samples.
    pub b: usize,
    /// Accepted distance between bootstrapped and target coverage.
    pub tolerance: f64,
    pub max_bisection_iters: usize,
    pub bracket_hi_init: f64,
    pub seed: u64,
    pub variant: NbVariant,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            b: 10_000,
            tolerance: 0.001,
            max_bisection_iters: 100,
            bracket_hi_init: 10.0,
            seed: 0,
            variant: NbVariant::MainText,
        }
    }
}

impl CalibrationSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 100 {
            return Err(domain(format!("need at least 100 bootstrap samples, got {}", self.b)));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 0.5) {
            return Err(domain(format!("tolerance must lie in (0, 0.5), got {}", self.tolerance)));
        }
        if !(self.bracket_hi_init.is_finite() && self.bracket_hi_init > 0.0) {
            return Err(domain("initial bracket must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Replicate {
    pub center: f64,
    pub se: f64,
    pub y_star: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapSample {
    pub replicates: Vec<Replicate>,
    /// Replicates whose refit failed or did not converge.
    pub dropped: usize,
}

impl BootstrapSample {
    pub fn total(&self) -> usize {
        self.replicates.len() + self.dropped
    }
}

/// Draws counts from the fitted model. Quasi-Poisson dispersion is floored at
/// [`QP_SAMPLING_PHI_FLOOR`]; a negative-binomial `kappa_hat` of zero samples
/// plain Poisson counts.
pub fn sample_from_fit(state: &mut RngState, design: &DesignSpec, fit: &ModelFit) -> Result<Vec<u64>> {
    match fit.dispersion {
        Dispersion::QuasiPoisson { phi_hat } => {
            let params = QuasiPoissonParams::new(fit.lambda_hat, phi_hat.max(QP_SAMPLING_PHI_FLOOR))?;
            sample_quasi_poisson(state, design, &params)
        }
        Dispersion::NegBinomial { kappa_hat } if kappa_hat > 0.0 => {
            sample_neg_binomial(state, design, &NegBinParams::new(fit.lambda_hat, kappa_hat)?)
        }
        Dispersion::NegBinomial { .. } => sample_poisson(state, design, fit.lambda_hat),
    }
}

/// Bootstrap replicates for several future offsets at once. Replicate `b`
/// draws from stream `b` of `settings.seed`: first the historical design, then
/// one future count per entry of `n_stars`, so results do not depend on the
/// number of worker threads.
pub fn bootstrap_replicates_for_targets(
    fit: &ModelFit,
    design: &DesignSpec,
    n_stars: &[f64],
    settings: &CalibrationSettings,
) -> Result<Vec<BootstrapSample>> {
    settings.validate()?;
    if let Some(bad) = n_stars.iter().find(|n| !(n.is_finite() && **n > 0.0)) {
        return Err(domain(format!("n_star must be positive, got {bad}")));
    }
    let model = Model::of(fit);
    let futures: Vec<DesignSpec> =
        n_stars.iter().map(|&n| DesignSpec::constant(1, n)).collect::<Result<_>>()?;

    let draws: Vec<Option<(ModelFit, Vec<u64>)>> = (0..settings.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngState::new(settings.seed, b as u64);
            let y = sample_from_fit(&mut rng, design, fit)?;
            let y_star = futures
                .iter()
                .map(|f| sample_from_fit(&mut rng, f, fit).map(|v| v[0]))
                .collect::<Result<Vec<_>>>()?;
            let data = HistoricalData::from_counts(&y, design.offsets())?;
            Ok(match model.fit(&data) {
                Ok(refit) if refit.converged => Some((refit, y_star)),
                _ => None,
            })
        })
        .collect::<Result<_>>()?;

    let dropped = draws.iter().filter(|d| d.is_none()).count();
    if 2 * dropped > settings.b {
        return Err(Error::UnstableBootstrap { failed: dropped, total: settings.b });
    }

    n_stars
        .iter()
        .enumerate()
        .map(|(j, &n_star)| {
            let replicates = draws
                .iter()
                .flatten()
                .map(|(refit, y_star)| {
                    let se = prediction_stderr(refit, n_star, settings.variant)?;
                    Ok(Replicate { center: n_star * refit.lambda_hat, se: se.se, y_star: y_star[j] })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BootstrapSample { replicates, dropped })
        })
        .collect()
}

pub fn bootstrap_replicates(
    fit: &ModelFit,
    design: &DesignSpec,
    target: &TargetDesign,
    settings: &CalibrationSettings,
) -> Result<BootstrapSample> {
    let mut samples = bootstrap_replicates_for_targets(fit, design, &[target.n_star], settings)?;
    Ok(samples.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Bootstrapped coverage of the bound with coefficient `q`.
pub fn bootstrap_coverage(replicates: &[Replicate], side: Side, q: f64) -> f64 {
    let hits = replicates
        .iter()
        .filter(|r| {
            let y = r.y_star as f64;
            match side {
                Side::Lower => r.center - q * r.se <= y,
                Side::Upper => y <= r.center + q * r.se,
            }
        })
        .count();
    hits as f64 / replicates.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bisection {
    pub q: f64,
    pub achieved_psi: f64,
    pub iterations: usize,
    /// False when no coefficient lands within the tolerance band (the
    /// coverage step function jumps across it) or the iteration cap was hit.
    pub within_tolerance: bool,
}

/// Finds the smallest `q >= 0` whose bootstrapped coverage reaches
/// `target_psi - tolerance`. The bracket `[0, hi]` starts at
/// `bracket_hi_init` and doubles until it contains the answer.
pub fn bisect_coefficient(
    replicates: &[Replicate],
    side: Side,
    target_psi: f64,
    settings: &CalibrationSettings,
) -> Result<Bisection> {
    if replicates.is_empty() {
        return Err(domain("no bootstrap replicates"));
    }
    if !(target_psi > 0.0 && target_psi < 1.0) {
        return Err(domain(format!("target coverage must lie in (0, 1), got {target_psi}")));
    }
    let tol = settings.tolerance;
    let goal = target_psi - tol;
    let psi = |q: f64| bootstrap_coverage(replicates, side, q);
    let finish = |q: f64, iterations: usize, capped: bool| {
        let achieved_psi = psi(q);
        Bisection {
            q,
            achieved_psi,
            iterations,
            within_tolerance: !capped && (achieved_psi - target_psi).abs() <= tol + 1e-12,
        }
    };

    if psi(0.0) >= goal {
        return Ok(finish(0.0, 0, false));
    }
    let mut lo = 0.0;
    let mut hi = settings.bracket_hi_init;
    while psi(hi) < goal {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(Error::BracketOverflow(BRACKET_CAP));
        }
    }
    let mut iterations = 0;
    let mut capped = true;
    while iterations < settings.max_bisection_iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            capped = false;
            break;
        }
        if psi(mid) >= goal {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(finish(hi, iterations, capped))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    /// `None` for an upper bound alone.
    pub q_lower: Option<f64>,
    pub q_upper: f64,
    pub achieved_psi_lower: Option<f64>,
    pub achieved_psi_upper: f64,
    pub within_tolerance: bool,
    pub n_boot_used: usize,
    pub n_dropped: usize,
    pub limits: PredictionLimits,
    pub fit: ModelFit,
    pub stderr: PredictionStdErr,
}

/// Calibrates limits for `target` from precomputed replicates.
pub fn calibrate_replicates(
    fit: &ModelFit,
    sample: &BootstrapSample,
    target: &TargetDesign,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    let level = target.bound_level();
    let upper = bisect_coefficient(&sample.replicates, Side::Upper, level, settings)?;
    let lower = match target.sidedness {
        Sidedness::TwoSided => Some(bisect_coefficient(&sample.replicates, Side::Lower, level, settings)?),
        Sidedness::UpperOnly => None,
    };
    let stderr = prediction_stderr(fit, target.n_star, settings.variant)?;
    let center = target.n_star * fit.lambda_hat;
    let method = Model::of(fit).calibrated_method();
    let limits = limits_around(center, stderr.se, lower.map(|b| b.q), upper.q, method, target.alpha);
    Ok(CalibrationResult {
        q_lower: lower.map(|b| b.q),
        q_upper: upper.q,
        achieved_psi_lower: lower.map(|b| b.achieved_psi),
        achieved_psi_upper: upper.achieved_psi,
        within_tolerance: upper.within_tolerance && lower.is_none_or(|b| b.within_tolerance),
        n_boot_used: sample.replicates.len(),
        n_dropped: sample.dropped,
        limits,
        fit: fit.clone(),
        stderr,
    })
}

fn require_usable(fit: &ModelFit) -> Result<()> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    if fit.lambda_hat.is_nan() || fit.lambda_hat <= 0.0 {
        return Err(Error::AllZeroSample);
    }
    Ok(())
}

/// Calibrates several targets against one bootstrap run. Targets sharing an
/// `n_star` share their future draws.
pub fn calibrate_fit_for_targets(
    fit: &ModelFit,
    design: &DesignSpec,
    targets: &[TargetDesign],
    settings: &CalibrationSettings,
) -> Result<Vec<CalibrationResult>> {
    require_usable(fit)?;
    let mut n_stars: Vec<f64> = Vec::new();
    let index: Vec<usize> = targets
        .iter()
        .map(|t| match n_stars.iter().position(|&n| n == t.n_star) {
            Some(i) => i,
            None => {
                n_stars.push(t.n_star);
                n_stars.len() - 1
            }
        })
        .collect();
    let samples = bootstrap_replicates_for_targets(fit, design, &n_stars, settings)?;
    targets
        .iter()
        .zip(index)
        .map(|(t, i)| calibrate_replicates(fit, &samples[i], t, settings))
        .collect()
}

/// Calibrated limits from an existing fit, e.g. estimates taken from a
/// reference group and applied to another design.
pub fn calibrate_fit(
    fit: &ModelFit,
    design: &DesignSpec,
    target: &TargetDesign,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    calibrate_fit_for_targets(fit, design, std::slice::from_ref(target), settings).map(|mut v| v.remove(0))
}

/// Fits `model` to the historical data and calibrates its prediction limits.
pub fn calibrated_pi(
    data: &HistoricalData,
    target: &TargetDesign,
    settings: &CalibrationSettings,
    model: Model,
) -> Result<CalibrationResult> {
    let fit = model.fit(data)?;
    let design = DesignSpec::new(data.offsets().collect())?;
    calibrate_fit(&fit, &design, target, settings)
}
