//! Asymptotic prediction intervals for a future count `Y*` observed over
//! `n*` offset units: `n* λ̂ ± z · se`, where `se² = var(n* λ̂) + var(Y*)`.

use std::fmt;
use std::str::FromStr;

use super::{Level, Method, PredictionLimits, Scale};
use crate::error::{domain, Error, Result};
use crate::estimation::{Dispersion, ModelFit};
use crate::special::normal_quantile;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sidedness {
    TwoSided,
    UpperOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetDesign {
    pub n_star: f64,
    pub alpha: f64,
    pub sidedness: Sidedness,
}

impl TargetDesign {
    pub fn new(n_star: f64, alpha: f64, sidedness: Sidedness) -> Result<Self> {
        if !(n_star.is_finite() && n_star > 0.0) {
            return Err(domain(format!("n_star must be positive, got {n_star}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { n_star, alpha, sidedness })
    }

    pub fn two_sided(n_star: f64, alpha: f64) -> Result<Self> {
        Self::new(n_star, alpha, Sidedness::TwoSided)
    }

    pub fn upper_only(n_star: f64, alpha: f64) -> Result<Self> {
        Self::new(n_star, alpha, Sidedness::UpperOnly)
    }

    /// Target coverage of each calibrated bound: `1 - α/2` two-sided,
    /// `1 - α` for an upper bound alone.
    pub fn bound_level(&self) -> f64 {
        match self.sidedness {
            Sidedness::TwoSided => 1.0 - self.alpha / 2.0,
            Sidedness::UpperOnly => 1.0 - self.alpha,
        }
    }

    pub fn z(&self) -> f64 {
        normal_quantile(self.bound_level())
    }
}

/// Variance decomposition of the prediction error `n* λ̂ - Y*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionStdErr {
    pub var_estimation: f64,
    pub var_future: f64,
    pub se: f64,
}

impl PredictionStdErr {
    pub fn new(var_estimation: f64, var_future: f64) -> Self {
        Self { var_estimation, var_future, se: (var_estimation + var_future).sqrt() }
    }

    pub fn is_degenerate(&self) -> bool {
        self.se == 0.0
    }
}

/// Which estimation variance the negative-binomial interval uses.
///
/// `MainText` uses `var(λ̂) = (λ̂ + κ̂ n̄ λ̂) / (n̄ H)` and reproduces the
/// published Tarone limits; `Supplement` uses the derived
/// `(λ̂ + κ̂ n̄ λ̂²) / (n̄ H)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NbVariant {
    #[default]
    MainText,
    Supplement,
}

impl fmt::Display for NbVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NbVariant::MainText => "main-text",
            NbVariant::Supplement => "supplement",
        })
    }
}

impl FromStr for NbVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main-text" => Ok(NbVariant::MainText),
            "supplement" => Ok(NbVariant::Supplement),
            _ => Err(domain(format!("unknown variant `{s}`"))),
        }
    }
}

pub fn quasi_poisson_stderr(lambda: f64, phi: f64, h: usize, n_bar: f64, n_star: f64) -> PredictionStdErr {
    let var_estimation = n_star * n_star * phi * lambda / (n_bar * h as f64);
    let var_future = phi * n_star * lambda;
    PredictionStdErr::new(var_estimation, var_future)
}

pub fn neg_binomial_stderr(
    lambda: f64,
    kappa: f64,
    h: usize,
    n_bar: f64,
    n_star: f64,
    variant: NbVariant,
) -> PredictionStdErr {
    let excess = match variant {
        NbVariant::MainText => kappa * n_bar * lambda,
        NbVariant::Supplement => kappa * n_bar * lambda * lambda,
    };
    let var_estimation = n_star * n_star * (lambda + excess) / (n_bar * h as f64);
    let var_future = n_star * lambda * (1.0 + kappa * n_star * lambda);
    PredictionStdErr::new(var_estimation, var_future)
}

/// Prediction standard error for a fitted model. Quasi-Poisson dispersion is
/// floored at exactly one.
pub fn prediction_stderr(fit: &ModelFit, n_star: f64, variant: NbVariant) -> Result<PredictionStdErr> {
    if !(fit.lambda_hat.is_finite() && fit.lambda_hat > 0.0) {
        return Err(domain(format!("lambda_hat must be positive, got {}", fit.lambda_hat)));
    }
    if fit.h < 1 {
        return Err(Error::InsufficientData { needed: 1, got: fit.h });
    }
    match fit.dispersion {
        Dispersion::QuasiPoisson { phi_hat } => {
            Ok(quasi_poisson_stderr(fit.lambda_hat, phi_hat.max(1.0), fit.h, fit.n_bar, n_star))
        }
        Dispersion::NegBinomial { kappa_hat } => {
            if kappa_hat.is_nan() || kappa_hat < 0.0 {
                return Err(domain(format!("kappa_hat must be non-negative, got {kappa_hat}")));
            }
            Ok(neg_binomial_stderr(fit.lambda_hat, kappa_hat, fit.h, fit.n_bar, n_star, variant))
        }
    }
}

/// `center - q_lower·se` and `center + q_upper·se`; `q_lower = None` gives an
/// upper bound only.
pub(crate) fn limits_around(
    center: f64,
    se: f64,
    q_lower: Option<f64>,
    q_upper: f64,
    method: Method,
    alpha: f64,
) -> PredictionLimits {
    PredictionLimits {
        lower: q_lower.map_or(f64::NEG_INFINITY, |q| center - q * se),
        upper: center + q_upper * se,
        method,
        level: Level::Alpha(alpha),
        scale: Scale::Response,
    }
}

fn normal_limits(center: f64, se: &PredictionStdErr, target: &TargetDesign, method: Method) -> PredictionLimits {
    let z = target.z();
    let q_lower = (target.sidedness == Sidedness::TwoSided).then_some(z);
    limits_around(center, se.se, q_lower, z, method, target.alpha)
}

/// Interval for a single unclustered Poisson sample `y` over offset `n`.
/// `y = 0` yields the degenerate interval `[0, 0]` with zero standard error.
pub fn simple_poisson_pi(y: u64, n: f64, target: &TargetDesign) -> Result<(PredictionLimits, PredictionStdErr)> {
    if !(n.is_finite() && n > 0.0) {
        return Err(domain(format!("offset must be positive, got {n}")));
    }
    let lambda = y as f64 / n;
    let n_star = target.n_star;
    let se = PredictionStdErr::new(n_star * n_star * lambda / n, n_star * lambda);
    let mut limits = normal_limits(n_star * lambda, &se, target, Method::SimplePoisson);
    if se.is_degenerate() {
        limits.lower = 0.0;
    }
    Ok((limits, se))
}

pub fn quasi_poisson_pi(fit: &ModelFit, target: &TargetDesign) -> Result<(PredictionLimits, PredictionStdErr)> {
    if !matches!(fit.dispersion, Dispersion::QuasiPoisson { .. }) {
        return Err(Error::WrongFamily { expected: "quasi-poisson" });
    }
    let se = prediction_stderr(fit, target.n_star, NbVariant::MainText)?;
    let center = target.n_star * fit.lambda_hat;
    Ok((normal_limits(center, &se, target, Method::QuasiPoisson), se))
}

pub fn neg_binomial_pi(
    fit: &ModelFit,
    target: &TargetDesign,
    variant: NbVariant,
) -> Result<(PredictionLimits, PredictionStdErr)> {
    if !matches!(fit.dispersion, Dispersion::NegBinomial { .. }) {
        return Err(Error::WrongFamily { expected: "negative-binomial" });
    }
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    let se = prediction_stderr(fit, target.n_star, variant)?;
    let center = target.n_star * fit.lambda_hat;
    Ok((normal_limits(center, &se, target, Method::NegBinomial), se))
}
