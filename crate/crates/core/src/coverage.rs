//! Monte-Carlo coverage study.
//!
//! Each cell of a study fixes the data-generating process and the method
//! under test. Every replicate draws one historical data set and one future
//! target from the same process, computes limits from the historical data and
//! scores whether the target is covered by the lower bound, the upper bound
//! and the interval.

use rayon::prelude::*;

use crate::calibration::{calibrate_fit, CalibrationSettings, Model};
use crate::error::{domain, Error, Result};
use crate::estimation::{fit_neg_binomial, fit_quasi_poisson, HistoricalData};
use crate::limits::heuristic::{c_chart_limits, laney_u_chart_limits, mean_sd_limits, u_chart_limits};
use crate::limits::prediction::{
    neg_binomial_pi, quasi_poisson_pi, simple_poisson_pi, NbVariant, Sidedness, TargetDesign,
};
use crate::limits::{Method, PredictionLimits};
use crate::rng::{derive_seed, RngState};
use crate::sampling::{
    sample_neg_binomial, sample_quasi_poisson, sample_uniform_offsets, DesignSpec, NegBinParams,
    QuasiPoissonParams,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OffsetRule {
    Fixed(f64),
    /// Offsets (and the target's `n*`) drawn fresh from `Uniform(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

impl OffsetRule {
    pub fn mean(&self) -> f64 {
        match *self {
            OffsetRule::Fixed(n) => n,
            OffsetRule::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            OffsetRule::Fixed(n) => (n, n),
            OffsetRule::Uniform { lo, hi } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            OffsetRule::Fixed(n) if n.is_finite() && n > 0.0 => Ok(()),
            OffsetRule::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi => Ok(()),
            _ => Err(domain(format!("invalid offset rule {self:?}"))),
        }
    }

    fn design(&self, rng: &mut RngState, h: usize) -> Result<DesignSpec> {
        match *self {
            OffsetRule::Fixed(n) => DesignSpec::constant(h, n),
            OffsetRule::Uniform { lo, hi } => sample_uniform_offsets(rng, h, lo, hi),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimCell {
    pub h: usize,
    pub lambda: f64,
    pub phi: f64,
    pub offsets: OffsetRule,
    pub generator: Model,
    pub method: Method,
    pub alpha: f64,
    pub upper_only: bool,
    /// Multiplier for the heuristic methods; defaults to `z_{1-α/2}`.
    pub k: Option<f64>,
    pub s: usize,
    pub b: usize,
    pub seed: u64,
    pub variant: NbVariant,
}

impl SimCell {
    /// A two-sided cell at desk scale (`S = 500`, `B = 2000`).
    pub fn new(h: usize, lambda: f64, phi: f64, offsets: OffsetRule, generator: Model, method: Method) -> Self {
        Self {
            h,
            lambda,
            phi,
            offsets,
            generator,
            method,
            alpha: 0.05,
            upper_only: false,
            k: None,
            s: 500,
            b: 2000,
            seed: 0,
            variant: NbVariant::MainText,
        }
    }

    /// NB dispersion matched to `phi` at the design's mean offset:
    /// `kappa = (phi - 1) / (n̄ λ)`.
    pub fn kappa(&self) -> f64 {
        (self.phi - 1.0) / (self.offsets.mean() * self.lambda)
    }

    pub fn target(&self, n_star: f64) -> Result<TargetDesign> {
        let sidedness = if self.upper_only { Sidedness::UpperOnly } else { Sidedness::TwoSided };
        TargetDesign::new(n_star, self.alpha, sidedness)
    }

    pub fn k_value(&self) -> f64 {
        self.k.unwrap_or_else(|| crate::special::normal_quantile(1.0 - self.alpha / 2.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(domain("need at least one replicate"));
        }
        if self.h == 0 {
            return Err(domain("need at least one historical cluster"));
        }
        self.offsets.validate()?;
        QuasiPoissonParams::new(self.lambda, self.phi)?;
        self.target(1.0)?;
        Ok(())
    }

    fn generate(&self, rng: &mut RngState, design: &DesignSpec) -> Result<Vec<u64>> {
        match self.generator {
            Model::QuasiPoisson => {
                sample_quasi_poisson(rng, design, &QuasiPoissonParams::new(self.lambda, self.phi)?)
            }
            Model::NegBinomial => sample_neg_binomial(rng, design, &NegBinParams::new(self.lambda, self.kappa())?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageReport {
    pub psi_cp: f64,
    pub psi_l: f64,
    pub psi_u: f64,
    /// Replicates whose limits could be computed (converged fits).
    pub s_used: usize,
    pub s_total: usize,
}

impl CoverageReport {
    pub fn convergence_rate(&self) -> f64 {
        self.s_used as f64 / self.s_total as f64
    }
}

/// Limits by any supported method. `k` drives the heuristic methods, the
/// target's `alpha` everything else. u-chart limits stay per offset unit.
pub fn compute_limits(
    method: Method,
    data: &HistoricalData,
    target: &TargetDesign,
    k: f64,
    settings: &CalibrationSettings,
) -> Result<PredictionLimits> {
    let mut limits = match method {
        Method::MeanSd => mean_sd_limits(data, k)?,
        Method::CChart => c_chart_limits(data, k)?,
        Method::UChart => u_chart_limits(data, k, target.n_star)?,
        Method::LaneyUChart => laney_u_chart_limits(data, k, target.n_star)?.0,
        Method::SimplePoisson => simple_poisson_pi(data.total_y(), data.total_n(), target)?.0,
        Method::QuasiPoisson => quasi_poisson_pi(&fit_quasi_poisson(data)?, target)?.0,
        Method::NegBinomial => neg_binomial_pi(&fit_neg_binomial(data)?, target, settings.variant)?.0,
        Method::CalibratedQuasiPoisson | Method::CalibratedNegBinomial => {
            let model = if method == Method::CalibratedQuasiPoisson {
                Model::QuasiPoisson
            } else {
                Model::NegBinomial
            };
            let fit = model.fit(data)?;
            let design = DesignSpec::new(data.offsets().collect())?;
            calibrate_fit(&fit, &design, target, settings)?.limits
        }
    };
    if target.sidedness == Sidedness::UpperOnly {
        limits.lower = f64::NEG_INFINITY;
    }
    Ok(limits)
}

struct Score {
    lower: bool,
    upper: bool,
}

fn run_replicate(cell: &SimCell, s: usize) -> Result<Option<Score>> {
    let mut rng = RngState::new(derive_seed(cell.seed, &[s as u64]), 0);
    let design = cell.offsets.design(&mut rng, cell.h)?;
    let n_star = match cell.offsets {
        OffsetRule::Fixed(n) => n,
        OffsetRule::Uniform { lo, hi } => sample_uniform_offsets(&mut rng, 1, lo, hi)?.offsets()[0],
    };
    let y = cell.generate(&mut rng, &design)?;
    let y_star = cell.generate(&mut rng, &DesignSpec::constant(1, n_star)?)?[0];
    let data = HistoricalData::from_counts(&y, design.offsets())?;
    let target = cell.target(n_star)?;
    let settings = CalibrationSettings {
        b: cell.b,
        seed: derive_seed(cell.seed, &[s as u64, 1]),
        variant: cell.variant,
        ..CalibrationSettings::default()
    };
    let limits = match compute_limits(cell.method, &data, &target, cell.k_value(), &settings) {
        Ok(l) => l,
        // Numerical or degenerate-data failures are what "not converged"
        // means for the study; invalid settings are not.
        Err(Error::ParameterDomain(msg)) => return Err(Error::ParameterDomain(msg)),
        Err(_) => return Ok(None),
    };
    let t = if cell.method.is_u_chart() { y_star as f64 / n_star } else { y_star as f64 };
    Ok(Some(Score { lower: limits.covers_lower(t), upper: limits.covers_upper(t) }))
}

/// Runs one cell. Coverage is computed over the replicates whose limits could
/// be computed.
pub fn run_cell(cell: &SimCell) -> Result<CoverageReport> {
    cell.validate()?;
    if cell.method.is_calibrated() {
        CalibrationSettings { b: cell.b, ..Default::default() }.validate()?;
    }
    let scores: Vec<Option<Score>> =
        (0..cell.s).into_par_iter().map(|s| run_replicate(cell, s)).collect::<Result<_>>()?;
    let used: Vec<&Score> = scores.iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::NoConvergedReplicates(cell.s));
    }
    let n = used.len() as f64;
    let count = |f: &dyn Fn(&Score) -> bool| used.iter().filter(|s| f(s)).count() as f64 / n;
    Ok(CoverageReport {
        psi_cp: count(&|s| s.lower && s.upper),
        psi_l: count(&|s| s.lower),
        psi_u: count(&|s| s.upper),
        s_used: used.len(),
        s_total: cell.s,
    })
}

/// Runs every cell; failures are reported per cell.
pub fn run_grid(cells: &[SimCell]) -> Vec<Result<CoverageReport>> {
    cells.iter().map(run_cell).collect()
}

/// Cartesian parameter grid. Cell `i` of [`GridSpec::cells`] gets the seed
/// `derive_seed(seed, [i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub h: Vec<usize>,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub offsets: Vec<OffsetRule>,
    pub generators: Vec<Model>,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub upper_only: bool,
    pub k: Option<f64>,
    pub s: usize,
    pub b: usize,
    pub seed: u64,
    pub variant: NbVariant,
}

impl GridSpec {
    /// Two-sided study: H ∈ {5, 10, 20, 100}, λ ∈ {5, 20, 100},
    /// φ ∈ {1.001, 3, 5}, `n_h = n* = 3`.
    pub fn two_sided_study(methods: Vec<Method>) -> Self {
        Self {
            h: vec![5, 10, 20, 100],
            lambda: vec![5.0, 20.0, 100.0],
            phi: vec![1.001, 3.0, 5.0],
            offsets: vec![OffsetRule::Fixed(3.0)],
            generators: vec![Model::QuasiPoisson],
            methods,
            alpha: 0.05,
            upper_only: false,
            k: None,
            s: 500,
            b: 2000,
            seed: 1,
            variant: NbVariant::MainText,
        }
    }

    /// Upper-bound study: H ∈ {5, 10, 20, 100}, λ ∈ {0.1, 1, 5, 20},
    /// φ ∈ {1.001, 3, 5, 10}, offsets uniform on `[0.5, 4]` and `[0.5, 50]`.
    pub fn upper_bound_study(generators: Vec<Model>, methods: Vec<Method>) -> Self {
        Self {
            h: vec![5, 10, 20, 100],
            lambda: vec![0.1, 1.0, 5.0, 20.0],
            phi: vec![1.001, 3.0, 5.0, 10.0],
            offsets: vec![OffsetRule::Uniform { lo: 0.5, hi: 4.0 }, OffsetRule::Uniform { lo: 0.5, hi: 50.0 }],
            generators,
            methods,
            upper_only: true,
            ..Self::two_sided_study(Vec::new())
        }
    }

    pub fn cells(&self) -> Vec<SimCell> {
        let mut cells = Vec::new();
        for &generator in &self.generators {
            for &method in &self.methods {
                for &offsets in &self.offsets {
                    for &h in &self.h {
                        for &lambda in &self.lambda {
                            for &phi in &self.phi {
                                let seed = derive_seed(self.seed, &[cells.len() as u64]);
                                cells.push(SimCell {
                                    h,
                                    lambda,
                                    phi,
                                    offsets,
                                    generator,
                                    method,
                                    alpha: self.alpha,
                                    upper_only: self.upper_only,
                                    k: self.k,
                                    s: self.s,
                                    b: self.b,
                                    seed,
                                    variant: self.variant,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}
