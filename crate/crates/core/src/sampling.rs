//! Overdispersed count generators built on the gamma-Poisson mixture.

use crate::error::{domain, Result};
use crate::rng::{poisson_sample, GammaParams, RngState};

/// Offsets `n_1..n_H` of a clustered design.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSpec {
    offsets: Vec<f64>,
}

impl DesignSpec {
    pub fn new(offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(domain("design needs at least one cluster"));
        }
        if let Some(bad) = offsets.iter().find(|n| !(n.is_finite() && **n > 0.0)) {
            return Err(domain(format!("offsets must be positive and finite, got {bad}")));
        }
        Ok(Self { offsets })
    }

    /// `h` clusters sharing offset `n`.
    pub fn constant(h: usize, n: f64) -> Result<Self> {
        Self::new(vec![n; h])
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn mean_offset(&self) -> f64 {
        self.offsets.iter().sum::<f64>() / self.offsets.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuasiPoissonParams {
    pub lambda: f64,
    pub phi: f64,
}

impl QuasiPoissonParams {
    pub fn new(lambda: f64, phi: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(domain(format!("lambda must be positive, got {lambda}")));
        }
        if !(phi.is_finite() && phi > 1.0) {
            return Err(domain(format!("quasi-Poisson sampling needs phi > 1, got {phi}")));
        }
        Ok(Self { lambda, phi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegBinParams {
    pub lambda: f64,
    pub kappa: f64,
}

impl NegBinParams {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(domain(format!("lambda must be positive, got {lambda}")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(domain(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { lambda, kappa })
    }
}

/// Quasi-Poisson counts with `var(Y_i) = phi * n_i * lambda`.
///
/// Each cluster gets its own `kappa_i = (phi - 1) / (n_i lambda)`, so the
/// cluster mean is drawn from `Gamma(1/kappa_i, 1/(kappa_i n_i lambda))`
/// before the Poisson step.
pub fn sample_quasi_poisson(
    state: &mut RngState,
    design: &DesignSpec,
    params: &QuasiPoissonParams,
) -> Result<Vec<u64>> {
    let params = QuasiPoissonParams::new(params.lambda, params.phi)?;
    design
        .offsets()
        .iter()
        .map(|&n| {
            let mu = n * params.lambda;
            let kappa = (params.phi - 1.0) / mu;
            let gamma = GammaParams::new(1.0 / kappa, 1.0 / (kappa * mu))?;
            let rate = state.gamma(gamma);
            poisson_sample(state, rate)
        })
        .collect()
}

/// Negative-binomial (NB2) counts with `var(Y_i) = n_i lambda (1 + kappa n_i lambda)`.
pub fn sample_neg_binomial(
    state: &mut RngState,
    design: &DesignSpec,
    params: &NegBinParams,
) -> Result<Vec<u64>> {
    let params = NegBinParams::new(params.lambda, params.kappa)?;
    let shape = 1.0 / params.kappa;
    design
        .offsets()
        .iter()
        .map(|&n| {
            let gamma = GammaParams::new(shape, 1.0 / (params.kappa * n * params.lambda))?;
            let rate = state.gamma(gamma);
            poisson_sample(state, rate)
        })
        .collect()
}

/// Plain Poisson counts with means `n_i lambda`; the `kappa -> 0` boundary.
pub fn sample_poisson(state: &mut RngState, design: &DesignSpec, lambda: f64) -> Result<Vec<u64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(domain(format!("lambda must be non-negative, got {lambda}")));
    }
    design.offsets().iter().map(|&n| poisson_sample(state, n * lambda)).collect()
}

/// `h` independent offsets from `Uniform(lo, hi)`.
pub fn sample_uniform_offsets(state: &mut RngState, h: usize, lo: f64, hi: f64) -> Result<DesignSpec> {
    if h == 0 {
        return Err(domain("need at least one offset"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(domain(format!("need 0 < lo < hi, got lo={lo}, hi={hi}")));
    }
    let offsets = (0..h).map(|_| lo + (hi - lo) * state.uniform()).collect();
    DesignSpec::new(offsets)
}
