//! Intercept-only count GLMs with log link and offset `ln(n_h)`.
//!
//! Both models share the mean structure `E(Y_h) = n_h * lambda`; they differ
//! in how the extra-Poisson variance is described. Quasi-Poisson estimates a
//! multiplicative dispersion from Pearson residuals; the negative-binomial fit
//! is full maximum likelihood over `(lambda, kappa)`.

use crate::error::{domain, Error, Result};
use crate::special::{digamma, ln_gamma, trigamma};

const MAX_OUTER_ITERATIONS: usize = 50;
const LOGLIK_TOLERANCE: f64 = 1e-8;
const THETA_MIN: f64 = 1e-8;
const THETA_MAX: f64 = 1e8;
/// Counts up to this size use exact finite sums for Γ-function differences.
const EXACT_SUM_LIMIT: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cluster {
    pub y: u64,
    pub n: f64,
}

/// Historical control data: one summed count and one offset per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoricalData {
    clusters: Vec<Cluster>,
}

impl HistoricalData {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(c) = clusters.iter().find(|c| !(c.n.is_finite() && c.n > 0.0)) {
            return Err(domain(format!("offsets must be positive and finite, got {}", c.n)));
        }
        Ok(Self { clusters })
    }

    pub fn from_counts(y: &[u64], n: &[f64]) -> Result<Self> {
        if y.len() != n.len() {
            return Err(domain(format!("{} counts but {} offsets", y.len(), n.len())));
        }
        Self::new(y.iter().zip(n).map(|(&y, &n)| Cluster { y, n }).collect())
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn h(&self) -> usize {
        self.clusters.len()
    }

    pub fn total_y(&self) -> u64 {
        self.clusters.iter().map(|c| c.y).sum()
    }

    pub fn total_n(&self) -> f64 {
        self.clusters.iter().map(|c| c.n).sum()
    }

    pub fn n_bar(&self) -> f64 {
        self.total_n() / self.h() as f64
    }

    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.clusters.iter().map(|c| c.y)
    }

    pub fn offsets(&self) -> impl Iterator<Item = f64> + '_ {
        self.clusters.iter().map(|c| c.n)
    }

    /// The common offset if all clusters share one.
    pub fn common_offset(&self) -> Option<f64> {
        let first = self.clusters[0].n;
        self.clusters.iter().all(|c| c.n == first).then_some(first)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dispersion {
    QuasiPoisson { phi_hat: f64 },
    NegBinomial { kappa_hat: f64 },
}

impl Dispersion {
    pub fn family(&self) -> &'static str {
        match self {
            Dispersion::QuasiPoisson { .. } => "quasi-poisson",
            Dispersion::NegBinomial { .. } => "negative-binomial",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Dispersion::QuasiPoisson { phi_hat } => phi_hat,
            Dispersion::NegBinomial { kappa_hat } => kappa_hat,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFit {
    /// Rate per unit of offset, `exp(beta_0)`.
    pub lambda_hat: f64,
    pub dispersion: Dispersion,
    pub h: usize,
    pub n_bar: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ModelFit {
    /// Builds a fit from published or externally computed estimates.
    pub fn from_estimates(lambda_hat: f64, dispersion: Dispersion, h: usize, n_bar: f64) -> Result<Self> {
        if !(lambda_hat.is_finite() && lambda_hat > 0.0) {
            return Err(domain(format!("lambda_hat must be positive, got {lambda_hat}")));
        }
        if !(dispersion.value().is_finite() && dispersion.value() >= 0.0) {
            return Err(domain(format!("dispersion must be non-negative, got {}", dispersion.value())));
        }
        if h == 0 || !(n_bar.is_finite() && n_bar > 0.0) {
            return Err(domain("need H >= 1 and n_bar > 0"));
        }
        Ok(Self { lambda_hat, dispersion, h, n_bar, converged: true, iterations: 0 })
    }

    pub fn beta0(&self) -> f64 {
        self.lambda_hat.ln()
    }
}

fn require_dispersion_data(data: &HistoricalData) -> Result<()> {
    if data.h() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: data.h() });
    }
    if data.total_y() == 0 {
        return Err(Error::AllZeroSample);
    }
    Ok(())
}

/// Quasi-Poisson fit: `lambda_hat = Σy / Σn`, `phi_hat` the Pearson χ² over `H - 1`.
///
/// `phi_hat` is reported raw and can fall below one.
pub fn fit_quasi_poisson(data: &HistoricalData) -> Result<ModelFit> {
    require_dispersion_data(data)?;
    let lambda_hat = data.total_y() as f64 / data.total_n();
    let pearson: f64 = data
        .clusters()
        .iter()
        .map(|c| {
            let mu = c.n * lambda_hat;
            (c.y as f64 - mu).powi(2) / mu
        })
        .sum();
    let phi_hat = pearson / (data.h() - 1) as f64;
    Ok(ModelFit {
        lambda_hat,
        dispersion: Dispersion::QuasiPoisson { phi_hat },
        h: data.h(),
        n_bar: data.n_bar(),
        converged: true,
        iterations: 0,
    })
}

/// NB2 log-likelihood at rate `lambda` and dispersion `kappa` (`kappa = 0`
/// is the Poisson log-likelihood).
pub fn nb_log_likelihood(data: &HistoricalData, lambda: f64, kappa: f64) -> f64 {
    data.clusters()
        .iter()
        .map(|c| {
            let y = c.y as f64;
            let mu = c.n * lambda;
            let log_fact = ln_gamma(y + 1.0);
            if kappa == 0.0 {
                return y * mu.ln() - mu - log_fact;
            }
            let theta = 1.0 / kappa;
            ln_gamma_ratio(c.y, theta) - log_fact - theta * (mu / theta).ln_1p()
                + y * (mu.ln() - (theta + mu).ln())
        })
        .sum()
}

/// `ln Γ(y + θ) - ln Γ(θ)`.
fn ln_gamma_ratio(y: u64, theta: f64) -> f64 {
    if y <= EXACT_SUM_LIMIT || theta > 1e6 {
        (0..y).map(|j| (theta + j as f64).ln()).sum()
    } else {
        ln_gamma(y as f64 + theta) - ln_gamma(theta)
    }
}

/// `ψ(y + θ) - ψ(θ)` and `ψ'(y + θ) - ψ'(θ)`.
fn digamma_ratio(y: u64, theta: f64) -> (f64, f64) {
    if y <= EXACT_SUM_LIMIT || theta > 1e6 {
        (0..y).fold((0.0, 0.0), |(d, t), j| {
            let inv = 1.0 / (theta + j as f64);
            (d + inv, t - inv * inv)
        })
    } else {
        let yt = y as f64 + theta;
        (digamma(yt) - digamma(theta), trigamma(yt) - trigamma(theta))
    }
}

/// Maximizes over `beta = ln lambda` for fixed `kappa`; the problem is concave
/// in `beta`.
fn solve_lambda(data: &HistoricalData, kappa: f64, start: f64) -> f64 {
    if kappa == 0.0 {
        return data.total_y() as f64 / data.total_n();
    }
    let mut beta = start.ln();
    for _ in 0..100 {
        let lambda = beta.exp();
        let (score, info) = data.clusters().iter().fold((0.0, 0.0), |(s, i), c| {
            let mu = c.n * lambda;
            let y = c.y as f64;
            let denom = 1.0 + kappa * mu;
            (s + (y - mu) / denom, i + mu * (1.0 + kappa * y) / (denom * denom))
        });
        let step = score / info;
        beta += step;
        if step.abs() < 1e-13 * beta.abs().max(1.0) {
            break;
        }
    }
    beta.exp()
}

/// Score and its derivative of the profile log-likelihood in `theta`.
fn theta_score(data: &HistoricalData, lambda: f64, theta: f64) -> (f64, f64) {
    data.clusters().iter().fold((0.0, 0.0), |(s, ds), c| {
        let y = c.y as f64;
        let mu = c.n * lambda;
        let (dig, trig) = digamma_ratio(c.y, theta);
        let tm = theta + mu;
        let score = dig - (mu / theta).ln_1p() + (mu - y) / tm;
        let deriv = trig + mu / (theta * tm) + (y - mu) / (tm * tm);
        (s + score, ds + deriv)
    })
}

/// Solves the profile score for `theta = 1/kappa` on `[1e-8, 1e8]` by Newton
/// steps in `ln theta`, falling back to bisection outside the bracket.
/// Returns `kappa`, with `0` for the Poisson boundary.
fn solve_kappa(data: &HistoricalData, lambda: f64, start_kappa: f64) -> f64 {
    let (sq, total): (f64, f64) = data.clusters().iter().fold((0.0, 0.0), |(sq, t), c| {
        let r = c.y as f64 - c.n * lambda;
        (sq + r * r, t + c.y as f64)
    });
    if sq <= total {
        return 0.0;
    }
    let (mut lo, mut hi) = (THETA_MIN.ln(), THETA_MAX.ln());
    if theta_score(data, lambda, THETA_MAX).0 >= 0.0 {
        return 0.0;
    }
    if theta_score(data, lambda, THETA_MIN).0 <= 0.0 {
        return 1.0 / THETA_MIN;
    }
    let mut t = if start_kappa > 0.0 { (1.0 / start_kappa).ln().clamp(lo, hi) } else { 0.0 };
    for _ in 0..200 {
        let theta = t.exp();
        let (s, ds) = theta_score(data, lambda, theta);
        if s > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = ds * theta;
        let mut next = if slope < 0.0 { t - s / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() < 1e-12 || hi - lo < 1e-12 {
            t = next;
            break;
        }
        t = next;
    }
    (-t).exp()
}

/// Joint maximum likelihood of `(lambda, kappa)` by alternating the two
/// one-dimensional score equations. Returns the fit and the log-likelihood
/// after every outer iteration (starting value first).
pub fn fit_neg_binomial_traced(data: &HistoricalData) -> Result<(ModelFit, Vec<f64>)> {
    require_dispersion_data(data)?;
    let mut lambda = data.total_y() as f64 / data.total_n();
    // Method-of-moments start.
    let (excess, mu_sq) = data.clusters().iter().fold((0.0, 0.0), |(e, m), c| {
        let mu = c.n * lambda;
        let y = c.y as f64;
        (e + (y - mu).powi(2) - y, m + mu * mu)
    });
    let mut kappa = if excess > 0.0 { excess / mu_sq } else { 0.0 };
    let mut ll = nb_log_likelihood(data, lambda, kappa);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_OUTER_ITERATIONS {
        iterations = iter;
        let next_lambda = solve_lambda(data, kappa, lambda);
        if nb_log_likelihood(data, next_lambda, kappa) >= ll {
            lambda = next_lambda;
        }
        let next_kappa = solve_kappa(data, lambda, kappa);
        let ll_lambda = nb_log_likelihood(data, lambda, kappa);
        let ll_kappa = nb_log_likelihood(data, lambda, next_kappa);
        let new_ll = if ll_kappa >= ll_lambda {
            kappa = next_kappa;
            ll_kappa
        } else {
            ll_lambda
        };
        trace.push(new_ll);
        let delta = (new_ll - ll).abs();
        ll = new_ll;
        if !new_ll.is_finite() {
            break;
        }
        if delta < LOGLIK_TOLERANCE {
            converged = true;
            break;
        }
    }
    // Leave lambda on its score equation for the final kappa.
    let polished = solve_lambda(data, kappa, lambda);
    if nb_log_likelihood(data, polished, kappa) >= ll {
        lambda = polished;
        ll = nb_log_likelihood(data, lambda, kappa);
        *trace.last_mut().expect("trace is never empty") = ll;
    }
    let converged = converged && lambda.is_finite() && lambda > 0.0 && kappa < 1.0 / THETA_MIN;

    let fit = ModelFit {
        lambda_hat: lambda,
        dispersion: Dispersion::NegBinomial { kappa_hat: kappa },
        h: data.h(),
        n_bar: data.n_bar(),
        converged,
        iterations,
    };
    Ok((fit, trace))
}

/// Negative-binomial maximum-likelihood fit. Non-convergence is reported in
/// [`ModelFit::converged`] rather than as an error.
pub fn fit_neg_binomial(data: &HistoricalData) -> Result<ModelFit> {
    fit_neg_binomial_traced(data).map(|(fit, _)| fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use crate::sampling::{sample_neg_binomial, DesignSpec, NegBinParams};
    use proptest::prelude::*;

    fn data(y: &[u64], n: &[f64]) -> HistoricalData {
        HistoricalData::from_counts(y, n).unwrap()
    }

    fn phi(fit: &ModelFit) -> f64 {
        match fit.dispersion {
            Dispersion::QuasiPoisson { phi_hat } => phi_hat,
            _ => unreachable!(),
        }
    }

    fn kappa(fit: &ModelFit) -> f64 {
        match fit.dispersion {
            Dispersion::NegBinomial { kappa_hat } => kappa_hat,
            _ => unreachable!(),
        }
    }

    #[test]
    fn quasi_poisson_hand_values() {
        let f = fit_quasi_poisson(&data(&[6, 6, 6], &[3.0, 3.0, 3.0])).unwrap();
        assert_eq!(f.lambda_hat, 2.0);
        assert_eq!(phi(&f), 0.0);
        assert!(f.converged);

        let f = fit_quasi_poisson(&data(&[5, 15], &[1.0, 1.0])).unwrap();
        assert_eq!(f.lambda_hat, 10.0);
        assert!((phi(&f) - 5.0).abs() < 1e-12);

        let f = fit_quasi_poisson(&data(&[10, 20, 30], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(f.lambda_hat, 10.0);
        assert!(phi(&f).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(fit_quasi_poisson(&data(&[0, 0, 0], &[1.0; 3])), Err(Error::AllZeroSample));
        assert_eq!(fit_neg_binomial(&data(&[0, 0, 0], &[1.0; 3])), Err(Error::AllZeroSample));
        assert!(matches!(
            fit_quasi_poisson(&data(&[4], &[1.0])),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
        assert!(HistoricalData::from_counts(&[1, 2], &[1.0, -1.0]).is_err());
        assert!(HistoricalData::from_counts(&[], &[]).is_err());
    }

    #[test]
    fn neg_binomial_poisson_boundary() {
        // mean 5, sample variance 20/4 = 5
        let d = data(&[2, 8, 4, 6, 5], &[1.0; 5]);
        let f = fit_neg_binomial(&d).unwrap();
        assert!(kappa(&f) < 1e-4);
        assert!(f.converged);
        assert!((f.lambda_hat - 5.0).abs() < 1e-10);

        // underdispersed
        let f = fit_neg_binomial(&data(&[5, 5, 6, 4], &[2.0; 4])).unwrap();
        assert_eq!(kappa(&f), 0.0);
        assert!(f.converged);

        // clearly overdispersed
        let f = fit_neg_binomial(&data(&[0, 1, 19, 2, 30, 4], &[1.0; 6])).unwrap();
        assert!(f.converged);
        assert!(kappa(&f) > 0.5);
    }

    #[test]
    fn neg_binomial_recovers_parameters() {
        let mut s = RngState::new(31, 0);
        let design = DesignSpec::constant(10_000, 3.0).unwrap();
        let y = sample_neg_binomial(&mut s, &design, &NegBinParams::new(5.0, 0.2).unwrap()).unwrap();
        let d = HistoricalData::from_counts(&y, design.offsets()).unwrap();
        let (f, trace) = fit_neg_binomial_traced(&d).unwrap();
        assert!(f.converged);
        assert!((f.lambda_hat - 5.0).abs() < 0.1, "lambda {}", f.lambda_hat);
        assert!((kappa(&f) - 0.2).abs() < 0.02, "kappa {}", kappa(&f));
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-10), "{trace:?}");
    }

    #[test]
    fn neg_binomial_unequal_offsets_score_is_zero() {
        let d = data(&[0, 3, 9, 1, 14, 2, 6], &[0.5, 1.0, 3.5, 0.7, 2.2, 1.1, 4.0]);
        let f = fit_neg_binomial(&d).unwrap();
        assert!(f.converged);
        let k = kappa(&f);
        let score: f64 = d
            .clusters()
            .iter()
            .map(|c| {
                let mu = c.n * f.lambda_hat;
                (c.y as f64 - mu) / (1.0 + k * mu)
            })
            .sum();
        assert!(score.abs() < 1e-8, "score {score}");
        // Profile likelihood is maximal at kappa_hat.
        let ll = nb_log_likelihood(&d, f.lambda_hat, k);
        for dk in [-1e-3, 1e-3] {
            let alt = (k + dk).max(0.0);
            assert!(nb_log_likelihood(&d, f.lambda_hat, alt) <= ll + 1e-12);
        }
    }

    #[test]
    fn loglik_kappa_zero_limit() {
        let d = data(&[3, 8, 1], &[1.0, 2.0, 0.5]);
        let p = nb_log_likelihood(&d, 3.0, 0.0);
        let nb = nb_log_likelihood(&d, 3.0, 1e-9);
        assert!((p - nb).abs() < 1e-6);
    }

    fn brute_pearson(y: &[u64], n: &[f64]) -> f64 {
        let mut sy = 0.0;
        let mut sn = 0.0;
        for i in 0..y.len() {
            sy += y[i] as f64;
            sn += n[i];
        }
        let lam = sy / sn;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let e = n[i] * lam;
            acc += (y[i] as f64 - e) * (y[i] as f64 - e) / e;
        }
        acc / (y.len() as f64 - 1.0)
    }

    proptest! {
        #[test]
        fn lambda_hat_closed_form(
            rows in prop::collection::vec((0u64..500, 0.1f64..20.0), 2..40)
        ) {
            let (y, n): (Vec<u64>, Vec<f64>) = rows.into_iter().unzip();
            prop_assume!(y.iter().any(|&v| v > 0));
            let f = fit_quasi_poisson(&data(&y, &n)).unwrap();
            let expected = y.iter().sum::<u64>() as f64 / n.iter().sum::<f64>();
            prop_assert_eq!(f.lambda_hat, expected);
            let brute = brute_pearson(&y, &n);
            prop_assert!((phi(&f) - brute).abs() <= 1e-12 * brute.max(1.0));
        }

        #[test]
        fn pearson_invariant_under_reordering(
            rows in prop::collection::vec((0u64..200, 0.5f64..5.0), 2..30),
            rot in 0usize..30,
        ) {
            let mut rotated = rows.clone();
            let k = rot % rows.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let (y1, n1): (Vec<u64>, Vec<f64>) = rows.into_iter().unzip();
            let (y2, n2): (Vec<u64>, Vec<f64>) = rotated.into_iter().unzip();
            prop_assume!(y1.iter().any(|&v| v > 0));
            let a = phi(&fit_quasi_poisson(&data(&y1, &n1)).unwrap());
            let b = phi(&fit_quasi_poisson(&data(&y2, &n2)).unwrap());
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }

        #[test]
        fn nb_equal_offsets_lambda_matches_ratio(
            y in prop::collection::vec(0u64..80, 3..25),
            n in 0.5f64..6.0,
        ) {
            prop_assume!(y.iter().any(|&v| v > 0));
            let offs = vec![n; y.len()];
            let d = data(&y, &offs);
            let (f, trace) = fit_neg_binomial_traced(&d).unwrap();
            let ratio = y.iter().sum::<u64>() as f64 / offs.iter().sum::<f64>();
            prop_assert!((f.lambda_hat - ratio).abs() <= 1e-8 * ratio);
            prop_assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        }
    }
}
