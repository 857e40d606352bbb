//! Quasi-Poisson and negative-binomial samplers agree at equal offsets when
//! `kappa = (phi - 1) / (n lambda)`.

use hcl_core::estimation::{fit_quasi_poisson, Dispersion, HistoricalData};
use hcl_core::rng::RngState;
use hcl_core::sampling::{sample_neg_binomial, sample_quasi_poisson, DesignSpec, NegBinParams, QuasiPoissonParams};

fn mean_var(y: &[u64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let v = y.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Standard error of the sample variance from the fourth central moment.
fn var_se(y: &[u64]) -> f64 {
    let (m, v) = mean_var(y);
    let n = y.len() as f64;
    let m4 = y.iter().map(|&x| (x as f64 - m).powi(4)).sum::<f64>() / n;
    ((m4 - v * v) / n).sqrt()
}

fn pair(lambda: f64, phi: f64, n: f64, h: usize) -> (Vec<u64>, Vec<u64>) {
    let design = DesignSpec::constant(h, n).unwrap();
    let kappa = (phi - 1.0) / (n * lambda);
    let qp = sample_quasi_poisson(&mut RngState::new(101, 0), &design, &QuasiPoissonParams::new(lambda, phi).unwrap())
        .unwrap();
    let nb = sample_neg_binomial(&mut RngState::new(202, 0), &design, &NegBinParams::new(lambda, kappa).unwrap())
        .unwrap();
    (qp, nb)
}

#[test]
fn two_sample_moments_agree() {
    for &(lambda, phi) in &[(5.0, 3.0), (20.0, 5.0), (0.5, 1.5)] {
        let (qp, nb) = pair(lambda, phi, 3.0, 100_000);
        let (m1, v1) = mean_var(&qp);
        let (m2, v2) = mean_var(&nb);
        let se_mean = ((v1 + v2) / 100_000.0).sqrt();
        assert!((m1 - m2).abs() < 4.0 * se_mean, "means {m1} {m2}");
        let se_var = (var_se(&qp).powi(2) + var_se(&nb).powi(2)).sqrt();
        assert!((v1 - v2).abs() < 4.0 * se_var, "variances {v1} {v2}");
        // Both match the common oracle phi * n * lambda.
        let oracle = phi * 3.0 * lambda;
        assert!((v1 - oracle).abs() < 4.0 * var_se(&qp), "{v1} vs {oracle}");
    }
}

#[test]
fn same_stream_gives_identical_draws() {
    let design = DesignSpec::constant(1000, 3.0).unwrap();
    let qp = sample_quasi_poisson(&mut RngState::new(7, 3), &design, &QuasiPoissonParams::new(8.35, 3.18).unwrap())
        .unwrap();
    let kappa = 2.18 / (3.0 * 8.35);
    let nb = sample_neg_binomial(&mut RngState::new(7, 3), &design, &NegBinParams::new(8.35, kappa).unwrap()).unwrap();
    let close = qp.iter().zip(&nb).filter(|(a, b)| a == b).count();
    // Parameters agree up to rounding in 1/kappa, so draws should too.
    assert!(close >= 995, "{close} of 1000 equal");
}

#[test]
fn quasi_poisson_round_trip() {
    let design = DesignSpec::constant(10_000, 2.0).unwrap();
    let y = sample_quasi_poisson(&mut RngState::new(9, 0), &design, &QuasiPoissonParams::new(4.0, 2.5).unwrap())
        .unwrap();
    let fit = fit_quasi_poisson(&HistoricalData::from_counts(&y, design.offsets()).unwrap()).unwrap();
    assert!((fit.lambda_hat - 4.0).abs() < 0.05);
    let Dispersion::QuasiPoisson { phi_hat } = fit.dispersion else { unreachable!() };
    assert!((phi_hat - 2.5).abs() < 0.1, "phi {phi_hat}");
}
