//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are printed even
//! when everything passes. Exits non-zero on any failure not listed in
//! `KNOWN_DEVIATIONS`; a listed criterion that starts passing is reported too.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hcl_cli::ingest::ingest;
use hcl_core::calibration::{bisect_coefficient, calibrated_pi, CalibrationSettings, Model, Replicate, Side};
use hcl_core::coverage::{run_cell, OffsetRule, SimCell};
use hcl_core::estimation::{fit_neg_binomial, fit_quasi_poisson, Dispersion, HistoricalData, ModelFit};
use hcl_core::limits::heuristic::{c_chart_limits, u_chart_limits};
use hcl_core::limits::prediction::{neg_binomial_pi, quasi_poisson_pi, NbVariant, TargetDesign};
use hcl_core::limits::{CoveredCounts, Method, PredictionLimits};
use hcl_core::rng::RngState;
use hcl_core::sampling::{sample_neg_binomial, sample_quasi_poisson, DesignSpec, NegBinParams, QuasiPoissonParams};
use hcl_core::special::normal_quantile;

/// Criteria expected to fail, with the reason. See the README.
const KNOWN_DEVIATIONS: &[(u32, &str)] = &[(
    2,
    "the published 99% interval lies outside the +-0.001 coverage band of the smallest-q calibration rule",
)];

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ta1537_hcd.csv")
}

fn within(l: &PredictionLimits, lower: f64, upper: f64, tol: f64) -> bool {
    (l.lower - lower).abs() <= tol && (l.upper - upper).abs() <= tol
}

fn show(l: &PredictionLimits) -> String {
    format!("[{:.2}, {:.2}]", l.lower, l.upper)
}

fn bracket(l: &PredictionLimits) -> (i64, i64) {
    let c = l.covered_counts().unwrap_or(CoveredCounts { low: None, high: None });
    (c.low.unwrap_or(i64::MIN), c.high.unwrap_or(i64::MAX))
}

fn mean_var(y: &[u64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let v = y.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = y.iter().map(|&v| (v as f64 - m).powi(4)).sum::<f64>() / n;
    // Standard error of the sample variance.
    (m, v, ((m4 - v * v) / n).sqrt())
}

fn c1_table1_closed_form() -> Outcome {
    // 20 clusters of n = 3 with mean count 25.05, i.e. λ̂ = 8.35.
    let mut y = vec![25; 19];
    y.push(26);
    let data = HistoricalData::from_counts(&y, &[3.0; 20]).unwrap();
    let target = TargetDesign::two_sided(3.0, 0.05).unwrap();
    let qp = ModelFit::from_estimates(8.35, Dispersion::QuasiPoisson { phi_hat: 3.18 }, 66, 3.0).unwrap();
    let nb = ModelFit::from_estimates(8.35, Dispersion::NegBinomial { kappa_hat: 0.082 }, 66, 3.0).unwrap();
    let c = c_chart_limits(&data, 1.96).unwrap();
    let u = u_chart_limits(&data, 1.96, 3.0).unwrap();
    let q = quasi_poisson_pi(&qp, &target).unwrap().0;
    let n = neg_binomial_pi(&nb, &target, NbVariant::MainText).unwrap().0;
    let rows = [
        ("c-chart", &c, 15.25, 34.87, Some((16, 34))),
        ("u-chart", &u, 5.08, 11.62, None),
        ("QP", &q, 7.43, 42.70, Some((8, 42))),
        ("NB", &n, 7.86, 42.26, Some((8, 42))),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, l, lo, hi, counts) in rows {
        pass &= within(l, lo, hi, 0.05);
        if let Some(expected) = counts {
            pass &= bracket(l) == expected;
            detail.push(format!("{name} {} {:?}", show(l), bracket(l)));
        } else {
            detail.push(format!("{name} {}", show(l)));
        }
    }
    outcome(pass, detail.join(", "))
}

fn c2_table1_calibrated() -> Outcome {
    let data = ingest(&fixture_path()).unwrap().data;
    let settings = CalibrationSettings::with_seed(20240101);
    let run = |alpha, model| {
        calibrated_pi(&data, &TargetDesign::two_sided(3.0, alpha).unwrap(), &settings, model).unwrap().limits
    };
    let qp = run(0.05, Model::QuasiPoisson);
    let nb = run(0.05, Model::NegBinomial);
    let qp99 = run(0.01, Model::QuasiPoisson);
    let checks = [
        ("QP", within(&qp, 9.70, 45.16, 0.6), &qp),
        ("NB", within(&nb, 9.90, 44.67, 0.6), &nb),
        ("QP 99%", within(&qp99, 6.36, 54.64, 0.8), &qp99),
    ];
    let detail = checks
        .iter()
        .map(|(name, ok, l)| format!("{name} {} {}", show(l), if *ok { "ok" } else { "out of tolerance" }))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(checks.iter().all(|c| c.1), detail)
}

fn c3_calibrated_qp_coverage() -> Outcome {
    let cell = SimCell {
        s: 500,
        b: 2000,
        seed: 3,
        ..SimCell::new(20, 20.0, 3.0, OffsetRule::Fixed(3.0), Model::QuasiPoisson, Method::CalibratedQuasiPoisson)
    };
    let r = run_cell(&cell).unwrap();
    let pass = (0.93..=0.97).contains(&r.psi_cp)
        && (0.955..=0.99).contains(&r.psi_l)
        && (0.955..=0.99).contains(&r.psi_u);
    outcome(pass, format!("psi_cp {:.3}, psi_l {:.3}, psi_u {:.3}, S used {}", r.psi_cp, r.psi_l, r.psi_u, r.s_used))
}

fn c4_c_chart_undercoverage() -> Outcome {
    let cell = SimCell {
        s: 2000,
        k: Some(1.96),
        seed: 4,
        ..SimCell::new(100, 20.0, 5.0, OffsetRule::Fixed(3.0), Model::QuasiPoisson, Method::CChart)
    };
    let r = run_cell(&cell).unwrap();
    outcome(r.psi_cp < 0.90, format!("psi_cp {:.3}", r.psi_cp))
}

fn c5_sampler_oracles() -> Outcome {
    let h = 100_000;
    let design = DesignSpec::constant(h, 3.0).unwrap();
    let mut detail = Vec::new();
    let mut pass = true;

    let qp = sample_quasi_poisson(&mut RngState::new(51, 0), &design, &QuasiPoissonParams::new(5.0, 3.0).unwrap())
        .unwrap();
    let (m, v, se_v) = mean_var(&qp);
    let se_m = (45.0 / h as f64).sqrt();
    pass &= (m - 15.0).abs() <= 3.0 * se_m && (v - 45.0).abs() <= 3.0 * se_v;
    detail.push(format!("QP mean {m:.3} var {v:.2}"));

    let nb = sample_neg_binomial(&mut RngState::new(52, 0), &design, &NegBinParams::new(5.0, 0.1).unwrap()).unwrap();
    let (_, v2, se_v2) = mean_var(&nb);
    pass &= (v2 - 37.5).abs() <= 3.0 * se_v2;
    detail.push(format!("NB var {v2:.2}"));

    // Equivalence at kappa = (phi - 1)/(n lambda): two-sample mean and variance checks.
    let nb_eq =
        sample_neg_binomial(&mut RngState::new(53, 0), &design, &NegBinParams::new(5.0, 2.0 / 15.0).unwrap()).unwrap();
    let (m3, v3, se_v3) = mean_var(&nb_eq);
    let z_mean = (m - m3) / ((v + v3) / h as f64).sqrt();
    let z_var = (v - v3) / (se_v * se_v + se_v3 * se_v3).sqrt();
    pass &= z_mean.abs() <= 3.0 && z_var.abs() <= 3.0;
    detail.push(format!("QP vs NB z(mean) {z_mean:.2} z(var) {z_var:.2}"));
    outcome(pass, detail.join(", "))
}

fn c6_estimator_oracles() -> Outcome {
    let mut rng = RngState::new(61, 0);
    let mut exact = true;
    let mut worst = 0f64;
    for _ in 0..100 {
        let h = 2 + (rng.uniform() * 30.0) as usize;
        let n: Vec<f64> = (0..h).map(|_| 0.5 + 4.0 * rng.uniform()).collect();
        let design = DesignSpec::new(n.clone()).unwrap();
        let lambda = 0.5 + 10.0 * rng.uniform();
        let y = sample_quasi_poisson(&mut rng, &design, &QuasiPoissonParams::new(lambda, 2.5).unwrap()).unwrap();
        if y.iter().all(|&v| v == 0) {
            continue;
        }
        let fit = fit_quasi_poisson(&HistoricalData::from_counts(&y, &n).unwrap()).unwrap();
        let sy: f64 = y.iter().map(|&v| v as f64).sum();
        let sn: f64 = n.iter().sum();
        let oracle_lambda = sy / sn;
        exact &= fit.lambda_hat.to_bits() == oracle_lambda.to_bits();
        let mut pearson = 0.0;
        for i in 0..h {
            let mu = n[i] * oracle_lambda;
            pearson += (y[i] as f64 - mu) * (y[i] as f64 - mu) / mu;
        }
        let oracle_phi = pearson / (h as f64 - 1.0);
        let Dispersion::QuasiPoisson { phi_hat } = fit.dispersion else { unreachable!() };
        worst = worst.max((phi_hat - oracle_phi).abs() / oracle_phi.max(1.0));
    }
    let design = DesignSpec::constant(10_000, 3.0).unwrap();
    let y = sample_neg_binomial(&mut RngState::new(62, 0), &design, &NegBinParams::new(5.0, 0.2).unwrap()).unwrap();
    let nb = fit_neg_binomial(&HistoricalData::from_counts(&y, design.offsets()).unwrap()).unwrap();
    let kappa = nb.dispersion.value();
    let nb_ok = nb.converged && (nb.lambda_hat - 5.0).abs() <= 0.1 && (kappa - 0.2).abs() <= 0.02;
    outcome(
        exact && worst <= 1e-12 && nb_ok,
        format!(
            "lambda bit-exact {exact}, max phi error {worst:.1e}, NB fit ({:.3}, {kappa:.4})",
            nb.lambda_hat
        ),
    )
}

fn normal_grid(b: usize) -> Vec<Replicate> {
    // Pivots (y* - center)/se on a standard-normal quantile grid.
    (0..b)
        .map(|i| {
            let z = normal_quantile((i as f64 + 0.5) / b as f64);
            Replicate { center: 1e6 - 1e3 * z, se: 1e3, y_star: 1_000_000 }
        })
        .collect()
}

fn c7_bisection_oracle() -> Outcome {
    let settings = CalibrationSettings::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for b in [10_000, 20_000] {
        let grid = normal_grid(b);
        for side in [Side::Upper, Side::Lower] {
            let r = bisect_coefficient(&grid, side, 0.975, &settings).unwrap();
            pass &= (r.q - 1.96).abs() <= 0.02 && (r.achieved_psi - 0.975).abs() <= 0.001 + 1e-12;
            detail.push(format!("B={b} {side:?} q {:.4} psi {:.4}", r.q, r.achieved_psi));
        }
    }
    outcome(pass, detail.join(", "))
}

fn hcl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hcl")).args(args).output().expect("hcl runs")
}

fn c8_cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let fixture = fixture_path().display().to_string();
    std::fs::write(
        p("grid.txt"),
        "methods = c-chart, calibrated-qp\nH = 10\nlambda = 5\nphi = 3\noffsets = 3, 0.5..4\nS = 30\nB = 200\n",
    )
    .unwrap();
    let mut identical = true;
    let mut checked = Vec::new();
    for run in ["a", "b"] {
        let runs: Vec<Vec<String>> = vec![
            vec!["sample", "--model", "nb", "--lambda", "2", "--kappa", "0.3", "--H", "50", "--offset-lo", "0.5", "--offset-hi", "4", "--seed", "8", "--out", &p(&format!("sample_{run}.csv"))].into_iter().map(String::from).collect(),
            vec!["calibrate", "--data", &fixture, "--model", "qp", "--B", "1000", "--seed", "8", "--out", &p(&format!("cal_{run}.csv"))].into_iter().map(String::from).collect(),
            vec!["limits", "--data", &fixture, "--method", "all,calibrated-nb", "--B", "500", "--seed", "8", "--out", &p(&format!("lim_{run}.csv"))].into_iter().map(String::from).collect(),
            vec!["simulate", "--grid", &p("grid.txt"), "--seed", "8", "--out", &p(&format!("sim_{run}.csv"))].into_iter().map(String::from).collect(),
            vec!["chart", "--data", &fixture, "--B", "1000", "--seed", "8", "--out", &p(&format!("chart_{run}.svg"))].into_iter().map(String::from).collect(),
        ];
        for args in &runs {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = hcl(&args);
            identical &= out.status.success();
        }
    }
    for name in ["sample_?.csv", "cal_?.csv", "lim_?.csv", "sim_?.csv", "chart_?.svg", "chart_?.csv"] {
        let a = std::fs::read(p(&name.replace('?', "a"))).unwrap_or_default();
        let b = std::fs::read(p(&name.replace('?', "b"))).unwrap_or_default();
        let same = !a.is_empty() && a == b;
        identical &= same;
        checked.push(format!("{} {}", name.replace("_?", ""), if same { "same" } else { "DIFFERENT" }));
    }
    outcome(identical, checked.join(", "))
}

fn c9_convergence_accounting() -> Outcome {
    let cell = SimCell {
        s: 500,
        b: 1000,
        seed: 9,
        ..SimCell::new(5, 0.1, 3.0, OffsetRule::Fixed(3.0), Model::NegBinomial, Method::NegBinomial)
    };
    match run_cell(&cell) {
        Ok(r) => outcome(r.s_used < r.s_total, format!("S used {}/{}", r.s_used, r.s_total)),
        Err(e) => outcome(false, format!("aborted: {e}")),
    }
}

fn main() {
    let criteria: [(u32, &str, Check); 9] = [
        (1, "Table 1 closed-form rows", c1_table1_closed_form),
        (2, "Table 1 calibrated rows", c2_table1_calibrated),
        (3, "calibrated QP coverage cell", c3_calibrated_qp_coverage),
        (4, "c-chart undercoverage cell", c4_c_chart_undercoverage),
        (5, "sampler oracles", c5_sampler_oracles),
        (6, "estimator oracles", c6_estimator_oracles),
        (7, "bisection oracle", c7_bisection_oracle),
        (8, "CLI determinism", c8_cli_determinism),
        (9, "convergence accounting", c9_convergence_accounting),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let o = check();
        let known = KNOWN_DEVIATIONS.iter().find(|(k, _)| *k == id);
        let status = match (o.pass, known) {
            (true, None) => "PASS",
            (false, Some(_)) => "FAIL (known deviation)",
            (false, None) => {
                unexpected.push(id);
                "FAIL"
            }
            (true, Some(_)) => {
                unexpected.push(id);
                "PASS (listed as known deviation)"
            }
        };
        println!("criterion {id} {name}: {status} [{:.1}s] {}", start.elapsed().as_secs_f64(), o.detail);
        if let (false, Some((_, why))) = (o.pass, known) {
            println!("    reason: {why}");
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all criteria as expected");
    } else {
        println!("acceptance: unexpected results for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
