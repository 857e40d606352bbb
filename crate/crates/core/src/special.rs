//! Special functions used by the estimators and interval formulas.

use statrs::distribution::{ContinuousCDF, Normal};

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Standard normal quantile `z_p`.
pub fn normal_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(p)
}

/// Trigamma function ψ'(x) for x > 0: upward recurrence to x >= 12, then the
/// asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    // 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7) - 1/(30x^9) + 5/(66x^11)
    let series = 1.0 / x
        + z / 2.0
        + z / x
            * (1.0 / 6.0
                - z * (1.0 / 30.0 - z * (1.0 / 42.0 - z * (1.0 / 30.0 - z * 5.0 / 66.0))));
    acc + series
}
