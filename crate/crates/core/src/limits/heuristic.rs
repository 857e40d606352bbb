//! Sheward-type heuristic limits: mean ± k SD, c-chart, u-chart and the
//! overdispersion-adjusted (Laney) u-chart.

use super::{Level, Method, PredictionLimits, Scale};
use crate::error::{domain, Error, Result};
use crate::estimation::HistoricalData;

#[derive(Clone, Debug, PartialEq)]
pub struct UChartStats {
    pub u_bar: f64,
    pub z_scores: Vec<f64>,
    /// Population standard deviation of the z-scores (divisor `H`).
    pub sigma_z: f64,
}

fn check_k(k: f64) -> Result<()> {
    if k.is_finite() && k > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("k must be positive, got {k}")))
    }
}

fn check_n_star(n_star: f64) -> Result<()> {
    if n_star.is_finite() && n_star > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("n_star must be positive, got {n_star}")))
    }
}

fn require_equal_offsets(data: &HistoricalData) -> Result<()> {
    if data.h() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: data.h() });
    }
    data.common_offset().map(|_| ()).ok_or(Error::UnequalOffsets)
}

fn symmetric(center: f64, half: f64, method: Method, k: f64, scale: Scale) -> PredictionLimits {
    PredictionLimits { lower: center - half, upper: center + half, method, level: Level::K(k), scale }
}

fn mean_count(data: &HistoricalData) -> f64 {
    data.total_y() as f64 / data.h() as f64
}

/// `ȳ ± k SD` with the sample standard deviation (divisor `H - 1`).
pub fn mean_sd_limits(data: &HistoricalData, k: f64) -> Result<PredictionLimits> {
    check_k(k)?;
    require_equal_offsets(data)?;
    let mean = mean_count(data);
    let ss: f64 = data.counts().map(|y| (y as f64 - mean).powi(2)).sum();
    let sd = (ss / (data.h() - 1) as f64).sqrt();
    Ok(symmetric(mean, k * sd, Method::MeanSd, k, Scale::Response))
}

/// Sheward c-chart, `ȳ ± k √ȳ`.
pub fn c_chart_limits(data: &HistoricalData, k: f64) -> Result<PredictionLimits> {
    check_k(k)?;
    require_equal_offsets(data)?;
    let mean = mean_count(data);
    Ok(symmetric(mean, k * mean.sqrt(), Method::CChart, k, Scale::Response))
}

fn u_bar(data: &HistoricalData) -> f64 {
    data.clusters().iter().map(|c| c.y as f64 / c.n).sum::<f64>() / data.h() as f64
}

/// Sheward u-chart, `ū ± k √(ū / n*)`, on the per-offset-unit scale.
pub fn u_chart_limits(data: &HistoricalData, k: f64, n_star: f64) -> Result<PredictionLimits> {
    check_k(k)?;
    check_n_star(n_star)?;
    let u = u_bar(data);
    Ok(symmetric(u, k * (u / n_star).sqrt(), Method::UChart, k, Scale::PerOffsetUnit))
}

/// Laney's u-chart: the plain u-chart half-width scaled by `sigma_z`, with
/// `z_h = (u_h - ū) / √(ū / n_h)`.
pub fn laney_u_chart_limits(
    data: &HistoricalData,
    k: f64,
    n_star: f64,
) -> Result<(PredictionLimits, UChartStats)> {
    check_k(k)?;
    check_n_star(n_star)?;
    if data.h() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: data.h() });
    }
    let u = u_bar(data);
    if u <= 0.0 {
        return Err(Error::ZeroMeanRate);
    }
    let z_scores: Vec<f64> =
        data.clusters().iter().map(|c| (c.y as f64 / c.n - u) / (u / c.n).sqrt()).collect();
    let h = z_scores.len() as f64;
    let z_bar = z_scores.iter().sum::<f64>() / h;
    let sigma_z = (z_scores.iter().map(|z| (z - z_bar).powi(2)).sum::<f64>() / h).sqrt();
    let half = k * (u / n_star).sqrt() * sigma_z;
    let limits = symmetric(u, half, Method::LaneyUChart, k, Scale::PerOffsetUnit);
    Ok((limits, UChartStats { u_bar: u, z_scores, sigma_z }))
}
