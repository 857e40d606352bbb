//! Control limits and the methods that produce them.

pub mod heuristic;
pub mod prediction;

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    MeanSd,
    CChart,
    UChart,
    LaneyUChart,
    SimplePoisson,
    QuasiPoisson,
    NegBinomial,
    CalibratedQuasiPoisson,
    CalibratedNegBinomial,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::MeanSd,
        Method::CChart,
        Method::UChart,
        Method::LaneyUChart,
        Method::SimplePoisson,
        Method::QuasiPoisson,
        Method::NegBinomial,
        Method::CalibratedQuasiPoisson,
        Method::CalibratedNegBinomial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MeanSd => "mean-sd",
            Method::CChart => "c-chart",
            Method::UChart => "u-chart",
            Method::LaneyUChart => "laney",
            Method::SimplePoisson => "simple-pois",
            Method::QuasiPoisson => "qp",
            Method::NegBinomial => "nb",
            Method::CalibratedQuasiPoisson => "calibrated-qp",
            Method::CalibratedNegBinomial => "calibrated-nb",
        }
    }

    /// Row label in Table-1 style reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::MeanSd => "Mean +- k SD",
            Method::CChart => "c-Chart",
            Method::UChart => "u-Chart",
            Method::LaneyUChart => "u-Chart (adj.)",
            Method::SimplePoisson => "Simple (Pois)",
            Method::QuasiPoisson => "Simple (QP)",
            Method::NegBinomial => "Simple (NB)",
            Method::CalibratedQuasiPoisson => "Calibrated (QP)",
            Method::CalibratedNegBinomial => "Calibrated (NB)",
        }
    }

    /// Methods whose limits live on the per-offset-unit scale.
    pub fn is_u_chart(self) -> bool {
        matches!(self, Method::UChart | Method::LaneyUChart)
    }

    pub fn is_calibrated(self) -> bool {
        matches!(self, Method::CalibratedQuasiPoisson | Method::CalibratedNegBinomial)
    }

    /// Methods driven by a `k` multiplier rather than a level `alpha`.
    pub fn uses_k(self) -> bool {
        matches!(self, Method::MeanSd | Method::CChart | Method::UChart | Method::LaneyUChart)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| domain(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Response,
    PerOffsetUnit,
}

/// The parameter that set the width: a `k` multiplier or a level `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Level {
    K(f64),
    Alpha(f64),
}

/// Lowest and highest integer count inside the limits; `None` for an
/// unbounded side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoveredCounts {
    pub low: Option<i64>,
    pub high: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionLimits {
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    pub level: Level,
    pub scale: Scale,
}

impl PredictionLimits {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_upper_only(&self) -> bool {
        self.lower == f64::NEG_INFINITY
    }

    /// `(ceil(lower), floor(upper))`, defined on the response scale only.
    pub fn covered_counts(&self) -> Option<CoveredCounts> {
        if self.scale != Scale::Response {
            return None;
        }
        let low = self.lower.is_finite().then(|| self.lower.ceil() as i64);
        let high = self.upper.is_finite().then(|| self.upper.floor() as i64);
        Some(CoveredCounts { low, high })
    }

    pub fn covers_lower(&self, t: f64) -> bool {
        self.lower <= t
    }

    pub fn covers_upper(&self, t: f64) -> bool {
        t <= self.upper
    }

    pub fn contains(&self, t: f64) -> bool {
        self.covers_lower(t) && self.covers_upper(t)
    }

    /// Rescales per-offset-unit limits to counts over `n_star` units.
    pub fn to_response(&self, n_star: f64) -> PredictionLimits {
        match self.scale {
            Scale::Response => *self,
            Scale::PerOffsetUnit => PredictionLimits {
                lower: self.lower * n_star,
                upper: self.upper * n_star,
                scale: Scale::Response,
                ..*self
            },
        }
    }
}
