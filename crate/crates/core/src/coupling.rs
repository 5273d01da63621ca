//! Odd, sector-bounded edge nonlinearities.
//!
//! One function is attached to each undirected edge and applied to the
//! oriented difference `y_lo - y_hi + w`. Oddness is what makes this
//! orientation choice immaterial, so every supported kind is odd by
//! construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{CertError, SectorBound};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("coupling parameter {0} must be finite")]
    NonFinite(&'static str),
    #[error("piecewise-linear knots must have strictly increasing positive abscissae")]
    BadKnots,
    #[error(transparent)]
    Sector(#[from] CertError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingFn {
    /// ϑ(x) = gain · x
    Linear { gain: f64 },
    /// ϑ(x) = c · x + d · sin(x)
    AffineSine { c: f64, d: f64 },
    /// Odd extension of the polyline through (0, 0) and `knots` (x > 0),
    /// continued with `tail_slope` beyond the last knot.
    PiecewiseLinear { knots: Vec<[f64; 2]>, tail_slope: f64 },
}

impl CouplingFn {
    pub fn validate(&self) -> Result<(), CouplingError> {
        match self {
            CouplingFn::Linear { gain } => {
                if !gain.is_finite() {
                    return Err(CouplingError::NonFinite("gain"));
                }
            }
            CouplingFn::AffineSine { c, d } => {
                if !c.is_finite() || !d.is_finite() {
                    return Err(CouplingError::NonFinite("c/d"));
                }
            }
            CouplingFn::PiecewiseLinear { knots, tail_slope } => {
                if !tail_slope.is_finite() || knots.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(CouplingError::NonFinite("knots"));
                }
                let mut prev = 0.0;
                for k in knots {
                    if k[0] <= prev {
                        return Err(CouplingError::BadKnots);
                    }
                    prev = k[0];
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CouplingFn::Linear { gain } => gain * x,
            CouplingFn::AffineSine { c, d } => c * x + d * x.sin(),
            CouplingFn::PiecewiseLinear { knots, tail_slope } => {
                let a = x.abs();
                let (mut x0, mut y0) = (0.0, 0.0);
                for &[xk, yk] in knots {
                    if a <= xk {
                        return x.signum() * (y0 + (yk - y0) * (a - x0) / (xk - x0));
                    }
                    x0 = xk;
                    y0 = yk;
                }
                x.signum() * (y0 + tail_slope * (a - x0))
            }
        }
    }
}

/// A coupling function together with its declared sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub function: CouplingFn,
    pub sector: SectorBound,
}

impl CouplingSpec {
    pub fn new(function: CouplingFn, sector: SectorBound) -> Result<Self, CouplingError> {
        function.validate()?;
        SectorBound::new(sector.lower, sector.upper)?;
        Ok(CouplingSpec { function, sector })
    }

    pub fn linear(gain: f64) -> Result<Self, CouplingError> {
        CouplingSpec::new(CouplingFn::Linear { gain }, SectorBound::point(gain)?)
    }

    /// Realised slope ϑ(x)/x, or the sector midpoint at x = 0.
    pub fn realised_slope(&self, x: f64, v: f64) -> f64 {
        if x.abs() > 1e-12 {
            v / x
        } else {
            self.sector.midpoint()
        }
    }
}

/// Sector ratios outside the bounds by less than this (times `max(1, ᾱ)`)
/// are tolerated as rounding.
pub const SECTOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorCheck {
    pub pass: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Sample with the largest violation (or the tightest ratio on a pass).
    pub worst_x: f64,
    pub worst_ratio: f64,
}

/// Scans ϑ(x)/x on `samples` log-spaced magnitudes in [1e-6, 1e6], both
/// signs, against `sector`.
pub fn verify_sector_fn<F: Fn(f64) -> f64>(f: F, sector: &SectorBound, samples: usize) -> SectorCheck {
    let samples = samples.max(2);
    let (lo_exp, hi_exp) = (-6.0f64, 6.0f64);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst = (0.0, f64::NAN, f64::NEG_INFINITY);
    for s in 0..samples {
        let mag = 10f64.powf(lo_exp + (hi_exp - lo_exp) * s as f64 / (samples - 1) as f64);
        for x in [mag, -mag] {
            let ratio = f(x) / x;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
            let excess = (sector.lower - ratio).max(ratio - sector.upper);
            if excess > worst.2 || ratio.is_nan() {
                worst = (x, ratio, if ratio.is_nan() { f64::INFINITY } else { excess });
            }
        }
    }
    let tol = SECTOR_TOL * sector.upper.max(1.0);
    let pass = min_ratio >= sector.lower - tol && max_ratio <= sector.upper + tol && !worst.1.is_nan();
    SectorCheck { pass, min_ratio, max_ratio, worst_x: worst.0, worst_ratio: worst.1 }
}

pub fn verify_sector(spec: &CouplingSpec, samples: usize) -> SectorCheck {
    verify_sector_fn(|x| spec.function.eval(x), &spec.sector, samples)
}
