//! The event manifold seen from its own line frame.
//!
//! In the line frame every event of a line lies on the planar curve
//! `y_hat = u_y t / (1 + u_z t)`, whose shape depends only on the partial
//! velocity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BearingObservation, PartialVelocity};
use crate::solver::ManifoldEstimate;

/// Rotated bearings with `|z|` at or below this cannot be normalized.
pub const PROJECTION_EPSILON: f64 = 1e-9;
/// Distance from the curve pole below which evaluation is refused.
pub const POLE_EPSILON: f64 = 1e-9;
pub const PLANAR_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalPoint {
    pub t_rel: f64,
    pub y_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CanonicalTrace {
    pub points: Vec<CanonicalPoint>,
    /// Observations skipped because their rotated bearing was parallel to the image plane.
    pub dropped: usize,
}

pub fn canonicalize_events(est: &ManifoldEstimate, obs: &[BearingObservation]) -> CanonicalTrace {
    let rt = est.frame.rotation().transpose();
    let mut trace = CanonicalTrace::default();
    for o in obs {
        let f = rt * o.f;
        if f.z.abs() <= PROJECTION_EPSILON {
            trace.dropped += 1;
            continue;
        }
        trace.points.push(CanonicalPoint { t_rel: o.t_rel, y_hat: f.y / f.z });
    }
    trace
}

pub fn canonical_curve(u: &PartialVelocity, t_rel: f64) -> Result<f64> {
    let denominator = 1.0 + u.u_z * t_rel;
    if denominator.abs() <= POLE_EPSILON {
        return Err(Error::CurvePole { denominator });
    }
    Ok(u.u_y * t_rel / denominator)
}

/// `d y_hat / dt`.
pub fn canonical_slope(u: &PartialVelocity, t_rel: f64) -> Result<f64> {
    let denominator = 1.0 + u.u_z * t_rel;
    if denominator.abs() <= POLE_EPSILON {
        return Err(Error::CurvePole { denominator });
    }
    Ok(u.u_y / (denominator * denominator))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldFamily {
    /// Motion parallel to the plane through the camera and the line.
    Planar,
    Approaching,
    Retracting,
}

pub fn classify_family(u: &PartialVelocity) -> ManifoldFamily {
    classify_family_with_epsilon(u, PLANAR_EPSILON)
}

pub fn classify_family_with_epsilon(u: &PartialVelocity, eps: f64) -> ManifoldFamily {
    if u.u_z.abs() < eps {
        ManifoldFamily::Planar
    } else if u.u_z < 0.0 {
        ManifoldFamily::Approaching
    } else {
        ManifoldFamily::Retracting
    }
}

/// Largest `|y_hat - curve(t)|` over the trace, skipping points at the pole.
pub fn max_curve_deviation(trace: &CanonicalTrace, u: &PartialVelocity) -> f64 {
    trace
        .points
        .iter()
        .filter_map(|p| canonical_curve(u, p.t_rel).ok().map(|y| (p.y_hat - y).abs()))
        .fold(0.0, f64::max)
}

/// Largest residual of the least-squares line `y = a t + b` through the trace.
pub fn max_line_fit_deviation(trace: &CanonicalTrace) -> f64 {
    let n = trace.points.len() as f64;
    if trace.points.len() < 2 {
        return 0.0;
    }
    let mt = trace.points.iter().map(|p| p.t_rel).sum::<f64>() / n;
    let my = trace.points.iter().map(|p| p.y_hat).sum::<f64>() / n;
    let stt: f64 = trace.points.iter().map(|p| (p.t_rel - mt).powi(2)).sum();
    let sty: f64 = trace.points.iter().map(|p| (p.t_rel - mt) * (p.y_hat - my)).sum();
    let a = if stt > 0.0 { sty / stt } else { 0.0 };
    let b = my - a * mt;
    trace.points.iter().map(|p| (p.y_hat - a * p.t_rel - b).abs()).fold(0.0, f64::max)
}
