//! Levenberg-Marquardt refinement of a manifold over the algebraic incidence
//! error, with the line frame updated multiplicatively on SO(3).
//!
//! The local parametrization is `(dtheta, du_y, du_z)` with
//! `R' = R exp([dtheta]x)`, so the frame stays exactly orthonormal.

use nalgebra::{DVector, Dyn, Matrix5, OMatrix, Vector3, Vector5, U5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{incidence_residual, BearingObservation, LineFrame, PartialVelocity};
use crate::so3;
use crate::solver::{ManifoldEstimate, MIN_EVENTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub relative_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            relative_tolerance: 1e-12,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub estimate: ManifoldEstimate,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted steps.
    pub iterations: usize,
    /// Set when no step could be accepted and the input was returned unchanged
    /// although the gradient was not negligible.
    pub diverged: bool,
}

/// Sum of squared incidence residuals.
pub fn algebraic_cost(frame: &LineFrame, u: &PartialVelocity, obs: &[BearingObservation]) -> f64 {
    obs.iter().map(|o| incidence_residual(frame, u, o).powi(2)).sum()
}

/// Applies a local increment `[dtheta; du_y; du_z]`.
pub fn retract(frame: &LineFrame, u: &PartialVelocity, delta: &Vector5<f64>) -> (LineFrame, PartialVelocity) {
    let dtheta = Vector3::new(delta[0], delta[1], delta[2]);
    let r = frame.rotation() * so3::exp(&dtheta);
    (LineFrame::from_rotation(&r), PartialVelocity::new(u.u_y + delta[3], u.u_z + delta[4]))
}

/// Residual vector and its Jacobian with respect to the local increment at zero.
pub fn residuals_and_jacobian(
    frame: &LineFrame,
    u: &PartialVelocity,
    obs: &[BearingObservation],
) -> (DVector<f64>, OMatrix<f64, Dyn, U5>) {
    let mut r = DVector::zeros(obs.len());
    let mut j = OMatrix::<f64, Dyn, U5>::zeros(obs.len());
    for (i, o) in obs.iter().enumerate() {
        let f = &o.f;
        let t = o.t_rel;
        let (fe1, fe2, fe3) = (f.dot(&frame.e1), f.dot(&frame.e2), f.dot(&frame.e3));
        r[i] = t * (u.u_z * fe2 - u.u_y * fe3) + fe2;
        // d e2 = (e3, 0, -e1) . dtheta,  d e3 = (-e2, e1, 0) . dtheta
        j[(i, 0)] = t * (u.u_z * fe3 + u.u_y * fe2) + fe3;
        j[(i, 1)] = -t * u.u_y * fe1;
        j[(i, 2)] = -(t * u.u_z + 1.0) * fe1;
        j[(i, 3)] = -t * fe3;
        j[(i, 4)] = t * fe2;
    }
    (r, j)
}

/// Minimizes the algebraic incidence error starting from `init`.
///
/// The returned cost never exceeds the initial cost.
pub fn refine_nonlinear(
    init: &ManifoldEstimate,
    obs: &[BearingObservation],
    opts: &LmOptions,
) -> Result<Refinement> {
    if obs.len() < MIN_EVENTS {
        return Err(Error::TooFewEvents { required: MIN_EVENTS, got: obs.len() });
    }
    let mut frame = init.frame;
    let mut u = init.u;
    let initial_cost = algebraic_cost(&frame, &u, obs);
    let mut cost = initial_cost;
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut stalled = false;

    'outer: while iterations < opts.max_iterations {
        let (r, jac) = residuals_and_jacobian(&frame, &u, obs);
        let jtj: Matrix5<f64> = jac.transpose() * &jac;
        let g: Vector5<f64> = jac.transpose() * &r;
        if g.amax() < 1e-300 {
            break;
        }
        loop {
            let mut damped = jtj;
            for k in 0..5 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    lambda *= opts.damping_increase;
                    if lambda > 1e16 {
                        stalled = true;
                        break 'outer;
                    }
                    continue;
                }
            };
            let (f_new, u_new) = retract(&frame, &u, &step);
            let c_new = algebraic_cost(&f_new, &u_new, obs);
            if c_new < cost {
                let decrease = (cost - c_new) / cost.max(1e-300);
                frame = f_new;
                u = u_new;
                cost = c_new;
                iterations += 1;
                lambda /= opts.damping_decrease;
                if decrease < opts.relative_tolerance || step.norm() < opts.step_tolerance {
                    break 'outer;
                }
                break;
            }
            if step.norm() < opts.step_tolerance {
                break 'outer;
            }
            lambda *= opts.damping_increase;
            if lambda > 1e16 {
                stalled = true;
                break 'outer;
            }
        }
    }

    let mut estimate = init.clone();
    estimate.frame = frame;
    estimate.u = u;
    let estimate = estimate.canonicalized();
    let diverged = stalled && iterations == 0 && initial_cost > 1e-20;
    Ok(Refinement { estimate, initial_cost, final_cost: cost, iterations, diverged })
}
