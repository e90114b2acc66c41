//! Fusing per-line partial velocities into a full velocity direction.
//!
//! Each line observes `H_i v = u_yi e2i + u_zi e3i`. Rotating that reading by
//! 90 degrees in the line's normal plane gives a vector orthogonal to `v`, so
//! `v` spans the nullspace of the stacked rows `u_yi e3i - u_zi e2i`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LineFrame, PartialVelocity, Vec3};
use crate::solver::ManifoldEstimate;

/// Partial velocities smaller than this carry no direction.
pub const SPEED_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialVelocityObservation {
    pub frame: LineFrame,
    pub u: PartialVelocity,
    pub weight: f64,
}

impl PartialVelocityObservation {
    pub fn new(frame: LineFrame, u: PartialVelocity) -> Self {
        Self { frame, u, weight: 1.0 }
    }

    pub fn projected(&self) -> Vec3 {
        self.u.projected(&self.frame)
    }
}

impl From<&ManifoldEstimate> for PartialVelocityObservation {
    fn from(e: &ManifoldEstimate) -> Self {
        Self::new(e.frame, e.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingOptions {
    /// Divide each row by `sqrt(u_y^2 + u_z^2)`.
    pub normalize_rows: bool,
    /// `sigma2 / sigma1` below this means the lines are (nearly) parallel.
    pub eps_parallel: f64,
}

impl Default for AveragingOptions {
    fn default() -> Self {
        Self { normalize_rows: true, eps_parallel: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingMatrix {
    pub rows: DMatrix<f64>,
    /// Descending.
    pub singular_values: [f64; 3],
    /// Right singular vector of the smallest singular value.
    pub null_vector: Vec3,
}

impl AveragingMatrix {
    /// `sigma2 / sigma1`.
    pub fn conditioning(&self) -> f64 {
        if self.singular_values[0] > 0.0 {
            self.singular_values[1] / self.singular_values[0]
        } else {
            0.0
        }
    }
}

fn rotated_row(o: &PartialVelocityObservation) -> Vec3 {
    o.frame.e3 * o.u.u_y - o.frame.e2 * o.u.u_z
}

fn check_observations(observations: &[PartialVelocityObservation]) -> Result<()> {
    if observations.len() < 2 {
        return Err(Error::TooFewLines(observations.len()));
    }
    if observations.iter().any(|o| o.u.norm() <= SPEED_EPSILON) {
        return Err(Error::ZeroPartialVelocity);
    }
    Ok(())
}

pub fn build_averaging_matrix(
    observations: &[PartialVelocityObservation],
    opts: &AveragingOptions,
) -> Result<AveragingMatrix> {
    check_observations(observations)?;
    // At least three rows so the thin SVD keeps all three right vectors.
    let m = observations.len();
    let mut rows = DMatrix::zeros(m.max(3), 3);
    for (i, o) in observations.iter().enumerate() {
        let mut r = rotated_row(o) * o.weight;
        if opts.normalize_rows {
            r /= o.u.norm();
        }
        rows.row_mut(i).copy_from(&r.transpose());
    }
    let svd = rows.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverNumerical("SVD did not return right singular vectors".into()))?;
    let s = &svd.singular_values;
    let null_vector = Vec3::new(v_t[(2, 0)], v_t[(2, 1)], v_t[(2, 2)]).normalize();
    rows = rows.rows(0, m).into_owned();
    Ok(AveragingMatrix { rows, singular_values: [s[0], s[1], s[2]], null_vector })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParallelStatus {
    WellPosed,
    Degenerate,
}

pub fn check_parallel_degeneracy(d: &AveragingMatrix, eps_parallel: f64) -> ParallelStatus {
    if d.conditioning() < eps_parallel {
        ParallelStatus::Degenerate
    } else {
        ParallelStatus::WellPosed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullVelocityEstimate {
    /// Unit direction; the scale is unobservable.
    pub v: Vec3,
    /// Every line agrees with the chosen sign.
    pub sign_consistent: bool,
    /// The vote was tied and the forward-z convention decided.
    pub sign_ambiguous: bool,
    pub conditioning: f64,
    pub n_lines: usize,
}

pub fn solve_full_velocity(
    observations: &[PartialVelocityObservation],
    opts: &AveragingOptions,
) -> Result<FullVelocityEstimate> {
    let d = build_averaging_matrix(observations, opts)?;
    let conditioning = d.conditioning();
    if check_parallel_degeneracy(&d, opts.eps_parallel) == ParallelStatus::Degenerate {
        return Err(Error::ParallelLinesDegenerate { conditioning });
    }
    let mut v = d.null_vector;
    let agree = observations.iter().filter(|o| v.dot(&o.projected()) > 0.0).count();
    let disagree = observations.iter().filter(|o| v.dot(&o.projected()) < 0.0).count();
    let mut sign_ambiguous = false;
    if disagree > agree {
        v = -v;
    } else if disagree == agree {
        sign_ambiguous = true;
        if v.z < 0.0 {
            v = -v;
        }
    }
    let sign_consistent = observations.iter().all(|o| v.dot(&o.projected()) > 0.0);
    Ok(FullVelocityEstimate { v, sign_consistent, sign_ambiguous, conditioning, n_lines: observations.len() })
}

/// Averaging by eliminating the per-line scales with a Schur complement.
/// Returns the direction up to sign.
pub fn schur_averaging_reference(observations: &[PartialVelocityObservation]) -> Result<Vec3> {
    check_observations(observations)?;
    let mut u_block = Matrix3::zeros();
    let mut w_v_inv_wt = Matrix3::zeros();
    for o in observations {
        let (e2, e3) = (o.frame.e2, o.frame.e3);
        u_block += e2 * e2.transpose() + e3 * e3.transpose();
        let w: Vector3<f64> = -(e2 * o.u.u_y) - e3 * o.u.u_z;
        let v_ii = o.u.u_y * o.u.u_y + o.u.u_z * o.u.u_z;
        w_v_inv_wt += w * w.transpose() / v_ii;
    }
    let f = u_block - w_v_inv_wt;
    Ok(smallest_eigenvector(&schur_symmetrize(&f)))
}

/// The Schur complement matrix `F = U - W V^-1 W^T`.
pub fn schur_matrix(observations: &[PartialVelocityObservation]) -> Result<Matrix3<f64>> {
    check_observations(observations)?;
    let mut f = Matrix3::zeros();
    for o in observations {
        let (e2, e3) = (o.frame.e2, o.frame.e3);
        let w: Vector3<f64> = -(e2 * o.u.u_y) - e3 * o.u.u_z;
        let v_ii = o.u.u_y * o.u.u_y + o.u.u_z * o.u.u_z;
        f += e2 * e2.transpose() + e3 * e3.transpose() - w * w.transpose() / v_ii;
    }
    Ok(f)
}

fn schur_symmetrize(f: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (f + f.transpose())
}

fn smallest_eigenvector(f: &Matrix3<f64>) -> Vec3 {
    let eig = f.symmetric_eigen();
    let k = (0..3)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap_or(0);
    eig.eigenvectors.column(k).into_owned().normalize()
}
