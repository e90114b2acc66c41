//! Linear N-point solver for one line's partial velocity and frame.
//!
//! Each derotated event contributes the row `[t' f^T, f^T]` to an `N x 6`
//! design matrix `A`. The unknown vector `x = [u_z e2 - u_y e3; e2]` spans
//! its nullspace, so the smallest right-singular vector of `A` recovers it up
//! to scale and sign. Normalizing by `|x[3..6]|` fixes the scale; the sign
//! and the line-direction ambiguity yield four algebraically equivalent
//! branches, two of which place the line behind the camera.

use nalgebra::{Dyn, Matrix6, OMatrix, Vector6, U6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ray_line_intersection_depth, BearingObservation, Branch, LineFrame, PartialVelocity, Vec3,
};

/// Minimum number of events for a unique solution.
pub const MIN_EVENTS: usize = 5;

const NORMALIZE_EPSILON: f64 = 1e-9;
const CROSS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// `sigma5 / sigma1` below this is rank deficient.
    pub eps_rank: f64,
    /// `sigma5 / sigma1` below this is flagged as nearly rank deficient.
    pub eps_near: f64,
    /// Half-width of the front-vote band around 50% that flags cheirality as ambiguous.
    pub cheirality_band: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { eps_rank: 1e-9, eps_near: 1e-6, cheirality_band: 0.05 }
    }
}

/// Stacked incidence rows `[t'_j f_j^T, f_j^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    a: OMatrix<f64, Dyn, U6>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &OMatrix<f64, Dyn, U6> {
        &self.a
    }

    /// `|A x|`.
    pub fn residual_norm(&self, x: &Vector6<f64>) -> f64 {
        (&self.a * x).norm()
    }
}

pub fn build_design_matrix(obs: &[BearingObservation]) -> Result<DesignMatrix> {
    if obs.len() < MIN_EVENTS {
        return Err(Error::TooFewEvents { required: MIN_EVENTS, got: obs.len() });
    }
    let mut a = OMatrix::<f64, Dyn, U6>::zeros(obs.len());
    for (j, o) in obs.iter().enumerate() {
        let f = o.f;
        a[(j, 0)] = o.t_rel * f.x;
        a[(j, 1)] = o.t_rel * f.y;
        a[(j, 2)] = o.t_rel * f.z;
        a[(j, 3)] = f.x;
        a[(j, 4)] = f.y;
        a[(j, 5)] = f.z;
    }
    Ok(DesignMatrix { a })
}

/// Smallest right-singular vector of `A` and the spectrum around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullspaceSolution {
    /// Unit vector, up to sign.
    pub x: Vector6<f64>,
    pub sigma_min: f64,
    pub sigma_second: f64,
    pub sigma_max: f64,
    /// Fifth largest over largest singular value.
    pub rank_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankClass {
    WellPosed,
    NearDegenerate,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStatus {
    pub class: RankClass,
    pub rank_ratio: f64,
    /// Threshold that decided the class (`eps_rank` if degenerate, else `eps_near`).
    pub threshold: f64,
}

impl RankStatus {
    pub fn classify(rank_ratio: f64, eps_rank: f64, eps_near: f64) -> Self {
        // NaN ratios (non-finite input) classify as degenerate.
        if rank_ratio.is_nan() || rank_ratio < eps_rank {
            Self { class: RankClass::Degenerate, rank_ratio, threshold: eps_rank }
        } else if rank_ratio < eps_near {
            Self { class: RankClass::NearDegenerate, rank_ratio, threshold: eps_near }
        } else {
            Self { class: RankClass::WellPosed, rank_ratio, threshold: eps_near }
        }
    }
}

/// Square 6x6 factor with the same singular values and right vectors as `A`.
fn square_factor(a: &OMatrix<f64, Dyn, U6>) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    if a.nrows() <= 6 {
        m.view_mut((0, 0), (a.nrows(), 6)).copy_from(a);
    } else {
        let r = a.clone().qr().r();
        m.copy_from(&r.fixed_view::<6, 6>(0, 0));
    }
    m
}

pub fn solve_nullspace(a: &DesignMatrix) -> Result<NullspaceSolution> {
    let svd = square_factor(&a.a).svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverNumerical("SVD did not return right singular vectors".into()))?;
    let s = svd.singular_values;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverNumerical("non-finite singular values".into()));
    }
    let x: Vector6<f64> = v_t.row(5).transpose();
    let sigma_max = s[0];
    let rank_ratio = if sigma_max > 0.0 { s[4] / sigma_max } else { 0.0 };
    Ok(NullspaceSolution { x: x.normalize(), sigma_min: s[5], sigma_second: s[4], sigma_max, rank_ratio })
}

pub fn check_rank(a: &DesignMatrix, eps_rank: f64, eps_near: f64) -> Result<RankStatus> {
    let ns = solve_nullspace(a)?;
    Ok(RankStatus::classify(ns.rank_ratio, eps_rank, eps_near))
}

/// One candidate solution for a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldEstimate {
    pub frame: LineFrame,
    pub u: PartialVelocity,
    /// Sign map relative to the decomposition of the returned nullspace vector.
    pub branch: Branch,
    /// Smallest singular value of the design matrix.
    pub algebraic_residual: f64,
    pub rank_ratio: f64,
    pub n_events: usize,
    /// Fraction of events whose ray meets the line in front of the camera.
    pub front_fraction: Option<f64>,
    pub cheirality_ambiguous: bool,
    pub inliers: Option<Vec<usize>>,
}

impl ManifoldEstimate {
    pub fn new(frame: LineFrame, u: PartialVelocity) -> Self {
        Self {
            frame,
            u,
            branch: Branch::S0,
            algebraic_residual: 0.0,
            rank_ratio: 0.0,
            n_events: 0,
            front_fraction: None,
            cheirality_ambiguous: false,
            inliers: None,
        }
    }

    /// Camera-frame projected velocity `R_l u_l`.
    pub fn projected_velocity(&self) -> Vec3 {
        self.u.projected(&self.frame)
    }

    pub fn with_branch(&self, b: Branch) -> Self {
        let (frame, u) = b.apply(&self.frame, &self.u);
        Self { frame, u, branch: self.branch.compose(b), ..self.clone() }
    }

    /// Flips to the equivalent direction-reversed branch when `u_y < 0`.
    pub fn canonicalized(self) -> Self {
        if self.u.u_y < 0.0 {
            self.with_branch(Branch::S3)
        } else {
            self
        }
    }
}

/// `x(frame, u) = [u_z e2 - u_y e3; e2]`.
pub fn solution_vector(frame: &LineFrame, u: &PartialVelocity) -> Vector6<f64> {
    let a = frame.e2 * u.u_z - frame.e3 * u.u_y;
    Vector6::new(a.x, a.y, a.z, frame.e2.x, frame.e2.y, frame.e2.z)
}

/// Splits the nullspace vector into the four sign-related branches `S0..S3`.
pub fn decompose_solution(ns: &NullspaceSolution) -> Result<[ManifoldEstimate; 4]> {
    let x = &ns.x;
    let head = Vec3::new(x[0], x[1], x[2]);
    let tail = Vec3::new(x[3], x[4], x[5]);
    let scale = tail.norm();
    if scale.is_nan() || scale < NORMALIZE_EPSILON {
        return Err(Error::DecompositionDegenerate);
    }
    let head = head / scale;
    let e2 = tail / scale;
    let u_z = head.dot(&e2);
    let cross = head.cross(&e2);
    let u_y = cross.norm();
    if u_y.is_nan() || u_y < CROSS_EPSILON {
        return Err(Error::DecompositionDegenerate);
    }
    let e1 = cross / u_y;
    let mut base = ManifoldEstimate::new(LineFrame::from_axes(e1, e2), PartialVelocity::new(u_y, u_z));
    base.algebraic_residual = ns.sigma_min;
    base.rank_ratio = ns.rank_ratio;
    Ok(Branch::ALL.map(|b| base.with_branch(b)))
}

/// Fraction of observations whose ray meets the line in front of the camera.
pub fn front_fraction(frame: &LineFrame, u: &PartialVelocity, obs: &[BearingObservation]) -> f64 {
    let mut front = 0usize;
    let mut valid = 0usize;
    for o in obs {
        if let Ok(depth) = ray_line_intersection_depth(frame, u, o) {
            valid += 1;
            if depth > 0.0 {
                front += 1;
            }
        }
    }
    if valid == 0 {
        0.0
    } else {
        front as f64 / valid as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheiralityOutcome {
    /// Front-facing survivor with `u_y >= 0`.
    pub best: ManifoldEstimate,
    /// The other front-facing survivor (flipped line direction).
    pub alternate: ManifoldEstimate,
    pub front_fraction: f64,
    pub ambiguous: bool,
}

/// Keeps the two branches with the largest front-of-camera vote.
pub fn disambiguate_cheirality(
    branches: &[ManifoldEstimate; 4],
    obs: &[BearingObservation],
    band: f64,
) -> CheiralityOutcome {
    let mut scored: Vec<(f64, &ManifoldEstimate)> =
        branches.iter().map(|b| (front_fraction(&b.frame, &b.u, obs), b)).collect();
    // Stable sort keeps branch order among equal votes.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let fraction = scored[0].0;
    let ambiguous = (fraction - 0.5).abs() < band;
    let (mut best, mut alternate) = (scored[0].1.clone(), scored[1].1.clone());
    if best.u.u_y < 0.0 && alternate.u.u_y >= 0.0 {
        std::mem::swap(&mut best, &mut alternate);
    }
    for e in [&mut best, &mut alternate] {
        e.front_fraction = Some(fraction);
        e.cheirality_ambiguous = ambiguous;
        e.n_events = obs.len();
    }
    CheiralityOutcome { best, alternate, front_fraction: fraction, ambiguous }
}

/// Every intermediate of a single solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub nullspace: NullspaceSolution,
    pub rank: RankStatus,
    pub branches: [ManifoldEstimate; 4],
    pub cheirality: CheiralityOutcome,
}

/// Full linear pipeline with intermediates exposed.
pub fn solve_manifold_detailed(obs: &[BearingObservation], opts: &SolverOptions) -> Result<SolveOutcome> {
    let a = build_design_matrix(obs)?;
    let nullspace = solve_nullspace(&a)?;
    let rank = RankStatus::classify(nullspace.rank_ratio, opts.eps_rank, opts.eps_near);
    if rank.class == RankClass::Degenerate {
        return Err(Error::SolverDegenerate { rank_ratio: rank.rank_ratio });
    }
    let branches = decompose_solution(&nullspace)?;
    let cheirality = disambiguate_cheirality(&branches, obs, opts.cheirality_band);
    Ok(SolveOutcome { nullspace, rank, branches, cheirality })
}

/// Line frame and partial velocity from `N >= 5` derotated events.
pub fn solve_manifold(obs: &[BearingObservation], opts: &SolverOptions) -> Result<ManifoldEstimate> {
    solve_manifold_detailed(obs, opts).map(|o| o.cheirality.best)
}
