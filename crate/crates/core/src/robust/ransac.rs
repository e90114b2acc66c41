//! Sampling, scoring and sequential extraction of manifolds.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::index::SpatioTemporalIndex;
use crate::averaging::{
    build_averaging_matrix, solve_full_velocity, AveragingOptions, FullVelocityEstimate, ParallelStatus,
    PartialVelocityObservation,
};
use crate::error::{Error, Result};
use crate::geometry::{
    angular_reprojection_residual, derotate_events, BearingObservation, CameraIntrinsics, Event, RotationModel,
};
use crate::refine::{refine_nonlinear, LmOptions};
use crate::solver::{solve_manifold, solve_manifold_detailed, ManifoldEstimate, RankClass, SolverOptions, MIN_EVENTS};

/// Attempts at finding a seed event with enough neighbors.
pub const SEED_ATTEMPTS: usize = 100;
/// Target probability of having drawn at least one all-inlier sample.
pub const CONFIDENCE: f64 = 0.99;
const POLISH_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    /// Minimal hypotheses only.
    #[serde(alias = "linear_only")]
    None,
    /// Linear re-solve on random inlier subsets.
    #[serde(alias = "linear")]
    NonMinimalLinear,
    /// Levenberg-Marquardt on random inlier subsets.
    #[default]
    #[serde(alias = "lm")]
    NonlinearLm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    /// Seconds to neighborhood units.
    pub time_scale: f64,
    /// Neighborhood radius in pixels / scaled time.
    pub radius: f64,
    /// Angular residual threshold in degrees.
    pub inlier_threshold: f64,
    pub max_iterations_per_manifold: usize,
    pub max_manifolds: usize,
    pub refinement_mode: RefinementMode,
    pub refinement_subset: usize,
    pub refinement_repeats: usize,
    pub min_inliers: usize,
    /// Re-solve the best hypothesis of each manifold linearly on all of its
    /// inliers before accepting it.
    pub final_polish: bool,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            time_scale: 1000.0,
            radius: 50.0,
            inlier_threshold: 0.2,
            max_iterations_per_manifold: 100,
            max_manifolds: 10,
            refinement_mode: RefinementMode::default(),
            refinement_subset: 10,
            refinement_repeats: 4,
            min_inliers: 20,
            final_polish: true,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("time_scale", self.time_scale),
            ("radius", self.radius),
            ("inlier_threshold", self.inlier_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("max_iterations_per_manifold", self.max_iterations_per_manifold),
            ("max_manifolds", self.max_manifolds),
            ("refinement_repeats", self.refinement_repeats),
            ("min_inliers", self.min_inliers),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.refinement_subset < MIN_EVENTS {
            return Err(Error::InvalidConfig(format!(
                "refinement_subset must be at least {MIN_EVENTS}, got {}",
                self.refinement_subset
            )));
        }
        Ok(())
    }

    fn threshold_rad(&self) -> f64 {
        self.inlier_threshold.to_radians()
    }
}

/// Five distinct event ids: a uniformly drawn seed followed by four of its
/// neighbors.
pub fn napsac_sample(index: &SpatioTemporalIndex, rng: &mut impl Rng, cfg: &RansacConfig) -> Result<[usize; 5]> {
    let mut neighbors = Vec::new();
    for _ in 0..SEED_ATTEMPTS {
        let slot = rng.random_range(0..index.len());
        let seed_id = index.ids()[slot];
        index.query_into(index.point_of_slot(slot), cfg.radius, &mut neighbors);
        neighbors.retain(|&i| i != seed_id);
        if neighbors.len() < 4 {
            continue;
        }
        let picked = sample(rng, neighbors.len(), 4);
        let mut out = [seed_id; 5];
        for (k, i) in picked.iter().enumerate() {
            out[k + 1] = neighbors[i];
        }
        return Ok(out);
    }
    Err(Error::SamplingExhausted { what: "seed event with four neighbors", attempts: SEED_ATTEMPTS })
}

/// Indices into `obs` with angular residual below `threshold_deg`.
pub fn score_hypothesis(est: &ManifoldEstimate, obs: &[BearingObservation], threshold_deg: f64) -> Vec<usize> {
    score(est, obs.iter().enumerate(), threshold_deg.to_radians()).inliers
}

/// Inlier set and residual statistics of a hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub inliers: Vec<usize>,
    pub mean_residual: f64,
    /// Squared residuals truncated at the threshold, summed over every
    /// scored event. Keeps discriminating once inlier counts saturate.
    pub cost: f64,
}

impl Score {
    /// More inliers wins; ties go to the lower mean residual.
    pub fn beats(&self, other: &Score) -> bool {
        self.inliers.len() > other.inliers.len()
            || (self.inliers.len() == other.inliers.len() && self.mean_residual < other.mean_residual)
    }
}

fn score<'a>(
    est: &ManifoldEstimate,
    obs: impl Iterator<Item = (usize, &'a BearingObservation)>,
    threshold_rad: f64,
) -> Score {
    let t2 = threshold_rad * threshold_rad;
    let mut inliers = Vec::new();
    let mut sum = 0.0;
    let mut cost = 0.0;
    for (id, o) in obs {
        match angular_reprojection_residual(&est.frame, &est.u, o) {
            Ok(r) if r < threshold_rad => {
                inliers.push(id);
                sum += r;
                cost += r * r;
            }
            _ => cost += t2,
        }
    }
    let mean_residual = if inliers.is_empty() { f64::INFINITY } else { sum / inliers.len() as f64 };
    Score { inliers, mean_residual, cost }
}

fn score_ids(est: &ManifoldEstimate, ids: &[usize], obs: &[BearingObservation], threshold_rad: f64) -> Score {
    score(est, ids.iter().map(|&i| (i, &obs[i])), threshold_rad)
}

/// Best-of-`Q` refinement on random inlier subsets, scored on `obs`.
///
/// `inliers` index into `obs`. The returned estimate never scores worse than
/// `est`.
pub fn local_refine(
    est: &ManifoldEstimate,
    inliers: &[usize],
    obs: &[BearingObservation],
    cfg: &RansacConfig,
    rng: &mut impl Rng,
) -> Result<ManifoldEstimate> {
    if inliers.len() < MIN_EVENTS {
        return Err(Error::TooFewEvents { required: MIN_EVENTS, got: inliers.len() });
    }
    let ids: Vec<usize> = (0..obs.len()).collect();
    let base = score_ids(est, &ids, obs, cfg.threshold_rad());
    Ok(refine_against(est, base, inliers, &ids, obs, cfg, rng).0)
}

fn refine_against(
    est: &ManifoldEstimate,
    base: Score,
    inliers: &[usize],
    pool: &[usize],
    obs: &[BearingObservation],
    cfg: &RansacConfig,
    rng: &mut impl Rng,
) -> (ManifoldEstimate, Score) {
    let mut best = (est.clone(), base);
    if cfg.refinement_mode == RefinementMode::None || inliers.len() < MIN_EVENTS {
        return best;
    }
    let solver = SolverOptions::default();
    let lm = LmOptions::default();
    let m = cfg.refinement_subset.min(inliers.len());
    for _ in 0..cfg.refinement_repeats {
        let subset: Vec<BearingObservation> = sample(rng, inliers.len(), m).iter().map(|k| obs[inliers[k]]).collect();
        let candidate = match cfg.refinement_mode {
            RefinementMode::None => unreachable!(),
            RefinementMode::NonMinimalLinear => solve_manifold(&subset, &solver),
            RefinementMode::NonlinearLm => refine_nonlinear(est, &subset, &lm).map(|r| r.estimate),
        };
        let Ok(candidate) = candidate else { continue };
        let s = score_ids(&candidate, pool, obs, cfg.threshold_rad());
        if s.beats(&best.1) {
            best = (candidate, s);
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSearch {
    pub iterations: usize,
    /// Minimal samples discarded for rank deficiency or failed decomposition.
    pub rejected_samples: usize,
    pub refinements: usize,
    pub inliers: usize,
    /// Inlier count over the events still unexplained when the search began.
    pub inlier_ratio: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub derotation_us: f64,
    pub sampling_us: f64,
    pub refinement_us: f64,
    pub averaging_us: f64,
    pub total_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub searches: Vec<ManifoldSearch>,
    pub timings: StageTimings,
}

/// Linear re-fits on the full inlier set while the truncated cost drops.
fn polish(
    mut est: ManifoldEstimate,
    mut s: Score,
    pool: &[usize],
    obs: &[BearingObservation],
    solver: &SolverOptions,
    threshold_rad: f64,
) -> (ManifoldEstimate, Score) {
    for _ in 0..POLISH_ROUNDS {
        let all: Vec<BearingObservation> = s.inliers.iter().map(|&i| obs[i]).collect();
        let Ok(candidate) = solve_manifold(&all, solver) else { break };
        let cs = score_ids(&candidate, pool, obs, threshold_rad);
        if cs.cost >= s.cost || cs.inliers.len() < MIN_EVENTS {
            break;
        }
        (est, s) = (candidate, cs);
    }
    (est, s)
}

/// Hands every event to the accepted manifold that explains it best and
/// re-fits each manifold on its share, until assignments settle.
///
/// Sequential extraction lets an early manifold claim events of a later
/// one; this undoes that. Inlier sets end up disjoint.
fn reassign_and_refit(
    manifolds: &mut Vec<ManifoldEstimate>,
    obs: &[BearingObservation],
    solver: &SolverOptions,
    threshold_rad: f64,
    min_inliers: usize,
) {
    let keep = min_inliers.max(MIN_EVENTS);
    for _ in 0..POLISH_ROUNDS {
        let mut shares: Vec<Vec<usize>> = vec![Vec::new(); manifolds.len()];
        for (i, o) in obs.iter().enumerate() {
            let best = manifolds
                .iter()
                .enumerate()
                .filter_map(|(m, est)| angular_reprojection_residual(&est.frame, &est.u, o).ok().map(|r| (m, r)))
                .filter(|&(_, r)| r < threshold_rad)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((m, _)) = best {
                shares[m].push(i);
            }
        }
        let mut changed = false;
        for (est, share) in manifolds.iter_mut().zip(shares) {
            if est.inliers.as_deref() == Some(share.as_slice()) {
                continue;
            }
            changed = true;
            if share.len() >= keep {
                let subset: Vec<BearingObservation> = share.iter().map(|&i| obs[i]).collect();
                if let Ok(refit) = solve_manifold(&subset, solver) {
                    *est = refit;
                }
            }
            est.n_events = share.len();
            est.inliers = Some(share);
        }
        if !changed {
            break;
        }
    }
    // Manifolds left with too few events were duplicates of others.
    manifolds.retain(|m| m.inliers.as_ref().is_some_and(|i| i.len() >= keep));
}

fn micros(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e6
}

fn adaptive_bound(inliers: usize, pool: usize, cap: usize) -> usize {
    if pool == 0 || inliers == 0 {
        return cap;
    }
    let w5 = (inliers as f64 / pool as f64).powi(MIN_EVENTS as i32);
    if w5 >= 1.0 {
        return 1;
    }
    let k = ((1.0 - CONFIDENCE).ln() / (1.0 - w5).ln()).ceil();
    if k.is_finite() && k >= 0.0 {
        (k as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Extracts up to `max_manifolds` manifolds by sequential RANSAC.
pub fn fit_manifolds(
    events: &[Event],
    rotation: &impl RotationModel,
    t_s: f64,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<Vec<ManifoldEstimate>> {
    fit_manifolds_with_diagnostics(events, rotation, t_s, k, cfg).map(|(m, _)| m)
}

pub fn fit_manifolds_with_diagnostics(
    events: &[Event],
    rotation: &impl RotationModel,
    t_s: f64,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<(Vec<ManifoldEstimate>, FitDiagnostics)> {
    cfg.validate()?;
    if events.len() < MIN_EVENTS {
        return Err(Error::TooFewEvents { required: MIN_EVENTS, got: events.len() });
    }
    let start = Instant::now();
    let mut diag = FitDiagnostics::default();
    let obs = derotate_events(events, rotation, t_s, k);
    diag.timings.derotation_us = micros(start);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let solver = SolverOptions::default();
    let threshold = cfg.threshold_rad();
    let mut remaining: Vec<usize> = (0..events.len()).collect();
    let mut manifolds = Vec::new();
    let mut refine_time = 0.0;
    let search_start = Instant::now();

    while manifolds.len() < cfg.max_manifolds && remaining.len() >= cfg.min_inliers.max(MIN_EVENTS) {
        let index = SpatioTemporalIndex::build(events, &remaining, cfg.time_scale)?;
        let mut search = ManifoldSearch::default();
        let mut best: Option<(ManifoldEstimate, Score)> = None;
        let mut bound = cfg.max_iterations_per_manifold;
        while search.iterations < bound {
            search.iterations += 1;
            let Ok(ids) = napsac_sample(&index, &mut rng, cfg) else { break };
            let sample_obs: Vec<BearingObservation> = ids.iter().map(|&i| obs[i]).collect();
            let hypothesis = match solve_manifold_detailed(&sample_obs, &solver) {
                Ok(out) if out.rank.class == RankClass::WellPosed => out.cheirality.best,
                _ => {
                    search.rejected_samples += 1;
                    continue;
                }
            };
            let s = score_ids(&hypothesis, &remaining, &obs, threshold);
            if best.as_ref().is_some_and(|b| s.cost >= b.1.cost) {
                continue;
            }
            let t0 = Instant::now();
            let inliers = s.inliers.clone();
            let refined = refine_against(&hypothesis, s, &inliers, &remaining, &obs, cfg, &mut rng);
            if cfg.refinement_mode != RefinementMode::None {
                search.refinements += 1;
            }
            refine_time += micros(t0);
            bound = adaptive_bound(refined.1.inliers.len(), remaining.len(), cfg.max_iterations_per_manifold);
            best = Some(refined);
        }

        let Some((mut est, mut s)) = best else {
            diag.searches.push(search);
            break;
        };
        if cfg.final_polish && s.inliers.len() >= cfg.min_inliers {
            let t0 = Instant::now();
            (est, s) = polish(est, s, &remaining, &obs, &solver, threshold);
            refine_time += micros(t0);
        }
        search.inliers = s.inliers.len();
        search.inlier_ratio = s.inliers.len() as f64 / remaining.len() as f64;
        search.accepted = s.inliers.len() >= cfg.min_inliers;
        diag.searches.push(search);
        if s.inliers.len() < cfg.min_inliers {
            break;
        }
        let mut is_inlier = vec![false; events.len()];
        for &i in &s.inliers {
            is_inlier[i] = true;
        }
        remaining.retain(|&i| !is_inlier[i]);
        est.n_events = s.inliers.len();
        est.inliers = Some(s.inliers);
        manifolds.push(est);
    }
    if cfg.final_polish && manifolds.len() > 1 {
        let t0 = Instant::now();
        reassign_and_refit(&mut manifolds, &obs, &solver, threshold, cfg.min_inliers);
        refine_time += micros(t0);
    }
    diag.timings.refinement_us = refine_time;
    diag.timings.sampling_us = (micros(search_start) - refine_time).max(0.0);
    diag.timings.total_us = micros(start);

    if manifolds.is_empty() {
        return Err(Error::NoManifoldFound);
    }
    Ok((manifolds, diag))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    /// Accepted manifolds in extraction order, with inlier event indices.
    pub manifolds: Vec<ManifoldEstimate>,
    /// Positions in `manifolds` that entered velocity averaging.
    pub used: Vec<usize>,
    /// Positions dropped as parallel duplicates of an earlier manifold.
    pub dropped: Vec<usize>,
    pub velocity: FullVelocityEstimate,
    pub diagnostics: FitDiagnostics,
}

/// Sequential RANSAC followed by velocity averaging.
pub fn estimate_velocity(
    events: &[Event],
    rotation: &impl RotationModel,
    t_s: f64,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<PipelineResult> {
    let start = Instant::now();
    let (manifolds, mut diagnostics) = fit_manifolds_with_diagnostics(events, rotation, t_s, k, cfg)?;
    let t0 = Instant::now();
    let opts = AveragingOptions::default();
    let mut used: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for (i, m) in manifolds.iter().enumerate() {
        let candidate = PartialVelocityObservation::from(m);
        if candidate.u.norm() <= crate::averaging::SPEED_EPSILON {
            dropped.push(i);
            continue;
        }
        let duplicate = used.iter().any(|&j| {
            let pair = [PartialVelocityObservation::from(&manifolds[j]), candidate];
            build_averaging_matrix(&pair, &opts)
                .map(|d| crate::averaging::check_parallel_degeneracy(&d, opts.eps_parallel) == ParallelStatus::Degenerate)
                .unwrap_or(true)
        });
        if duplicate {
            dropped.push(i);
        } else {
            used.push(i);
        }
    }
    if used.len() < 2 {
        return Err(Error::TooFewLines(used.len()));
    }
    let observations: Vec<PartialVelocityObservation> =
        used.iter().map(|&i| PartialVelocityObservation::from(&manifolds[i])).collect();
    let velocity = solve_full_velocity(&observations, &opts)?;
    diagnostics.timings.averaging_us = micros(t0);
    diagnostics.timings.total_us = micros(start);
    Ok(PipelineResult { manifolds, used, dropped, velocity, diagnostics })
}
