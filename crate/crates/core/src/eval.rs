//! Seeded simulation trials and their summary statistics.
//!
//! Each trial owns a [`ChaCha8Rng`] seeded from its own `u64`, so trials can
//! run in any order or in parallel and still reproduce exactly. Drivers derive
//! per-trial seeds as `base ^ trial_index` (see [`trial_seed`]).

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{solve_full_velocity, AveragingOptions, PartialVelocityObservation};
use crate::error::Result;
use crate::geometry::{derotate_events, AngularRate, BearingObservation, Event, Vec3};
use crate::robust::{estimate_velocity, RansacConfig, StageTimings};
use crate::simulator::{
    apply_noise, direction_error, generate_scene_events, partial_direction_error, sample_line_events,
    sample_scene, LineTruth, NoiseConfig, SceneConfig, SceneGroundTruth,
};
use crate::solver::{solve_manifold, solve_manifold_detailed, RankClass, SolverOptions};

pub fn trial_seed(base: u64, trial_index: u64) -> u64 {
    base ^ trial_index
}

/// Runs `f(seed)` for `trials` derived seeds on the current rayon pool.
/// Results are in trial order.
pub fn run_trials<T, F>(base_seed: u64, trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..trials as u64).into_par_iter().map(|i| f(trial_seed(base_seed, i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Statistics over the finite entries of `values`; non-finite entries count
/// as failures along with `failures`.
pub fn summarize(values: &[f64], failures: usize) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let failures = failures + values.len() - v.len();
    if v.is_empty() {
        return Summary { failures, mean: f64::NAN, median: f64::NAN, min: f64::NAN, max: f64::NAN, count: 0 };
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    Summary { count: n, failures, mean: v.iter().sum::<f64>() / n as f64, median, min: v[0], max: v[n - 1] }
}

/// Gyro reading for one trial: the true rate plus the configured bias.
fn measured_rate(scene: &SceneGroundTruth, noise: &NoiseConfig, rng: &mut impl Rng) -> AngularRate {
    apply_noise(&[], &scene.angular_rate, noise, rng).1
}

fn noisy_line_events(
    scene: &SceneGroundTruth,
    line: usize,
    n: usize,
    cfg: &SceneConfig,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Event>> {
    let clean = sample_line_events(scene, line, n, &cfg.intrinsics, rng)?;
    let per_event = NoiseConfig { gyro_noise: 0.0, ..*noise };
    Ok(apply_noise(&clean, &scene.angular_rate, &per_event, rng).0)
}

/// One noise-free line observed by exactly `n` events.
#[derive(Debug, Clone)]
pub struct LineProblem {
    pub truth: LineTruth,
    pub velocity: Vec3,
    pub obs: Vec<BearingObservation>,
}

/// Draws a single-line scene from `cfg` and `n` noise-free derotated events.
pub fn line_problem(cfg: &SceneConfig, n: usize, rng: &mut impl Rng) -> Result<LineProblem> {
    let single = SceneConfig { num_lines: 1, ..cfg.clone() };
    let scene = sample_scene(&single, rng)?;
    let events = sample_line_events(&scene, 0, n, &cfg.intrinsics, rng)?;
    let obs = derotate_events(&events, &scene.angular_rate, scene.t_s, &cfg.intrinsics);
    let truth = scene.lines.into_iter().next().expect("one line requested");
    Ok(LineProblem { truth, velocity: scene.velocity, obs })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialTimings {
    pub simulation_us: f64,
    pub solve_us: f64,
    pub averaging_us: f64,
}

/// Per-line solves followed by velocity averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTrial {
    pub seed: u64,
    pub n_events: usize,
    pub n_lines: usize,
    /// Velocity direction error in degrees; `None` when averaging failed.
    pub phi: Option<f64>,
    /// Partial-velocity errors of the lines that solved.
    pub line_errors: Vec<f64>,
    pub failed_lines: usize,
    pub near_degenerate_lines: usize,
    pub cheirality_ambiguous_lines: usize,
    pub sign_consistent: bool,
    pub sign_ambiguous: bool,
    pub timings: TrialTimings,
}

/// `cfg.num_lines` lines with `cfg.events_per_line` events each.
pub fn averaged_trial(cfg: &SceneConfig, noise: &NoiseConfig, solver: &SolverOptions, seed: u64) -> Result<AveragedTrial> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = Instant::now();
    let scene = sample_scene(cfg, &mut rng)?;
    let w = measured_rate(&scene, noise, &mut rng);
    let mut per_line = Vec::with_capacity(scene.lines.len());
    for i in 0..scene.lines.len() {
        per_line.push(noisy_line_events(&scene, i, cfg.events_per_line, cfg, noise, &mut rng)?);
    }
    let simulation_us = micros(t0);

    let t1 = Instant::now();
    let mut trial = AveragedTrial {
        seed,
        n_events: cfg.events_per_line,
        n_lines: scene.lines.len(),
        phi: None,
        line_errors: Vec::new(),
        failed_lines: 0,
        near_degenerate_lines: 0,
        cheirality_ambiguous_lines: 0,
        sign_consistent: false,
        sign_ambiguous: false,
        timings: TrialTimings { simulation_us, ..TrialTimings::default() },
    };
    let mut observations = Vec::with_capacity(scene.lines.len());
    for (events, line) in per_line.iter().zip(&scene.lines) {
        let obs = derotate_events(events, &w, scene.t_s, &cfg.intrinsics);
        match solve_manifold_detailed(&obs, solver) {
            Ok(out) => {
                let best = out.cheirality.best;
                trial.near_degenerate_lines += usize::from(out.rank.class == RankClass::NearDegenerate);
                trial.cheirality_ambiguous_lines += usize::from(out.cheirality.ambiguous);
                if let Ok(e) = partial_direction_error(&best.frame, &best.u, line, &scene.velocity) {
                    trial.line_errors.push(e);
                }
                observations.push(PartialVelocityObservation::from(&best));
            }
            Err(_) => trial.failed_lines += 1,
        }
    }
    trial.timings.solve_us = micros(t1);

    let t2 = Instant::now();
    if let Ok(v) = solve_full_velocity(&observations, &AveragingOptions::default()) {
        trial.phi = direction_error(&v.v, &scene.velocity).ok();
        trial.sign_consistent = v.sign_consistent;
        trial.sign_ambiguous = v.sign_ambiguous;
    }
    trial.timings.averaging_us = micros(t2);
    Ok(trial)
}

/// Errors collected at one sweep abscissa.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepPoint {
    pub count: usize,
    pub errors: Vec<f64>,
    pub failures: usize,
}

fn sweep_points(counts: &[usize]) -> Vec<SweepPoint> {
    counts.iter().map(|&count| SweepPoint { count, ..SweepPoint::default() }).collect()
}

/// Per-line partial-velocity error as a function of the event count.
///
/// Each line draws `max(counts)` events once; a count `K` uses the first `K`
/// in sampling order, which is uniform in time rather than the `K` earliest.
pub fn event_count_trial(
    cfg: &SceneConfig,
    noise: &NoiseConfig,
    solver: &SolverOptions,
    counts: &[usize],
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    noise.validate()?;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(cfg, &mut rng)?;
    let w = measured_rate(&scene, noise, &mut rng);
    let mut points = sweep_points(counts);
    for (i, line) in scene.lines.iter().enumerate() {
        let events = noisy_line_events(&scene, i, max, cfg, noise, &mut rng)?;
        let obs = derotate_events(&events, &w, scene.t_s, &cfg.intrinsics);
        for p in &mut points {
            let err = solve_manifold_detailed(&obs[..p.count], solver)
                .and_then(|o| partial_direction_error(&o.cheirality.best.frame, &o.cheirality.best.u, line, &scene.velocity));
            match err {
                Ok(e) => p.errors.push(e),
                Err(_) => p.failures += 1,
            }
        }
    }
    Ok(points)
}

/// Averaged velocity error as a function of the number of lines.
///
/// Solves all `cfg.num_lines` lines once; a count `M` averages the first `M`
/// successful solutions.
pub fn line_count_trial(
    cfg: &SceneConfig,
    noise: &NoiseConfig,
    solver: &SolverOptions,
    counts: &[usize],
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(cfg, &mut rng)?;
    let w = measured_rate(&scene, noise, &mut rng);
    let mut solved = Vec::with_capacity(scene.lines.len());
    for i in 0..scene.lines.len() {
        let events = noisy_line_events(&scene, i, cfg.events_per_line, cfg, noise, &mut rng)?;
        let obs = derotate_events(&events, &w, scene.t_s, &cfg.intrinsics);
        if let Ok(o) = solve_manifold_detailed(&obs, solver) {
            solved.push(PartialVelocityObservation::from(&o.cheirality.best));
        }
    }
    let mut points = sweep_points(counts);
    for p in &mut points {
        let phi = solved
            .get(..p.count)
            .and_then(|subset| solve_full_velocity(subset, &AveragingOptions::default()).ok())
            .and_then(|v| direction_error(&v.v, &scene.velocity).ok());
        match phi {
            Some(e) => p.errors.push(e),
            None => p.failures += 1,
        }
    }
    Ok(points)
}

/// Full robust pipeline on a mixed event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrial {
    pub seed: u64,
    pub n_events: usize,
    pub phi: Option<f64>,
    pub manifolds: usize,
    pub used_lines: usize,
    pub sign_consistent: bool,
    /// Failure message when the pipeline produced no velocity.
    pub error: Option<String>,
    pub timings: StageTimings,
}

/// Scenes and noise depend only on `seed`; the RANSAC seed is
/// `ransac.seed ^ seed`. Runs with equal seeds and different refinement modes
/// therefore see identical data.
pub fn pipeline_trial(cfg: &SceneConfig, noise: &NoiseConfig, ransac: &RansacConfig, seed: u64) -> Result<PipelineTrial> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(cfg, &mut rng)?;
    let clean: Vec<Event> =
        generate_scene_events(&scene, cfg.events_per_line, &cfg.intrinsics, &mut rng)?.into_iter().map(|p| p.0).collect();
    let (events, w) = apply_noise(&clean, &scene.angular_rate, noise, &mut rng);
    let run_cfg = RansacConfig { seed: ransac.seed ^ seed, ..*ransac };
    let mut trial = PipelineTrial {
        seed,
        n_events: events.len(),
        phi: None,
        manifolds: 0,
        used_lines: 0,
        sign_consistent: false,
        error: None,
        timings: StageTimings::default(),
    };
    match estimate_velocity(&events, &w, scene.t_s, &cfg.intrinsics, &run_cfg) {
        Ok(r) => {
            trial.phi = direction_error(&r.velocity.v, &scene.velocity).ok();
            trial.manifolds = r.manifolds.len();
            trial.used_lines = r.used.len();
            trial.sign_consistent = r.velocity.sign_consistent;
            trial.timings = r.diagnostics.timings;
        }
        Err(e) => trial.error = Some(e.to_string()),
    }
    Ok(trial)
}

/// Solves discarded before timing starts.
pub const BENCH_WARMUP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub solves: usize,
    pub events_per_solve: usize,
    pub failures: usize,
    pub min_us: f64,
    pub mean_us: f64,
    pub median_us: f64,
    pub max_us: f64,
}

/// Times `solves` calls of [`solve_manifold`] cycling through `problems`,
/// after [`BENCH_WARMUP`] untimed calls.
pub fn bench_solves(problems: &[LineProblem], solves: usize, solver: &SolverOptions) -> Result<LatencyReport> {
    if problems.is_empty() || solves == 0 {
        return Err(crate::Error::InvalidConfig("benchmark needs at least one problem and one solve".into()));
    }
    let mut times = Vec::with_capacity(solves);
    let mut failures = 0;
    for i in 0..BENCH_WARMUP + solves {
        let p = &problems[i % problems.len()];
        let t = Instant::now();
        let out = black_box(solve_manifold(black_box(&p.obs), solver));
        let us = micros(t);
        if i >= BENCH_WARMUP {
            times.push(us);
            failures += usize::from(out.is_err());
        }
    }
    let s = summarize(&times, 0);
    Ok(LatencyReport {
        solves,
        events_per_solve: problems[0].obs.len(),
        failures,
        min_us: s.min,
        mean_us: s.mean,
        median_us: s.median,
        max_us: s.max,
    })
}

fn micros(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e6
}
