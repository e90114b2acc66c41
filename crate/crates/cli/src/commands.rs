//! Subcommand implementations.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use eventail::eval::{
    averaged_trial, bench_solves, event_count_trial, line_count_trial, line_problem, pipeline_trial, run_trials,
    summarize, SweepPoint,
};
use eventail::geometry::derotate_events;
use eventail::io::{load_events_csv, load_gyro_csv, save_events_csv, save_gyro_csv, GyroSample};
use eventail::robust::{estimate_velocity, fit_manifolds, RansacConfig};
use eventail::simulator::{apply_noise, direction_error, generate_scene_events, sample_scene, NoiseConfig, SceneConfig};
use eventail::solver::SolverOptions;
use eventail::Event;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, SweepKind};
use crate::record::{BenchRecord, EstimateRecord, ResultRecord, SummaryRecord, TruthRecord, SCHEMA_VERSION};

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("create output directory {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).with_context(|| format!("write {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("create {}", path.display()))?;
    for r in rows {
        w.serialize(r).with_context(|| format!("write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("write {}", path.display()))
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let scene_cfg = cfg.scene()?;
    let noise = cfg.noise()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = sample_scene(&scene_cfg, &mut rng).context("sample scene")?;
    let labelled = generate_scene_events(&scene, scene_cfg.events_per_line, &scene_cfg.intrinsics, &mut rng)
        .context("generate events")?;
    let clean: Vec<Event> = labelled.iter().map(|p| p.0).collect();
    let (events, w) = apply_noise(&clean, &scene.angular_rate, &noise, &mut rng);

    let dir = out_dir(cfg)?;
    let events_path = dir.join("events.csv");
    save_events_csv(&events_path, &events).with_context(|| format!("write {}", events_path.display()))?;
    let gyro_path = dir.join("gyro.csv");
    save_gyro_csv(&gyro_path, &[GyroSample { t: 0.0, w: w.0 }])
        .with_context(|| format!("write {}", gyro_path.display()))?;
    let truth = TruthRecord {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        intrinsics: scene_cfg.intrinsics,
        noise,
        measured_rate: [w.0.x, w.0.y, w.0.z],
        event_lines: labelled.iter().map(|p| p.1).collect(),
        scene,
    };
    write_json(&dir.join("truth.json"), &truth)?;
    println!("wrote {} events from {} lines to {}", events.len(), truth.scene.lines.len(), dir.display());
    Ok(())
}

struct Inputs {
    events: Vec<Event>,
    gyro: eventail::io::GyroTrack,
    truth: Option<TruthRecord>,
    t_s: f64,
}

fn input_path(explicit: &Option<PathBuf>, cfg: &RunConfig, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out_dir.join(name))
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let events_path = input_path(&cfg.events_path, cfg, "events.csv");
    let events = load_events_csv(&events_path).with_context(|| format!("read events {}", events_path.display()))?;
    let gyro_path = input_path(&cfg.gyro_path, cfg, "gyro.csv");
    let gyro = load_gyro_csv(&gyro_path).with_context(|| format!("read gyro {}", gyro_path.display()))?;
    // An explicit truth path must exist; the default one is optional.
    let truth_path = input_path(&cfg.truth_path, cfg, "truth.json");
    let truth = if cfg.truth_path.is_some() || truth_path.exists() {
        let text =
            fs::read_to_string(&truth_path).with_context(|| format!("read truth {}", truth_path.display()))?;
        let t: TruthRecord =
            serde_json::from_str(&text).with_context(|| format!("parse truth {}", truth_path.display()))?;
        Some(t)
    } else {
        None
    };
    let t_s = match (cfg.reference_time, &truth, events.first(), events.last()) {
        (Some(t), _, _, _) => t,
        (None, Some(t), _, _) => t.scene.t_s,
        (None, None, Some(a), Some(b)) => 0.5 * (a.t + b.t),
        _ => 0.0,
    };
    Ok(Inputs { events, gyro, truth, t_s })
}

pub fn estimate(cfg: &RunConfig, timing: bool) -> Result<()> {
    let k = cfg.intrinsics()?;
    let ransac = cfg.ransac()?;
    let input = load_inputs(cfg)?;
    let r = estimate_velocity(&input.events, &input.gyro, input.t_s, &k, &ransac).context("estimate velocity")?;

    let noise = input.truth.as_ref().map(|t| t.noise).unwrap_or_else(NoiseConfig::none);
    let mut result = ResultRecord::new("estimate", 0, cfg.seed, &noise);
    result.n_events = input.events.len();
    result.n_lines = r.used.len();
    result.phi_deg = input.truth.as_ref().and_then(|t| direction_error(&r.velocity.v, &t.scene.velocity).ok());
    result.ok = true;
    result.sign_consistent = r.velocity.sign_consistent;
    result.sign_ambiguous = r.velocity.sign_ambiguous;
    if timing {
        result.set_stage_timings(&r.diagnostics.timings);
    }
    let v = r.velocity.v;
    let record = EstimateRecord {
        result,
        reference_time: input.t_s,
        velocity: Some([v.x, v.y, v.z]),
        used: r.used,
        dropped: r.dropped,
        manifolds: r.manifolds,
    };
    write_json(&out_dir(cfg)?.join("estimate.json"), &record)?;
    println!("velocity direction: [{:.6}, {:.6}, {:.6}]", v.x, v.y, v.z);
    println!("lines used: {} of {}", record.used.len(), record.manifolds.len());
    if let Some(phi) = record.result.phi_deg {
        println!("error vs truth: {phi:.3e} deg");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CanonicalRow {
    manifold: usize,
    t_rel: f64,
    y_hat: f64,
}

pub fn canonicalize(cfg: &RunConfig) -> Result<()> {
    let k = cfg.intrinsics()?;
    let ransac = cfg.ransac()?;
    let input = load_inputs(cfg)?;
    let manifolds = fit_manifolds(&input.events, &input.gyro, input.t_s, &k, &ransac).context("fit manifolds")?;
    let mut rows = Vec::new();
    for (i, m) in manifolds.iter().enumerate() {
        let ids = m.inliers.as_deref().unwrap_or_default();
        let events: Vec<Event> = ids.iter().map(|&j| input.events[j]).collect();
        let obs = derotate_events(&events, &input.gyro, input.t_s, &k);
        let trace = eventail::manifold::canonicalize_events(m, &obs);
        rows.extend(trace.points.iter().map(|p| CanonicalRow { manifold: i, t_rel: p.t_rel, y_hat: p.y_hat }));
    }
    let path = out_dir(cfg)?.join("canonical.csv");
    write_csv(&path, &rows)?;
    println!("wrote {} canonical points from {} manifolds to {}", rows.len(), manifolds.len(), path.display());
    Ok(())
}

fn kind_name(kind: SweepKind) -> &'static str {
    match kind {
        SweepKind::Events => "events",
        SweepKind::Lines => "lines",
        SweepKind::Averaged => "averaged",
        SweepKind::Pipeline => "pipeline",
    }
}

/// Settings shared by every trial of a sweep.
#[derive(Clone, Copy)]
struct SweepSetup<'a> {
    kind: SweepKind,
    cfg: &'a RunConfig,
    scene: &'a SceneConfig,
    ransac: &'a RansacConfig,
    timing: bool,
}

/// Records of one trial at one noise level, each with its summary abscissa.
fn sweep_trial(setup: SweepSetup, noise: &NoiseConfig, trial: u64, seed: u64) -> Vec<(usize, ResultRecord)> {
    let SweepSetup { kind, cfg, scene, ransac, timing } = setup;
    let solver = SolverOptions::default();
    let name = kind_name(kind);
    let points = |r: eventail::Result<Vec<SweepPoint>>, counts: &[usize], lines: Option<usize>| {
        let points = r.unwrap_or_else(|_| counts.iter().map(|&count| SweepPoint { count, failures: 1, errors: vec![] }).collect());
        points
            .into_iter()
            .map(|p| {
                let mut rec = ResultRecord::new(name, trial, seed, noise);
                rec.phi_deg = p.errors.first().copied();
                rec.ok = rec.phi_deg.is_some();
                rec.failed_lines = p.failures;
                (rec.n_events, rec.n_lines) = match lines {
                    Some(m) => (p.count, m),
                    None => (scene.events_per_line, p.count),
                };
                (p.count, rec)
            })
            .collect()
    };
    match kind {
        SweepKind::Events => {
            let single = SceneConfig { num_lines: 1, ..scene.clone() };
            points(event_count_trial(&single, noise, &solver, &cfg.event_counts, seed), &cfg.event_counts, Some(1))
        }
        SweepKind::Lines => {
            let max = cfg.line_counts.iter().copied().max().unwrap_or(0);
            let many = SceneConfig { num_lines: max, ..scene.clone() };
            points(line_count_trial(&many, noise, &solver, &cfg.line_counts, seed), &cfg.line_counts, None)
        }
        SweepKind::Averaged => {
            let rec = match averaged_trial(scene, noise, &solver, seed) {
                Ok(t) => ResultRecord::from_averaged(trial, &t, noise, timing),
                Err(_) => ResultRecord::new(name, trial, seed, noise),
            };
            vec![(scene.events_per_line, rec)]
        }
        SweepKind::Pipeline => {
            let rec = match pipeline_trial(scene, noise, ransac, seed) {
                Ok(t) => ResultRecord::from_pipeline(trial, &t, noise, timing),
                Err(_) => ResultRecord::new(name, trial, seed, noise),
            };
            vec![(scene.events_per_line, rec)]
        }
    }
}

pub fn sweep(cfg: &RunConfig, timing: bool) -> Result<()> {
    if cfg.trials == 0 {
        return Err(anyhow!("sweep needs at least one trial"));
    }
    let scene = cfg.scene()?;
    let grid = cfg.noise_grid()?;
    let ransac = cfg.ransac()?;
    let kind = cfg.sweep;
    let name = kind_name(kind);
    let setup = SweepSetup { kind, cfg, scene: &scene, ransac: &ransac, timing };
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for noise in &grid {
        let per_trial = run_trials(cfg.seed, cfg.trials, |seed| {
            let trial = seed ^ cfg.seed;
            sweep_trial(setup, noise, trial, seed)
        });
        let mut counts: Vec<usize> = Vec::new();
        for (count, _) in per_trial.iter().flatten() {
            if !counts.contains(count) {
                counts.push(*count);
            }
        }
        for count in counts {
            let rows: Vec<&ResultRecord> =
                per_trial.iter().flatten().filter(|(c, _)| *c == count).map(|(_, r)| r).collect();
            let errors: Vec<f64> = rows.iter().filter_map(|r| r.phi_deg).collect();
            let s = summarize(&errors, rows.len() - errors.len());
            summaries.push(SummaryRecord::new(name, count, noise, &s));
        }
        records.extend(per_trial.into_iter().flatten().map(|(_, r)| r));
    }
    let dir = out_dir(cfg)?;
    write_csv(&dir.join(format!("sweep_{name}.csv")), &records)?;
    write_csv(&dir.join(format!("summary_{name}.csv")), &summaries)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>8} {:>12} {:>12}", "count", "pixel", "timestamp", "gyro", "failed", "mean_deg", "median_deg");
    for s in &summaries {
        println!(
            "{:>8} {:>10} {:>10} {:>10} {:>8} {:>12.4} {:>12.4}",
            s.count, s.pixel_noise, s.timestamp_sigma, s.gyro_noise, s.failures, s.mean_deg, s.median_deg
        );
    }
    Ok(())
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let scene = cfg.scene()?;
    if cfg.bench_problems == 0 {
        return Err(anyhow!("bench_problems must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let problems = (0..cfg.bench_problems)
        .map(|_| line_problem(&scene, cfg.bench_events, &mut rng))
        .collect::<eventail::Result<Vec<_>>>()
        .context("generate benchmark problems")?;
    let report = bench_solves(&problems, cfg.bench_solves, &SolverOptions::default()).context("run benchmark")?;
    let record = BenchRecord { schema_version: SCHEMA_VERSION, seed: cfg.seed, problems: problems.len(), report };
    write_json(&out_dir(cfg)?.join("bench.json"), &record)?;
    println!(
        "{} solves of {} events: min {:.3} us, mean {:.3} us, median {:.3} us, failures {}",
        report.solves, report.events_per_solve, report.min_us, report.mean_us, report.median_us, report.failures
    );
    Ok(())
}
