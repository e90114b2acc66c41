//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of the verdicts so a red criterion does not hide the
//! others in a `cargo test` run; set `EVENTAIL_ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a nonzero exit.

use std::process::ExitCode;
use std::time::Instant;

use eventail::averaging::{
    build_averaging_matrix, check_parallel_degeneracy, schur_averaging_reference, solve_full_velocity, AveragingOptions,
    ParallelStatus, PartialVelocityObservation,
};
use eventail::eval::{
    averaged_trial, bench_solves, event_count_trial, line_count_trial, line_problem, pipeline_trial, run_trials,
    summarize, LineProblem, Summary,
};
use eventail::geometry::{derotate_events, incidence_residual, BearingObservation, Branch, LineFrame, PartialVelocity};
use eventail::io::{read_events_csv, read_gyro_csv, write_events_csv, write_gyro_csv, quantize_to_csv_precision, GyroSample};
use eventail::manifold::{canonicalize_events, max_curve_deviation, max_line_fit_deviation};
use eventail::refine::{residuals_and_jacobian, retract};
use eventail::robust::{RansacConfig, RefinementMode};
use eventail::simulator::{
    direction_error, generate_scene_events, partial_direction_error, sample_line_events, sample_scene, NoiseConfig,
    SceneConfig, SceneGroundTruth,
};
use eventail::solver::{
    build_design_matrix, check_rank, decompose_solution, solution_vector, solve_manifold_detailed,
    solve_nullspace, ManifoldEstimate, RankClass, RankStatus, SolverOptions,
};
use eventail::{so3, Error, Vec3};
use nalgebra::{DMatrix, Vector5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

#[derive(Default)]
struct Tally {
    passed: usize,
    failed: Vec<u32>,
}

impl Tally {
    fn verdict(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        println!("{} {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id);
        }
    }
}

fn info(msg: String) {
    println!("        {msg}");
}

fn unit(rng: &mut impl Rng) -> Vec3 {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(x, y, z)
}

fn random_frame(rng: &mut impl Rng) -> LineFrame {
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    LineFrame::from_rotation(&so3::exp(&(unit(rng) * angle)))
}

fn problem(seed: u64, n: usize) -> Result<LineProblem, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    line_problem(&SceneConfig::default(), n, &mut rng)
}

/// Lines close to the camera; the regime where the default noise levels
/// are small relative to the observed flow.
fn near_field() -> SceneConfig {
    SceneConfig { depth_min: 0.1, depth_max: 0.3, segment_length: 0.1, ..SceneConfig::default() }
}

fn fmt(s: &Summary) -> String {
    format!("median {:.3} deg, mean {:.3} deg ({} ok, {} failed)", s.median, s.mean, s.count, s.failures)
}

fn exactness(t: &mut Tally) {
    let opts = SolverOptions::default();
    let out = run_trials(0x1000, 100_000, |seed| -> Result<(f64, f64), String> {
        let p = problem(seed, 5).map_err(|e| e.to_string())?;
        let est = solve_manifold_detailed(&p.obs, &opts).map_err(|e| e.to_string())?.cheirality.best;
        let pd = partial_direction_error(&est.frame, &est.u, &p.truth, &p.velocity).map_err(|e| e.to_string())?;
        Ok((pd, est.frame.angle_to_up_to_direction(&p.truth.frame).to_degrees()))
    });
    let failures: Vec<&String> = out.iter().filter_map(|r| r.as_ref().err()).collect();
    let (pd, fr) = out.iter().flatten().fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(*x), b.max(*y)));
    let ok = failures.is_empty() && pd < 1e-4 && fr < 1e-4;
    let first = failures.first().map(|e| format!(", first failure: {e}")).unwrap_or_default();
    t.verdict(
        1,
        "noise-free exactness",
        ok,
        format!("{} minimal solves, {} failed, worst partial {pd:.2e} deg, worst frame {fr:.2e} deg{first}", out.len(), failures.len()),
    );
}

fn latency(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2000);
    let problems: Vec<LineProblem> =
        (0..1000).map(|_| line_problem(&SceneConfig::default(), 5, &mut rng).expect("scene")).collect();
    let r = bench_solves(&problems, 100_000, &SolverOptions::default()).expect("bench");
    let ok = r.mean_us < 20.0 && r.min_us < 10.0 && r.failures == 0;
    t.verdict(
        2,
        "solver latency",
        ok,
        format!("{} solves of 5 events, min {:.2} us, mean {:.2} us, median {:.2} us", r.solves, r.min_us, r.mean_us, r.median_us),
    );
}

struct Cell {
    label: &'static str,
    noise: NoiseConfig,
    events: usize,
    median: (f64, f64),
    mean: Option<(f64, f64)>,
}

fn averaged_summary(cfg: &SceneConfig, noise: &NoiseConfig, events: usize, trials: usize, base: u64) -> Summary {
    let cfg = SceneConfig { events_per_line: events, num_lines: 5, ..cfg.clone() };
    let out = run_trials(base, trials, |seed| averaged_trial(&cfg, noise, &SolverOptions::default(), seed).ok().and_then(|t| t.phi));
    let values: Vec<f64> = out.iter().flatten().copied().collect();
    summarize(&values, out.len() - values.len())
}

fn table(t: &mut Tally) {
    let cells = [
        Cell { label: "pixel 0.5 px, 5 events", noise: NoiseConfig::pixel(0.5), events: 5, median: (0.6, 2.5), mean: Some((2.8, 11.0)) },
        Cell { label: "pixel 0.5 px, 10 events", noise: NoiseConfig::pixel(0.5), events: 10, median: (0.07, 0.3), mean: None },
        Cell { label: "timestamp 0.5 ms, 5 events", noise: NoiseConfig::timestamp(0.0005), events: 5, median: (0.35, 1.5), mean: None },
        Cell { label: "gyro 5 deg/s, 10 events", noise: NoiseConfig::gyro(5.0), events: 10, median: (0.6, 2.4), mean: None },
    ];
    let mut all_ok = true;
    let mut lines = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        let s = averaged_summary(&SceneConfig::default(), &c.noise, c.events, 10_000, 0x3000 + i as u64 * 0x10_0000);
        let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        let ok = in_range(s.median, c.median) && c.mean.is_none_or(|m| in_range(s.mean, m));
        all_ok &= ok;
        let bounds = match c.mean {
            Some(m) => format!("median in [{}, {}], mean in [{}, {}]", c.median.0, c.median.1, m.0, m.1),
            None => format!("median in [{}, {}]", c.median.0, c.median.1),
        };
        lines.push(format!("{}: {} {}; want {bounds}", c.label, fmt(&s), if ok { "ok" } else { "out of range" }));
    }
    t.verdict(3, "5-line averaged accuracy (10^4 trials per cell)", all_ok, "default scene, depth 1-5 m".into());
    for l in lines {
        info(l);
    }
    for (i, c) in cells.iter().enumerate() {
        let s = averaged_summary(&near_field(), &c.noise, c.events, 10_000, 0x3800 + i as u64 * 0x10_0000);
        info(format!("near field (depth 0.1-0.3 m) {}: {}", c.label, fmt(&s)));
    }
}

fn non_increasing(m: &[f64]) -> bool {
    m.windows(2).all(|w| w[1] <= w[0])
}

fn event_sweep(cfg: &SceneConfig, noise: &NoiseConfig, base: u64) -> Vec<f64> {
    let counts = [5, 10, 100, 1000];
    let out = run_trials(base, 1000, |seed| event_count_trial(cfg, noise, &SolverOptions::default(), &counts, seed).ok());
    (0..counts.len())
        .map(|k| {
            let mut errors = Vec::new();
            let mut failures = 0;
            for p in out.iter().flatten() {
                errors.extend_from_slice(&p[k].errors);
                failures += p[k].failures;
            }
            summarize(&errors, failures).median
        })
        .collect()
}

fn line_sweep(cfg: &SceneConfig, base: u64) -> Vec<f64> {
    let counts: Vec<usize> = (2..=10).collect();
    let cfg = SceneConfig { num_lines: 10, events_per_line: 10, ..cfg.clone() };
    let out = run_trials(base, 1000, |seed| line_count_trial(&cfg, &NoiseConfig::pixel(0.5), &SolverOptions::default(), &counts, seed).ok());
    (0..counts.len())
        .map(|k| {
            let errors: Vec<f64> = out.iter().flatten().flat_map(|p| p[k].errors.clone()).collect();
            summarize(&errors, 0).median
        })
        .collect()
}

fn sweeps(t: &mut Tally) {
    let report = |cfg: &SceneConfig, tag: &str, base: u64| -> (bool, Vec<String>) {
        let pixel = event_sweep(cfg, &NoiseConfig::pixel(0.5), base);
        let stamp = event_sweep(cfg, &NoiseConfig::timestamp(0.0005), base + 0x10_0000);
        let gyro = event_sweep(cfg, &NoiseConfig::gyro(5.0), base + 0x20_0000);
        let lines = line_sweep(cfg, base + 0x30_0000);
        let checks = [
            ("pixel N=5,10,100,1000", &pixel, non_increasing(&pixel) && pixel[0] >= 10.0 * pixel[3]),
            ("timestamp N=5,10,100,1000", &stamp, non_increasing(&stamp) && stamp[0] >= 10.0 * stamp[3]),
            ("gyro N=5,10,100,1000", &gyro, gyro[3] > 0.5),
            ("lines M=2..10", &lines, non_increasing(&lines)),
        ];
        let ok = checks.iter().all(|c| c.2);
        let text = checks
            .iter()
            .map(|(name, m, good)| {
                let v: Vec<String> = m.iter().map(|x| format!("{x:.3}")).collect();
                format!("{tag} {name}: medians [{}] deg {}", v.join(", "), if *good { "ok" } else { "violates" })
            })
            .collect();
        (ok, text)
    };
    let (ok, text) = report(&SceneConfig::default(), "default", 0x4000);
    t.verdict(4, "monotone sweeps (10x reduction to N=1000, gyro floor > 0.5 deg)", ok, "1000 trials per point".into());
    text.into_iter().for_each(info);
    let (_, text) = report(&near_field(), "near field", 0x4800);
    text.into_iter().for_each(info);
}

fn through_origin(rng: &mut impl Rng) -> Vec<BearingObservation> {
    let d = unit(rng);
    let v = unit(rng) * 0.5;
    (0..5)
        .map(|_| {
            let t_rel = rng.random_range(-0.25..0.25);
            let s = rng.random_range(0.5..3.0);
            BearingObservation::new((d * s - v * t_rel).normalize(), t_rel)
        })
        .collect()
}

fn rank_conditions(t: &mut Tally) {
    let opts = SolverOptions::default();
    let classify = |obs: &[BearingObservation]| -> RankClass {
        build_design_matrix(obs)
            .and_then(|a| check_rank(&a, opts.eps_rank, opts.eps_near))
            .map(|r| r.class)
            .unwrap_or(RankClass::Degenerate)
    };
    let flagged = run_trials(0x5000, 1000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(seed, 5).expect("scene");
        let t_shared = rng.random_range(-0.25..0.25);
        let shared: Vec<_> = p.obs.iter().map(|o| BearingObservation { t_rel: t_shared, ..*o }).collect();
        let repeated: Vec<_> = p.obs.iter().map(|o| BearingObservation { f: p.obs[0].f, ..*o }).collect();
        let origin = through_origin(&mut rng);
        [&shared, &repeated, &origin].map(|o| classify(o) == RankClass::Degenerate)
    });
    let counts: Vec<usize> = (0..3).map(|k| flagged.iter().filter(|f| f[k]).count()).collect();

    let random = run_trials(0x5800, 100_000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..=20);
        let p = line_problem(&SceneConfig::default(), n, &mut rng).expect("scene");
        let ns = solve_nullspace(&build_design_matrix(&p.obs).expect("rows")).expect("svd");
        if RankStatus::classify(ns.rank_ratio, opts.eps_rank, opts.eps_near).class != RankClass::WellPosed {
            return None;
        }
        Some(decompose_solution(&ns).map(|b| distinct(&b)).unwrap_or(false))
    });
    let well_posed = random.iter().flatten().count();
    let bad = random.iter().flatten().filter(|ok| !**ok).count();
    let ok = counts.iter().all(|&c| c == 1000) && bad == 0;
    t.verdict(
        5,
        "rank deficiency and decomposition",
        ok,
        format!(
            "degenerate flagged: shared timestamps {}/1000, repeated bearings {}/1000, through origin {}/1000; \
             {bad} of {well_posed} well-posed random inputs failed decomposition",
            counts[0], counts[1], counts[2]
        ),
    );
}

fn distinct(b: &[ManifoldEstimate; 4]) -> bool {
    (0..4).all(|i| {
        (i + 1..4).all(|j| b[i].frame.angle_to(&b[j].frame) > 1e-6 || (b[i].u.u_y - b[j].u.u_y).abs() > 1e-9)
    })
}

fn branch_label(est: &ManifoldEstimate, truth_frame: &LineFrame, truth_u: &PartialVelocity) -> Option<Branch> {
    Branch::ALL.into_iter().find(|b| {
        let (f, u) = b.apply(truth_frame, truth_u);
        est.frame.angle_to(&f) < 1e-6 && (est.u.u_y - u.u_y).abs() < 1e-6 && (est.u.u_z - u.u_z).abs() < 1e-6
    })
}

fn branch_equivalence(t: &mut Tally) {
    let worst = run_trials(0x6000, 10_000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(seed, rng.random_range(5..=20)).expect("scene");
        let frame = random_frame(&mut rng);
        let u = PartialVelocity::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let base = ManifoldEstimate::new(frame, u);
        p.obs
            .iter()
            .map(|o| {
                // S1 and S3 negate the solution vector, so residuals agree up to sign.
                let r0 = incidence_residual(&frame, &u, o).abs();
                Branch::ALL
                    .iter()
                    .map(|&b| {
                        let e = base.with_branch(b);
                        (incidence_residual(&e.frame, &e.u, o).abs() - r0).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);

    let opts = SolverOptions::default();
    let survivors = run_trials(0x6800, 10_000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(seed, rng.random_range(5..=20)).expect("scene");
        let out = solve_manifold_detailed(&p.obs, &opts).ok()?;
        let a = branch_label(&out.cheirality.best, &p.truth.frame, &p.truth.partial)?;
        let b = branch_label(&out.cheirality.alternate, &p.truth.frame, &p.truth.partial)?;
        Some((a, b))
    });
    let exact = survivors
        .iter()
        .filter(|s| matches!(s, Some((Branch::S0, Branch::S3)) | Some((Branch::S3, Branch::S0))))
        .count();
    let ok = worst < 1e-12 && exact == survivors.len();
    t.verdict(
        6,
        "sign-map invariance and cheirality",
        ok,
        format!("worst residual change {worst:.2e} over 10^4 solutions; survivors {{S0,S3}} in {exact}/{}", survivors.len()),
    );
}

fn schur(t: &mut Tally) {
    let opts = AveragingOptions::default();
    let angles = run_trials(0x7000, 10_000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=10);
        let obs: Vec<PartialVelocityObservation> = (0..m)
            .map(|_| {
                let frame = random_frame(&mut rng);
                let dir = rng.random_range(0.0..std::f64::consts::TAU);
                let mag = rng.random_range(0.1..2.0);
                PartialVelocityObservation::new(frame, PartialVelocity::new(mag * dir.cos(), mag * dir.sin()))
            })
            .collect();
        let main = solve_full_velocity(&obs, &opts).ok()?.v;
        let reference = schur_averaging_reference(&obs).ok()?;
        Some(main.cross(&reference).norm().atan2(main.dot(&reference).abs()))
    });
    let compared = angles.iter().flatten().count();
    let worst = angles.iter().flatten().fold(0.0f64, |a, b| a.max(*b));

    let parallel = run_trials(0x7800, 1000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = unit(&mut rng);
        let v = unit(&mut rng) * 0.5;
        let m = rng.random_range(2..=10);
        let obs: Vec<PartialVelocityObservation> = (0..m)
            .filter_map(|_| {
                let (frame, scale) = LineFrame::from_point_direction(&(unit(&mut rng) * rng.random_range(1.0..5.0)), &d).ok()?;
                let u = frame.rotation().transpose() * v / scale;
                Some(PartialVelocityObservation::new(frame, PartialVelocity::new(u.y, u.z)))
            })
            .collect();
        let degenerate = build_averaging_matrix(&obs, &opts)
            .map(|dm| check_parallel_degeneracy(&dm, opts.eps_parallel) == ParallelStatus::Degenerate)
            .unwrap_or(false);
        degenerate && matches!(solve_full_velocity(&obs, &opts), Err(Error::ParallelLinesDegenerate { .. }))
    });
    let flagged = parallel.iter().filter(|f| **f).count();
    let ok = compared == angles.len() && worst < 1e-8 && flagged == parallel.len();
    t.verdict(
        7,
        "averaging equivalence",
        ok,
        format!("worst angle {worst:.2e} rad over {compared}/{} inputs; parallel flagged {flagged}/{}", angles.len(), parallel.len()),
    );
}

fn optimality(t: &mut Tally) {
    let errors = run_trials(0x8000, 100_000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(seed, rng.random_range(5..=20)).ok()?;
        let ns = solve_nullspace(&build_design_matrix(&p.obs).ok()?).ok()?;
        let s0 = &decompose_solution(&ns).ok()?[0];
        let x = solution_vector(&s0.frame, &s0.u).normalize();
        Some((x - ns.x).norm().min((x + ns.x).norm()))
    });
    let done = errors.iter().flatten().count();
    let worst = errors.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
    t.verdict(
        8,
        "decomposition reproduces the nullspace vector",
        done == errors.len() && worst < 1e-12,
        format!("{done}/{} decompositions, worst |x - x_hat| {worst:.2e}", errors.len()),
    );
}

fn canonical(t: &mut Tally) {
    let cfg = SceneConfig::default();
    let curve = run_trials(0x9000, 1000, |seed| {
        let p = problem(seed, 200).ok()?;
        let trace = canonicalize_events(&ManifoldEstimate::new(p.truth.frame, p.truth.partial), &p.obs);
        Some(max_curve_deviation(&trace, &p.truth.partial))
    });
    let straight = run_trials(0x9800, 1000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = sample_scene(&SceneConfig { num_lines: 1, ..cfg.clone() }, &mut rng).ok()?;
        let line = &base.lines[0];
        // Velocity in the plane spanned by the line and its moment keeps u_z at zero.
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let v = (line.frame.e1 * a.cos() + line.frame.e2 * a.sin()) * cfg.speed;
        let scene =
            SceneGroundTruth::from_segments(base.t_s, base.window, v, base.angular_rate, &[(line.start, line.end)]).ok()?;
        let truth = &scene.lines[0];
        let events = sample_line_events(&scene, 0, 200, &cfg.intrinsics, &mut rng).ok()?;
        let obs = derotate_events(&events, &scene.angular_rate, scene.t_s, &cfg.intrinsics);
        let trace = canonicalize_events(&ManifoldEstimate::new(truth.frame, truth.partial), &obs);
        Some((truth.partial.u_z.abs(), max_line_fit_deviation(&trace)))
    });
    let curve_done = curve.iter().flatten().count();
    let curve_worst = curve.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
    let line_done = straight.iter().flatten().count();
    let (uz, line_worst) = straight.iter().flatten().fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(*x), b.max(*y)));
    let ok = curve_done == curve.len() && curve_worst < 1e-9 && line_done > 900 && uz < 1e-12 && line_worst < 1e-9;
    t.verdict(
        9,
        "canonical manifold",
        ok,
        format!(
            "curve deviation {curve_worst:.2e} over {curve_done} lines; straight-trace deviation {line_worst:.2e} over {line_done} u_z=0 lines"
        ),
    );
}

fn refinement_means(cfg: &SceneConfig, noise: &NoiseConfig, base: u64) -> ([f64; 3], usize, [usize; 3]) {
    let modes = [RefinementMode::None, RefinementMode::NonMinimalLinear, RefinementMode::NonlinearLm];
    let runs = run_trials(base, 100, |seed| {
        modes.map(|m| {
            let rc = RansacConfig { refinement_mode: m, ..RansacConfig::default() };
            pipeline_trial(cfg, noise, &rc, seed).ok().and_then(|t| t.phi)
        })
    });
    let paired: Vec<[f64; 3]> = runs.iter().filter_map(|r| Some([r[0]?, r[1]?, r[2]?])).collect();
    let mean = |k: usize| paired.iter().map(|p| p[k]).sum::<f64>() / paired.len().max(1) as f64;
    let failures = [0, 1, 2].map(|k| runs.iter().filter(|r| r[k].is_none()).count());
    ([mean(0), mean(1), mean(2)], paired.len(), failures)
}

fn jacobian_error() -> f64 {
    run_trials(0xA800, 100, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(seed, 20).expect("scene");
        let delta = Vector5::from_fn(|_, _| rng.random_range(-0.1..0.1));
        let (frame, u) = retract(&p.truth.frame, &p.truth.partial, &delta);
        let (_, jac) = residuals_and_jacobian(&frame, &u, &p.obs);
        let h = 1e-6;
        let mut numeric = DMatrix::zeros(p.obs.len(), 5);
        for k in 0..5 {
            let mut d = Vector5::zeros();
            d[k] = h;
            let (fp, up) = retract(&frame, &u, &d);
            let (fm, um) = retract(&frame, &u, &-d);
            for (i, o) in p.obs.iter().enumerate() {
                numeric[(i, k)] = (incidence_residual(&fp, &up, o) - incidence_residual(&fm, &um, o)) / (2.0 * h);
            }
        }
        let analytic = DMatrix::from_fn(p.obs.len(), 5, |i, k| jac[(i, k)]);
        (numeric - &analytic).norm() / analytic.norm()
    })
    .into_iter()
    .fold(0.0, f64::max)
}

fn refinement(t: &mut Tally) {
    let noise = NoiseConfig::pixel(0.5);
    let (m, paired, failures) = refinement_means(&SceneConfig::default(), &noise, 0xA000);
    let jac = jacobian_error();
    let ok = paired > 0 && m[1] <= m[0] && m[2] <= m[0] && jac < 1e-5;
    t.verdict(
        10,
        "refinement benefit",
        ok,
        format!(
            "default scene, 0.5 px, {paired}/100 paired scenes: mean phi none {:.3}, linear {:.3}, lm {:.3} deg \
             (failures {:?}); worst Jacobian relative error {jac:.2e}",
            m[0], m[1], m[2], failures
        ),
    );
    let (m, paired, failures) = refinement_means(&near_field(), &noise, 0xA400);
    info(format!(
        "near field, {paired}/100 paired scenes: mean phi none {:.3}, linear {:.3}, lm {:.3} deg (failures {failures:?})",
        m[0], m[1], m[2]
    ));
}

fn csv_round_trip(t: &mut Tally) {
    let mut problems = Vec::new();
    let mut rows = 0;
    for seed in 0..20u64 {
        let cfg = SceneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xB000 + seed);
        let scene = sample_scene(&cfg, &mut rng).expect("scene");
        let events: Vec<_> = generate_scene_events(&scene, 100, &cfg.intrinsics, &mut rng)
            .expect("events")
            .into_iter()
            .map(|p| quantize_to_csv_precision(&p.0))
            .collect();
        rows += events.len();
        let mut first = Vec::new();
        write_events_csv(&mut first, &events).expect("write");
        let back = read_events_csv(first.as_slice()).expect("read");
        let mut second = Vec::new();
        write_events_csv(&mut second, &back).expect("write");
        if back != events || first != second {
            problems.push(format!("event round trip differs for scene {seed}"));
        }

        let samples: Vec<GyroSample> = (0..50)
            .map(|i| GyroSample { t: format!("{:.9}", i as f64 * 0.01).parse().expect("number"), w: scene.angular_rate.0 + unit(&mut rng) * 1e-3 })
            .collect();
        let mut buf = Vec::new();
        write_gyro_csv(&mut buf, &samples).expect("write");
        if read_gyro_csv(buf.as_slice()).expect("read").samples() != samples.as_slice() {
            problems.push(format!("gyro round trip differs for scene {seed}"));
        }
    }
    let row = read_events_csv("t,x,y,p\n0.100000000,320.0000,240.0000,1\n".as_bytes()).expect("row");
    if row.len() != 1 || row[0].t != 0.1 || row[0].x != 320.0 || row[0].y != 240.0 || row[0].polarity.sign() != 1 {
        problems.push("reference row misparsed".into());
    }
    match read_events_csv("t,x,y,p\n0.1,1,2,1\n0.2,oops,2,1\n".as_bytes()) {
        Err(Error::Parse { line: 3, .. }) => {}
        other => problems.push(format!("malformed row reported as {other:?}")),
    }
    let detail = if problems.is_empty() {
        format!("{rows} events and 20 gyro tracks round-trip exactly; parse errors carry line numbers")
    } else {
        problems.join("; ")
    };
    t.verdict(11, "CSV ingestion round trip", problems.is_empty(), detail);

    // End-to-end check on ingested data, for information.
    let cfg = SceneConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB800);
    let scene = sample_scene(&cfg, &mut rng).expect("scene");
    let events: Vec<_> =
        generate_scene_events(&scene, 100, &cfg.intrinsics, &mut rng).expect("events").into_iter().map(|p| p.0).collect();
    let mut buf = Vec::new();
    write_events_csv(&mut buf, &events).expect("write");
    let back = read_events_csv(buf.as_slice()).expect("read");
    match eventail::robust::estimate_velocity(&back, &scene.angular_rate, scene.t_s, &cfg.intrinsics, &RansacConfig::default()) {
        Ok(r) => info(format!(
            "pipeline on ingested noise-free events: phi {:.2e} deg with {} lines",
            direction_error(&r.velocity.v, &scene.velocity).unwrap_or(f64::NAN),
            r.used.len()
        )),
        Err(e) => info(format!("pipeline on ingested noise-free events failed: {e}")),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut t = Tally::default();
    type Step = (&'static str, fn(&mut Tally));
    let steps: [Step; 11] = [
        ("exactness", exactness),
        ("latency", latency),
        ("table", table),
        ("sweeps", sweeps),
        ("rank conditions", rank_conditions),
        ("branch equivalence", branch_equivalence),
        ("schur", schur),
        ("optimality", optimality),
        ("canonical", canonical),
        ("refinement", refinement),
        ("csv", csv_round_trip),
    ];
    for (name, step) in steps {
        let t0 = Instant::now();
        step(&mut t);
        log_time(name, t0);
    }
    println!(
        "acceptance: {} passed, {} failed {:?} in {:.1} s",
        t.passed,
        t.failed.len(),
        t.failed,
        start.elapsed().as_secs_f64()
    );
    let strict = std::env::var("EVENTAIL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !t.failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn log_time(name: &str, t0: Instant) {
    if std::env::var_os("EVENTAIL_ACCEPTANCE_TIMING").is_some() {
        eprintln!("[{name}: {:.1} s]", t0.elapsed().as_secs_f64());
    }
}
