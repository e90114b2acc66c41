//! Synthetic line scenes, event generation and noise models.
//!
//! The camera moves with constant linear velocity `v` and angular rate `w`
//! over a window centered at `t_s`: at relative time `t'` it sits at `t' v`
//! with orientation `exp([w]x t')`. Lines are finite 3D segments fixed in the
//! reference frame. Events are drawn uniformly in time and uniformly along
//! the segment, then projected through the camera at their timestamp.
//!
//! All randomness flows through a caller-provided RNG; the crate uses
//! [`ChaCha8Rng`](rand_chacha::ChaCha8Rng) everywhere so seeded runs are
//! reproducible across platforms.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitCircle, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    AngularRate, Branch, CameraIntrinsics, Event, LineFrame, PartialVelocity, Polarity, Vec3,
};

/// Line re-sampling attempts before giving up.
const LINE_ATTEMPTS: usize = 100;
/// Minimum in-view fraction of the segment at every probe time.
const MIN_VISIBLE_FRACTION: f64 = 0.8;
const VISIBILITY_SAMPLES: usize = 21;
const VISIBILITY_TIMES: usize = 5;
/// Minimum image sweep of a line over the window, in pixels. Static edges
/// fire no events.
const MIN_SWEEP_PIXELS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Linear speed in m/s.
    pub speed: f64,
    /// Angular speed in deg/s.
    pub angular_speed: f64,
    /// Window length in seconds.
    pub window: f64,
    pub intrinsics: CameraIntrinsics,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Segment length in meters.
    pub segment_length: f64,
    pub events_per_line: usize,
    pub num_lines: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            speed: 0.5,
            angular_speed: 15.0,
            window: 0.5,
            intrinsics: CameraIntrinsics::default(),
            depth_min: 1.0,
            depth_max: 5.0,
            segment_length: 2.0,
            events_per_line: 100,
            num_lines: 5,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("speed", self.speed),
            ("angular_speed", self.angular_speed),
            ("window", self.window),
            ("depth_min", self.depth_min),
            ("segment_length", self.segment_length),
        ];
        for (name, value) in positive {
            // Zero motion is allowed for speeds so static-camera scenes can be built.
            let ok = if name.ends_with("speed") { value >= 0.0 } else { value > 0.0 };
            if !ok || !value.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.depth_min >= self.depth_max {
            return Err(Error::InvalidConfig(format!(
                "depth range [{}, {}] is empty",
                self.depth_min, self.depth_max
            )));
        }
        if self.events_per_line == 0 || self.num_lines == 0 {
            return Err(Error::InvalidConfig("events_per_line and num_lines must be positive".into()));
        }
        self.intrinsics.validate()
    }

    /// Reference time; the window spans `[0, window]`.
    pub fn reference_time(&self) -> f64 {
        0.5 * self.window
    }
}

/// Noise magnitudes; each source can be zeroed independently.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Pixel offset magnitude in px (random direction per event).
    pub pixel_noise: f64,
    /// Standard deviation of the timestamp jitter in seconds.
    pub timestamp_sigma: f64,
    /// Gyro bias magnitude in deg/s (random direction, one draw per trial).
    pub gyro_noise: f64,
    /// Round the perturbed pixel coordinates to the integer grid.
    pub quantize: bool,
}

impl NoiseConfig {
    pub const REFERENCE_PIXEL: f64 = 0.5;
    pub const REFERENCE_TIMESTAMP: f64 = 0.0005;
    pub const REFERENCE_GYRO: f64 = 5.0;

    pub fn none() -> Self {
        Self::default()
    }

    pub fn pixel(px: f64) -> Self {
        Self { pixel_noise: px, ..Self::default() }
    }

    pub fn timestamp(sigma: f64) -> Self {
        Self { timestamp_sigma: sigma, ..Self::default() }
    }

    pub fn gyro(deg_per_s: f64) -> Self {
        Self { gyro_noise: deg_per_s, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pixel_noise", self.pixel_noise),
            ("timestamp_sigma", self.timestamp_sigma),
            ("gyro_noise", self.gyro_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.pixel_noise == 0.0 && self.timestamp_sigma == 0.0 && self.gyro_noise == 0.0 && !self.quantize
    }
}

/// Ground truth for one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTruth {
    pub start: Vec3,
    pub end: Vec3,
    /// Canonical frame, oriented so that `partial.u_y >= 0`.
    pub frame: LineFrame,
    /// Closest-point depth in meters.
    pub scale: f64,
    pub partial: PartialVelocity,
}

impl LineTruth {
    /// Builds the truth record of a segment seen by a camera with velocity `v`.
    pub fn new(start: Vec3, end: Vec3, v: &Vec3) -> Result<Self> {
        let (frame, scale) = LineFrame::from_point_direction(&start, &(end - start))?;
        let u = frame.rotation().transpose() * v / scale;
        let mut partial = PartialVelocity::new(u.y, u.z);
        let mut frame = frame;
        if partial.u_y < 0.0 {
            (frame, partial) = Branch::S3.apply(&frame, &partial);
        }
        Ok(Self { start, end, frame, scale, partial })
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        self.start + (self.end - self.start) * s
    }

    /// `H v`, the camera velocity with its along-line component removed.
    pub fn projected_velocity(&self, v: &Vec3) -> Vec3 {
        v - self.frame.e1 * self.frame.e1.dot(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGroundTruth {
    pub t_s: f64,
    pub window: f64,
    /// Linear velocity in m/s.
    pub velocity: Vec3,
    pub angular_rate: AngularRate,
    pub lines: Vec<LineTruth>,
}

impl SceneGroundTruth {
    /// Assembles a scene from explicit segments.
    pub fn from_segments(
        t_s: f64,
        window: f64,
        velocity: Vec3,
        angular_rate: AngularRate,
        segments: &[(Vec3, Vec3)],
    ) -> Result<Self> {
        let lines = segments
            .iter()
            .map(|(a, b)| LineTruth::new(*a, *b, &velocity))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { t_s, window, velocity, angular_rate, lines })
    }

    /// Camera-frame coordinates of a reference-frame point at relative time `t_rel`.
    pub fn to_camera(&self, p: &Vec3, t_rel: f64) -> Vec3 {
        let r = self.angular_rate.rotation_at(t_rel);
        r.transpose() * (p - self.velocity * t_rel)
    }

    pub fn project(&self, p: &Vec3, t_rel: f64, k: &CameraIntrinsics) -> Option<(f64, f64)> {
        let pc = self.to_camera(p, t_rel);
        k.project(&pc).filter(|&(x, y)| k.contains(x, y))
    }

    fn visible_fraction(&self, a: &Vec3, b: &Vec3, t_rel: f64, k: &CameraIntrinsics) -> f64 {
        let visible = (0..VISIBILITY_SAMPLES)
            .filter(|&i| {
                let s = i as f64 / (VISIBILITY_SAMPLES - 1) as f64;
                self.project(&(a + (b - a) * s), t_rel, k).is_some()
            })
            .count();
        visible as f64 / VISIBILITY_SAMPLES as f64
    }
}

fn unit_sphere(rng: &mut impl Rng) -> Vec3 {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(x, y, z)
}

/// Samples velocities and line segments.
pub fn sample_scene(cfg: &SceneConfig, rng: &mut impl Rng) -> Result<SceneGroundTruth> {
    cfg.validate()?;
    let velocity = unit_sphere(rng) * cfg.speed;
    let angular_rate = AngularRate(unit_sphere(rng) * cfg.angular_speed.to_radians());
    let mut scene = SceneGroundTruth {
        t_s: cfg.reference_time(),
        window: cfg.window,
        velocity,
        angular_rate,
        lines: Vec::with_capacity(cfg.num_lines),
    };
    for _ in 0..cfg.num_lines {
        let line = sample_line(&scene, cfg, rng)?;
        scene.lines.push(line);
    }
    Ok(scene)
}

fn sample_line(scene: &SceneGroundTruth, cfg: &SceneConfig, rng: &mut impl Rng) -> Result<LineTruth> {
    let k = &cfg.intrinsics;
    let half = 0.5 * cfg.window;
    for _ in 0..LINE_ATTEMPTS {
        let px = rng.random_range(0.0..f64::from(k.width));
        let py = rng.random_range(0.0..f64::from(k.height));
        let depth = rng.random_range(cfg.depth_min..cfg.depth_max);
        let mid = Vec3::new((px - k.cx) / k.fx * depth, (py - k.cy) / k.fy * depth, depth);
        let dir = unit_sphere(rng);
        let a = mid - dir * (0.5 * cfg.segment_length);
        let b = mid + dir * (0.5 * cfg.segment_length);

        let in_view = (0..VISIBILITY_TIMES).all(|i| {
            let t = -half + 2.0 * half * i as f64 / (VISIBILITY_TIMES - 1) as f64;
            scene.visible_fraction(&a, &b, t, k) >= MIN_VISIBLE_FRACTION
        });
        if !in_view {
            continue;
        }
        match LineTruth::new(a, b, &scene.velocity) {
            Ok(line) if line.partial.u_y * cfg.window * k.fx.min(k.fy) >= MIN_SWEEP_PIXELS => return Ok(line),
            _ => continue,
        }
    }
    Err(Error::SamplingExhausted { what: "line within field of view", attempts: LINE_ATTEMPTS })
}

/// Draws `n` events of one line in sampling order (not time-sorted).
pub fn sample_line_events(
    scene: &SceneGroundTruth,
    line_index: usize,
    n: usize,
    k: &CameraIntrinsics,
    rng: &mut impl Rng,
) -> Result<Vec<Event>> {
    let line = scene
        .lines
        .get(line_index)
        .ok_or_else(|| Error::InvalidConfig(format!("line index {line_index} out of range")))?;
    if n == 0 {
        return Err(Error::InvalidConfig("event count must be at least 1".into()));
    }
    let half = 0.5 * scene.window;
    let max_attempts = 100 * n;
    let mut events = Vec::with_capacity(n);
    let mut attempts = 0;
    while events.len() < n {
        if attempts >= max_attempts {
            return Err(Error::SamplingExhausted { what: "events inside the frame", attempts });
        }
        attempts += 1;
        let t_rel = rng.random_range(-half..=half);
        let s = rng.random_range(0.0..=1.0);
        let polarity = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        if let Some((x, y)) = scene.project(&line.point_at(s), t_rel, k) {
            events.push(Event::new(scene.t_s + t_rel, x, y, polarity));
        }
    }
    Ok(events)
}

/// Draws `n` events of one line, sorted by timestamp.
pub fn generate_events(
    scene: &SceneGroundTruth,
    line_index: usize,
    n: usize,
    k: &CameraIntrinsics,
    rng: &mut impl Rng,
) -> Result<Vec<Event>> {
    let mut events = sample_line_events(scene, line_index, n, k, rng)?;
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(events)
}

/// Events of every line with their line labels, merged and time-sorted.
pub fn generate_scene_events(
    scene: &SceneGroundTruth,
    n_per_line: usize,
    k: &CameraIntrinsics,
    rng: &mut impl Rng,
) -> Result<Vec<(Event, usize)>> {
    let mut all = Vec::with_capacity(n_per_line * scene.lines.len());
    for i in 0..scene.lines.len() {
        all.extend(sample_line_events(scene, i, n_per_line, k, rng)?.into_iter().map(|e| (e, i)));
    }
    all.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    Ok(all)
}

/// Perturbs events and the angular rate.
///
/// Pixel noise has fixed magnitude and uniformly random direction per event,
/// timestamp jitter is Gaussian, and the gyro offset is a single vector of
/// fixed magnitude shared by the whole trial.
pub fn apply_noise(
    events: &[Event],
    w_true: &AngularRate,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
) -> (Vec<Event>, AngularRate) {
    let jitter = Normal::new(0.0, noise.timestamp_sigma).ok();
    let noisy = events
        .iter()
        .map(|e| {
            let mut out = *e;
            if noise.pixel_noise > 0.0 {
                let [dx, dy]: [f64; 2] = UnitCircle.sample(rng);
                out.x += noise.pixel_noise * dx;
                out.y += noise.pixel_noise * dy;
            }
            if noise.timestamp_sigma > 0.0 {
                if let Some(n) = &jitter {
                    out.t += n.sample(rng);
                }
            }
            if noise.quantize {
                out.x = out.x.round();
                out.y = out.y.round();
            }
            out
        })
        .collect();
    let w = if noise.gyro_noise > 0.0 {
        AngularRate(w_true.0 + unit_sphere(rng) * noise.gyro_noise.to_radians())
    } else {
        *w_true
    };
    (noisy, w)
}

/// Angle in degrees between two vectors; anti-parallel scores 180.
pub fn direction_error(v_est: &Vec3, v_true: &Vec3) -> Result<f64> {
    let (a, b) = (v_est.norm(), v_true.norm());
    if a == 0.0 || b == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Same angle as acos of the normalized dot product, without its loss of
    // precision near 0 and 180 degrees.
    let (x, y) = (v_est / a, v_true / b);
    Ok(x.cross(&y).norm().atan2(x.dot(&y)).to_degrees())
}

/// Angle in degrees between the estimated projected velocity `R_l u_l` and
/// the true projected velocity `H v`.
pub fn partial_direction_error(
    frame: &LineFrame,
    u: &PartialVelocity,
    truth: &LineTruth,
    v_true: &Vec3,
) -> Result<f64> {
    let truth_proj = truth.projected_velocity(v_true);
    if truth_proj.norm() <= 1e-12 * v_true.norm().max(1e-300) {
        return Err(Error::ProjectionDegenerate);
    }
    direction_error(&u.projected(frame), &truth_proj)
}

/// Indices `0..n` in a random order.
pub fn shuffled_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
