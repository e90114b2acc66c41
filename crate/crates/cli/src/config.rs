//! Flat run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eventail::robust::{RansacConfig, RefinementMode};
use eventail::simulator::{NoiseConfig, SceneConfig};
use eventail::CameraIntrinsics;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Per-line error against the number of events.
    Events,
    /// Averaged error against the number of lines.
    Lines,
    /// Fixed lines and events per line, averaged error per trial.
    Averaged,
    /// Full robust pipeline on mixed event streams.
    Pipeline,
}

/// Every key is optional; absent keys take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub speed: f64,
    pub angular_speed: f64,
    pub window: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    pub segment_length: f64,
    pub events_per_line: usize,
    pub num_lines: usize,

    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,

    pub pixel_noise: f64,
    pub timestamp_sigma: f64,
    pub gyro_noise: f64,
    pub quantize: bool,

    pub time_scale: f64,
    pub radius: f64,
    pub inlier_threshold: f64,
    pub max_iterations_per_manifold: usize,
    pub max_manifolds: usize,
    pub refinement_mode: RefinementMode,
    pub refinement_subset: usize,
    pub refinement_repeats: usize,
    pub min_inliers: usize,
    pub final_polish: bool,

    pub events_path: Option<PathBuf>,
    pub gyro_path: Option<PathBuf>,
    pub truth_path: Option<PathBuf>,
    /// Reference time for estimation; defaults to the truth file's, then to
    /// the middle of the event time span.
    pub reference_time: Option<f64>,
    pub out_dir: PathBuf,

    pub sweep: SweepKind,
    pub trials: usize,
    pub event_counts: Vec<usize>,
    pub line_counts: Vec<usize>,
    /// Noise grid: one point per level, each with a single noise source.
    /// With all three empty the sweep uses the mixed noise given above.
    pub pixel_levels: Vec<f64>,
    pub timestamp_levels: Vec<f64>,
    pub gyro_levels: Vec<f64>,

    pub bench_solves: usize,
    pub bench_events: usize,
    pub bench_problems: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scene = SceneConfig::default();
        let k = scene.intrinsics;
        let noise = NoiseConfig::default();
        let r = RansacConfig::default();
        Self {
            seed: 0,
            speed: scene.speed,
            angular_speed: scene.angular_speed,
            window: scene.window,
            depth_min: scene.depth_min,
            depth_max: scene.depth_max,
            segment_length: scene.segment_length,
            events_per_line: scene.events_per_line,
            num_lines: scene.num_lines,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            pixel_noise: noise.pixel_noise,
            timestamp_sigma: noise.timestamp_sigma,
            gyro_noise: noise.gyro_noise,
            quantize: noise.quantize,
            time_scale: r.time_scale,
            radius: r.radius,
            inlier_threshold: r.inlier_threshold,
            max_iterations_per_manifold: r.max_iterations_per_manifold,
            max_manifolds: r.max_manifolds,
            refinement_mode: r.refinement_mode,
            refinement_subset: r.refinement_subset,
            refinement_repeats: r.refinement_repeats,
            min_inliers: r.min_inliers,
            final_polish: r.final_polish,
            events_path: None,
            gyro_path: None,
            truth_path: None,
            reference_time: None,
            out_dir: PathBuf::from("out"),
            sweep: SweepKind::Events,
            trials: 1000,
            event_counts: vec![5, 10, 20, 50, 100, 200, 500, 1000],
            line_counts: (2..=10).collect(),
            pixel_levels: vec![NoiseConfig::REFERENCE_PIXEL],
            timestamp_levels: vec![NoiseConfig::REFERENCE_TIMESTAMP],
            gyro_levels: vec![NoiseConfig::REFERENCE_GYRO],
            bench_solves: 100_000,
            bench_events: 5,
            bench_problems: 1000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parse config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        Ok(CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?)
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        let cfg = SceneConfig {
            speed: self.speed,
            angular_speed: self.angular_speed,
            window: self.window,
            intrinsics: self.intrinsics()?,
            depth_min: self.depth_min,
            depth_max: self.depth_max,
            segment_length: self.segment_length,
            events_per_line: self.events_per_line,
            num_lines: self.num_lines,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise(&self) -> Result<NoiseConfig> {
        let n = NoiseConfig {
            pixel_noise: self.pixel_noise,
            timestamp_sigma: self.timestamp_sigma,
            gyro_noise: self.gyro_noise,
            quantize: self.quantize,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn ransac(&self) -> Result<RansacConfig> {
        let r = RansacConfig {
            time_scale: self.time_scale,
            radius: self.radius,
            inlier_threshold: self.inlier_threshold,
            max_iterations_per_manifold: self.max_iterations_per_manifold,
            max_manifolds: self.max_manifolds,
            refinement_mode: self.refinement_mode,
            refinement_subset: self.refinement_subset,
            refinement_repeats: self.refinement_repeats,
            min_inliers: self.min_inliers,
            final_polish: self.final_polish,
            seed: self.seed,
        };
        r.validate()?;
        Ok(r)
    }

    /// Sweep grid points in output order.
    pub fn noise_grid(&self) -> Result<Vec<NoiseConfig>> {
        let quantize = self.quantize;
        let mut grid: Vec<NoiseConfig> = Vec::new();
        grid.extend(self.pixel_levels.iter().map(|&v| NoiseConfig { quantize, ..NoiseConfig::pixel(v) }));
        grid.extend(self.timestamp_levels.iter().map(|&v| NoiseConfig { quantize, ..NoiseConfig::timestamp(v) }));
        grid.extend(self.gyro_levels.iter().map(|&v| NoiseConfig { quantize, ..NoiseConfig::gyro(v) }));
        if grid.is_empty() {
            grid.push(self.noise()?);
        }
        for n in &grid {
            n.validate()?;
        }
        Ok(grid)
    }
}
