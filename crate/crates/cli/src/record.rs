//! Serialized outputs. Every file carries `schema_version`.

use eventail::eval::{AveragedTrial, LatencyReport, PipelineTrial, Summary};
use eventail::robust::StageTimings;
use eventail::simulator::{NoiseConfig, SceneGroundTruth};
use eventail::solver::ManifoldEstimate;
use eventail::CameraIntrinsics;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// One trial (or one single-file estimate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub kind: String,
    pub trial: u64,
    pub seed: u64,
    pub n_events: usize,
    pub n_lines: usize,
    pub pixel_noise: f64,
    pub timestamp_sigma: f64,
    pub gyro_noise: f64,
    /// Velocity (or, for event sweeps, partial velocity) error in degrees.
    pub phi_deg: Option<f64>,
    pub ok: bool,
    pub failed_lines: usize,
    pub near_degenerate_lines: usize,
    pub cheirality_ambiguous_lines: usize,
    pub sign_consistent: bool,
    pub sign_ambiguous: bool,
    pub simulation_us: Option<f64>,
    pub derotation_us: Option<f64>,
    pub sampling_us: Option<f64>,
    pub solve_us: Option<f64>,
    pub refinement_us: Option<f64>,
    pub averaging_us: Option<f64>,
    pub total_us: Option<f64>,
}

impl ResultRecord {
    pub fn new(kind: &str, trial: u64, seed: u64, noise: &NoiseConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            trial,
            seed,
            n_events: 0,
            n_lines: 0,
            pixel_noise: noise.pixel_noise,
            timestamp_sigma: noise.timestamp_sigma,
            gyro_noise: noise.gyro_noise,
            phi_deg: None,
            ok: false,
            failed_lines: 0,
            near_degenerate_lines: 0,
            cheirality_ambiguous_lines: 0,
            sign_consistent: false,
            sign_ambiguous: false,
            simulation_us: None,
            derotation_us: None,
            sampling_us: None,
            solve_us: None,
            refinement_us: None,
            averaging_us: None,
            total_us: None,
        }
    }

    pub fn from_averaged(trial: u64, t: &AveragedTrial, noise: &NoiseConfig, timing: bool) -> Self {
        let mut r = Self::new("averaged", trial, t.seed, noise);
        r.n_events = t.n_events;
        r.n_lines = t.n_lines;
        r.phi_deg = t.phi;
        r.ok = t.phi.is_some();
        r.failed_lines = t.failed_lines;
        r.near_degenerate_lines = t.near_degenerate_lines;
        r.cheirality_ambiguous_lines = t.cheirality_ambiguous_lines;
        r.sign_consistent = t.sign_consistent;
        r.sign_ambiguous = t.sign_ambiguous;
        if timing {
            r.simulation_us = Some(t.timings.simulation_us);
            r.solve_us = Some(t.timings.solve_us);
            r.averaging_us = Some(t.timings.averaging_us);
            r.total_us = Some(t.timings.simulation_us + t.timings.solve_us + t.timings.averaging_us);
        }
        r
    }

    pub fn from_pipeline(trial: u64, t: &PipelineTrial, noise: &NoiseConfig, timing: bool) -> Self {
        let mut r = Self::new("pipeline", trial, t.seed, noise);
        r.n_events = t.n_events;
        r.n_lines = t.used_lines;
        r.phi_deg = t.phi;
        r.ok = t.phi.is_some();
        r.sign_consistent = t.sign_consistent;
        if timing {
            r.set_stage_timings(&t.timings);
        }
        r
    }

    pub fn set_stage_timings(&mut self, t: &StageTimings) {
        self.derotation_us = Some(t.derotation_us);
        self.sampling_us = Some(t.sampling_us);
        self.refinement_us = Some(t.refinement_us);
        self.averaging_us = Some(t.averaging_us);
        self.total_us = Some(t.total_us);
    }
}

/// Summary row per sweep grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub schema_version: u32,
    pub kind: String,
    pub count: usize,
    pub pixel_noise: f64,
    pub timestamp_sigma: f64,
    pub gyro_noise: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_deg: f64,
    pub median_deg: f64,
}

impl SummaryRecord {
    pub fn new(kind: &str, count: usize, noise: &NoiseConfig, s: &Summary) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            count,
            pixel_noise: noise.pixel_noise,
            timestamp_sigma: noise.timestamp_sigma,
            gyro_noise: noise.gyro_noise,
            trials: s.count + s.failures,
            failures: s.failures,
            mean_deg: s.mean,
            median_deg: s.median,
        }
    }
}

/// Written next to a simulated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub schema_version: u32,
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub noise: NoiseConfig,
    pub scene: SceneGroundTruth,
    /// Rate written to the gyro file, including any simulated bias.
    pub measured_rate: [f64; 3],
    /// Generating line of each event, in file order.
    pub event_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    #[serde(flatten)]
    pub result: ResultRecord,
    pub reference_time: f64,
    pub velocity: Option<[f64; 3]>,
    pub used: Vec<usize>,
    pub dropped: Vec<usize>,
    pub manifolds: Vec<ManifoldEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub schema_version: u32,
    pub seed: u64,
    pub problems: usize,
    #[serde(flatten)]
    pub report: LatencyReport,
}
