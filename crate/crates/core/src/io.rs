//! CSV formats for event streams and gyroscope logs.
//!
//! Events: header `t,x,y,p`; `t` in seconds with 9 decimals, pixel
//! coordinates in shortest round-trip form, polarity `-1` or `1` (`0` is read as `-1`).
//!
//! Gyro: header `t,wx,wy,wz`; seconds and camera-frame rad/s. Between samples
//! the rate is held constant from the preceding sample, and before the first
//! sample the first rate applies.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AngularRate, Event, Polarity, RotationModel, Vec3};
use crate::so3;

pub const EVENT_HEADER: [&str; 4] = ["t", "x", "y", "p"];
pub const GYRO_HEADER: [&str; 4] = ["t", "wx", "wy", "wz"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        kind => Error::Parse { line, message: format!("{kind:?}") },
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str; 4]) -> Result<bool> {
    let header = rdr.headers().map_err(csv_error)?;
    if header.is_empty() {
        return Ok(false);
    }
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != *b) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(true)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    let raw = rec.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing column `{name}`") })?;
    raw.parse().map_err(|_| Error::Parse { line, message: format!("invalid {name} `{raw}`") })
}

fn finite(v: f64, rec: &csv::StringRecord, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        Err(Error::Parse { line, message: format!("non-finite {name}") })
    }
}

/// Number of adjacent pairs whose timestamps decrease.
pub fn count_non_monotonic(events: &[Event]) -> usize {
    events.windows(2).filter(|w| w[1].t < w[0].t).count()
}

pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut rdr = reader(r);
    if !check_header(&mut rdr, &EVENT_HEADER)? {
        return Err(Error::EmptyFile);
    }
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let t = finite(field(&rec, 0, "t")?, &rec, "t")?;
        let x = finite(field(&rec, 1, "x")?, &rec, "x")?;
        let y = finite(field(&rec, 2, "y")?, &rec, "y")?;
        let polarity = match field::<i64>(&rec, 3, "p")? {
            1 => Polarity::Positive,
            0 | -1 => Polarity::Negative,
            other => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::Parse { line, message: format!("invalid polarity {other}") });
            }
        };
        events.push(Event::new(t, x, y, polarity));
    }
    let unordered = count_non_monotonic(&events);
    if unordered > 0 {
        log::warn!("{unordered} event timestamps decrease relative to their predecessor");
    }
    Ok(events)
}

pub fn write_events_csv<W: Write>(w: W, events: &[Event]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(EVENT_HEADER).map_err(csv_error)?;
    for e in events {
        wtr.write_record([
            format!("{:.9}", e.t),
            e.x.to_string(),
            e.y.to_string(),
            e.polarity.sign().to_string(),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_events_csv(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    read_events_csv(BufReader::new(File::open(path)?))
}

pub fn save_events_csv(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    write_events_csv(BufWriter::new(File::create(path)?), events)
}

/// Rounds events to the textual precision of the CSV format. Only the
/// timestamp is rounded; coordinates are written in shortest round-trip form.
pub fn quantize_to_csv_precision(e: &Event) -> Event {
    let t = format!("{:.9}", e.t).parse().unwrap_or(e.t);
    Event::new(t, e.x, e.y, e.polarity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroSample {
    pub t: f64,
    pub w: Vec3,
}

/// Piecewise-constant angular rate integrated into orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct GyroTrack {
    samples: Vec<GyroSample>,
    /// Orientation at each sample time relative to the first sample.
    orientations: Vec<Matrix3<f64>>,
}

impl GyroTrack {
    pub fn new(mut samples: Vec<GyroSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyFile);
        }
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut orientations = Vec::with_capacity(samples.len());
        let mut r = Matrix3::identity();
        orientations.push(r);
        for pair in samples.windows(2) {
            r *= so3::exp(&(pair[0].w * (pair[1].t - pair[0].t)));
            orientations.push(r);
        }
        Ok(Self { samples, orientations })
    }

    pub fn constant(w: &AngularRate) -> Self {
        Self { samples: vec![GyroSample { t: 0.0, w: w.0 }], orientations: vec![Matrix3::identity()] }
    }

    pub fn samples(&self) -> &[GyroSample] {
        &self.samples
    }

    /// The held rate at time `t`.
    pub fn rate_at(&self, t: f64) -> AngularRate {
        AngularRate(self.samples[self.segment(t)].w)
    }

    fn segment(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    /// Orientation at `t` relative to the first sample time.
    pub fn orientation(&self, t: f64) -> Matrix3<f64> {
        let k = self.segment(t);
        let s = &self.samples[k];
        self.orientations[k] * so3::exp(&(s.w * (t - s.t)))
    }

    /// Time-weighted mean rate over `[a, b]`.
    pub fn mean_rate(&self, a: f64, b: f64) -> AngularRate {
        if b <= a {
            return self.rate_at(a);
        }
        AngularRate(so3::log(&(self.orientation(a).transpose() * self.orientation(b))) / (b - a))
    }
}

impl RotationModel for GyroTrack {
    fn rotation(&self, t_s: f64, t: f64) -> Matrix3<f64> {
        self.orientation(t_s).transpose() * self.orientation(t)
    }
}

pub fn read_gyro_csv<R: Read>(r: R) -> Result<GyroTrack> {
    let mut rdr = reader(r);
    if !check_header(&mut rdr, &GYRO_HEADER)? {
        return Err(Error::EmptyFile);
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let t = finite(field(&rec, 0, "t")?, &rec, "t")?;
        let wx = finite(field(&rec, 1, "wx")?, &rec, "wx")?;
        let wy = finite(field(&rec, 2, "wy")?, &rec, "wy")?;
        let wz = finite(field(&rec, 3, "wz")?, &rec, "wz")?;
        samples.push(GyroSample { t, w: Vec3::new(wx, wy, wz) });
    }
    GyroTrack::new(samples)
}

/// Rates are written in shortest round-trip form so a constant-rate log
/// reproduces the original rotation exactly.
pub fn write_gyro_csv<W: Write>(w: W, samples: &[GyroSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(GYRO_HEADER).map_err(csv_error)?;
    for s in samples {
        wtr.write_record([format!("{:.9}", s.t), s.w.x.to_string(), s.w.y.to_string(), s.w.z.to_string()])
            .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_gyro_csv(path: impl AsRef<Path>) -> Result<GyroTrack> {
    read_gyro_csv(BufReader::new(File::open(path)?))
}

pub fn save_gyro_csv(path: impl AsRef<Path>, samples: &[GyroSample]) -> Result<()> {
    write_gyro_csv(BufWriter::new(File::create(path)?), samples)
}
