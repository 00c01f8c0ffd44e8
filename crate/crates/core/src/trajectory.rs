//! Road-user tracks: raw observations, uniform resampling, smoothing and
//! footprint construction.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Polygon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadUserClass {
    Pedestrian,
    Car,
    Bicycle,
}

impl RoadUserClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RoadUserClass::Pedestrian => "pedestrian",
            RoadUserClass::Car => "car",
            RoadUserClass::Bicycle => "bicycle",
        }
    }

    pub fn is_vehicle(self) -> bool {
        !matches!(self, RoadUserClass::Pedestrian)
    }
}

impl fmt::Display for RoadUserClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RoadUserClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pedestrian" => Ok(RoadUserClass::Pedestrian),
            "car" => Ok(RoadUserClass::Car),
            "bicycle" => Ok(RoadUserClass::Bicycle),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

/// One observation as it appears in the interchange files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub heading: Option<f64>,
}

impl RawSample {
    pub fn at(t: f64, x: f64, y: f64) -> Self {
        RawSample {
            t,
            x,
            y,
            length: None,
            width: None,
            heading: None,
        }
    }

    pub fn with_box(mut self, length: f64, width: f64, heading: f64) -> Self {
        self.length = Some(length);
        self.width = Some(width);
        self.heading = Some(heading);
        self
    }
}

/// All observations of one road user, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    pub track_id: String,
    pub class: RoadUserClass,
    pub samples: Vec<RawSample>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FootprintError {
    #[error("vehicle footprint needs {0}")]
    MissingVehicleField(&'static str),
    #[error("pedestrian radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("footprint dimensions must be positive (length {length}, width {width})")]
    InvalidDimensions { length: f64, width: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResampleError {
    #[error("resample period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error("smoothing window {window} s is shorter than the period {period} s")]
    InvalidWindow { window: f64, period: f64 },
    #[error("track {0} has fewer than 2 samples")]
    TooFewSamples(String),
    #[error("track {track_id} spans {duration} s, shorter than the smoothing window {window} s")]
    TooShort {
        track_id: String,
        duration: f64,
        window: f64,
    },
    #[error("track {track_id} at t = {t}: {source}")]
    Footprint {
        track_id: String,
        t: f64,
        #[source]
        source: FootprintError,
    },
}

/// Vehicles become an oriented `length x width` rectangle; pedestrians a
/// regular octagon inscribed in a circle of `ped_radius`, with one vertex
/// pointing along `heading` (0 when absent).
pub fn build_footprint(
    class: RoadUserClass,
    x: f64,
    y: f64,
    heading: Option<f64>,
    length: Option<f64>,
    width: Option<f64>,
    ped_radius: f64,
) -> Result<Polygon, FootprintError> {
    let vertices = match class {
        RoadUserClass::Pedestrian => {
            if !(ped_radius > 0.0) {
                return Err(FootprintError::InvalidRadius(ped_radius));
            }
            (0..8)
                .map(|k| {
                    let a = heading.unwrap_or(0.0) + k as f64 * FRAC_PI_4;
                    Point::new(x + ped_radius * a.cos(), y + ped_radius * a.sin())
                })
                .collect()
        }
        RoadUserClass::Car | RoadUserClass::Bicycle => {
            let heading = heading.ok_or(FootprintError::MissingVehicleField("heading"))?;
            let length = length.ok_or(FootprintError::MissingVehicleField("length"))?;
            let width = width.ok_or(FootprintError::MissingVehicleField("width"))?;
            if !(length > 0.0 && width > 0.0) {
                return Err(FootprintError::InvalidDimensions { length, width });
            }
            let (s, c) = heading.sin_cos();
            let (hl, hw) = (0.5 * length, 0.5 * width);
            [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
                .into_iter()
                .map(|(u, v)| Point::new(x + u * c - v * s, y + u * s + v * c))
                .collect()
        }
    };
    Ok(Polygon::from_vertices_unchecked(vertices).into_ccw())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleParams {
    pub period: f64,
    pub smooth_window: f64,
    pub ped_radius: f64,
}

impl Default for ResampleParams {
    fn default() -> Self {
        ResampleParams {
            period: 0.04,
            smooth_window: 0.52,
            ped_radius: 0.3,
        }
    }
}

impl ResampleParams {
    /// Moving-average width in samples: `round(window / period)` forced odd.
    pub fn window_samples(&self) -> usize {
        let w = (self.smooth_window / self.period).round().max(1.0) as usize;
        if w.is_multiple_of(2) {
            w + 1
        } else {
            w
        }
    }
}

/// A track on a uniform time grid with derived kinematics.
///
/// `positions` are the linearly interpolated observations and carry the
/// footprints; `smoothed` are their moving averages, from which velocity,
/// speed and acceleration are differenced.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub track_id: String,
    pub class: RoadUserClass,
    pub period: f64,
    pub smooth_half_width: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Point>,
    pub headings: Vec<Option<f64>>,
    pub footprints: Vec<Polygon>,
    pub smoothed: Vec<Point>,
    pub velocity: Vec<(f64, f64)>,
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Scene entry time.
    pub fn t_s(&self) -> f64 {
        self.times[0]
    }

    /// Scene exit time.
    pub fn t_e(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of the sample closest to `t`, clamped to the track.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t_s()) / self.period).round();
        k.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    /// Index range of samples whose time lies in `[t0, t1]`.
    pub fn index_range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let tol = 1e-9 * self.period.max(1.0);
        let start = self.times.partition_point(|&t| t < t0 - tol);
        let end = self.times.partition_point(|&t| t <= t1 + tol);
        start..end.max(start)
    }

    /// Linear interpolation of a per-sample series at time `t`.
    pub fn interpolate(&self, series: &[f64], t: f64) -> f64 {
        let u = ((t - self.t_s()) / self.period).clamp(0.0, (self.len() - 1) as f64);
        let k = (u.floor() as usize).min(self.len() - 1);
        if k + 1 >= self.len() {
            return series[k];
        }
        let f = u - k as f64;
        series[k] * (1.0 - f) + series[k + 1] * f
    }
}

fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut prev: Option<f64> = None;
    for &a in angles {
        let v = match prev {
            None => a,
            Some(p) => {
                let mut d = a - p;
                d -= (2.0 * PI) * ((d + PI) / (2.0 * PI)).floor();
                p + d
            }
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

fn wrap_angle(a: f64) -> f64 {
    let w = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Symmetric moving average; near the ends the half-width shrinks so the
/// window stays centred.
pub fn moving_average(values: &[f64], half_width: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    (0..n)
        .map(|k| {
            let h = half_width.min(k).min(n - 1 - k);
            let (lo, hi) = (k - h, k + h + 1);
            // Direct summation for short windows avoids prefix-sum cancellation.
            if hi - lo <= 64 {
                values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            } else {
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            }
        })
        .collect()
}

/// Centred finite difference, one-sided at the ends.
pub fn central_difference(values: &[f64], period: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (values[1] - values[0]) / period
            } else if k == n - 1 {
                (values[n - 1] - values[n - 2]) / period
            } else {
                (values[k + 1] - values[k - 1]) / (2.0 * period)
            }
        })
        .collect()
}

fn lerp_opt(a: Option<f64>, b: Option<f64>, f: f64) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a + (b - a) * f),
        (Some(v), None) | (None, Some(v)) => Some(v),
        (None, None) => None,
    }
}

/// Puts a raw track on the grid `t_s, t_s + period, ...` and derives its
/// kinematics.
pub fn resample_and_smooth(raw: &RawTrack, params: &ResampleParams) -> Result<Trajectory, ResampleError> {
    let period = params.period;
    if !(period > 0.0) || !period.is_finite() {
        return Err(ResampleError::InvalidPeriod(period));
    }
    if !(params.smooth_window >= period) {
        return Err(ResampleError::InvalidWindow {
            window: params.smooth_window,
            period,
        });
    }
    let samples = &raw.samples;
    if samples.len() < 2 {
        return Err(ResampleError::TooFewSamples(raw.track_id.clone()));
    }
    let t_s = samples[0].t;
    let duration = samples[samples.len() - 1].t - t_s;
    if duration < params.smooth_window {
        return Err(ResampleError::TooShort {
            track_id: raw.track_id.clone(),
            duration,
            window: params.smooth_window,
        });
    }

    // Pedestrian octagons follow the overall walking direction so the
    // footprint does not depend on the orientation of the coordinate frame.
    let (first, last) = (&samples[0], &samples[samples.len() - 1]);
    let walk_heading = {
        let (dx, dy) = (last.x - first.x, last.y - first.y);
        if dx == 0.0 && dy == 0.0 {
            0.0
        } else {
            dy.atan2(dx)
        }
    };
    let raw_headings: Vec<f64> = samples.iter().map(|s| s.heading.unwrap_or(0.0)).collect();
    let unwrapped = unwrap_angles(&raw_headings);

    let steps = (duration / period + 1e-9).floor() as usize;
    let n = steps + 1;
    let mut times = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut headings = Vec::with_capacity(n);
    let mut footprints = Vec::with_capacity(n);
    let mut j = 0usize;
    for k in 0..n {
        let t = t_s + k as f64 * period;
        while j + 2 < samples.len() && samples[j + 1].t <= t {
            j += 1;
        }
        let (a, b) = (&samples[j], &samples[j + 1]);
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let p = Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f);
        let heading = match (a.heading, b.heading) {
            (Some(_), Some(_)) => Some(wrap_angle(unwrapped[j] + (unwrapped[j + 1] - unwrapped[j]) * f)),
            (h, None) | (None, h) => h,
        };
        let length = lerp_opt(a.length, b.length, f);
        let width = lerp_opt(a.width, b.width, f);
        let fp_heading = if raw.class == RoadUserClass::Pedestrian {
            Some(walk_heading)
        } else {
            heading
        };
        let footprint = build_footprint(raw.class, p.x, p.y, fp_heading, length, width, params.ped_radius)
            .map_err(|source| ResampleError::Footprint {
                track_id: raw.track_id.clone(),
                t,
                source,
            })?;
        times.push(t);
        positions.push(p);
        headings.push(heading);
        footprints.push(footprint);
    }

    let half = params.window_samples() / 2;
    let xs: Vec<f64> = positions.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p.y).collect();
    let sx = moving_average(&xs, half);
    let sy = moving_average(&ys, half);
    let vx = moving_average(&central_difference(&sx, period), half);
    let vy = moving_average(&central_difference(&sy, period), half);
    let speed: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| a.hypot(*b)).collect();
    let accel = moving_average(&central_difference(&speed, period), half);

    Ok(Trajectory {
        track_id: raw.track_id.clone(),
        class: raw.class,
        period,
        smooth_half_width: half,
        times,
        positions,
        headings,
        footprints,
        smoothed: sx.into_iter().zip(sy).map(|(x, y)| Point::new(x, y)).collect(),
        velocity: vx.into_iter().zip(vy).collect(),
        speed,
        accel,
    })
}
