//! Synthetic crossing scenarios with closed-form ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{pet_from_times, Constellation};
use crate::geometry::{convex_hull, Point, Polygon, Region};
use crate::scene::{ConflictSituation, SceneConfig};
use crate::trajectory::{build_footprint, RawSample, RawTrack, RoadUserClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario is geometrically infeasible: {0}")]
    Infeasible(String),
    #[error("cannot parse scenario: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneSide {
    Near,
    Far,
}

/// Slow-down of the pedestrian: constant deceleration from walking speed to
/// `min_speed`, a hold of `stop_duration`, then a symmetric speed-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedReaction {
    /// Onset, seconds after the pedestrian appears.
    pub t_d: f64,
    /// Deceleration magnitude, m/s².
    pub decel: f64,
    pub stop_duration: f64,
    #[serde(default)]
    pub min_speed: f64,
}

fn default_start() -> f64 {
    20.0
}
fn default_period() -> f64 {
    0.04
}
fn default_radius() -> f64 {
    0.3
}
fn default_class() -> RoadUserClass {
    RoadUserClass::Car
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub ped_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ped_reaction: Option<PedReaction>,
    pub veh_speed: f64,
    pub veh_lane: LaneSide,
    /// Signed target gap: vehicle entry minus pedestrian exit when
    /// non-negative, vehicle exit minus pedestrian entry when negative.
    pub time_offset: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approach_zone: Option<String>,
    /// Lateral shift of the pedestrian path, m.
    #[serde(default)]
    pub crossing_offset: f64,
    #[serde(default = "default_class")]
    pub veh_class: RoadUserClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veh_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veh_width: Option<f64>,
    #[serde(default)]
    pub veh_reverse: bool,
    #[serde(default = "default_start")]
    pub ped_start_time: f64,
    #[serde(default = "default_period")]
    pub sample_period: f64,
    #[serde(default = "default_radius")]
    pub ped_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ped_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veh_id: Option<String>,
}

impl ScenarioSpec {
    pub fn new(ped_speed: f64, veh_speed: f64, veh_lane: LaneSide, time_offset: f64) -> Self {
        ScenarioSpec {
            ped_speed,
            ped_reaction: None,
            veh_speed,
            veh_lane,
            time_offset,
            noise_sigma: 0.0,
            seed: 0,
            approach_zone: None,
            crossing_offset: 0.0,
            veh_class: RoadUserClass::Car,
            veh_length: None,
            veh_width: None,
            veh_reverse: false,
            ped_start_time: default_start(),
            sample_period: default_period(),
            ped_radius: default_radius(),
            ped_id: None,
            veh_id: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        let finite = [
            self.ped_speed,
            self.veh_speed,
            self.time_offset,
            self.noise_sigma,
            self.crossing_offset,
            self.ped_start_time,
            self.sample_period,
            self.ped_radius,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        if self.ped_speed <= 0.0 || self.veh_speed <= 0.0 {
            return bad("speeds must be positive");
        }
        if self.noise_sigma < 0.0 {
            return bad("noise_sigma must be non-negative");
        }
        if self.sample_period <= 0.0 || self.ped_radius <= 0.0 {
            return bad("sample_period and ped_radius must be positive");
        }
        if !self.veh_class.is_vehicle() {
            return bad("veh_class must be a vehicle class");
        }
        let (l, w) = self.vehicle_dims();
        if !(l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite()) {
            return bad("vehicle dimensions must be positive");
        }
        if let Some(r) = &self.ped_reaction {
            if !(r.t_d >= 0.0 && r.decel > 0.0 && r.stop_duration >= 0.0 && r.min_speed >= 0.0) {
                return bad("reaction needs t_d >= 0, decel > 0, stop_duration >= 0, min_speed >= 0");
            }
            if r.min_speed >= self.ped_speed {
                return bad("reaction min_speed must be below ped_speed");
            }
        }
        Ok(())
    }

    pub fn vehicle_dims(&self) -> (f64, f64) {
        let (l, w) = match self.veh_class {
            RoadUserClass::Bicycle => (1.8, 0.6),
            _ => (4.5, 1.8),
        };
        (self.veh_length.unwrap_or(l), self.veh_width.unwrap_or(w))
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    s0: f64,
    v0: f64,
    a: f64,
    dur: f64,
}

impl Segment {
    fn s_at(&self, dt: f64) -> f64 {
        self.s0 + self.v0 * dt + 0.5 * self.a * dt * dt
    }
    fn v_at(&self, dt: f64) -> f64 {
        self.v0 + self.a * dt
    }
}

/// Piecewise constant-acceleration speed profile along the walking path.
#[derive(Debug, Clone)]
pub struct Profile {
    segments: Vec<Segment>,
}

impl Profile {
    pub fn new(speed: f64, reaction: Option<&PedReaction>) -> Profile {
        let mut segments = Vec::new();
        let mut push = |a: f64, dur: f64, v0: f64| {
            let (t0, s0) = match segments.last() {
                Some(s @ Segment { .. }) => (s.t0 + s.dur, s.s_at(s.dur)),
                None => (0.0, 0.0),
            };
            segments.push(Segment { t0, s0, v0, a, dur });
        };
        match reaction {
            None => push(0.0, f64::INFINITY, speed),
            Some(r) => {
                let ramp = (speed - r.min_speed) / r.decel;
                push(0.0, r.t_d, speed);
                push(-r.decel, ramp, speed);
                push(0.0, r.stop_duration, r.min_speed);
                push(r.decel, ramp, r.min_speed);
                push(0.0, f64::INFINITY, speed);
            }
        }
        Profile { segments }
    }

    fn segment(&self, tau: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.t0 <= tau).saturating_sub(1);
        &self.segments[i]
    }

    pub fn distance(&self, tau: f64) -> f64 {
        let s = self.segment(tau.max(0.0));
        s.s_at(tau.max(0.0) - s.t0)
    }

    pub fn speed(&self, tau: f64) -> f64 {
        let s = self.segment(tau.max(0.0));
        s.v_at(tau.max(0.0) - s.t0)
    }

    /// First time the walked distance reaches `target`.
    pub fn time_at(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        for s in &self.segments {
            let end = if s.dur.is_finite() { s.s_at(s.dur) } else { f64::INFINITY };
            if end < target {
                continue;
            }
            let delta = target - s.s0;
            if delta <= 0.0 {
                return s.t0;
            }
            let disc = (s.v0 * s.v0 + 2.0 * s.a * delta).max(0.0);
            let denom = s.v0 + disc.sqrt();
            if denom <= 0.0 {
                continue;
            }
            return s.t0 + 2.0 * delta / denom;
        }
        f64::INFINITY
    }
}

/// Exact quantities of a generated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub pet: f64,
    pub constellation: Constellation,
    pub ped_entry: f64,
    pub ped_exit: f64,
    pub veh_entry: f64,
    pub veh_exit: f64,
    pub ca_area: f64,
    /// Absolute reaction onset and end of deceleration.
    pub t_d: Option<f64>,
    pub t_f: Option<f64>,
    pub approach_zone: String,
    pub target_zone: String,
    pub conflict_situation: ConflictSituation,
    pub veh_speed: f64,
    /// Vehicle arc position at its first contact with the conflict area.
    pub veh_contact_s: f64,
    /// Vehicle arc position is `(t - veh_t0) * veh_speed + veh_s_min`.
    pub veh_t0: f64,
    pub veh_s_min: f64,
}

impl ScenarioTruth {
    /// Time to reach the conflict area at instant `t`.
    pub fn tta(&self, t: f64) -> f64 {
        let s = self.veh_s_min + (t - self.veh_t0) * self.veh_speed;
        (self.veh_contact_s - s) / self.veh_speed
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub pedestrian: RawTrack,
    pub vehicle: RawTrack,
    pub truth: ScenarioTruth,
}

fn sub(a: Point, b: Point) -> Point {
    Point::new(a.x - b.x, a.y - b.y)
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

fn minkowski_negated(a: &Polygon, b: &Polygon) -> Polygon {
    let mut pts = Vec::with_capacity(a.len() * b.len());
    for p in a.vertices() {
        for q in b.vertices() {
            pts.push(Point::new(p.x - q.x, p.y - q.y));
        }
    }
    Polygon::from_vertices_unchecked(convex_hull(&pts))
}

/// Parameter interval of `origin + s * dir` inside a convex CCW polygon.
fn line_interval(poly: &Polygon, origin: Point, dir: Point) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let v = poly.vertices();
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let e = sub(b, a);
        let f0 = cross(e, sub(origin, a));
        let df = cross(e, dir);
        if df.abs() < 1e-15 {
            if f0 <= 0.0 {
                return None;
            }
            continue;
        }
        let s = -f0 / df;
        if df > 0.0 {
            lo = lo.max(s);
        } else {
            hi = hi.min(s);
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// Centre positions along the line at which the footprint shares area with
/// the region.
fn contact_interval(region: &Region, footprint_at_origin: &Polygon, origin: Point, dir: Point) -> Option<(f64, f64)> {
    let mut out: Option<(f64, f64)> = None;
    for piece in region.pieces() {
        let m = minkowski_negated(piece, footprint_at_origin);
        if let Some((a, b)) = line_interval(&m, origin, dir) {
            out = Some(match out {
                None => (a, b),
                Some((x, y)) => (x.min(a), y.max(b)),
            });
        }
    }
    out
}

fn principal_axis(poly: &Polygon) -> Point {
    let c = poly.centroid();
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in poly.vertices() {
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (mut x, mut y) = (theta.cos(), theta.sin());
    if x < -1e-12 || (x.abs() <= 1e-12 && y < 0.0) {
        x = -x;
        y = -y;
    }
    Point::new(x, y)
}

fn hull_of(a: &Polygon, b: &Polygon) -> Polygon {
    let mut pts = a.vertices().to_vec();
    pts.extend_from_slice(b.vertices());
    Polygon::from_vertices_unchecked(convex_hull(&pts))
}

fn pick_target_zone<'a>(scene: &'a SceneConfig, approach: &str) -> Option<&'a str> {
    let a = scene.zone(approach)?.polygon.centroid();
    scene
        .zones
        .iter()
        .filter(|z| z.id != approach)
        .max_by(|x, y| {
            x.polygon
                .centroid()
                .distance(a)
                .total_cmp(&y.polygon.centroid().distance(a))
        })
        .map(|z| z.id.as_str())
}

struct PedPath {
    approach: String,
    target: String,
    start: Point,
    dir: Point,
    len: f64,
}

fn pedestrian_path(spec: &ScenarioSpec, scene: &SceneConfig) -> Result<PedPath, ScenarioError> {
    let infeasible = |m: String| ScenarioError::Infeasible(m);
    let approach = match &spec.approach_zone {
        Some(z) => z.clone(),
        None => scene
            .near_side_map
            .keys()
            .next()
            .cloned()
            .ok_or_else(|| infeasible("scene has no mapped approach zone".into()))?,
    };
    let approach_poly = &scene
        .zone(&approach)
        .ok_or_else(|| infeasible(format!("unknown approach zone {approach:?}")))?
        .polygon;
    let target = pick_target_zone(scene, &approach).ok_or_else(|| infeasible("scene needs two zones".into()))?;
    let c0 = approach_poly.centroid();
    let c1 = scene.zone(target).expect("zone exists").polygon.centroid();
    let len = c0.distance(c1);
    let u = Point::new((c1.x - c0.x) / len, (c1.y - c0.y) / len);
    let n = Point::new(-u.y, u.x);
    Ok(PedPath {
        approach,
        target: target.to_string(),
        start: c0.offset(n.x * spec.crossing_offset, n.y * spec.crossing_offset),
        dir: u,
        len,
    })
}

/// Builds the pedestrian and vehicle tracks and their exact conflict timing.
pub fn generate(spec: &ScenarioSpec, scene: &SceneConfig) -> Result<GeneratedScenario, ScenarioError> {
    spec.validate()?;
    let infeasible = |m: String| ScenarioError::Infeasible(m);
    let path = pedestrian_path(spec, scene)?;
    let (approach, target, p0, u, len) = (path.approach.clone(), path.target.clone(), path.start, path.dir, path.len);
    let near_lane = scene
        .near_side_map
        .get(&approach)
        .ok_or_else(|| infeasible(format!("zone {approach:?} has no near-side lane")))?;
    let lane = match spec.veh_lane {
        LaneSide::Near => scene.lane(near_lane),
        LaneSide::Far => scene.lanes.iter().find(|l| &l.id != near_lane),
    }
    .ok_or_else(|| infeasible("requested lane does not exist".into()))?;

    let profile = Profile::new(spec.ped_speed, spec.ped_reaction.as_ref());
    let ped_fp = |p: Point| {
        build_footprint(RoadUserClass::Pedestrian, p.x, p.y, Some(u.y.atan2(u.x)), None, None, spec.ped_radius)
            .expect("valid radius")
    };

    // Vehicle path along the lane axis.
    let mut e = principal_axis(&lane.polygon);
    if spec.veh_reverse {
        e = Point::new(-e.x, -e.y);
    }
    let heading = e.y.atan2(e.x);
    let (vl, vw) = spec.vehicle_dims();
    let lc = lane.polygon.centroid();
    let lane_hull = Polygon::from_vertices_unchecked(convex_hull(lane.polygon.vertices()));
    let (s_min, s_max) =
        line_interval(&lane_hull, lc, e).ok_or_else(|| infeasible("lane axis misses the lane".into()))?;
    let veh_fp = |s: f64| {
        let c = lc.offset(e.x * s, e.y * s);
        build_footprint(spec.veh_class, c.x, c.y, Some(heading), Some(vl), Some(vw), spec.ped_radius)
            .expect("valid dimensions")
    };

    let p1 = p0.offset(u.x * len, u.y * len);
    let ped_sweep = hull_of(&ped_fp(p0), &ped_fp(p1));
    let veh_sweep = hull_of(&veh_fp(s_min), &veh_fp(s_max));
    let ca = Region::from_convex(ped_sweep)
        .intersect(&Region::from_convex(veh_sweep))
        .intersect(scene.roi_region());
    if ca.area() <= 1e-6 {
        return Err(infeasible("paths do not meet inside the ROI".into()));
    }

    let (sp_a, sp_b) = contact_interval(&ca, &ped_fp(Point::new(0.0, 0.0)), p0, u)
        .ok_or_else(|| infeasible("pedestrian never touches the conflict area".into()))?;
    let (sv_a, sv_b) = contact_interval(&ca, &veh_fp(0.0).translated(-lc.x, -lc.y), lc, e)
        .ok_or_else(|| infeasible("vehicle never touches the conflict area".into()))?;
    let sp_a = sp_a.max(0.0);
    let sp_b = sp_b.min(len);
    let start = spec.ped_start_time;
    let ped_entry = start + profile.time_at(sp_a);
    let ped_exit = start + profile.time_at(sp_b);
    let walk_end = profile.time_at(len);
    if !walk_end.is_finite() || !ped_exit.is_finite() {
        return Err(infeasible("pedestrian never finishes crossing".into()));
    }
    let v = spec.veh_speed;
    let veh_t0 = if spec.time_offset >= 0.0 {
        ped_exit + spec.time_offset - (sv_a - s_min) / v
    } else {
        ped_entry + spec.time_offset - (sv_b - s_min) / v
    };
    let veh_entry = veh_t0 + (sv_a - s_min) / v;
    let veh_exit = veh_t0 + (sv_b - s_min) / v;
    let veh_end = veh_t0 + (s_max - s_min) / v;
    let r = pet_from_times(ped_entry, ped_exit, veh_entry, veh_exit);

    let period = spec.sample_period;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let jitter = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        if spec.noise_sigma > 0.0 {
            (noise.sample(rng), noise.sample(rng))
        } else {
            (0.0, 0.0)
        }
    };

    let ped_steps = (walk_end / period + 1e-9).floor() as usize;
    let mut ped_samples = Vec::with_capacity(ped_steps + 1);
    for k in 0..=ped_steps {
        let tau = k as f64 * period;
        let s = profile.distance(tau).min(len);
        let (dx, dy) = jitter(&mut rng);
        ped_samples.push(RawSample::at(start + tau, p0.x + u.x * s + dx, p0.y + u.y * s + dy));
    }

    let k0 = (veh_t0 / period - 1e-9).ceil() as i64;
    let k1 = (veh_end / period + 1e-9).floor() as i64;
    let mut veh_samples = Vec::with_capacity((k1 - k0 + 1).max(0) as usize);
    for k in k0..=k1 {
        let t = k as f64 * period;
        let s = s_min + (t - veh_t0) * v;
        let c = lc.offset(e.x * s, e.y * s);
        let (dx, dy) = jitter(&mut rng);
        veh_samples.push(RawSample::at(t, c.x + dx, c.y + dy).with_box(vl, vw, heading));
    }
    if veh_samples.len() < 2 || ped_samples.len() < 2 {
        return Err(infeasible("tracks are too short".into()));
    }

    let situation = if spec.veh_lane == LaneSide::Near {
        ConflictSituation::NearSide
    } else {
        ConflictSituation::FarSide
    };
    let reaction_times = spec.ped_reaction.map(|rx| {
        let ramp = (spec.ped_speed - rx.min_speed) / rx.decel;
        (start + rx.t_d, start + rx.t_d + ramp)
    });
    let ped_id = spec.ped_id.clone().unwrap_or_else(|| format!("ped-{}", spec.seed));
    let veh_id = spec.veh_id.clone().unwrap_or_else(|| format!("veh-{}", spec.seed));
    Ok(GeneratedScenario {
        pedestrian: RawTrack {
            track_id: ped_id,
            class: RoadUserClass::Pedestrian,
            samples: ped_samples,
        },
        vehicle: RawTrack {
            track_id: veh_id,
            class: spec.veh_class,
            samples: veh_samples,
        },
        truth: ScenarioTruth {
            pet: r.pet,
            constellation: r.constellation,
            ped_entry,
            ped_exit,
            veh_entry,
            veh_exit,
            ca_area: ca.area(),
            t_d: reaction_times.map(|x| x.0),
            t_f: reaction_times.map(|x| x.1),
            approach_zone: approach.clone(),
            target_zone: target,
            conflict_situation: situation,
            veh_speed: v,
            veh_contact_s: sv_a,
            veh_t0,
            veh_s_min: s_min,
        },
    })
}

/// What an analysis run over a fixture set must report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureCounts {
    pub trajectories: usize,
    pub pedestrians: usize,
    pub vehicles: usize,
    pub baseline_pairs: usize,
    pub conflicts: usize,
    pub pc_pvis: usize,
    pub critical: usize,
}

#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub specs: Vec<ScenarioSpec>,
    pub scenarios: Vec<GeneratedScenario>,
    pub counts: FixtureCounts,
}

impl FixtureSet {
    pub fn tracks(&self) -> Vec<RawTrack> {
        self.scenarios
            .iter()
            .flat_map(|s| [s.pedestrian.clone(), s.vehicle.clone()])
            .collect()
    }
}

/// Bands of the PET targets cycled through by [`fixture_set`]; the last two
/// lie outside the PC window.
const FIXTURE_BANDS: [(f64, f64); 6] = [(-4.0, -2.0), (-2.0, 0.0), (0.0, 2.0), (2.0, 4.0), (-7.0, -4.5), (4.5, 7.0)];

/// Random spec whose target PET lies in `band`, 0.2 s away from its edges.
pub fn random_spec(rng: &mut impl Rng, band: (f64, f64), seed: u64, start: f64) -> ScenarioSpec {
    let margin = 0.2;
    let pet = rng.random_range(band.0 + margin..band.1 - margin);
    let bicycle = rng.random_bool(0.3);
    let mut spec = ScenarioSpec::new(
        rng.random_range(1.1..1.7),
        if bicycle { rng.random_range(3.0..6.0) } else { rng.random_range(6.0..12.0) },
        if rng.random_bool(0.5) { LaneSide::Near } else { LaneSide::Far },
        pet,
    );
    spec.veh_class = if bicycle { RoadUserClass::Bicycle } else { RoadUserClass::Car };
    spec.crossing_offset = rng.random_range(-3.0..3.0);
    spec.veh_reverse = rng.random_bool(0.5);
    spec.seed = seed;
    spec.ped_start_time = start;
    spec
}

/// Reaction that brings the pedestrian to a standstill shortly after it
/// enters the ROI.
pub fn full_stop(rng: &mut impl Rng, spec: &ScenarioSpec, scene: &SceneConfig) -> Result<PedReaction, ScenarioError> {
    let path = pedestrian_path(spec, scene)?;
    let roi_hull = Polygon::from_vertices_unchecked(convex_hull(scene.roi.vertices()));
    let (enter, _) = line_interval(&roi_hull, path.start, path.dir)
        .ok_or_else(|| ScenarioError::Infeasible("pedestrian path misses the ROI".into()))?;
    Ok(PedReaction {
        t_d: enter.max(0.0) / spec.ped_speed + rng.random_range(0.4..1.0),
        decel: rng.random_range(1.0..1.6),
        stop_duration: rng.random_range(1.0..2.0),
        min_speed: 0.0,
    })
}

/// Time both tracks of a scenario are observed together, s.
pub fn track_overlap(g: &GeneratedScenario) -> f64 {
    let span = |t: &RawTrack| (t.samples[0].t, t.samples[t.samples.len() - 1].t);
    let (p, v) = (span(&g.pedestrian), span(&g.vehicle));
    (p.1.min(v.1) - p.0.max(v.0)).max(0.0)
}

/// `n` independent scenarios, 200 s apart, cycling through PET bands. About
/// 40% carry a full-stop reaction. Draws whose track overlap is too close to
/// the pairing duration to call are redrawn, so the expected counts are exact.
pub fn fixture_set(n: usize, seed: u64, noise_sigma: f64, scene: &SceneConfig) -> Result<FixtureSet, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(n);
    let mut scenarios = Vec::with_capacity(n);
    let (mut paired, mut pc, mut critical) = (0, 0, 0);
    for i in 0..n {
        let band = FIXTURE_BANDS[i % FIXTURE_BANDS.len()];
        let (spec, g) = loop {
            let mut spec = random_spec(&mut rng, band, seed.wrapping_mul(1_000_003).wrapping_add(i as u64), 20.0 + 200.0 * i as f64);
            spec.noise_sigma = noise_sigma;
            spec.ped_id = Some(format!("p{i:04}"));
            spec.veh_id = Some(format!("v{i:04}"));
            if rng.random_bool(0.4) {
                spec.ped_reaction = Some(full_stop(&mut rng, &spec, scene)?);
            }
            let g = generate(&spec, scene)?;
            let overlap = track_overlap(&g);
            if !(0.2..=1.5).contains(&overlap) {
                break (spec, g);
            }
        };
        if track_overlap(&g) > 1.5 {
            paired += 1;
            if g.truth.pet.abs() <= 4.0 {
                pc += 1;
                if g.truth.pet.abs() < 2.0 && spec.ped_reaction.is_some() {
                    critical += 1;
                }
            }
        }
        specs.push(spec);
        scenarios.push(g);
    }
    Ok(FixtureSet {
        specs,
        scenarios,
        counts: FixtureCounts {
            trajectories: 2 * n,
            pedestrians: n,
            vehicles: n,
            baseline_pairs: paired,
            conflicts: paired,
            pc_pvis: pc,
            critical,
        },
    })
}
