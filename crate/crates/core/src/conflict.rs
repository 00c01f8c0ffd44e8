//! Conflict areas, PET, reaction onset, extrapolated conflict areas and TTA.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_hull, Polygon, Region, AREA_EPS};
use crate::pairing::CandidatePair;
use crate::scene::SceneConfig;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictParams {
    /// Smallest conflict area kept, m².
    pub min_area: f64,
    /// Acceleration below which the pedestrian is decelerating, m/s².
    pub a_thresh: f64,
    /// Shortest deceleration run, s.
    pub min_reaction_len: f64,
    /// Extrapolation horizon for the predicted conflict area, s.
    pub horizon: f64,
}

impl Default for ConflictParams {
    fn default() -> Self {
        ConflictParams {
            min_area: 0.01,
            a_thresh: -0.4,
            min_reaction_len: 0.2,
            horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConflictArea {
    pub region: Region,
    pub ped_entry: f64,
    pub ped_exit: f64,
    pub veh_entry: f64,
    pub veh_exit: f64,
}

impl ConflictArea {
    pub fn area(&self) -> f64 {
        self.region.area()
    }
}

/// Union of a track's footprints clipped to the ROI.
pub fn roi_clipped_corridor(track: &Trajectory, scene: &SceneConfig) -> Region {
    let roi = scene.roi_region();
    let roi_box = roi.bbox();
    let clipped: Vec<Polygon> = track
        .footprints
        .iter()
        .filter(|f| f.bbox().intersects(&roi_box))
        .flat_map(|f| Region::from_convex(f.clone()).intersect(roi).pieces().to_vec())
        .collect();
    Region::union_of_convex(&clipped)
}

/// First and last sample whose footprint shares area with `region`.
pub fn occupancy(track: &Trajectory, region: &Region) -> Option<(f64, f64)> {
    let bb = region.bbox();
    let hit = |i: &usize| {
        let f = &track.footprints[*i];
        f.bbox().intersects(&bb) && region.overlap_area(f) > AREA_EPS
    };
    let first = (0..track.len()).find(hit)?;
    let last = (first..track.len()).rev().find(hit)?;
    Some((track.times[first], track.times[last]))
}

pub fn conflict_area(
    pair: &CandidatePair,
    ped: &Trajectory,
    veh: &Trajectory,
    scene: &SceneConfig,
    min_area: f64,
) -> Option<ConflictArea> {
    debug_assert_eq!(pair.pedestrian_id, ped.track_id);
    debug_assert_eq!(pair.vehicle_id, veh.track_id);
    let pc = roi_clipped_corridor(ped, scene);
    let vc = roi_clipped_corridor(veh, scene);
    conflict_area_from_corridors(ped, veh, &pc, &vc, min_area)
}

/// Same as [`conflict_area`] with corridors already clipped to the ROI.
pub fn conflict_area_from_corridors(
    ped: &Trajectory,
    veh: &Trajectory,
    ped_corridor: &Region,
    veh_corridor: &Region,
    min_area: f64,
) -> Option<ConflictArea> {
    if !ped_corridor.bbox().intersects(&veh_corridor.bbox()) {
        return None;
    }
    let region = ped_corridor.intersect(veh_corridor);
    if region.area() < min_area.max(AREA_EPS) {
        return None;
    }
    let (ped_entry, ped_exit) = occupancy(ped, &region)?;
    let (veh_entry, veh_exit) = occupancy(veh, &region)?;
    Some(ConflictArea {
        region,
        ped_entry,
        ped_exit,
        veh_entry,
        veh_exit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    PedestrianFirst,
    VehicleFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetResult {
    pub pet: f64,
    pub constellation: Constellation,
    /// Both road users occupied the conflict area at the same time.
    pub co_occupied: bool,
}

pub fn pet_from_times(ped_entry: f64, ped_exit: f64, veh_entry: f64, veh_exit: f64) -> PetResult {
    if ped_exit <= veh_entry {
        PetResult {
            pet: veh_entry - ped_exit,
            constellation: Constellation::PedestrianFirst,
            co_occupied: false,
        }
    } else if veh_exit <= ped_entry {
        PetResult {
            pet: veh_exit - ped_entry,
            constellation: Constellation::VehicleFirst,
            co_occupied: false,
        }
    } else {
        let constellation = if ped_entry <= veh_entry {
            Constellation::PedestrianFirst
        } else {
            Constellation::VehicleFirst
        };
        PetResult {
            pet: 0.0,
            constellation,
            co_occupied: true,
        }
    }
}

pub fn pet(ca: &ConflictArea) -> PetResult {
    pet_from_times(ca.ped_entry, ca.ped_exit, ca.veh_entry, ca.veh_exit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionInterval {
    pub t_d: f64,
    pub t_f: f64,
    pub t_p: Option<f64>,
}

/// First maximal run of `accel < a_thresh` inside `roi_window` that spans at
/// least two samples and `min_len` seconds.
pub fn detect_reaction(ped: &Trajectory, roi_window: (f64, f64), a_thresh: f64, min_len: f64) -> Option<ReactionInterval> {
    let range = ped.index_range(roi_window.0, roi_window.1);
    let needed = min_len - 1e-9;
    let mut i = range.start;
    while i < range.end {
        if ped.accel[i] < a_thresh {
            let start = i;
            while i < range.end && ped.accel[i] < a_thresh {
                i += 1;
            }
            let n = i - start;
            if n >= 2 && n as f64 * ped.period >= needed {
                return Some(ReactionInterval {
                    t_d: ped.times[start],
                    t_f: ped.times[i - 1],
                    t_p: None,
                });
            }
        } else {
            i += 1;
        }
    }
    None
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("pedestrian {track_id} has zero speed at t_d = {t_d}; no extrapolation direction")]
    ZeroSpeed { track_id: String, t_d: f64 },
}

/// Convex set swept by the pedestrian footprint moving on at its velocity at
/// `t_d` for `horizon` seconds.
pub fn extrapolated_corridor(ped: &Trajectory, t_d: f64, horizon: f64) -> Result<Polygon, PredictError> {
    let i = ped.nearest_index(t_d);
    let (vx, vy) = ped.velocity[i];
    if ped.speed[i] <= 1e-9 {
        return Err(PredictError::ZeroSpeed {
            track_id: ped.track_id.clone(),
            t_d,
        });
    }
    let start = &ped.footprints[i];
    let end = start.translated(vx * horizon, vy * horizon);
    let mut pts = start.vertices().to_vec();
    pts.extend_from_slice(end.vertices());
    Ok(Polygon::from_vertices_unchecked(convex_hull(&pts)))
}

pub fn predict_ca_prime(
    ped: &Trajectory,
    t_d: f64,
    veh: &Trajectory,
    scene: &SceneConfig,
    params: &ConflictParams,
) -> Result<Option<Region>, PredictError> {
    let vc = roi_clipped_corridor(veh, scene);
    predict_ca_prime_with_corridor(ped, t_d, &vc, scene, params)
}

pub fn predict_ca_prime_with_corridor(
    ped: &Trajectory,
    t_d: f64,
    veh_corridor: &Region,
    scene: &SceneConfig,
    params: &ConflictParams,
) -> Result<Option<Region>, PredictError> {
    let swept = extrapolated_corridor(ped, t_d, params.horizon)?;
    let region = Region::from_convex(swept).intersect(scene.roi_region()).intersect(veh_corridor);
    Ok((region.area() >= params.min_area.max(AREA_EPS)).then_some(region))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtaSample {
    pub t: f64,
    pub d: f64,
    pub v: f64,
    pub tta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaSeries {
    pub samples: Vec<TtaSample>,
    pub reached: bool,
    /// Instant of first contact with the predicted conflict area.
    pub entry_time: Option<f64>,
}

fn arc_lengths(veh: &Trajectory) -> Vec<f64> {
    let mut s = Vec::with_capacity(veh.len());
    let mut acc = 0.0;
    for (k, p) in veh.smoothed.iter().enumerate() {
        if k > 0 {
            acc += veh.smoothed[k - 1].distance(*p);
        }
        s.push(acc);
    }
    s
}

fn touches(region: &Region, f: &Polygon) -> bool {
    f.bbox().intersects(&region.bbox()) && region.overlap_area(f) > AREA_EPS
}

/// Continuous sample coordinate `u` (index plus fraction) of the first
/// footprint contact with `region` at or after sample coordinate `from`.
fn first_contact(veh: &Trajectory, region: &Region, from: f64) -> Option<f64> {
    let footprint_at = |u: f64| -> Polygon {
        let k = (u.floor() as usize).min(veh.len() - 1);
        if k + 1 >= veh.len() {
            return veh.footprints[k].clone();
        }
        let f = u - k as f64;
        let (a, b) = (veh.positions[k], veh.positions[k + 1]);
        veh.footprints[k].translated((b.x - a.x) * f, (b.y - a.y) * f)
    };
    if touches(region, &footprint_at(from)) {
        return Some(from);
    }
    let next = from.floor() as usize + 1;
    let k = (next..veh.len()).find(|&k| touches(region, &veh.footprints[k]))?;
    let (mut lo, mut hi) = (((k - 1) as f64).max(from), k as f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if touches(region, &footprint_at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn sample_coord(veh: &Trajectory, t: f64) -> f64 {
    ((t - veh.t_s()) / veh.period).clamp(0.0, (veh.len() - 1) as f64)
}

fn arc_at(arcs: &[f64], u: f64) -> f64 {
    let k = (u.floor() as usize).min(arcs.len() - 1);
    if k + 1 >= arcs.len() {
        return arcs[k];
    }
    let f = u - k as f64;
    arcs[k] * (1.0 - f) + arcs[k + 1] * f
}

fn tta_of(d: f64, v: f64) -> Option<f64> {
    (v > 1e-9).then(|| d / v)
}

/// TTA at an arbitrary instant; `None` when the vehicle never reaches the
/// area after `t` or `t` is outside the track.
pub fn tta_at(veh: &Trajectory, ca_prime: &Region, t: f64) -> Option<TtaSample> {
    if veh.is_empty() || t < veh.t_s() - 1e-9 || t > veh.t_e() + 1e-9 {
        return None;
    }
    let arcs = arc_lengths(veh);
    let u = sample_coord(veh, t);
    let contact = first_contact(veh, ca_prime, u)?;
    let d = (arc_at(&arcs, contact) - arc_at(&arcs, u)).max(0.0);
    let v = veh.interpolate(&veh.speed, t);
    Some(TtaSample { t, d, v, tta: tta_of(d, v) })
}

/// TTA for every vehicle sample after `t_d` until it first touches CA′.
pub fn tta_series(veh: &Trajectory, ca_prime: &Region, t_d: f64) -> TtaSeries {
    let empty = TtaSeries {
        samples: Vec::new(),
        reached: false,
        entry_time: None,
    };
    if veh.is_empty() || ca_prime.is_empty() {
        return empty;
    }
    let start = veh.times.partition_point(|&t| t <= t_d + 1e-9);
    if start >= veh.len() {
        return empty;
    }
    let arcs = arc_lengths(veh);
    let Some(contact) = first_contact(veh, ca_prime, start as f64) else {
        return empty;
    };
    let s_contact = arc_at(&arcs, contact);
    let samples = (start..veh.len())
        .take_while(|&i| (i as f64) < contact)
        .map(|i| {
            let d = (s_contact - arcs[i]).max(0.0);
            let v = veh.speed[i];
            TtaSample {
                t: veh.times[i],
                d,
                v,
                tta: tta_of(d, v),
            }
        })
        .collect();
    TtaSeries {
        samples,
        reached: true,
        entry_time: Some(veh.t_s() + contact * veh.period),
    }
}
