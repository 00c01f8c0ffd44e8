//! Site layout and spatial-relationship queries.
//!
//! A scene lists pedestrian zones, the crossing region of interest (ROI) and
//! the traffic lanes, plus a mapping from each approach zone to the lane that
//! is on the near side for a pedestrian leaving that zone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point, Polygon, Region};
use crate::trajectory::{RoadUserClass, Trajectory};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene file is malformed: {0}")]
    Format(String),
    #[error("{what}: {source}")]
    Polygon {
        what: String,
        #[source]
        source: GeometryError,
    },
    #[error("{0}: vertices must be listed counter-clockwise")]
    Clockwise(String),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("near_side_map key {0:?} is not a zone id")]
    UnknownZone(String),
    #[error("near_side_map value {0:?} is not a lane id")]
    UnknownLane(String),
    #[error("approach zone {0:?} has no near-side lane mapping")]
    UnmappedZone(String),
    #[error("vehicle {0} crosses no configured lane inside the ROI")]
    NoLaneInRoi(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub id: String,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub direction: String,
    pub polygon: Polygon,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    roi: Polygon,
    near_side_map: BTreeMap<String, String>,
    zones: Vec<Zone>,
    lanes: Vec<Lane>,
}

/// Validated, immutable site description.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub zones: Vec<Zone>,
    pub roi: Polygon,
    pub lanes: Vec<Lane>,
    pub near_side_map: BTreeMap<String, String>,
    roi_region: Region,
}

fn check_polygon(what: String, p: &Polygon) -> Result<(), SceneError> {
    p.check_simple().map_err(|source| SceneError::Polygon {
        what: what.clone(),
        source,
    })?;
    if !p.is_ccw() {
        return Err(SceneError::Clockwise(what));
    }
    Ok(())
}

impl SceneConfig {
    pub fn new(
        zones: Vec<Zone>,
        roi: Polygon,
        lanes: Vec<Lane>,
        near_side_map: BTreeMap<String, String>,
    ) -> Result<Self, SceneError> {
        check_polygon("roi".into(), &roi)?;
        let mut zone_ids = BTreeSet::new();
        for z in &zones {
            check_polygon(format!("zone {:?}", z.id), &z.polygon)?;
            if !zone_ids.insert(z.id.as_str()) {
                return Err(SceneError::DuplicateId { kind: "zone", id: z.id.clone() });
            }
        }
        let mut lane_ids = BTreeSet::new();
        for l in &lanes {
            check_polygon(format!("lane {:?}", l.id), &l.polygon)?;
            if !lane_ids.insert(l.id.as_str()) {
                return Err(SceneError::DuplicateId { kind: "lane", id: l.id.clone() });
            }
        }
        for (zone, lane) in &near_side_map {
            if !zone_ids.contains(zone.as_str()) {
                return Err(SceneError::UnknownZone(zone.clone()));
            }
            if !lane_ids.contains(lane.as_str()) {
                return Err(SceneError::UnknownLane(lane.clone()));
            }
        }
        let roi_region = Region::from_polygon(&roi);
        Ok(SceneConfig {
            zones,
            roi,
            lanes,
            near_side_map,
            roi_region,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SceneError> {
        let file: SceneFile = toml::from_str(text).map_err(|e| SceneError::Format(e.to_string()))?;
        SceneConfig::new(file.zones, file.roi, file.lanes, file.near_side_map)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SceneConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = SceneFile {
            roi: self.roi.clone(),
            near_side_map: self.near_side_map.clone(),
            zones: self.zones.clone(),
            lanes: self.lanes.clone(),
        };
        toml::to_string(&file).expect("scene serializes")
    }

    /// The ROI as disjoint convex pieces.
    pub fn roi_region(&self) -> &Region {
        &self.roi_region
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    fn zone_at(&self, p: Point) -> Option<&str> {
        self.zones.iter().find(|z| z.polygon.contains(p)).map(|z| z.id.as_str())
    }

    /// Applies a map to every polygon. Used for rigid-motion checks.
    pub fn map_points(&self, f: impl Fn(Point) -> Point + Copy) -> SceneConfig {
        let zones = self
            .zones
            .iter()
            .map(|z| Zone {
                id: z.id.clone(),
                polygon: z.polygon.map_points(f),
            })
            .collect();
        let lanes = self
            .lanes
            .iter()
            .map(|l| Lane {
                id: l.id.clone(),
                direction: l.direction.clone(),
                polygon: l.polygon.map_points(f),
            })
            .collect();
        SceneConfig::new(zones, self.roi.map_points(f), lanes, self.near_side_map.clone())
            .expect("rigid motion preserves validity")
    }
}

/// How a pedestrian moved through the crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTransition {
    pub approach_zone: String,
    pub target_zone: String,
    /// Last sample inside the approach zone before the first ROI sample.
    pub approach_exit: f64,
    pub roi_entry: f64,
    pub roi_exit: f64,
}

impl ZoneTransition {
    /// Residence window in the ROI.
    pub fn roi_window(&self) -> (f64, f64) {
        (self.roi_entry, self.roi_exit)
    }
}

/// Determines approach and target zone from the footprint centers.
pub fn classify_zone_transition(pedestrian: &Trajectory, scene: &SceneConfig) -> Option<ZoneTransition> {
    if pedestrian.class != RoadUserClass::Pedestrian {
        return None;
    }
    let in_roi: Vec<bool> = pedestrian.positions.iter().map(|p| scene.roi.contains(*p)).collect();
    let first = in_roi.iter().position(|&b| b)?;
    let last = in_roi.iter().rposition(|&b| b)?;
    let (approach_idx, approach) = (0..first)
        .rev()
        .find_map(|i| scene.zone_at(pedestrian.positions[i]).map(|z| (i, z)))?;
    let target = (last + 1..pedestrian.len()).find_map(|i| scene.zone_at(pedestrian.positions[i]))?;
    if approach == target {
        return None;
    }
    Some(ZoneTransition {
        approach_zone: approach.to_string(),
        target_zone: target.to_string(),
        approach_exit: pedestrian.times[approach_idx],
        roi_entry: pedestrian.times[first],
        roi_exit: pedestrian.times[last],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictSituation {
    NearSide,
    FarSide,
}

/// Lane with the most in-ROI vehicle samples; ties go to the lane listed
/// first in the scene.
pub fn dominant_lane<'a>(vehicle: &Trajectory, scene: &'a SceneConfig) -> Option<&'a Lane> {
    let mut counts = vec![0usize; scene.lanes.len()];
    for p in vehicle.positions.iter().filter(|p| scene.roi.contains(**p)) {
        if let Some(i) = scene.lanes.iter().position(|l| l.polygon.contains(*p)) {
            counts[i] += 1;
        }
    }
    let (best, &n) = counts
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|(_, c)| **c)?;
    (n > 0).then(|| &scene.lanes[best])
}

pub fn classify_conflict_situation(
    vehicle: &Trajectory,
    approach_zone_id: &str,
    scene: &SceneConfig,
) -> Result<ConflictSituation, SceneError> {
    let lane = dominant_lane(vehicle, scene).ok_or_else(|| SceneError::NoLaneInRoi(vehicle.track_id.clone()))?;
    let near = scene
        .near_side_map
        .get(approach_zone_id)
        .ok_or_else(|| SceneError::UnmappedZone(approach_zone_id.to_string()))?;
    Ok(if *near == lane.id {
        ConflictSituation::NearSide
    } else {
        ConflictSituation::FarSide
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("corridor window [{0}, {1}] is empty")]
    EmptyWindow(f64, f64),
    #[error("corridor window [{t0}, {t1}] is outside the track span [{t_s}, {t_e}]")]
    OutsideTrack { t0: f64, t1: f64, t_s: f64, t_e: f64 },
}

/// Area swept by a road user's footprint over a time window.
#[derive(Debug, Clone)]
pub struct SweptCorridor {
    pub track_id: String,
    pub window: (f64, f64),
    pub footprints: Vec<Polygon>,
    pub union: Region,
}

impl SweptCorridor {
    pub fn area(&self) -> f64 {
        self.union.area()
    }
}

/// Exact union of a sequence of convex footprints.
pub fn union_of<'a>(footprints: impl IntoIterator<Item = &'a Polygon>) -> Region {
    let polys: Vec<Polygon> = footprints.into_iter().cloned().collect();
    Region::union_of_convex(&polys)
}

pub fn swept_corridor(track: &Trajectory, window: (f64, f64)) -> Result<SweptCorridor, CorridorError> {
    let (t0, t1) = window;
    if !(t0 <= t1) {
        return Err(CorridorError::EmptyWindow(t0, t1));
    }
    let tol = 1e-9;
    if t0 < track.t_s() - tol || t1 > track.t_e() + tol {
        return Err(CorridorError::OutsideTrack {
            t0,
            t1,
            t_s: track.t_s(),
            t_e: track.t_e(),
        });
    }
    let range = track.index_range(t0, t1);
    if range.is_empty() {
        return Err(CorridorError::EmptyWindow(t0, t1));
    }
    let footprints: Vec<Polygon> = track.footprints[range].to_vec();
    let union = union_of(&footprints);
    Ok(SweptCorridor {
        track_id: track.track_id.clone(),
        window,
        footprints,
        union,
    })
}

/// Corridor over the whole track restricted to footprints that can reach the
/// ROI; identical to the full corridor once clipped to the ROI.
pub fn roi_corridor(track: &Trajectory, scene: &SceneConfig) -> Region {
    let roi_box = scene.roi.bbox();
    union_of(track.footprints.iter().filter(|f| f.bbox().intersects(&roi_box)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{resample_and_smooth, RawSample, RawTrack, ResampleParams};

    pub(crate) fn crossing_scene() -> SceneConfig {
        SceneConfig::from_toml_str(include_str!("../fixtures/scene_crosswalk.toml")).unwrap()
    }

    fn ped(points: &[(f64, f64, f64)]) -> Trajectory {
        let raw = RawTrack {
            track_id: "p".into(),
            class: RoadUserClass::Pedestrian,
            samples: points.iter().map(|&(t, x, y)| RawSample::at(t, x, y)).collect(),
        };
        resample_and_smooth(&raw, &ResampleParams::default()).unwrap()
    }

    fn car(y: f64, x0: f64, x1: f64, duration: f64) -> Trajectory {
        let n = (duration / 0.04).round() as usize;
        let raw = RawTrack {
            track_id: "c".into(),
            class: RoadUserClass::Car,
            samples: (0..=n)
                .map(|k| {
                    let f = k as f64 / n as f64;
                    RawSample::at(k as f64 * 0.04, x0 + (x1 - x0) * f, y).with_box(4.0, 2.0, 0.0)
                })
                .collect(),
        };
        resample_and_smooth(&raw, &ResampleParams::default()).unwrap()
    }

    #[test]
    fn straight_crossing_from_two_to_one() {
        let scene = crossing_scene();
        let p = ped(&[(0.0, 0.0, -1.5), (8.0, 0.0, 9.5)]);
        let tr = classify_zone_transition(&p, &scene).unwrap();
        assert_eq!((tr.approach_zone.as_str(), tr.target_zone.as_str()), ("2", "1"));
        assert!(tr.roi_entry < tr.roi_exit);
        assert!(tr.approach_exit <= tr.roi_entry);
    }

    #[test]
    fn staying_in_zone_or_aborting_gives_none() {
        let scene = crossing_scene();
        let p = ped(&[(0.0, -2.0, -1.5), (5.0, 2.0, -1.0)]);
        assert!(classify_zone_transition(&p, &scene).is_none());
        let aborted = ped(&[(0.0, 0.0, -1.5), (3.0, 0.0, 2.0), (6.0, 0.0, -1.5)]);
        assert!(classify_zone_transition(&aborted, &scene).is_none());
    }

    #[test]
    fn transition_is_time_shift_invariant() {
        let scene = crossing_scene();
        let a = ped(&[(0.0, 1.0, -1.5), (8.0, 1.0, 9.5)]);
        let b = ped(&[(100.0, 1.0, -1.5), (108.0, 1.0, 9.5)]);
        let (ta, tb) = (
            classify_zone_transition(&a, &scene).unwrap(),
            classify_zone_transition(&b, &scene).unwrap(),
        );
        assert_eq!(ta.approach_zone, tb.approach_zone);
        assert!((ta.roi_entry + 100.0 - tb.roi_entry).abs() < 1e-9);
    }

    #[test]
    fn near_and_far_side_by_mapping() {
        let scene = crossing_scene();
        let south = car(2.0, -40.0, 40.0, 8.0);
        assert_eq!(classify_conflict_situation(&south, "2", &scene).unwrap(), ConflictSituation::NearSide);
        assert_eq!(classify_conflict_situation(&south, "1", &scene).unwrap(), ConflictSituation::FarSide);
        let off_road = car(-20.0, -40.0, 40.0, 8.0);
        assert!(matches!(
            classify_conflict_situation(&off_road, "2", &scene),
            Err(SceneError::NoLaneInRoi(_))
        ));
    }

    #[test]
    fn straddling_vehicle_takes_sample_majority() {
        // Lane boundary at y = 4; 70 % of the in-ROI samples sit in the north lane.
        let scene = crossing_scene();
        let n = 100usize;
        let raw = RawTrack {
            track_id: "c".into(),
            class: RoadUserClass::Car,
            samples: (0..n)
                .map(|k| {
                    let x = -5.0 + 10.0 * k as f64 / (n - 1) as f64;
                    let y = if k < 30 { 3.5 } else { 4.5 };
                    RawSample::at(k as f64 * 0.04, x, y).with_box(4.0, 1.8, 0.0)
                })
                .collect(),
        };
        let v = resample_and_smooth(&raw, &ResampleParams::default()).unwrap();
        // Independent count.
        let (mut south, mut north) = (0, 0);
        for p in v.positions.iter().filter(|p| scene.roi.contains(**p)) {
            if p.y < 4.0 {
                south += 1
            } else {
                north += 1
            }
        }
        assert!(north > south);
        assert_eq!(classify_conflict_situation(&v, "2", &scene).unwrap(), ConflictSituation::FarSide);
    }

    #[test]
    fn corridor_of_stationary_and_single_sample_windows() {
        let p = ped(&[(0.0, 1.0, 1.0), (2.0, 1.0, 1.0)]);
        let c = swept_corridor(&p, (0.0, 2.0)).unwrap();
        assert!((c.area() - p.footprints[0].area()).abs() < 1e-9);
        let c = swept_corridor(&p, (0.4, 0.4)).unwrap();
        assert_eq!(c.footprints.len(), 1);
        assert!(matches!(swept_corridor(&p, (1.0, 0.5)), Err(CorridorError::EmptyWindow(..))));
        assert!(matches!(swept_corridor(&p, (0.0, 9.0)), Err(CorridorError::OutsideTrack { .. })));
    }

    #[test]
    fn scene_validation() {
        let scene = crossing_scene();
        let text = scene.to_toml_string();
        assert!(SceneConfig::from_toml_str(&text).is_ok());
        let mut map = scene.near_side_map.clone();
        map.insert("9".into(), "south".into());
        let bad = SceneConfig::new(scene.zones.clone(), scene.roi.clone(), scene.lanes.clone(), map);
        assert!(matches!(bad, Err(SceneError::UnknownZone(_))));
        let cw = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let err = SceneConfig::new(vec![], cw, vec![], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, SceneError::Clockwise(_)));
        assert!(SceneConfig::from_toml_str("roi = 3").is_err());
    }
}
