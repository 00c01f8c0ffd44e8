//! Baseline catalog: every crossing pedestrian paired with every moving
//! vehicle that is in the scene at the same time.

use serde::{Deserialize, Serialize};

use crate::scene::{classify_zone_transition, SceneConfig};
use crate::trajectory::{RoadUserClass, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Self {
        TimeWindow { start, end }
    }

    /// Overlap of two windows, `None` when disjoint.
    pub fn overlap(self, other: TimeWindow) -> Option<TimeWindow> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(TimeWindow { start, end })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub pedestrian_id: String,
    pub vehicle_id: String,
    pub overlap_window: TimeWindow,
    pub vehicle_class: RoadUserClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingParams {
    /// Speed above which a vehicle counts as moving, m/s.
    pub speed_eps: f64,
    /// Shortest sustained run above `speed_eps`, s.
    pub min_duration: f64,
}

impl Default for PairingParams {
    fn default() -> Self {
        PairingParams {
            speed_eps: 0.1,
            min_duration: 0.5,
        }
    }
}

/// True when the speed stays above `speed_eps` for a contiguous run of at
/// least `min_duration` inside `window`. A run of `n` samples lasts
/// `n * period`.
pub fn is_moving(vehicle: &Trajectory, window: TimeWindow, speed_eps: f64, min_duration: f64) -> bool {
    let range = vehicle.index_range(window.start, window.end);
    let needed = min_duration - 1e-9;
    let mut run = 0usize;
    for v in &vehicle.speed[range] {
        if *v > speed_eps {
            run += 1;
            if run as f64 * vehicle.period >= needed {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

pub fn track_window(track: &Trajectory) -> TimeWindow {
    TimeWindow::new(track.t_s(), track.t_e())
}

/// Pairs sorted by `(pedestrian_id, overlap start, vehicle_id)`.
pub fn build_baseline_catalog(
    pedestrians: &[Trajectory],
    vehicles: &[Trajectory],
    scene: &SceneConfig,
    params: &PairingParams,
) -> Vec<CandidatePair> {
    let mut pairs = Vec::new();
    let moving_vehicles: Vec<&Trajectory> = vehicles.iter().filter(|v| v.class.is_vehicle()).collect();
    for ped in pedestrians.iter().filter(|p| p.class == RoadUserClass::Pedestrian) {
        if classify_zone_transition(ped, scene).is_none() {
            continue;
        }
        let pw = track_window(ped);
        for veh in &moving_vehicles {
            let Some(overlap) = pw.overlap(track_window(veh)) else {
                continue;
            };
            if !is_moving(veh, overlap, params.speed_eps, params.min_duration) {
                continue;
            }
            pairs.push(CandidatePair {
                pedestrian_id: ped.track_id.clone(),
                vehicle_id: veh.track_id.clone(),
                overlap_window: overlap,
                vehicle_class: veh.class,
            });
        }
    }
    pairs.sort_by(|a, b| {
        a.pedestrian_id
            .cmp(&b.pedestrian_id)
            .then(a.overlap_window.start.total_cmp(&b.overlap_window.start))
            .then(a.vehicle_id.cmp(&b.vehicle_id))
    });
    pairs
}
