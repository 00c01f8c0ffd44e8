//! Per-pair interaction records and the selection/filter stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conflict::{ConflictArea, Constellation, ReactionInterval};
use crate::motion::MotionLabel;
use crate::pairing::TimeWindow;
use crate::scene::ConflictSituation;
use crate::trajectory::RoadUserClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub approach_zone: String,
    pub target_zone: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtaPoint {
    pub t: f64,
    pub tta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    pub collision_co_occupancy: bool,
    pub selected_min_abs_pet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub area: f64,
    pub ped_entry: f64,
    pub ped_exit: f64,
    pub veh_entry: f64,
    pub veh_exit: f64,
}

impl From<&ConflictArea> for AreaSummary {
    fn from(ca: &ConflictArea) -> Self {
        AreaSummary {
            area: ca.area(),
            ped_entry: ca.ped_entry,
            ped_exit: ca.ped_exit,
            veh_entry: ca.veh_entry,
            veh_exit: ca.veh_exit,
        }
    }
}

/// One pedestrian-vehicle pair with a conflict area. Field order is the
/// export column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PviRecord {
    pub pedestrian_id: String,
    pub vehicle_id: String,
    pub vehicle_class: RoadUserClass,
    pub constellation: Constellation,
    pub conflict_situation: Option<ConflictSituation>,
    pub zone_transition: TransitionSummary,
    pub pet: f64,
    pub residual_std: Option<f64>,
    pub motion_class: Option<MotionLabel>,
    pub reaction: Option<ReactionInterval>,
    pub tta_at: Option<TtaPoint>,
    pub flags: RecordFlags,
    pub overlap_window: TimeWindow,
    pub conflict_area: AreaSummary,
    pub annotation_label: Option<String>,
}

fn prefer(a: &PviRecord, b: &PviRecord) -> std::cmp::Ordering {
    let rank = |r: &PviRecord| match r.constellation {
        Constellation::VehicleFirst => 0,
        Constellation::PedestrianFirst => 1,
    };
    a.pet
        .abs()
        .total_cmp(&b.pet.abs())
        .then(rank(a).cmp(&rank(b)))
        .then(a.conflict_area.veh_entry.total_cmp(&b.conflict_area.veh_entry))
        .then(a.vehicle_id.cmp(&b.vehicle_id))
}

/// Flags, per pedestrian, the record with the smallest |pet|. Ties go to
/// vehicle-first, then the earlier vehicle entry.
pub fn select_min_abs_pet(records: &mut [PviRecord]) {
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        best.entry(r.pedestrian_id.as_str())
            .and_modify(|j| {
                if prefer(r, &records[*j]).is_lt() {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let chosen: Vec<usize> = best.into_values().collect();
    for r in records.iter_mut() {
        r.flags.selected_min_abs_pet = false;
    }
    for i in chosen {
        records[i].flags.selected_min_abs_pet = true;
    }
}

pub fn selected(records: &[PviRecord]) -> Vec<PviRecord> {
    records.iter().filter(|r| r.flags.selected_min_abs_pet).cloned().collect()
}

/// Selected records with `pet` in the closed interval `[-window, window]`.
pub fn filter_pc_pvi(records: &[PviRecord], window: f64) -> Vec<PviRecord> {
    records
        .iter()
        .filter(|r| r.flags.selected_min_abs_pet && r.pet >= -window && r.pet <= window)
        .cloned()
        .collect()
}

/// Records with `|pet| < pet_abs_max` and a non-ordinary speed profile.
pub fn filter_critical(records: &[PviRecord], pet_abs_max: f64) -> Vec<PviRecord> {
    records
        .iter()
        .filter(|r| r.pet.abs() < pet_abs_max && r.motion_class == Some(MotionLabel::NonOrdinary))
        .cloned()
        .collect()
}
