#![allow(dead_code)]

use std::path::PathBuf;

use pvi_core::catalog::{AreaSummary, PviRecord, RecordFlags, TransitionSummary};
use pvi_core::conflict::Constellation;
use pvi_core::pairing::TimeWindow;
use pvi_core::scene::SceneConfig;
use pvi_core::trajectory::RoadUserClass;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn scene() -> SceneConfig {
    SceneConfig::load(&fixture("scene_crosswalk.toml")).unwrap()
}

/// Minimal selected record carrying only the fields statistics look at.
pub fn record(ped: &str, veh: &str, pet: f64) -> PviRecord {
    PviRecord {
        pedestrian_id: ped.into(),
        vehicle_id: veh.into(),
        vehicle_class: RoadUserClass::Car,
        constellation: if pet >= 0.0 {
            Constellation::PedestrianFirst
        } else {
            Constellation::VehicleFirst
        },
        conflict_situation: None,
        zone_transition: TransitionSummary {
            approach_zone: "1".into(),
            target_zone: "2".into(),
        },
        pet,
        residual_std: None,
        motion_class: None,
        reaction: None,
        tta_at: None,
        flags: RecordFlags {
            collision_co_occupancy: false,
            selected_min_abs_pet: true,
        },
        overlap_window: TimeWindow { start: 0.0, end: 1.0 },
        conflict_area: AreaSummary {
            area: 1.0,
            ped_entry: 0.0,
            ped_exit: 0.0,
            veh_entry: 0.0,
            veh_exit: 0.0,
        },
        annotation_label: None,
    }
}
