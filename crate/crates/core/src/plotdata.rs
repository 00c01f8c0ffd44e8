//! Long-format tables behind speed-profile, PET-vs-std and timeline plots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::PviRecord;
use crate::motion::MotionLabel;
use crate::pipeline::{PipelineOutput, TtaRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    SpeedProfiles,
    PetVsStd,
    Timeline,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::SpeedProfiles => "speed_profiles.csv",
            PlotKind::PetVsStd => "pet_vs_std.csv",
            PlotKind::Timeline => "timeline.csv",
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "speed_profiles" => Ok(PlotKind::SpeedProfiles),
            "pet_vs_std" => Ok(PlotKind::PetVsStd),
            "timeline" => Ok(PlotKind::Timeline),
            other => Err(format!("unknown plot {other:?}")),
        }
    }
}

fn is_critical(out: &PipelineOutput, r: &PviRecord) -> bool {
    out.critical
        .iter()
        .any(|c| c.pedestrian_id == r.pedestrian_id && c.vehicle_id == r.vehicle_id)
}

fn category(out: &PipelineOutput, r: &PviRecord) -> &'static str {
    if is_critical(out, r) {
        "critical"
    } else if r.motion_class == Some(MotionLabel::NonOrdinary) {
        "non_ordinary"
    } else {
        "ordinary"
    }
}

/// Speed of every PC pedestrian over time, with `t_rel = 0` at the last
/// sample inside the approach zone.
pub fn speed_profiles_csv<W: Write>(out: &PipelineOutput, w: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["pedestrian_id", "vehicle_id", "category", "t_rel", "speed", "in_roi"])?;
    for r in &out.pc {
        let (Some(ped), Some(z)) = (out.pedestrian(&r.pedestrian_id), out.transitions.get(&r.pedestrian_id)) else {
            continue;
        };
        let cat = category(out, r);
        for (t, v) in ped.times.iter().zip(&ped.speed) {
            let in_roi = *t >= z.roi_entry - 1e-9 && *t <= z.roi_exit + 1e-9;
            w.write_record([
                r.pedestrian_id.as_str(),
                r.vehicle_id.as_str(),
                cat,
                &(t - z.approach_exit).to_string(),
                &v.to_string(),
                if in_roi { "true" } else { "false" },
            ])?;
        }
    }
    w.flush()
}

/// One row per PC interaction.
pub fn pet_vs_std_csv<W: Write>(out: &PipelineOutput, w: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["pedestrian_id", "vehicle_id", "pet", "residual_std", "motion_class", "critical"])?;
    for r in &out.pc {
        w.write_record([
            r.pedestrian_id.clone(),
            r.vehicle_id.clone(),
            r.pet.to_string(),
            r.residual_std.map(|x| x.to_string()).unwrap_or_default(),
            r.motion_class.map(|m| m.as_str()).unwrap_or_default().to_string(),
            is_critical(out, r).to_string(),
        ])?;
    }
    w.flush()
}

/// Pedestrian speed, vehicle speed and TTA per pedestrian sample over the
/// overlap window of each selected record.
pub fn timeline_csv<W: Write>(
    out: &PipelineOutput,
    records: &[PviRecord],
    tta: &[TtaRecord],
    w: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["pedestrian_id", "vehicle_id", "t", "ped_speed", "veh_speed", "tta"])?;
    for r in records {
        let (Some(ped), Some(veh)) = (out.pedestrian(&r.pedestrian_id), out.vehicle(&r.vehicle_id)) else {
            continue;
        };
        let series = tta
            .iter()
            .find(|s| s.pedestrian_id == r.pedestrian_id && s.vehicle_id == r.vehicle_id)
            .map(|s| &s.series.samples[..])
            .unwrap_or(&[]);
        let half = 0.5 * veh.period;
        for i in ped.index_range(r.overlap_window.start, r.overlap_window.end) {
            let t = ped.times[i];
            let tta = series
                .iter()
                .find(|s| (s.t - t).abs() < half)
                .and_then(|s| s.tta)
                .map(|x| x.to_string())
                .unwrap_or_default();
            w.write_record([
                r.pedestrian_id.clone(),
                r.vehicle_id.clone(),
                t.to_string(),
                ped.speed[i].to_string(),
                veh.interpolate(&veh.speed, t).to_string(),
                tta,
            ])?;
        }
    }
    w.flush()
}
