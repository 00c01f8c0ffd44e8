//! End-to-end analysis: resample, pair, measure, classify, select, tabulate.

use std::collections::{BTreeMap, HashMap};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    filter_critical, filter_pc_pvi, select_min_abs_pet, AreaSummary, PviRecord, RecordFlags, TransitionSummary,
    TtaPoint,
};
use crate::config::{ConfigError, RunParams, ThresholdMode};
use crate::conflict::{
    conflict_area_from_corridors, detect_reaction, pet, predict_ca_prime_with_corridor, roi_clipped_corridor, tta_at,
    tta_series, ReactionInterval, TtaSeries,
};
use crate::geometry::Region;
use crate::io::Annotation;
use crate::motion::{classify_std, dataset_threshold, fit_quadratic_min, speed_samples, MotionLabel, QuadraticFit};
use crate::pairing::{build_baseline_catalog, CandidatePair};
use crate::scene::{classify_conflict_situation, classify_zone_transition, SceneConfig, ZoneTransition};
use crate::stats::{default_bands, odds_ratio_table, ContingencyRow, StatsError};
use crate::trajectory::{resample_and_smooth, RawTrack, RoadUserClass, Trajectory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub trajectories: usize,
    pub skipped_tracks: usize,
    pub pedestrians: usize,
    pub vehicles: usize,
    pub crossing_pedestrians: usize,
    pub fitted_pedestrians: usize,
    pub fit_excluded: usize,
    pub baseline_pairs: usize,
    pub conflicts: usize,
    pub selected: usize,
    pub pc_pvis: usize,
    pub critical: usize,
}

impl StageCounts {
    /// Pair stages never grow along the pipeline.
    pub fn is_monotone(&self) -> bool {
        self.baseline_pairs >= self.conflicts
            && self.conflicts >= self.selected
            && self.selected >= self.pc_pvis
            && self.pc_pvis >= self.critical
            && self.pedestrians + self.vehicles + self.skipped_tracks <= self.trajectories
            && self.crossing_pedestrians <= self.pedestrians
            && self.fitted_pedestrians + self.fit_excluded == self.crossing_pedestrians
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInfo {
    pub mode: ThresholdMode,
    pub value: f64,
    pub percentile: Option<f64>,
    pub n_fits: usize,
    /// Percentile mode without any fit falls back to the fixed value.
    pub fell_back_to_fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaRecord {
    pub pedestrian_id: String,
    pub vehicle_id: String,
    pub t_d: f64,
    pub series: TtaSeries,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub pedestrians: Vec<Trajectory>,
    pub vehicles: Vec<Trajectory>,
    pub transitions: BTreeMap<String, ZoneTransition>,
    pub fits: BTreeMap<String, QuadraticFit>,
    pub population: BTreeMap<String, MotionLabel>,
    pub baseline: Vec<CandidatePair>,
    pub records: Vec<PviRecord>,
    pub pc: Vec<PviRecord>,
    pub critical: Vec<PviRecord>,
    pub table: Vec<ContingencyRow>,
    pub tta: Vec<TtaRecord>,
    pub threshold: ThresholdInfo,
    pub counts: StageCounts,
}

impl PipelineOutput {
    pub fn pedestrian(&self, id: &str) -> Option<&Trajectory> {
        self.pedestrians.iter().find(|t| t.track_id == id)
    }

    pub fn vehicle(&self, id: &str) -> Option<&Trajectory> {
        self.vehicles.iter().find(|t| t.track_id == id)
    }
}

fn annotation_for<'a>(annotations: &'a [Annotation], ped: &str, veh: &str) -> Option<&'a Annotation> {
    annotations
        .iter()
        .find(|a| a.pedestrian_id == ped && a.vehicle_id.as_deref() == Some(veh))
        .or_else(|| {
            annotations
                .iter()
                .find(|a| a.pedestrian_id == ped && a.vehicle_id.is_none())
        })
}

struct PairResult {
    record: PviRecord,
    tta: Option<TtaRecord>,
}

pub fn run_pipeline(
    tracks: &[RawTrack],
    scene: &SceneConfig,
    annotations: &[Annotation],
    params: &RunParams,
) -> Result<PipelineOutput, PipelineError> {
    params.validate()?;
    let rp = params.resample();
    let cp = params.conflict();

    let resampled: Vec<Option<Trajectory>> = tracks
        .par_iter()
        .map(|raw| match resample_and_smooth(raw, &rp) {
            Ok(t) => Some(t),
            Err(e) => {
                warn!("skipping track {}: {e}", raw.track_id);
                None
            }
        })
        .collect();
    let mut counts = StageCounts {
        trajectories: tracks.len(),
        skipped_tracks: resampled.iter().filter(|t| t.is_none()).count(),
        ..StageCounts::default()
    };
    let (pedestrians, vehicles): (Vec<Trajectory>, Vec<Trajectory>) = resampled
        .into_iter()
        .flatten()
        .partition(|t| t.class == RoadUserClass::Pedestrian);
    counts.pedestrians = pedestrians.len();
    counts.vehicles = vehicles.len();

    let transitions: BTreeMap<String, ZoneTransition> = pedestrians
        .par_iter()
        .filter_map(|p| classify_zone_transition(p, scene).map(|z| (p.track_id.clone(), z)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    counts.crossing_pedestrians = transitions.len();

    let fit_results: Vec<(String, Option<QuadraticFit>)> = pedestrians
        .par_iter()
        .filter_map(|p| {
            let z = transitions.get(&p.track_id)?;
            let fit = fit_quadratic_min(&speed_samples(p, z.roi_window()), params.min_fit_samples);
            if let Err(e) = &fit {
                debug!("no speed fit for {}: {e}", p.track_id);
            }
            Some((p.track_id.clone(), fit.ok()))
        })
        .collect();
    let fits: BTreeMap<String, QuadraticFit> = fit_results
        .into_iter()
        .filter_map(|(id, f)| f.map(|f| (id, f)))
        .collect();
    counts.fitted_pedestrians = fits.len();
    counts.fit_excluded = counts.crossing_pedestrians - fits.len();

    let stds: Vec<f64> = fits.values().map(|f| f.residual_std).collect();
    let threshold = match params.threshold_mode {
        ThresholdMode::Fixed => ThresholdInfo {
            mode: ThresholdMode::Fixed,
            value: params.fixed_threshold,
            percentile: None,
            n_fits: stds.len(),
            fell_back_to_fixed: false,
        },
        ThresholdMode::Percentile => match dataset_threshold(&stds, params.percentile) {
            Ok(v) => ThresholdInfo {
                mode: ThresholdMode::Percentile,
                value: v,
                percentile: Some(params.percentile),
                n_fits: stds.len(),
                fell_back_to_fixed: false,
            },
            Err(_) => ThresholdInfo {
                mode: ThresholdMode::Percentile,
                value: params.fixed_threshold,
                percentile: Some(params.percentile),
                n_fits: 0,
                fell_back_to_fixed: true,
            },
        },
    };
    let population: BTreeMap<String, MotionLabel> = fits
        .iter()
        .map(|(id, f)| (id.clone(), classify_std(f.residual_std, threshold.value).label))
        .collect();

    let baseline = build_baseline_catalog(&pedestrians, &vehicles, scene, &params.pairing());
    counts.baseline_pairs = baseline.len();
    info!(
        "{} tracks, {} pedestrians crossing, {} baseline pairs",
        counts.trajectories, counts.crossing_pedestrians, counts.baseline_pairs
    );

    let ped_by_id: HashMap<&str, &Trajectory> = pedestrians.iter().map(|t| (t.track_id.as_str(), t)).collect();
    let veh_by_id: HashMap<&str, &Trajectory> = vehicles.iter().map(|t| (t.track_id.as_str(), t)).collect();
    let ped_corridors: HashMap<&str, Region> = transitions
        .keys()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|id| (id.as_str(), roi_clipped_corridor(ped_by_id[id.as_str()], scene)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let mut paired_vehicles: Vec<&str> = baseline.iter().map(|p| p.vehicle_id.as_str()).collect();
    paired_vehicles.sort_unstable();
    paired_vehicles.dedup();
    let veh_corridors: HashMap<&str, Region> = paired_vehicles
        .par_iter()
        .map(|id| (*id, roi_clipped_corridor(veh_by_id[id], scene)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let reactions: HashMap<&str, Option<ReactionInterval>> = transitions
        .iter()
        .map(|(id, z)| {
            let ped = ped_by_id[id.as_str()];
            (
                id.as_str(),
                detect_reaction(ped, z.roi_window(), params.a_thresh, params.min_reaction_len),
            )
        })
        .collect();

    let results: Vec<PairResult> = baseline
        .par_iter()
        .filter_map(|pair| {
            let ped = ped_by_id[pair.pedestrian_id.as_str()];
            let veh = veh_by_id[pair.vehicle_id.as_str()];
            let vc = &veh_corridors[pair.vehicle_id.as_str()];
            let ca = conflict_area_from_corridors(ped, veh, &ped_corridors[pair.pedestrian_id.as_str()], vc, cp.min_area)?;
            let p = pet(&ca);
            let z = &transitions[&pair.pedestrian_id];
            let situation = classify_conflict_situation(veh, &z.approach_zone, scene)
                .map_err(|e| debug!("{}/{}: {e}", pair.pedestrian_id, pair.vehicle_id))
                .ok();
            let annotation = annotation_for(annotations, &pair.pedestrian_id, &pair.vehicle_id);
            let t_p = annotation.and_then(|a| a.t_p);
            let mut reaction = reactions[pair.pedestrian_id.as_str()];
            let mut tta_point = None;
            let mut tta_record = None;
            if let Some(r) = reaction.as_mut() {
                if let Some(tp) = t_p.filter(|tp| *tp <= r.t_d) {
                    r.t_p = Some(tp);
                }
                match predict_ca_prime_with_corridor(ped, r.t_d, vc, scene, &cp) {
                    Ok(Some(ca_prime)) => {
                        let t_eval = t_p.unwrap_or(r.t_d);
                        tta_point = Some(TtaPoint {
                            t: t_eval,
                            tta: tta_at(veh, &ca_prime, t_eval).and_then(|s| s.tta),
                        });
                        tta_record = Some(TtaRecord {
                            pedestrian_id: pair.pedestrian_id.clone(),
                            vehicle_id: pair.vehicle_id.clone(),
                            t_d: r.t_d,
                            series: tta_series(veh, &ca_prime, r.t_d),
                        });
                    }
                    Ok(None) => {}
                    Err(e) => debug!("{}/{}: {e}", pair.pedestrian_id, pair.vehicle_id),
                }
            }
            let fit = fits.get(&pair.pedestrian_id);
            Some(PairResult {
                record: PviRecord {
                    pedestrian_id: pair.pedestrian_id.clone(),
                    vehicle_id: pair.vehicle_id.clone(),
                    vehicle_class: pair.vehicle_class,
                    constellation: p.constellation,
                    conflict_situation: situation,
                    zone_transition: TransitionSummary {
                        approach_zone: z.approach_zone.clone(),
                        target_zone: z.target_zone.clone(),
                    },
                    pet: p.pet,
                    residual_std: fit.map(|f| f.residual_std),
                    motion_class: population.get(&pair.pedestrian_id).copied(),
                    reaction,
                    tta_at: tta_point,
                    flags: RecordFlags {
                        collision_co_occupancy: p.co_occupied,
                        selected_min_abs_pet: false,
                    },
                    overlap_window: pair.overlap_window,
                    conflict_area: AreaSummary::from(&ca),
                    annotation_label: annotation.and_then(|a| a.label.clone()),
                },
                tta: tta_record,
            })
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut tta = Vec::new();
    for r in results {
        records.push(r.record);
        tta.extend(r.tta);
    }
    counts.conflicts = records.len();
    select_min_abs_pet(&mut records);
    counts.selected = records.iter().filter(|r| r.flags.selected_min_abs_pet).count();
    let pc = filter_pc_pvi(&records, params.pc_window);
    let critical = filter_critical(&pc, params.critical_pet);
    counts.pc_pvis = pc.len();
    counts.critical = critical.len();
    let table = odds_ratio_table(&population, &pc, &default_bands_scaled(params.pc_window), params.pc_window)?;
    info!(
        "{} conflicts, {} selected, {} PC, {} critical",
        counts.conflicts, counts.selected, counts.pc_pvis, counts.critical
    );
    debug_assert!(counts.is_monotone());

    Ok(PipelineOutput {
        pedestrians,
        vehicles,
        transitions,
        fits,
        population,
        baseline,
        records,
        pc,
        critical,
        table,
        tta,
        threshold,
        counts,
    })
}

/// The standard four bands, stretched to a PC window other than 4 s.
fn default_bands_scaled(pc_window: f64) -> Vec<crate::stats::PetBand> {
    let k = pc_window / 4.0;
    default_bands()
        .into_iter()
        .map(|b| crate::stats::PetBand {
            lo: b.lo * k,
            hi: b.hi * k,
            closed_hi: b.closed_hi,
        })
        .collect()
}
