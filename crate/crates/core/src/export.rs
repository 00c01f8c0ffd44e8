//! Catalog files and the run manifest.
//!
//! All files of a run are rendered in memory, hashed, written to a staging
//! directory next to the target and moved into place in one rename, so a
//! failed run never leaves partial output behind.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::PviRecord;
use crate::config::{CatalogFormat, RunParams};
use crate::conflict::Constellation;
use crate::motion::{MotionLabel, QuadraticFit};
use crate::pairing::CandidatePair;
use crate::pipeline::{PipelineOutput, StageCounts, ThresholdInfo, TtaRecord};
use crate::scene::ConflictSituation;
use crate::stats::ContingencyRow;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TTA_FILE: &str = "tta_series.jsonl";

pub const RECORD_COLUMNS: [&str; 25] = [
    "pedestrian_id",
    "vehicle_id",
    "vehicle_class",
    "constellation",
    "conflict_situation",
    "approach_zone",
    "target_zone",
    "pet",
    "residual_std",
    "motion_class",
    "t_d",
    "t_f",
    "t_p",
    "tta_t",
    "tta",
    "collision_co_occupancy",
    "selected_min_abs_pet",
    "overlap_start",
    "overlap_end",
    "ca_area",
    "ped_entry",
    "ped_exit",
    "veh_entry",
    "veh_exit",
    "annotation_label",
];

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn constellation_str(c: Constellation) -> &'static str {
    match c {
        Constellation::PedestrianFirst => "pedestrian_first",
        Constellation::VehicleFirst => "vehicle_first",
    }
}

pub fn situation_str(s: ConflictSituation) -> &'static str {
    match s {
        ConflictSituation::NearSide => "near_side",
        ConflictSituation::FarSide => "far_side",
    }
}

pub fn write_records_jsonl<W: Write>(records: &[PviRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: Read>(mut input: R) -> Result<Vec<PviRecord>, ExportError> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|e| ExportError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_records_csv<W: Write>(records: &[PviRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let reaction = r.reaction.as_ref();
        w.write_record([
            r.pedestrian_id.clone(),
            r.vehicle_id.clone(),
            r.vehicle_class.as_str().to_string(),
            constellation_str(r.constellation).to_string(),
            r.conflict_situation.map(situation_str).unwrap_or_default().to_string(),
            r.zone_transition.approach_zone.clone(),
            r.zone_transition.target_zone.clone(),
            r.pet.to_string(),
            opt(r.residual_std),
            r.motion_class.map(MotionLabel::as_str).unwrap_or_default().to_string(),
            opt(reaction.map(|x| x.t_d)),
            opt(reaction.map(|x| x.t_f)),
            opt(reaction.and_then(|x| x.t_p)),
            opt(r.tta_at.map(|x| x.t)),
            opt(r.tta_at.and_then(|x| x.tta)),
            r.flags.collision_co_occupancy.to_string(),
            r.flags.selected_min_abs_pet.to_string(),
            r.overlap_window.start.to_string(),
            r.overlap_window.end.to_string(),
            r.conflict_area.area.to_string(),
            r.conflict_area.ped_entry.to_string(),
            r.conflict_area.ped_exit.to_string(),
            r.conflict_area.veh_entry.to_string(),
            r.conflict_area.veh_exit.to_string(),
            r.annotation_label.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}

pub fn write_baseline_csv<W: Write>(pairs: &[CandidatePair], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pedestrian_id", "vehicle_id", "vehicle_class", "overlap_start", "overlap_end"])?;
    for p in pairs {
        w.write_record([
            p.pedestrian_id.as_str(),
            p.vehicle_id.as_str(),
            p.vehicle_class.as_str(),
            &p.overlap_window.start.to_string(),
            &p.overlap_window.end.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_table_csv<W: Write>(rows: &[ContingencyRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "pet_band",
        "n_nonordinary_in",
        "n_ordinary_in",
        "n_nonordinary_out",
        "n_ordinary_out",
        "odds_ratio",
        "ci95_lo",
        "ci95_hi",
        "haldane_corrected",
        "share_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.pet_band.label(),
            r.n_nonordinary_in.to_string(),
            r.n_ordinary_in.to_string(),
            r.n_nonordinary_out.to_string(),
            r.n_ordinary_out.to_string(),
            opt(r.odds_ratio),
            opt(r.ci95.map(|c| c.0)),
            opt(r.ci95.map(|c| c.1)),
            r.haldane_corrected.to_string(),
            r.share_pct.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_fits_csv<W: Write>(
    fits: &BTreeMap<String, QuadraticFit>,
    labels: &BTreeMap<String, MotionLabel>,
    out: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "pedestrian_id",
        "window_start",
        "window_end",
        "n_samples",
        "beta1",
        "beta2",
        "beta3",
        "residual_std",
        "motion_class",
    ])?;
    for (id, f) in fits {
        w.write_record([
            id.clone(),
            f.window.0.to_string(),
            f.window.1.to_string(),
            f.n_samples.to_string(),
            f.beta[0].to_string(),
            f.beta[1].to_string(),
            f.beta[2].to_string(),
            f.residual_std.to_string(),
            labels.get(id).map(|l| l.as_str()).unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_tta_jsonl<W: Write>(series: &[TtaRecord], mut out: W) -> std::io::Result<()> {
    for s in series {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_tta_jsonl<R: Read>(mut input: R) -> Result<Vec<TtaRecord>, ExportError> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|e| ExportError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

impl InputDigest {
    /// Digest of an input; only the file name is kept so the manifest does
    /// not depend on where the inputs live.
    pub fn new(role: &str, path: &Path, bytes: &[u8]) -> Self {
        InputDigest {
            role: role.to_string(),
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library: String,
    pub library_version: String,
    pub params: RunParams,
    pub catalog_format: CatalogFormat,
    pub inputs: Vec<InputDigest>,
    pub threshold: ThresholdInfo,
    pub counts: StageCounts,
    pub outputs: Vec<OutputDigest>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest, ExportError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| ExportError::Parse {
            line: 0,
            message: e.to_string(),
        })
    }

    /// Counts are monotone and match the recorded outputs.
    pub fn is_consistent(&self) -> bool {
        self.schema_version == SCHEMA_VERSION && self.counts.is_monotone() && !self.outputs.is_empty()
    }
}

fn catalog_ext(format: CatalogFormat) -> &'static str {
    match format {
        CatalogFormat::Jsonl => "jsonl",
        CatalogFormat::Csv => "csv",
    }
}

fn render_records(records: &[PviRecord], format: CatalogFormat) -> Vec<u8> {
    let mut buf = Vec::new();
    match format {
        CatalogFormat::Jsonl => write_records_jsonl(records, &mut buf),
        CatalogFormat::Csv => write_records_csv(records, &mut buf),
    }
    .expect("in-memory write");
    buf
}

/// Renders every output file of a run, keyed by file name.
pub fn render_run(
    out: &PipelineOutput,
    params: &RunParams,
    format: CatalogFormat,
    inputs: Vec<InputDigest>,
) -> (BTreeMap<String, Vec<u8>>, Manifest) {
    let ext = catalog_ext(format);
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut buf = Vec::new();
    write_baseline_csv(&out.baseline, &mut buf).expect("in-memory write");
    files.insert("baseline.csv".into(), buf);
    files.insert(format!("records.{ext}"), render_records(&out.records, format));
    files.insert(format!("pc_pvis.{ext}"), render_records(&out.pc, format));
    files.insert(format!("critical.{ext}"), render_records(&out.critical, format));
    let mut buf = Vec::new();
    write_table_csv(&out.table, &mut buf).expect("in-memory write");
    files.insert("odds_ratios.csv".into(), buf);
    let mut buf = Vec::new();
    write_fits_csv(&out.fits, &out.population, &mut buf).expect("in-memory write");
    files.insert("fits.csv".into(), buf);
    let mut buf = Vec::new();
    write_tta_jsonl(&out.tta, &mut buf).expect("in-memory write");
    files.insert(TTA_FILE.into(), buf);

    let outputs = files
        .iter()
        .map(|(name, bytes)| OutputDigest {
            file: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        })
        .collect();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        library: env!("CARGO_PKG_NAME").to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        params: params.clone(),
        catalog_format: format,
        inputs,
        threshold: out.threshold,
        counts: out.counts,
        outputs,
    };
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    files.insert(MANIFEST_FILE.into(), text);
    (files, manifest)
}

/// Writes `files` into `dir`, replacing any previous content.
pub fn write_atomically(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<(), ExportError> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    std::fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    let cleanup = |e: ExportError| {
        let _ = std::fs::remove_dir_all(&staging);
        e
    };
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    std::fs::create_dir(&staging).map_err(io_err(&staging))?;
    for (file, bytes) in files {
        let path = staging.join(file);
        std::fs::write(&path, bytes).map_err(io_err(&path)).map_err(cleanup)?;
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_err(dir)).map_err(cleanup)?;
    }
    std::fs::rename(&staging, dir).map_err(io_err(dir)).map_err(cleanup)?;
    Ok(())
}

pub fn export_run(
    dir: &Path,
    out: &PipelineOutput,
    params: &RunParams,
    format: CatalogFormat,
    inputs: Vec<InputDigest>,
) -> Result<Manifest, ExportError> {
    let (files, manifest) = render_run(out, params, format, inputs);
    write_atomically(dir, &files)?;
    Ok(manifest)
}
