use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use pvi_core::config::{CatalogFormat, Formats, Paths, RunConfig, RunParams, ThresholdMode};
use pvi_core::export::{export_run, render_run, InputDigest, Manifest};
use pvi_core::io::{parse_annotations, parse_trajectories, write_trajectories, Annotation, TrackFormat};
use pvi_core::pipeline::{run_pipeline, PipelineOutput, StageCounts};
use pvi_core::plotdata::{pet_vs_std_csv, speed_profiles_csv, timeline_csv, PlotKind};
use pvi_core::scene::SceneConfig;
use pvi_core::testkit::{fixture_set, generate, ScenarioSpec};
use pvi_core::trajectory::RawTrack;

#[derive(Parser)]
#[command(name = "pvi", version, about = "Mine critical pedestrian-vehicle interactions from trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write catalogs, statistics and a manifest.
    Analyze(RunArgs),
    /// Write plot tables for a finished analyze run.
    Plotdata(PlotArgs),
    /// Write synthetic trajectories with known ground truth.
    Generate(GenerateArgs),
    /// Check a run config and its inputs without running the pipeline.
    ValidateConfig(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run config; flags below override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trajectories: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum)]
    track_format: Option<TrackFormatArg>,
    #[arg(long, value_enum)]
    catalog_format: Option<CatalogFormatArg>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    /// Resample period in seconds.
    #[arg(long)]
    period: Option<f64>,
    /// Moving-average window in seconds.
    #[arg(long)]
    smooth_window: Option<f64>,
    #[arg(long)]
    ped_radius: Option<f64>,
    /// Speed below which a vehicle counts as standing.
    #[arg(long)]
    speed_eps: Option<f64>,
    #[arg(long)]
    min_moving_duration: Option<f64>,
    #[arg(long)]
    min_ca_area: Option<f64>,
    /// Acceleration below which the pedestrian is reacting (negative).
    #[arg(long, allow_hyphen_values = true)]
    a_thresh: Option<f64>,
    #[arg(long)]
    min_reaction_len: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Half width of the PET window for potential conflicts.
    #[arg(long)]
    pc_window: Option<f64>,
    /// |PET| below which a non-ordinary interaction is critical.
    #[arg(long)]
    critical_pet: Option<f64>,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long, value_enum)]
    threshold_mode: Option<ThresholdModeArg>,
    /// Residual std threshold used in fixed mode.
    #[arg(long)]
    fixed_threshold: Option<f64>,
    #[arg(long)]
    min_fit_samples: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Tables to write; all of them when omitted.
    #[arg(long, value_enum)]
    which: Vec<PlotArg>,
    /// Directory for the tables, `<output>/plots` by default.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    /// Restrict the timeline to this pedestrian; critical records otherwise.
    #[arg(long)]
    pedestrian: Option<String>,
    #[arg(long, requires = "pedestrian")]
    vehicle: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scene the scenarios are laid out in.
    #[arg(long)]
    scene: PathBuf,
    /// Single scenario spec.
    #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
    spec: Option<PathBuf>,
    /// Number of random scenarios.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Position noise sigma in meters for batch scenarios.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "csv")]
    track_format: TrackFormatArg,
    /// Target directory; it is created if needed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy)]
enum TrackFormatArg {
    Csv,
    Jsonl,
}

impl From<TrackFormatArg> for TrackFormat {
    fn from(f: TrackFormatArg) -> Self {
        match f {
            TrackFormatArg::Csv => TrackFormat::Csv,
            TrackFormatArg::Jsonl => TrackFormat::Jsonl,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum CatalogFormatArg {
    Jsonl,
    Csv,
}

#[derive(ValueEnum, Clone, Copy)]
enum ThresholdModeArg {
    Fixed,
    Percentile,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum PlotArg {
    SpeedProfiles,
    PetVsStd,
    Timeline,
}

impl From<PlotArg> for PlotKind {
    fn from(p: PlotArg) -> Self {
        match p {
            PlotArg::SpeedProfiles => PlotKind::SpeedProfiles,
            PlotArg::PetVsStd => PlotKind::PetVsStd,
            PlotArg::Timeline => PlotKind::Timeline,
        }
    }
}

impl ParamArgs {
    fn apply(&self, p: &mut RunParams) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(
            period,
            smooth_window,
            ped_radius,
            speed_eps,
            min_moving_duration,
            min_ca_area,
            a_thresh,
            min_reaction_len,
            horizon,
            pc_window,
            critical_pet,
            percentile,
            fixed_threshold,
            min_fit_samples
        );
        if let Some(m) = self.threshold_mode {
            p.threshold_mode = match m {
                ThresholdModeArg::Fixed => ThresholdMode::Fixed,
                ThresholdModeArg::Percentile => ThresholdMode::Percentile,
            };
        }
    }
}

impl RunArgs {
    /// Config file values with flags applied on top.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let missing = |name: &str| anyhow::anyhow!("--{name} is required without --config");
                RunConfig {
                    paths: Paths {
                        trajectories: self.trajectories.clone().ok_or_else(|| missing("trajectories"))?,
                        scene: self.scene.clone().ok_or_else(|| missing("scene"))?,
                        output: self.output.clone().ok_or_else(|| missing("output"))?,
                        annotations: None,
                    },
                    params: RunParams::default(),
                    formats: Formats::default(),
                }
            }
        };
        if let Some(p) = &self.trajectories {
            cfg.paths.trajectories = p.clone();
        }
        if let Some(p) = &self.scene {
            cfg.paths.scene = p.clone();
        }
        if let Some(p) = &self.output {
            cfg.paths.output = p.clone();
        }
        if let Some(p) = &self.annotations {
            cfg.paths.annotations = Some(p.clone());
        }
        if let Some(f) = self.track_format {
            cfg.formats.trajectories = f.into();
        }
        if let Some(f) = self.catalog_format {
            cfg.formats.catalog = match f {
                CatalogFormatArg::Jsonl => CatalogFormat::Jsonl,
                CatalogFormatArg::Csv => CatalogFormat::Csv,
            };
        }
        self.params.apply(&mut cfg.params);
        cfg.params.validate()?;
        Ok(cfg)
    }
}

/// Parsed inputs of a run together with their digests.
struct Inputs {
    tracks: Vec<RawTrack>,
    scene: SceneConfig,
    annotations: Vec<Annotation>,
    digests: Vec<InputDigest>,
}

fn read(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let scene_bytes = read(&cfg.paths.scene, "scene")?;
    let scene = SceneConfig::load(&cfg.paths.scene).context("scene")?;
    let track_bytes = read(&cfg.paths.trajectories, "trajectories")?;
    let tracks = parse_trajectories(&track_bytes[..], cfg.formats.trajectories)
        .with_context(|| format!("ingest: {}", cfg.paths.trajectories.display()))?;
    let mut digests = vec![
        InputDigest::new("trajectories", &cfg.paths.trajectories, &track_bytes),
        InputDigest::new("scene", &cfg.paths.scene, &scene_bytes),
    ];
    let annotations = match &cfg.paths.annotations {
        Some(path) => {
            let bytes = read(path, "annotations")?;
            digests.push(InputDigest::new("annotations", path, &bytes));
            parse_annotations(&bytes[..]).with_context(|| format!("annotations: {}", path.display()))?
        }
        None => Vec::new(),
    };
    info!("{} tracks, {} annotations", tracks.len(), annotations.len());
    Ok(Inputs {
        tracks,
        scene,
        annotations,
        digests,
    })
}

fn print_counts(c: &StageCounts) {
    let rows = [
        ("trajectories", c.trajectories),
        ("skipped_tracks", c.skipped_tracks),
        ("pedestrians", c.pedestrians),
        ("vehicles", c.vehicles),
        ("crossing_pedestrians", c.crossing_pedestrians),
        ("fitted_pedestrians", c.fitted_pedestrians),
        ("baseline_pairs", c.baseline_pairs),
        ("conflicts", c.conflicts),
        ("selected", c.selected),
        ("pc_pvis", c.pc_pvis),
        ("critical", c.critical),
    ];
    for (name, n) in rows {
        println!("{name:<22}{n}");
    }
}

fn analyze(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let inputs = load_inputs(&cfg)?;
    let out = run_pipeline(&inputs.tracks, &inputs.scene, &inputs.annotations, &cfg.params).context("pipeline")?;
    if !out.counts.is_monotone() {
        bail!("pipeline: inconsistent stage counts {:?}", out.counts);
    }
    let manifest = export_run(&cfg.paths.output, &out, &cfg.params, cfg.formats.catalog, inputs.digests)
        .context("export")?;
    print_counts(&manifest.counts);
    println!("output                {}", cfg.paths.output.display());
    Ok(())
}

/// Re-runs the pipeline for a finished run and checks it reproduces the
/// recorded outputs.
fn rerun(cfg: &RunConfig) -> Result<(PipelineOutput, Manifest)> {
    let manifest = Manifest::read(&cfg.paths.output)
        .with_context(|| format!("no finished analyze run in {}", cfg.paths.output.display()))?;
    let inputs = load_inputs(cfg)?;
    let recorded: BTreeMap<&str, &str> = manifest.inputs.iter().map(|d| (d.role.as_str(), d.sha256.as_str())).collect();
    let current: BTreeMap<&str, &str> = inputs.digests.iter().map(|d| (d.role.as_str(), d.sha256.as_str())).collect();
    if recorded != current {
        bail!("inputs changed since the run in {}; run analyze again", cfg.paths.output.display());
    }
    let out = run_pipeline(&inputs.tracks, &inputs.scene, &inputs.annotations, &manifest.params).context("pipeline")?;
    let (_, fresh) = render_run(&out, &manifest.params, manifest.catalog_format, inputs.digests);
    if fresh.outputs != manifest.outputs {
        bail!("outputs in {} do not match a rerun of their inputs", cfg.paths.output.display());
    }
    Ok((out, manifest))
}

fn plotdata(args: &PlotArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let (out, _) = rerun(&cfg)?;
    let dir = args.plot_dir.clone().unwrap_or_else(|| cfg.paths.output.join("plots"));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let kinds: Vec<PlotKind> = if args.which.is_empty() {
        vec![PlotKind::SpeedProfiles, PlotKind::PetVsStd, PlotKind::Timeline]
    } else {
        args.which.iter().map(|&w| w.into()).collect()
    };
    for kind in kinds {
        let mut buf = Vec::new();
        match kind {
            PlotKind::SpeedProfiles => speed_profiles_csv(&out, &mut buf)?,
            PlotKind::PetVsStd => pet_vs_std_csv(&out, &mut buf)?,
            PlotKind::Timeline => {
                let records: Vec<_> = match &args.pedestrian {
                    Some(ped) => out
                        .records
                        .iter()
                        .filter(|r| r.flags.selected_min_abs_pet && &r.pedestrian_id == ped)
                        .filter(|r| args.vehicle.as_ref().is_none_or(|v| &r.vehicle_id == v))
                        .cloned()
                        .collect(),
                    None => out.critical.clone(),
                };
                if records.is_empty() && args.pedestrian.is_some() {
                    bail!("no selected record for pedestrian {}", args.pedestrian.as_deref().unwrap_or(""));
                }
                timeline_csv(&out, &records, &out.tta, &mut buf)?
            }
        }
        let path = dir.join(kind.file_name());
        fs::write(&path, &buf).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let scene_text = fs::read_to_string(&args.scene).with_context(|| format!("cannot read scene {}", args.scene.display()))?;
    let scene = SceneConfig::load(&args.scene).context("scene")?;
    let format: TrackFormat = args.track_format.into();
    let (tracks, truth) = match (&args.spec, args.batch) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read spec {}", path.display()))?;
            let spec = ScenarioSpec::from_toml_str(&text).with_context(|| format!("spec {}", path.display()))?;
            let g = generate(&spec, &scene).context("generate")?;
            let truth = serde_json::json!({ "scenarios": [{ "spec": spec, "truth": g.truth }] });
            (vec![g.pedestrian, g.vehicle], truth)
        }
        (None, Some(n)) => {
            let set = fixture_set(n, args.seed, args.noise, &scene).context("generate")?;
            let scenarios: Vec<_> = set
                .specs
                .iter()
                .zip(&set.scenarios)
                .map(|(spec, g)| serde_json::json!({ "spec": spec, "truth": g.truth }))
                .collect();
            let truth = serde_json::json!({ "seed": args.seed, "counts": set.counts, "scenarios": scenarios });
            (set.tracks(), truth)
        }
        (None, None) => bail!("either --spec or --batch is required"),
    };

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let ext = match format {
        TrackFormat::Csv => "csv",
        TrackFormat::Jsonl => "jsonl",
    };
    let track_file = format!("trajectories.{ext}");
    let mut buf = Vec::new();
    write_trajectories(&tracks, format, &mut buf)?;
    write_file(&args.out.join(&track_file), &buf)?;
    let mut text = serde_json::to_vec_pretty(&truth)?;
    text.push(b'\n');
    write_file(&args.out.join("truth.json"), &text)?;
    write_file(&args.out.join("scene.toml"), scene_text.as_bytes())?;
    let cfg = RunConfig {
        paths: Paths {
            trajectories: track_file.into(),
            scene: "scene.toml".into(),
            output: "out".into(),
            annotations: None,
        },
        params: RunParams::default(),
        formats: Formats {
            trajectories: format,
            catalog: CatalogFormat::Jsonl,
        },
    };
    write_file(&args.out.join("config.toml"), cfg.to_toml_string().as_bytes())?;
    println!("{} tracks written to {}", tracks.len(), args.out.display());
    Ok(())
}

fn validate_config(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let inputs = load_inputs(&cfg)?;
    println!("{}", cfg.to_toml_string().trim_end());
    println!("# ok: {} tracks, {} annotations", inputs.tracks.len(), inputs.annotations.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PVI_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Plotdata(a) => plotdata(a),
        Command::Generate(a) => cmd_generate(a),
        Command::ValidateConfig(a) => validate_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
