use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pvi_core::export::{read_tta_jsonl, Manifest, TTA_FILE};
use pvi_core::testkit::FixtureCounts;

fn pvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvi"))
        .args(args)
        .env_remove("PVI_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pvi(args);
    assert!(
        out.status.success(),
        "pvi {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn core_fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Config for the packaged critical scenario, written into `dir`.
fn critical_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("run.toml");
    let text = format!(
        "[paths]\ntrajectories = {:?}\nscene = {:?}\noutput = \"out\"\nannotations = {:?}\n",
        core_fixture("critical_crossing/trajectories.csv"),
        core_fixture("scene_crosswalk.toml"),
        core_fixture("critical_crossing/annotations.csv"),
    );
    fs::write(&cfg, text).unwrap();
    cfg
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(String::from).collect::<Vec<_>>());
    let header = lines.next().expect("header");
    (header, lines.collect())
}

#[test]
fn fixture_set_counts_match_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    let scene = core_fixture("scene_crosswalk.toml");
    ok(&["generate", "--scene", s(&scene), "--batch", "50", "--seed", "11", "--out", s(&gen)]);
    let stdout = ok(&["analyze", "--config", s(&gen.join("config.toml"))]);

    let truth: serde_json::Value = serde_json::from_slice(&fs::read(gen.join("truth.json")).unwrap()).unwrap();
    let want: FixtureCounts = serde_json::from_value(truth["counts"].clone()).unwrap();
    let got = Manifest::read(&gen.join("out")).unwrap().counts;
    assert!(want.pc_pvis > 0 && want.critical > 0, "{want:?}");
    assert_eq!(got.trajectories, want.trajectories);
    assert_eq!(got.pedestrians, want.pedestrians);
    assert_eq!(got.vehicles, want.vehicles);
    assert_eq!(got.baseline_pairs, want.baseline_pairs);
    assert_eq!(got.conflicts, want.conflicts);
    assert_eq!(got.pc_pvis, want.pc_pvis);
    assert_eq!(got.critical, want.critical);
    assert!(stdout.contains(&format!("critical              {}\n", want.critical)), "{stdout}");

    // A second run over the same inputs changes nothing.
    let first = read_dir(&gen.join("out"));
    ok(&["analyze", "--config", s(&gen.join("config.toml"))]);
    assert_eq!(read_dir(&gen.join("out")), first);
}

#[test]
fn empty_trajectory_file_gives_empty_catalogs() {
    let tmp = tempfile::tempdir().unwrap();
    let tracks = tmp.path().join("empty.csv");
    fs::write(&tracks, "").unwrap();
    let out = tmp.path().join("out");
    let scene = core_fixture("scene_crosswalk.toml");
    ok(&["analyze", "--trajectories", s(&tracks), "--scene", s(&scene), "--output", s(&out)]);
    let m = Manifest::read(&out).unwrap();
    assert!(m.is_consistent());
    assert_eq!(m.counts, Default::default());
    for f in ["records.jsonl", "pc_pvis.jsonl", "critical.jsonl", TTA_FILE] {
        assert!(fs::read(out.join(f)).unwrap().is_empty(), "{f}");
    }
    let (header, rows) = csv_rows(&out.join("baseline.csv"));
    assert!(!header.is_empty() && rows.is_empty());

    ok(&[
        "plotdata", "--trajectories", s(&tracks), "--scene", s(&scene), "--output", s(&out), "--which", "speed-profiles",
    ]);
    let (header, rows) = csv_rows(&out.join("plots/speed_profiles.csv"));
    assert_eq!(header[0], "pedestrian_id");
    assert!(rows.is_empty());
}

#[test]
fn missing_scene_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let tracks = tmp.path().join("t.csv");
    fs::write(&tracks, "").unwrap();
    let scene = tmp.path().join("no_such_scene.toml");
    let out = tmp.path().join("out");
    let res = pvi(&["analyze", "--trajectories", s(&tracks), "--scene", s(&scene), "--output", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains(s(&scene)));
    assert!(!out.exists());
}

#[test]
fn malformed_input_leaves_previous_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = critical_config(tmp.path());
    ok(&["analyze", "--config", s(&cfg)]);
    let before = read_dir(&tmp.path().join("out"));
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "track_id,class,t,x,y\np,pedestrian,zero,1,2\n").unwrap();
    let res = pvi(&["analyze", "--config", s(&cfg), "--trajectories", s(&bad)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("ingest"));
    assert_eq!(read_dir(&tmp.path().join("out")), before);
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = critical_config(tmp.path());
    ok(&["analyze", "--config", s(&cfg)]);
    let m = Manifest::read(&tmp.path().join("out")).unwrap();
    assert_eq!(m.counts.critical, 1);

    ok(&["analyze", "--config", s(&cfg), "--critical-pet", "0.5", "--catalog-format", "csv"]);
    let m = Manifest::read(&tmp.path().join("out")).unwrap();
    assert_eq!(m.params.critical_pet, 0.5);
    assert_eq!(m.counts.critical, 0);
    assert!(tmp.path().join("out/records.csv").exists());
}

#[test]
fn pet_vs_std_has_one_row_per_pc_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = critical_config(tmp.path());
    ok(&["analyze", "--config", s(&cfg)]);
    ok(&["plotdata", "--config", s(&cfg), "--which", "pet-vs-std"]);
    let (header, rows) = csv_rows(&tmp.path().join("out/plots/pet_vs_std.csv"));
    assert_eq!(header, ["pedestrian_id", "vehicle_id", "pet", "residual_std", "motion_class", "critical"]);
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!((r[0].as_str(), r[1].as_str()), ("ped_c1", "bike_c1"));
    assert!((r[2].parse::<f64>().unwrap() + 0.55).abs() <= 0.08);
    assert!(r[3].parse::<f64>().unwrap() >= 0.04);
    assert_eq!((r[4].as_str(), r[5].as_str()), ("non_ordinary", "true"));
}

#[test]
fn timeline_matches_stored_tta_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = critical_config(tmp.path());
    ok(&["analyze", "--config", s(&cfg)]);
    let plots = tmp.path().join("plots");
    ok(&[
        "plotdata", "--config", s(&cfg), "--which", "timeline", "--pedestrian", "ped_c1", "--plot-dir", s(&plots),
    ]);
    let stored = read_tta_jsonl(fs::File::open(tmp.path().join("out").join(TTA_FILE)).unwrap()).unwrap();
    let series = &stored.iter().find(|r| r.pedestrian_id == "ped_c1").unwrap().series.samples;
    let (header, rows) = csv_rows(&plots.join("timeline.csv"));
    assert_eq!(header, ["pedestrian_id", "vehicle_id", "t", "ped_speed", "veh_speed", "tta"]);
    assert!(!rows.is_empty());
    let mut matched = 0;
    for r in &rows {
        let t: f64 = r[2].parse().unwrap();
        match series.iter().find(|x| (x.t - t).abs() < 0.02) {
            Some(x) => {
                assert_eq!(r[5], x.tta.map(|v| v.to_string()).unwrap_or_default(), "t {t}");
                matched += 1;
            }
            None => assert!(r[5].is_empty(), "t {t}"),
        }
    }
    assert!(matched > 0);

    let res = pvi(&["plotdata", "--config", s(&cfg), "--which", "timeline", "--pedestrian", "nobody"]);
    assert!(!res.status.success());
}

#[test]
fn plotdata_requires_matching_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = critical_config(tmp.path());
    let res = pvi(&["plotdata", "--config", s(&cfg)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no finished analyze run"));

    ok(&["analyze", "--config", s(&cfg)]);
    let copy = tmp.path().join("tracks.csv");
    let mut bytes = fs::read(core_fixture("critical_crossing/trajectories.csv")).unwrap();
    let cut = bytes.len() - 200;
    let end = cut + bytes[cut..].iter().position(|&b| b == b'\n').unwrap() + 1;
    bytes.truncate(end);
    fs::write(&copy, bytes).unwrap();
    let res = pvi(&["plotdata", "--config", s(&cfg), "--trajectories", s(&copy)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("inputs changed"));
}

#[test]
fn generate_single_spec_matches_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = core_fixture("scene_crosswalk.toml");
    let spec = core_fixture("critical_crossing/scenario.toml");
    ok(&["generate", "--scene", s(&scene), "--spec", s(&spec), "--out", s(tmp.path())]);
    assert_eq!(
        fs::read(tmp.path().join("trajectories.csv")).unwrap(),
        fs::read(core_fixture("critical_crossing/trajectories.csv")).unwrap()
    );
    let truth: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("truth.json")).unwrap()).unwrap();
    assert!((truth["scenarios"][0]["truth"]["pet"].as_f64().unwrap() + 0.55).abs() < 1e-9);
}

#[test]
fn validate_config_checks_ranges_and_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = critical_config(tmp.path());
    let stdout = ok(&["validate-config", "--config", s(&cfg)]);
    assert!(stdout.contains("# ok: 2 tracks, 1 annotations"), "{stdout}");

    let res = pvi(&["validate-config", "--config", s(&cfg), "--percentile", "1.5"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("percentile"));

    let odd = tmp.path().join("odd.toml");
    let text = fs::read_to_string(&cfg).unwrap() + "\n[params]\nwindow = 3.0\n";
    fs::write(&odd, text).unwrap();
    let res = pvi(&["validate-config", "--config", s(&odd)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("window"));
    assert!(!tmp.path().join("out").exists());
}
