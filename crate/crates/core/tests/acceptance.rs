//! Acceptance checks. Runs without the libtest harness and prints one
//! `PASS`/`FAIL` line per criterion.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvi_core::catalog::PviRecord;
use pvi_core::config::{CatalogFormat, RunParams};
use pvi_core::conflict::Constellation;
use pvi_core::export::{export_run, render_run, InputDigest};
use pvi_core::geometry::{polygon_intersection, Point, Polygon, Region};
use pvi_core::io::{parse_annotations, parse_trajectories, write_trajectories, TrackFormat};
use pvi_core::motion::{fit_quadratic, MotionLabel};
use pvi_core::pipeline::{run_pipeline, PipelineOutput};
use pvi_core::stats::{default_bands, odds_ratio_table};
use pvi_core::testkit::{fixture_set, generate, random_spec, LaneSide, PedReaction, ScenarioSpec};

use common::{fixture, record, scene};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

// PET over randomized scenarios

fn pet_oracle() -> Outcome {
    const PERIOD: f64 = 0.04;
    let start = Instant::now();
    let s = scene();
    let mut rng = ChaCha8Rng::seed_from_u64(20_250);
    let bands = [(-4.0, -2.0), (-2.0, 0.0), (0.0, 2.0), (2.0, 4.0)];
    let n = 240;
    let mut truths = BTreeMap::new();
    let mut tracks = Vec::new();
    let mut per_band = [0usize; 4];
    let mut per_const = [0usize; 2];
    for i in 0..n {
        let band = bands[i % 4];
        let mut spec = random_spec(&mut rng, band, i as u64, 20.0 + 200.0 * i as f64);
        spec.ped_id = Some(format!("p{i:04}"));
        spec.veh_id = Some(format!("v{i:04}"));
        spec.noise_sigma = if i % 2 == 0 { 0.0 } else { 0.01 };
        let g = generate(&spec, &s).map_err(|e| format!("scenario {i}: {e}"))?;
        per_band[i % 4] += 1;
        per_const[(g.truth.constellation == Constellation::VehicleFirst) as usize] += 1;
        truths.insert(g.pedestrian.track_id.clone(), g.truth.clone());
        tracks.push(g.pedestrian);
        tracks.push(g.vehicle);
    }
    let out = run_pipeline(&tracks, &s, &[], &RunParams::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut sign_ok = 0;
    let mut missing = 0;
    for (ped, truth) in &truths {
        let Some(r) = out.records.iter().find(|r| &r.pedestrian_id == ped && r.flags.selected_min_abs_pet) else {
            missing += 1;
            continue;
        };
        worst = worst.max((r.pet - truth.pet).abs());
        if r.constellation == truth.constellation && (r.pet >= 0.0) == (truth.pet >= 0.0) {
            sign_ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        missing == 0 && worst <= 2.0 * PERIOD && sign_ok == n && secs < 60.0,
        format!(
            "{n} scenarios (bands {per_band:?}, ped/veh first {per_const:?}), max |err| {worst:.4} s, sign agreement {sign_ok}/{n}, missing {missing}, {secs:.1} s"
        ),
    )
}

// Quadratic fit

fn stop_profile() -> Vec<(f64, f64)> {
    // 1.5 m/s, ramp to a stop, hold, ramp back; 6 s at 25 Hz.
    (0..=150)
        .map(|k| {
            let t = k as f64 * 0.04;
            let v = if t < 1.5 {
                1.5
            } else if t < 2.5 {
                1.5 * (2.5 - t)
            } else if t < 3.5 {
                0.0
            } else if t < 4.5 {
                1.5 * (t - 3.5)
            } else {
                1.5
            };
            (t, v)
        })
        .collect()
}

fn population_std(e: &[f64]) -> f64 {
    let n = e.len() as f64;
    let m = e.iter().sum::<f64>() / n;
    (e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Residual std of the best quadratic found by a zooming brute-force grid
/// over coefficients of the normalized time `s = τ / T`.
fn grid_search_std(samples: &[(f64, f64)]) -> f64 {
    let t0 = samples[0].0;
    let span = samples.last().unwrap().0 - t0;
    let s: Vec<f64> = samples.iter().map(|p| (p.0 - t0) / span).collect();
    let v: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let sse = |c: [f64; 3]| -> f64 {
        s.iter()
            .zip(&v)
            .map(|(s, v)| {
                let e = v - (c[0] + c[1] * s + c[2] * s * s);
                e * e
            })
            .sum()
    };
    let mut center = [0.0, 0.0, 0.0];
    let mut half = [10.0, 10.0, 10.0];
    let steps = 12i32;
    let mut best = (sse(center), center);
    for _ in 0..60 {
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let c = [
                        center[0] + half[0] * i as f64 / steps as f64,
                        center[1] + half[1] * j as f64 / steps as f64,
                        center[2] + half[2] * k as f64 / steps as f64,
                    ];
                    let f = sse(c);
                    if f < best.0 {
                        best = (f, c);
                    }
                }
            }
        }
        center = best.1;
        for h in &mut half {
            *h *= 0.5;
        }
    }
    let c = best.1;
    let e: Vec<f64> = s.iter().zip(&v).map(|(s, v)| v - (c[0] + c[1] * s + c[2] * s * s)).collect();
    population_std(&e)
}

fn quadratic_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_beta = 0.0f64;
    let mut worst_std = 0.0f64;
    for _ in 0..100 {
        let beta = [rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2)];
        let n = rng.random_range(10..300);
        let t0 = rng.random_range(0.0..1000.0);
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let tau = k as f64 * 0.04;
                (t0 + tau, beta[0] + beta[1] * tau + beta[2] * tau * tau)
            })
            .collect();
        let fit = fit_quadratic(&samples).map_err(|e| e.to_string())?;
        for k in 0..3 {
            worst_beta = worst_beta.max((fit.beta[k] - beta[k]).abs());
        }
        worst_std = worst_std.max(fit.residual_std);
    }

    let samples = stop_profile();
    let fit = fit_quadratic(&samples).map_err(|e| e.to_string())?;
    let oracle = grid_search_std(&samples);
    let std_gap = (fit.residual_std - oracle).abs();

    let e: Vec<f64> = samples.iter().map(|(t, v)| v - fit.predict(*t)).collect();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut worst_orth = 0.0f64;
    for p in 0..3 {
        let basis: Vec<f64> = samples.iter().map(|(t, _)| (t - samples[0].0).powi(p)).collect();
        let dot: f64 = e.iter().zip(&basis).map(|(a, b)| a * b).sum();
        worst_orth = worst_orth.max(dot.abs() / (norm(&e) * norm(&basis)));
    }
    check(
        worst_beta <= 1e-9 && worst_std <= 1e-12 && std_gap <= 1e-6 && worst_orth <= 1e-6,
        format!(
            "model-in-span max |Δβ| {worst_beta:.2e}, max std {worst_std:.2e}; stop profile std {:.8} vs grid {oracle:.8} (gap {std_gap:.2e}); orthogonality {worst_orth:.2e}",
            fit.residual_std
        ),
    )
}

// Adapting and ordinary exemplars through the full pipeline

fn exemplar_std(reaction: Option<PedReaction>, noise: f64) -> Result<f64, String> {
    let s = scene();
    let mut spec = ScenarioSpec::new(1.4, 8.0, LaneSide::Near, 3.0);
    spec.approach_zone = Some("2".into());
    spec.ped_reaction = reaction;
    spec.noise_sigma = noise;
    spec.seed = 4;
    let g = generate(&spec, &s).map_err(|e| e.to_string())?;
    let out = run_pipeline(&[g.pedestrian.clone(), g.vehicle], &s, &[], &RunParams::default()).map_err(|e| e.to_string())?;
    out.fits
        .get(&g.pedestrian.track_id)
        .map(|f| f.residual_std)
        .ok_or_else(|| "no fit".to_string())
}

fn adaption_exemplars() -> Outcome {
    // Slows from 1.4 to 0.9 m/s inside the crossing region, then resumes.
    let adapting = exemplar_std(
        Some(PedReaction {
            t_d: 2.5,
            decel: 0.8,
            stop_duration: 0.5,
            min_speed: 0.9,
        }),
        0.01,
    )?;
    let ordinary = exemplar_std(None, 0.01)?;
    check(
        adapting >= 0.04 && ordinary <= 0.01,
        format!("adapting std {adapting:.4} m/s (>= 0.04), ordinary std {ordinary:.4} m/s (<= 0.01)"),
    )
}

// Odds-ratio table reconstruction

fn table_one() -> Outcome {
    // 11,089 pedestrians: 546 non-ordinary, 10,543 ordinary.
    let mut population = BTreeMap::new();
    let mut pc: Vec<PviRecord> = Vec::new();
    let mut add = |n: usize, label: MotionLabel, pet: Option<f64>, tag: &str| {
        for i in 0..n {
            let id = format!("{tag}{i:05}");
            population.insert(id.clone(), label);
            if let Some(pet) = pet {
                pc.push(record(&id, "v", pet));
            }
        }
    };
    add(19, MotionLabel::NonOrdinary, Some(-1.0), "na");
    add(181, MotionLabel::Ordinary, Some(-1.0), "oa");
    add(24, MotionLabel::NonOrdinary, Some(3.0), "nb");
    add(488, MotionLabel::Ordinary, Some(3.0), "ob");
    add(503, MotionLabel::NonOrdinary, None, "nc");
    add(9874, MotionLabel::Ordinary, None, "oc");
    let rows = odds_ratio_table(&population, &pc, &default_bands(), 4.0).map_err(|e| e.to_string())?;
    let band = &rows[1];
    let all = rows.last().unwrap();
    let mut worst = 0.0f64;
    for (row, want) in [(band, (2.07, 1.28, 3.34)), (all, (1.26, 0.92, 1.74))] {
        let or = row.odds_ratio.ok_or("undefined OR")?;
        let ci = row.ci95.ok_or("undefined CI")?;
        worst = worst.max(rel_err(or, want.0)).max(rel_err(ci.0, want.1)).max(rel_err(ci.1, want.2));
    }
    check(
        worst <= 0.05,
        format!(
            "band -2..0 OR {:.3} CI ({:.3}, {:.3}); PC OR {:.3} CI ({:.3}, {:.3}); worst rel err {:.2}%",
            band.odds_ratio.unwrap(),
            band.ci95.unwrap().0,
            band.ci95.unwrap().1,
            all.odds_ratio.unwrap(),
            all.ci95.unwrap().0,
            all.ci95.unwrap().1,
            worst * 100.0
        ),
    )
}

// Packaged critical scenario

fn fig7_replay() -> Outcome {
    let s = scene();
    let spec = ScenarioSpec::from_toml_str(&std::fs::read_to_string(fixture("critical_crossing/scenario.toml")).unwrap())
        .map_err(|e| e.to_string())?;
    let text = std::fs::read(fixture("critical_crossing/trajectories.csv")).unwrap();
    let tracks = parse_trajectories(&text[..], TrackFormat::Csv).map_err(|e| e.to_string())?;
    let g = generate(&spec, &s).map_err(|e| e.to_string())?;
    let mut regenerated = Vec::new();
    write_trajectories(&[g.pedestrian, g.vehicle], TrackFormat::Csv, &mut regenerated).unwrap();
    let annotations = parse_annotations(std::fs::File::open(fixture("critical_crossing/annotations.csv")).unwrap())
        .map_err(|e| e.to_string())?;
    let out = run_pipeline(&tracks, &s, &annotations, &RunParams::default()).map_err(|e| e.to_string())?;
    let r = out.records.iter().find(|r| r.pedestrian_id == "ped_c1").ok_or("no record")?;
    let critical = out.critical.iter().any(|c| c.pedestrian_id == "ped_c1");
    let std = r.residual_std.unwrap_or(f64::NAN);
    let tta = r.tta_at.and_then(|p| p.tta).unwrap_or(f64::NAN);
    let t_at = r.tta_at.map(|p| p.t).unwrap_or(f64::NAN);
    check(
        regenerated == text
            && (r.pet + 0.55).abs() <= 0.08
            && std >= 0.04
            && critical
            && (t_at - 22.67).abs() < 1e-9
            && (tta - 1.05).abs() <= 0.1,
        format!(
            "pet {:.3} s ({:?}), std {std:.4} m/s, critical {critical}, tta {tta:.3} s at t_p {t_at}, fixture regenerates identically {}",
            r.pet,
            r.constellation,
            regenerated == text
        ),
    )
}

// Monotonicity and determinism

fn subset(inner: &[PviRecord], outer: &[PviRecord]) -> bool {
    inner
        .iter()
        .all(|r| outer.iter().any(|o| o.pedestrian_id == r.pedestrian_id && o.vehicle_id == r.vehicle_id))
}

fn monotone(out: &PipelineOutput) -> bool {
    let selected: Vec<PviRecord> = out.records.iter().filter(|r| r.flags.selected_min_abs_pet).cloned().collect();
    subset(&out.critical, &out.pc) && subset(&out.pc, &selected) && out.counts.is_monotone()
}

fn determinism() -> Outcome {
    let s = scene();
    let mut all_monotone = true;
    let mut identical = true;
    let mut runs = 0;
    for seed in [1u64, 2, 3] {
        let set = fixture_set(50, seed, 0.01, &s).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        write_trajectories(&set.tracks(), TrackFormat::Csv, &mut csv).unwrap();
        let tracks = parse_trajectories(&csv[..], TrackFormat::Csv).map_err(|e| e.to_string())?;
        let params = RunParams::default();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut rendered = Vec::new();
        for dir in &dirs {
            let out = run_pipeline(&tracks, &s, &[], &params).map_err(|e| e.to_string())?;
            all_monotone &= monotone(&out);
            let inputs = vec![InputDigest::new("trajectories", std::path::Path::new("tracks.csv"), &csv)];
            rendered.push(render_run(&out, &params, CatalogFormat::Jsonl, inputs.clone()).0);
            export_run(&dir.path().join("out"), &out, &params, CatalogFormat::Jsonl, inputs).map_err(|e| e.to_string())?;
            runs += 1;
        }
        identical &= rendered[0] == rendered[1];
        for name in rendered[0].keys() {
            let a = std::fs::read(dirs[0].path().join("out").join(name)).unwrap();
            let b = std::fs::read(dirs[1].path().join("out").join(name)).unwrap();
            identical &= a == b && a == rendered[0][name];
        }
    }
    check(
        all_monotone && identical,
        format!("{runs} runs over 50-scenario fixture sets: critical ⊆ PC ⊆ selected {all_monotone}, byte-identical exports {identical}"),
    )
}

// Geometry kernel against Monte-Carlo membership

fn random_convex(rng: &mut ChaCha8Rng, center: Point, r: f64) -> Vec<Point> {
    let n = rng.random_range(3..10);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let (ax, ay, rot) = (r * rng.random_range(0.5..1.5), r * rng.random_range(0.5..1.5), rng.random_range(0.0..3.2f64));
    angles
        .into_iter()
        .map(|a| {
            let (x, y) = (ax * a.cos(), ay * a.sin());
            Point::new(center.x + x * rot.cos() - y * rot.sin(), center.y + x * rot.sin() + y * rot.cos())
        })
        .collect()
}

/// Point in a counter-clockwise convex vertex loop.
fn inside(poly: &[Point], p: Point) -> bool {
    (0..poly.len()).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
    })
}

/// Jittered-grid estimate of the area of `{p : member(p)}`. A second pass
/// at the same density covers the bounding box of the first pass hits.
fn monte_carlo(rng: &mut ChaCha8Rng, lo: Point, hi: Point, member: impl Fn(Point) -> bool) -> (f64, usize) {
    let m = 320;
    let mut pass = |lo: Point, hi: Point| {
        let (dx, dy) = ((hi.x - lo.x) / m as f64, (hi.y - lo.y) / m as f64);
        let mut hits = 0usize;
        let (mut hlo, mut hhi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for i in 0..m {
            for j in 0..m {
                let p = Point::new(
                    lo.x + (i as f64 + rng.random::<f64>()) * dx,
                    lo.y + (j as f64 + rng.random::<f64>()) * dy,
                );
                if member(p) {
                    hits += 1;
                    hlo = Point::new(hlo.x.min(p.x), hlo.y.min(p.y));
                    hhi = Point::new(hhi.x.max(p.x), hhi.y.max(p.y));
                }
            }
        }
        let pad = Point::new(2.0 * dx, 2.0 * dy);
        (hits as f64 * dx * dy, hlo.offset(-pad.x, -pad.y), hhi.offset(pad.x, pad.y))
    };
    let (coarse, hlo, hhi) = pass(lo, hi);
    if coarse == 0.0 {
        return (0.0, m * m);
    }
    let (hlo, hhi) = (Point::new(hlo.x.max(lo.x), hlo.y.max(lo.y)), Point::new(hhi.x.min(hi.x), hhi.y.min(hi.y)));
    (pass(hlo, hhi).0, 2 * m * m)
}

fn bounds(points: impl Iterator<Item = Point>) -> (Point, Point) {
    points.fold(
        (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), p| (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y))),
    )
}

fn geometry_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    let mut empty_ok = true;
    let mut samples = usize::MAX;
    for _ in 0..100 {
        let ca = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let cb = Point::new(ca.x + rng.random_range(-1.5..1.5), ca.y + rng.random_range(-1.5..1.5));
        let (va, vb) = (random_convex(&mut rng, ca, 1.5), random_convex(&mut rng, cb, 1.5));
        let (pa, pb) = (Polygon::new(va.clone()).unwrap(), Polygon::new(vb.clone()).unwrap());
        let area: f64 = polygon_intersection(&pa, &pb).unwrap().iter().map(|p| p.area()).sum();
        let (alo, ahi) = bounds(va.iter().copied());
        let (blo, bhi) = bounds(vb.iter().copied());
        let (lo, hi) = (Point::new(alo.x.max(blo.x), alo.y.max(blo.y)), Point::new(ahi.x.min(bhi.x), ahi.y.min(bhi.y)));
        if lo.x >= hi.x || lo.y >= hi.y {
            empty_ok &= area == 0.0;
            continue;
        }
        let (mc, n) = monte_carlo(&mut rng, lo, hi, |p| inside(&va, p) && inside(&vb, p));
        samples = samples.min(n);
        if mc == 0.0 {
            empty_ok &= area < 1e-9;
        } else {
            worst = worst.max(rel_err(area, mc));
        }
    }
    // Corridor-like unions of overlapping convex pieces.
    for _ in 0..20 {
        let start = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let step = Point::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
        let loops: Vec<Vec<Point>> = (0..15)
            .map(|k| {
                let c = Point::new(start.x + step.x * k as f64, start.y + step.y * k as f64);
                random_convex(&mut rng, c, 0.8)
            })
            .collect();
        let polys: Vec<Polygon> = loops.iter().map(|l| Polygon::new(l.clone()).unwrap()).collect();
        let area = Region::union_of_convex(&polys).area();
        let (lo, hi) = bounds(loops.iter().flatten().copied());
        let (mc, n) = monte_carlo(&mut rng, lo, hi, |p| loops.iter().any(|l| inside(l, p)));
        samples = samples.min(n);
        worst = worst.max(rel_err(area, mc));
    }
    check(
        worst <= 0.01 && empty_ok,
        format!("100 convex pairs + 20 corridors, {samples} points each, worst rel err {:.3}%", worst * 100.0),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("pet-oracle-equivalence", pet_oracle),
        ("quadratic-fit-correctness", quadratic_fit),
        ("motion-exemplar-separation", adaption_exemplars),
        ("odds-ratio-table-reconstruction", table_one),
        ("critical-scenario-replay", fig7_replay),
        ("monotonicity-and-determinism", determinism),
        ("geometry-kernel-monte-carlo", geometry_kernel),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name}: {d} [{secs:.2} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
