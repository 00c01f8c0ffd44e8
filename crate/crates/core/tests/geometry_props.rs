mod common;

use proptest::prelude::*;

use pvi_core::geometry::{polygon_intersection, Point, Polygon};
use pvi_core::scene::{classify_zone_transition, swept_corridor};
use pvi_core::trajectory::{resample_and_smooth, RawSample, RawTrack, ResampleParams, RoadUserClass};

/// Star-shaped, hence simple, polygon around `c`.
fn star(c: (f64, f64), radii: &[f64], phase: f64) -> Polygon {
    let n = radii.len();
    let pts = radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = phase + k as f64 * std::f64::consts::TAU / n as f64;
            Point::new(c.0 + r * a.cos(), c.1 + r * a.sin())
        })
        .collect();
    Polygon::new(pts).unwrap()
}

fn star_strategy() -> impl Strategy<Value = Polygon> {
    (
        (-2.0..2.0f64, -2.0..2.0f64),
        prop::collection::vec(0.4..2.5f64, 3..12),
        0.0..1.0f64,
    )
        .prop_map(|(c, r, p)| star(c, &r, p))
}

fn area_of(pieces: &[Polygon]) -> f64 {
    pieces.iter().map(|p| p.area()).sum()
}

fn crossing(t0: f64, speed: f64, x: f64) -> RawTrack {
    let n = (14.0 / speed / 0.04) as usize;
    RawTrack {
        track_id: "p".into(),
        class: RoadUserClass::Pedestrian,
        samples: (0..n)
            .map(|k| RawSample::at(t0 + k as f64 * 0.04, x, -2.5 + speed * k as f64 * 0.04))
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn intersection_area_commutes(a in star_strategy(), b in star_strategy()) {
        let ab = area_of(&polygon_intersection(&a, &b).unwrap());
        let ba = area_of(&polygon_intersection(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() < 1e-9, "{} vs {}", ab, ba);
    }

    #[test]
    fn union_bound(a in star_strategy(), b in star_strategy()) {
        let inter = area_of(&polygon_intersection(&a, &b).unwrap());
        let union = a.area() + b.area() - inter;
        prop_assert!(inter >= -1e-12);
        prop_assert!(union >= a.area().max(b.area()) - 1e-9);
    }

    #[test]
    fn zone_transition_ignores_time_shift(
        speed in 1.0..2.0f64,
        x in -5.0..5.0f64,
        k in -500i64..500,
    ) {
        let s = common::scene();
        let p = ResampleParams::default();
        let shift = k as f64 * 0.04;
        let a = resample_and_smooth(&crossing(10.0, speed, x), &p).unwrap();
        let b = resample_and_smooth(&crossing(10.0 + shift, speed, x), &p).unwrap();
        let za = classify_zone_transition(&a, &s).unwrap();
        let zb = classify_zone_transition(&b, &s).unwrap();
        prop_assert_eq!(&za.approach_zone, &zb.approach_zone);
        prop_assert_eq!(&za.target_zone, &zb.target_zone);
        prop_assert!((za.roi_entry + shift - zb.roi_entry).abs() < 1e-6);
        prop_assert!((za.roi_exit + shift - zb.roi_exit).abs() < 1e-6);
        prop_assert!((za.approach_exit + shift - zb.approach_exit).abs() < 1e-6);
    }

    #[test]
    fn corridor_grows_with_window(
        speed in 1.0..2.0f64,
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
        grow in 0.0..3.0f64,
    ) {
        let p = ResampleParams::default();
        let traj = resample_and_smooth(&crossing(0.0, speed, 0.0), &p).unwrap();
        let last = (traj.len() - 1) as f64;
        let at = |f: f64| traj.times[(f * last).round() as usize];
        let (lo, hi) = (at(a.min(b)), at(a.max(b)));
        let small = swept_corridor(&traj, (lo, hi)).unwrap();
        let large = swept_corridor(&traj, ((lo - grow).max(traj.t_s()), (hi + grow).min(traj.t_e()))).unwrap();
        prop_assert!(large.area() >= small.area() - 1e-9);
    }
}
