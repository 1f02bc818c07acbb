use proptest::prelude::*;
use swave::sequence::{
    fundamental_period, plan_sequence, spectral_separability, validate_synchronization, SequenceParams,
};

fn params() -> impl Strategy<Value = SequenceParams> {
    (
        prop::sample::select(vec![5.0, 10.0, 20.0, 25.0]),
        prop::collection::btree_set(1u32..=8, 1..=4),
        prop::sample::select(vec![2000.0, 3000.0, 5000.0]),
        1usize..=12,
        0.05f64..0.3,
    )
        .prop_map(|(base, mult, frame_rate, n_planes, min_imaging)| SequenceParams {
            frequencies: mult.into_iter().map(|m| base * m as f64).collect(),
            frame_rate,
            n_planes,
            min_imaging,
            ..SequenceParams::deep()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn plans_are_synchronized(p in params()) {
        let plan = plan_sequence(&p).unwrap();
        let rep = validate_synchronization(&plan);
        prop_assert!(rep.passed, "{:?}", rep.checks);
        prop_assert!(rep.residual.abs() < 1e-12);
    }

    #[test]
    fn frame_budget_identity(p in params()) {
        let plan = plan_sequence(&p).unwrap();
        let per_plane = (plan.imaging_duration * plan.frame_rate).round() as usize;
        prop_assert_eq!(plan.frames_per_plane, per_plane);
        prop_assert_eq!(plan.total_frames, plan.n_planes * per_plane);
    }

    #[test]
    fn every_plane_starts_at_the_same_phase(p in params()) {
        let plan = plan_sequence(&p).unwrap();
        let t0 = fundamental_period(&plan.frequencies).unwrap();
        let cycles = |t: f64| {
            let c = (t / t0).fract();
            c.min(1.0 - c)
        };
        let first = plan.imaging_start(0);
        for q in 0..plan.n_planes {
            let d = cycles(plan.imaging_start(q) - first);
            prop_assert!(d < 1e-9, "plane {q} off by {d} cycles");
        }
    }
}

#[test]
fn longer_windows_never_worsen_separation() {
    for freqs in [vec![40.0, 50.0, 60.0], vec![100.0, 160.0, 200.0], vec![45.0, 50.0]] {
        let mut previous: Option<Vec<f64>> = None;
        for ms in (60..=400).step_by(20) {
            let plan = plan_sequence(&SequenceParams {
                frequencies: freqs.clone(),
                min_imaging: ms as f64 * 1e-3,
                ..SequenceParams::deep()
            })
            .unwrap();
            let rep = spectral_separability(&plan, 0.05);
            let dev: Vec<f64> = rep.tones.iter().map(|t| t.deviation).collect();
            if let Some(prev) = &previous {
                for (a, b) in prev.iter().zip(&dev) {
                    assert!(b <= a, "{freqs:?} at {ms} ms: deviation {b} after {a}");
                }
            }
            previous = Some(dev);
        }
    }
}

#[test]
fn deep_and_shallow_presets() {
    let deep = plan_sequence(&SequenceParams::deep()).unwrap();
    assert_eq!((deep.frames_per_plane, deep.total_frames), (549, 5490));
    assert!((deep.total_time - 2.0).abs() < 1e-12);
    let shallow = plan_sequence(&SequenceParams::shallow()).unwrap();
    assert_eq!((shallow.frames_per_plane, shallow.total_frames), (399, 3990));
    assert!((shallow.total_time - 1.5).abs() < 1e-12);
}

#[test]
fn incommensurable_tones_are_rejected() {
    let r = plan_sequence(&SequenceParams { frequencies: vec![40.0, 63.7], ..SequenceParams::deep() });
    assert!(r.is_err());
}

#[test]
fn short_periods_take_as_many_multiples_as_needed() {
    let plan = plan_sequence(&SequenceParams { frequencies: vec![80.0], ..SequenceParams::deep() }).unwrap();
    assert!((plan.per_plane_period - 0.2).abs() < 1e-12, "period {}", plan.per_plane_period);
    assert!(validate_synchronization(&plan).passed);
}
