//! Ground-truth soundness and schedule structure of generated datasets.

use grad_core::inject::{
    build_labeled_dataset, plan_schedule, seeded_rng, BiasType, InjectionKind, Profile, SchedulePlan, TimeType,
};
use grad_core::trace::{Column, Series};
use grad_core::Channel;
use proptest::prelude::*;

fn smooth_series(n: usize) -> Series {
    let col = |channel, f: fn(f64) -> f64| Column { channel, values: (0..n).map(|i| f(i as f64)).collect() };
    Series {
        source_id: "s".into(),
        timestamps: (0..n).map(|i| i as f64 * 0.1).collect(),
        columns: vec![col(Channel::Latitude, |t| (t / 300.0).sin()), col(Channel::Longitude, |t| (t / 500.0).cos())],
    }
}

fn plans() -> Vec<SchedulePlan> {
    vec![
        SchedulePlan::profile(Profile::Mmitss),
        SchedulePlan::profile(Profile::Zurich),
        SchedulePlan::scenario(InjectionKind::Instant, 100.0, 1, 0.05),
        SchedulePlan::scenario(InjectionKind::Constant, 5.0, 10, 0.05),
        SchedulePlan::scenario(InjectionKind::Bias, 5.0, 30, 0.05),
        SchedulePlan::scenario(InjectionKind::Drift, 4.0, 10, 0.05),
    ]
}

#[test]
fn corrupted_differs_exactly_where_labeled() {
    let series = smooth_series(5000);
    for plan in plans() {
        for seed in 0..5 {
            let ds = build_labeled_dataset(&series, &plan, seed).unwrap();
            for ch in &ds.channels {
                for i in 0..ch.len() {
                    let l = ch.labels[i];
                    assert!(l.is_consistent());
                    assert_eq!(ch.corrupted[i] != ch.clean[i], l.is_anomaly(), "{plan:?} seed {seed} step {i}");
                }
            }
        }
    }
}

#[test]
fn same_seed_same_dataset() {
    let series = smooth_series(3000);
    let plan = SchedulePlan::profile(Profile::Mmitss);
    let a = build_labeled_dataset(&series, &plan, 9).unwrap();
    let b = build_labeled_dataset(&series, &plan, 9).unwrap();
    let c = build_labeled_dataset(&series, &plan, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn episodes_are_disjoint_and_separated() {
    for plan in plans() {
        for seed in 0..20 {
            let schedule = plan_schedule(6000, &plan, Channel::Latitude, &mut seeded_rng(seed)).unwrap();
            for w in schedule.windows(2) {
                assert!(w[0].end() <= w[1].at, "{plan:?} seed {seed}: {:?} overlaps {:?}", w[0], w[1]);
            }
            if let SchedulePlan::Scenario(s) = &plan {
                for w in schedule.windows(2) {
                    assert!(w[1].at - w[0].end() >= s.min_gap);
                }
            }
            assert!(schedule.iter().all(|p| p.at >= 30 && p.end() <= 6000));
        }
    }
}

#[test]
fn permanent_runs_are_long_and_intermittent_runs_short() {
    let series = smooth_series(20_000);
    for seed in 0..5 {
        let ds = build_labeled_dataset(&series, &SchedulePlan::profile(Profile::Zurich), seed).unwrap();
        for ch in &ds.channels {
            let mut i = 0;
            while i < ch.len() {
                let l = ch.labels[i];
                let mut j = i + 1;
                while j < ch.len() && ch.labels[j] == l {
                    j += 1;
                }
                match l.time_type {
                    TimeType::Permanent => assert!(j - i >= 19, "permanent run of {}", j - i),
                    TimeType::Transient | TimeType::Intermittent if l.bias_type == BiasType::Jump => {
                        assert!(j - i <= 2, "{l:?} run of {}", j - i)
                    }
                    _ => {}
                }
                i = j;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_point_rate_tracks_request(rate in 0.01..0.2f64, duration in 1usize..15, seed in 0u64..1000) {
        let kind = if duration == 1 { InjectionKind::Instant } else { InjectionKind::Bias };
        let plan = SchedulePlan::scenario(kind, 3.0, duration, rate);
        let n = 10_000;
        let ds = build_labeled_dataset(&smooth_series(n), &plan, seed).unwrap();
        for ch in &ds.channels {
            let got = ch.labels.iter().filter(|l| l.is_anomaly()).count() as f64 / n as f64;
            prop_assert!((got - rate).abs() <= duration as f64 / n as f64, "rate {got} for {rate}");
        }
    }
}
