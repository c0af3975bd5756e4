use proptest::prelude::*;
use prunekit::schedules::{CyclicalSchedule, Schedule, ScheduleKind, ScheduleSpec};

fn sparsity_kind() -> impl Strategy<Value = ScheduleKind> {
    let frac = 0.0f64..=1.0;
    prop_oneof![
        frac.clone().prop_map(|value| ScheduleKind::Constant { value }),
        (0usize..300, frac.clone()).prop_map(|(step_iter, target)| ScheduleKind::Step {
            step_iter,
            target,
            initial: 0.0
        }),
        (frac.clone(), frac.clone(), proptest::option::of(1usize..200)).prop_map(|(a, b, ramp_iters)| {
            ScheduleKind::Linear {
                initial: a.min(b),
                target: a.max(b),
                ramp_iters,
            }
        }),
        (frac.clone(), frac, proptest::option::of(1usize..200)).prop_map(|(a, b, ramp_iters)| ScheduleKind::Cubic {
            initial: a.min(b),
            target: a.max(b),
            ramp_iters,
        }),
    ]
}

proptest! {
    #[test]
    fn single_sparsity_is_bounded_and_monotone(kind in sparsity_kind(), t_total in 1usize..300) {
        let spec = ScheduleSpec::new(t_total, kind);
        prop_assume!(spec.validate_sparsity().is_ok());
        let mut prev = f64::NEG_INFINITY;
        for t in 0..=t_total {
            let s = spec.eval_sparsity(t).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s >= prev, "s({t}) = {s} < {prev}");
            prev = s;
        }
        prop_assert!(spec.eval_sparsity(t_total + 1).is_err());
    }

    #[test]
    fn ramp_endpoints_are_exact(initial in 0.0f64..0.5, delta in 0.0f64..0.5, t_total in 1usize..500) {
        let target = initial + delta;
        for spec in [ScheduleSpec::cubic(t_total, initial, target), ScheduleSpec::linear(t_total, initial, target)] {
            prop_assert_eq!(spec.eval_sparsity(0).unwrap(), initial);
            prop_assert_eq!(spec.eval_sparsity(t_total).unwrap(), target);
        }
    }

    #[test]
    fn cyclical_is_periodic_after_first_cycle(
        kind in sparsity_kind(),
        cycles in 2usize..6,
        len in 1usize..60,
        extra in 0usize..10,
    ) {
        let total = cycles * len + extra;
        let cyc = CyclicalSchedule::new(kind, total, cycles);
        let sched = Schedule::from(cyc.clone());
        prop_assume!(sched.validate_sparsity().is_ok());
        let len = cyc.cycle_len();
        for t in len..total {
            // both t and t + len must lie in full cycles of index ≥ 2
            if t + len < cycles * len {
                prop_assert_eq!(sched.eval_sparsity(t).unwrap(), sched.eval_sparsity(t + len).unwrap());
            }
        }
        for t in 0..=total {
            let s = sched.eval_sparsity(t).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            if t > 0 && cyc.cycle_of(t) == cyc.cycle_of(t - 1) {
                prop_assert!(s >= sched.eval_sparsity(t - 1).unwrap());
            }
        }
    }

    #[test]
    fn cyclical_resets_downward(target in 0.2f64..=1.0, later_frac in 0.0f64..0.9, cycles in 2usize..6, len in 5usize..50) {
        let later = target * later_frac;
        let kind = ScheduleKind::Cubic { initial: 0.0, target, ramp_iters: None };
        let sched = Schedule::from(CyclicalSchedule::new(kind, cycles * len, cycles).with_initials(0.0, later));
        for m in 1..cycles {
            let t = m * len;
            prop_assert!(sched.eval_sparsity(t).unwrap() < sched.eval_sparsity(t - 1).unwrap());
        }
    }

    #[test]
    fn cyclical_learning_rate_restarts(base in 1e-4f64..1.0, factor in 0.01f64..1.0, cycles in 2usize..6, len in 2usize..50) {
        let kind = ScheduleKind::PiecewiseStepDecay { base, factor, drop_fraction: 0.75 };
        let sched = Schedule::from(CyclicalSchedule::new(kind, cycles * len, cycles));
        prop_assert!(sched.validate_learning_rate().is_ok());
        for t in 0..(cycles - 1) * len {
            prop_assert_eq!(sched.eval_learning_rate(t).unwrap(), sched.eval_learning_rate(t + len).unwrap());
            prop_assert!(sched.eval_learning_rate(t).unwrap() > 0.0);
        }
    }
}

#[test]
fn linear_midpoint_is_exact() {
    for t_total in [2usize, 10, 100, 1000, 4096] {
        for target in [0.1, 0.3, 0.7, 0.8, 0.9, 0.95, 1.0] {
            let spec = ScheduleSpec::linear(t_total, 0.0, target);
            assert_eq!(spec.eval_sparsity(t_total / 2).unwrap(), target / 2.0, "T = {t_total}, s_t = {target}");
        }
    }
}

#[test]
fn spec_round_trips_through_json() {
    let sched = Schedule::from(
        CyclicalSchedule::new(
            ScheduleKind::Cubic {
                initial: 0.0,
                target: 0.9,
                ramp_iters: Some(40),
            },
            200,
            4,
        )
        .with_initials(0.0, 0.45),
    );
    let text = serde_json::to_string(&sched).unwrap();
    let back: Schedule = serde_json::from_str(&text).unwrap();
    assert_eq!(back, sched);
}
