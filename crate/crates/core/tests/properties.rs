use fnc_core::elm::{feature_vector, init_weights, FeatureMap};
use fnc_core::io::{parse_scenario, parse_system, render_scenario};
use fnc_core::margin::{margin_bisect, MarginSpec};
use fnc_core::pwl::{train_elm_pwl, PwlModel, PwlOptions, Segment, TrainingMeta};
use fnc_core::reduced::{aggregate, analytic_nadir, ReducedModel};
use fnc_core::sfr::{
    build_system, find_nadir, ramp_deadband, simulate_response, CommitmentScenario, SimOptions, TgParams,
};
use fnc_core::System;
use proptest::prelude::*;

fn desk() -> System {
    parse_system(include_str!("../../../data/desk_system.toml")).unwrap()
}

fn meta() -> TrainingMeta<f64> {
    TrainingMeta {
        seed: 0,
        segments: 0,
        restarts: 0,
        iterations: 0,
        objective: 0.0,
        objective_history: vec![],
    }
}

fn scenario_strategy() -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<f64>)> {
    (
        prop::collection::vec(any::<bool>(), 10),
        prop::collection::vec(any::<bool>(), 4),
        prop::collection::vec(0.0..1.0f64, 4),
    )
}

fn build(model: &System, (on, part, frac): (Vec<bool>, Vec<bool>, Vec<f64>)) -> CommitmentScenario<f64> {
    let power: Vec<f64> = model.ress().iter().zip(&frac).map(|(r, f)| f * r.capacity_mw).collect();
    let part = part.iter().zip(&frac).map(|(&p, &f)| p && f >= 0.3).collect();
    CommitmentScenario::new(model, on, part, power).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_of_affine_is_concave(
        coefs in prop::collection::vec((prop::collection::vec(-5.0..5.0f64, 3), -5.0..5.0f64), 1..6),
        a in prop::collection::vec(-3.0..3.0f64, 3),
        b in prop::collection::vec(-3.0..3.0f64, 3),
        t in 0.0..1.0f64,
    ) {
        let segs = coefs.into_iter().map(|(c, h)| Segment { c, h }).collect();
        let m = PwlModel::new(segs, meta()).unwrap();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = m.eval(&mid).unwrap();
        let rhs = t * m.eval(&a).unwrap() + (1.0 - t) * m.eval(&b).unwrap();
        prop_assert!(lhs >= rhs - 1e-9);
    }

    #[test]
    fn deadband_is_odd_and_continuous(x in -1.0..1.0f64, db in 0.0..0.1f64) {
        prop_assert_eq!(ramp_deadband(-x, db), -ramp_deadband(x, db));
        prop_assert!(ramp_deadband(x, db).abs() <= (x.abs() - db).max(0.0) + 1e-15);
        if x.abs() <= db {
            prop_assert_eq!(ramp_deadband(x, db), 0.0);
        }
    }

    #[test]
    fn participation_needs_enough_output(frac in 0.0..1.0f64) {
        let model = desk();
        let cap = model.ress()[0].capacity_mw;
        let mut power = vec![0.0; 4];
        power[0] = frac * cap;
        let part = vec![true, false, false, false];
        let r = CommitmentScenario::new(&model, vec![true; 10], part, power);
        prop_assert_eq!(r.is_ok(), frac >= 0.3);
    }

    #[test]
    fn scenario_file_round_trip(raw in scenario_strategy()) {
        let model = desk();
        let s = build(&model, raw);
        let back = parse_scenario(&render_scenario(&s), &model).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn affine_map_matches_features(raw in scenario_strategy(), seed in 0u64..1000) {
        let model = desk();
        let s = build(&model, raw);
        let w = init_weights(6, seed, &model).unwrap();
        let direct = feature_vector(&w, &model, &s).unwrap().values;
        let (x, u) = FeatureMap::decisions(&model, &s);
        let mapped = FeatureMap::new(&w, &model).unwrap().apply(&x, &u);
        for (p, q) in direct.iter().zip(&mapped) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn training_never_overestimates(
        data in prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 2), -1.0..1.0f64), 8..30),
        segments in 1usize..4,
        seed in 0u64..100,
    ) {
        let (z, y): (Vec<Vec<f64>>, Vec<f64>) = data.into_iter().unzip();
        let opts = PwlOptions { segments, seed, restarts: 2, max_iters: 10, ..PwlOptions::default() };
        let m = train_elm_pwl(&z, &y, &opts).unwrap();
        for (zk, yk) in z.iter().zip(&y) {
            prop_assert!(m.eval(zk).unwrap() <= *yk);
        }
    }

    #[test]
    fn analytic_nadir_scales_with_disturbance(
        h in 2.0..10.0f64, r in 10.0..30.0f64, dp in 0.01..0.3f64,
    ) {
        let rm = ReducedModel::from_parameters(h, 1.0, r, 0.3 * r, 7.0).unwrap();
        prop_assume!(rm.zeta < 1.0);
        let (t1, n1) = analytic_nadir(&rm, dp).unwrap();
        let (t2, n2) = analytic_nadir(&rm, 2.0 * dp).unwrap();
        prop_assert!((t1 - t2).abs() < 1e-12);
        prop_assert!((2.0 * n1 - n2).abs() <= 1e-12 * n2.abs());
        prop_assert!(n1 < 0.0);
    }
}

#[test]
fn fast_lags_reduce_to_the_second_order_model() {
    let tg: TgParams<f64> = TgParams {
        t_reheat: 7.0,
        t_governor: 0.005,
        t_turbine: 0.005,
        hp_fraction: 0.3,
        droop: 0.05,
        inertia: 5.0,
        capacity_mva: 1000.0,
        deadband: 0.0,
    };
    let model = build_system(vec![tg], vec![], vec![], 1.0, 1000.0, 50.0).unwrap();
    let s = CommitmentScenario::all_on(&model);
    let rm = aggregate(&model, &s).unwrap();
    assert!(rm.zeta < 1.0);
    let (t_m, nadir) = analytic_nadir(&rm, 0.1).unwrap();
    let opts = SimOptions {
        early_stop_s: None,
        ..SimOptions::default()
    };
    let full = find_nadir(&simulate_response(&model, &s, 0.1, &opts).unwrap()).unwrap();
    assert!((full.delta_f_pu - nadir).abs() < 1e-2 * nadir.abs(), "{} vs {nadir}", full.delta_f_pu);
    assert!((full.t_s - t_m).abs() < 0.05);
}

#[test]
fn margin_grows_with_headroom_of_the_limit() {
    let model = desk();
    let s = CommitmentScenario::all_on(&model);
    let tight = margin_bisect(&model, &s, &MarginSpec::default()).unwrap().margin_pu;
    let loose = MarginSpec {
        delta_f_max_pu: 0.02,
        ..MarginSpec::default()
    };
    let wide = margin_bisect(&model, &s, &loose).unwrap().margin_pu;
    assert!(wide > tight);
}
