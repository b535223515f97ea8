//! The single-precision instantiation tracks double precision.

use ope_lab::exact::{exact_moments, moment_dp_variance};
use ope_lab::scenarios::{counterexample_mdp, random_ergodic, two_lane, PopulationSpec};
use ope_lab::EstimatorKind;

#[test]
fn counterexamples_in_f32() {
    for which in 1..=3 {
        let p64 = counterexample_mdp::<f64>(which).unwrap();
        let p32 = counterexample_mdp::<f32>(which).unwrap();
        for (k64, k32) in [
            (EstimatorKind::Is, EstimatorKind::Is),
            (EstimatorKind::Pdis, EstimatorKind::Pdis),
            (EstimatorKind::Sis, EstimatorKind::Sis),
        ] {
            let a = exact_moments(&p64, &k64).unwrap().variance;
            let b = exact_moments(&p32, &k32).unwrap().variance;
            assert!((a - b as f64).abs() <= 1e-5, "example {which}");
        }
    }
}

#[test]
fn moment_dp_agrees_with_enumeration_in_f32() {
    let pop = PopulationSpec { seed: 9, ..PopulationSpec::default() };
    for i in 0..30 {
        let p = pop.generate::<f32>(i).unwrap();
        for kind in [EstimatorKind::Is, EstimatorKind::Pdis, EstimatorKind::Sis] {
            let e = exact_moments(&p, &kind).unwrap().variance;
            let d = moment_dp_variance(&p, &kind).unwrap().variance;
            assert!((e - d).abs() <= 1e-4 * e.abs().max(1.0), "problem {i}: {e} vs {d}");
        }
    }
}

#[test]
fn two_lane_and_ergodic_in_f32() {
    let v = moment_dp_variance(&two_lane::<f32>(16).unwrap(), &EstimatorKind::Sis).unwrap().variance;
    assert!((v - 256.0).abs() <= 256.0 * 1e-5);
    let a = moment_dp_variance(&random_ergodic::<f64>(7, 5, 2, 20, 1.0, 0.2).unwrap(), &EstimatorKind::Is).unwrap();
    let b = moment_dp_variance(&random_ergodic::<f32>(7, 5, 2, 20, 1.0, 0.2).unwrap(), &EstimatorKind::Is).unwrap();
    assert!((a.variance - b.variance as f64).abs() <= 1e-3 * a.variance);
}
