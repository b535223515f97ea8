//! Independent routes to the same exact quantities must agree.

mod common;

use common::{close, long_population, random_weights, small_population};
use ope_lab::conditions::{lemma2_gap, Conditioning};
use ope_lab::estimators::{batch_estimate, rcis_estimate};
use ope_lab::exact::{
    enumerate_returns, exact_moments, moment_dp_variance, return_conditioned_variance, weighted_return_law,
};
use ope_lab::mdp::target_value;
use ope_lab::montecarlo::{estimator_stats, sample_trajectories, SamplerConfig};
use ope_lab::occupancy::{conditional_weight_check, occupancies, ratios_normalized};
use ope_lab::scenarios::counterexample_mdp;
use ope_lab::EstimatorKind;

const PLAIN: [EstimatorKind<f64>; 3] = [EstimatorKind::Is, EstimatorKind::Pdis, EstimatorKind::Sis];

#[test]
fn enumeration_means_equal_target_value() {
    let pop = small_population(0);
    for i in 0..200 {
        let p = pop.generate::<f64>(i).unwrap();
        let v = target_value(&p).unwrap();
        for kind in &PLAIN {
            let m = exact_moments(&p, kind).unwrap();
            assert!((m.mean - v).abs() <= 1e-10, "problem {i} {}: {} vs {v}", kind.id(), m.mean);
        }
    }
}

#[test]
fn oracle_weights_are_conditional_ratio_expectations() {
    let pop = small_population(0);
    for i in 0..200 {
        let p = pop.generate::<f64>(i).unwrap();
        assert!(ratios_normalized(&occupancies(&p).unwrap()));
        for t in 0..p.horizon() {
            let gap = conditional_weight_check(&p, t).unwrap();
            assert!(gap <= 1e-10, "problem {i} step {t}: {gap:e}");
        }
    }
}

#[test]
fn moment_dp_matches_enumeration() {
    let pop = long_population(1);
    for i in 0..100 {
        let p = pop.generate::<f64>(i).unwrap();
        let mut kinds = PLAIN.to_vec();
        kinds.push(EstimatorKind::Asis(random_weights(&p, i as u64)));
        for kind in &kinds {
            let e = exact_moments(&p, kind).unwrap();
            let d = moment_dp_variance(&p, kind).unwrap();
            assert!(close(e.mean, d.mean, 1e-9), "problem {i} {} mean", kind.id());
            assert!(close(e.variance, d.variance, 1e-9), "problem {i} {}: {} vs {}", kind.id(), e.variance, d.variance);
        }
    }
}

#[test]
fn forward_law_matches_enumerated_law() {
    let pop = small_population(2);
    for i in 0..50 {
        let p = pop.generate::<f64>(i).unwrap();
        let fwd = weighted_return_law(&p, &EstimatorKind::Sis).unwrap();
        let enu = enumerate_returns(&p, &EstimatorKind::Sis).unwrap();
        assert!(close(fwd.total_probability(), 1.0, 1e-12));
        assert!(close(fwd.mean(), enu.mean(), 1e-10));
        assert!(close(fwd.variance(), enu.variance(), 1e-9));
    }
}

#[test]
fn lemma2_holds_for_both_conditionings() {
    let pop = small_population(3);
    for i in 0..200 {
        let p = pop.generate::<f64>(i).unwrap();
        for c in [Conditioning::Prefix, Conditioning::StateAction] {
            let gap = lemma2_gap(&p, c).unwrap();
            assert!(gap.holds(1e-10), "problem {i} {c:?}: {gap:?}");
        }
        let same = lemma2_gap(&p, Conditioning::Trajectory).unwrap();
        assert!(same.lhs.abs() <= 1e-12 && same.rhs.abs() <= 1e-12);
    }
}

#[test]
fn return_conditioning_never_increases_variance() {
    let pop = small_population(4);
    for i in 0..100 {
        let p = pop.generate::<f64>(i).unwrap();
        let r = return_conditioned_variance(&p).unwrap();
        assert!(r.conditioned <= r.crude + 1e-10 * r.crude.max(1.0), "problem {i}: {r:?}");
    }
}

#[test]
fn rcis_reproduces_is_on_every_batch() {
    let pop = small_population(5);
    for i in 0..100 {
        let p = pop.generate::<f64>(i).unwrap();
        let n = [2, 10, 1000][i % 3];
        let batch = sample_trajectories(&p, &SamplerConfig::new(i as u64, n)).unwrap();
        let is = batch_estimate(&p, &EstimatorKind::Is, &batch.trajectories).unwrap().estimate;
        let rcis = rcis_estimate(&p, &batch.trajectories).unwrap().estimate;
        assert!((is - rcis).abs() <= 1e-10 * is.abs().max(1.0), "problem {i}: {is} vs {rcis}");
    }
    // all returns equal: the design [G, 1] has rank one
    let p = counterexample_mdp::<f64>(1).unwrap();
    let batch = sample_trajectories(&p, &SamplerConfig::new(0, 50)).unwrap();
    let same: Vec<_> = batch.trajectories.iter().filter(|t| t.discounted_return(1.0) == 1.0).cloned().collect();
    assert!(same.len() >= 2);
    let is = batch_estimate(&p, &EstimatorKind::Is, &same).unwrap().estimate;
    let rcis = rcis_estimate(&p, &same).unwrap().estimate;
    assert!((is - rcis).abs() <= 1e-10);
}

#[test]
fn monte_carlo_agrees_with_exact_moments() {
    let p = counterexample_mdp::<f64>(2).unwrap();
    for kind in &PLAIN {
        let exact = exact_moments(&p, kind).unwrap();
        let est = estimator_stats(&p, kind, &SamplerConfig::new(17, 200_000)).unwrap();
        let se = est.stderr.unwrap();
        assert!((est.estimate - exact.mean).abs() <= 4.0 * se, "{}", kind.id());
        assert!(close(est.variance().unwrap(), exact.variance, 0.02), "{}", kind.id());
    }
}
