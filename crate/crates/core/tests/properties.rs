//! Invariants over randomly generated problems.

mod common;

use common::{close, random_weights, small_population};
use ope_lab::estimators::{per_trajectory_returns, WeightTable};
use ope_lab::exact::{enumerate_returns, enumerate_trajectories, exact_cov_terms, exact_moments, moment_dp_variance};
use ope_lab::montecarlo::{sample_trajectories, SamplerConfig};
use ope_lab::occupancy::{occupancies, ratio_normalization};
use ope_lab::scenarios::PopulationSpec;
use ope_lab::{EstimatorKind, Problem};
use proptest::prelude::*;

fn problem(seed: u64, index: usize) -> Problem {
    small_population(seed).generate(index).unwrap()
}

fn equal_policy_problem(seed: u64, index: usize) -> Problem {
    PopulationSpec { seed, equal_policy_fraction: 1.0, ..PopulationSpec::default() }.generate(index).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancies_are_distributions(seed in 0u64..1000, index in 0usize..1000) {
        let p = problem(seed, index);
        let occ = occupancies(&p).unwrap();
        for t in 0..p.horizon() {
            let mu: f64 = occ.state_marginal_mu(t).iter().sum();
            let pi: f64 = occ.state_marginal_pi(t).iter().sum();
            prop_assert!(close(mu, 1.0, 1e-12) && close(pi, 1.0, 1e-12));
        }
        for x in ratio_normalization(&occ) {
            prop_assert!(close(x, 1.0, 1e-10));
        }
    }

    #[test]
    fn enumerated_laws_are_distributions(seed in 0u64..1000, index in 0usize..1000) {
        let p = problem(seed, index);
        for kind in [EstimatorKind::Is, EstimatorKind::Pdis, EstimatorKind::Sis] {
            let law = enumerate_returns(&p, &kind).unwrap();
            prop_assert!(close(law.total_probability(), 1.0, 1e-12));
            prop_assert!(law.variance() >= -1e-12);
            prop_assert!(exact_moments(&p, &kind).unwrap().variance >= 0.0);
        }
    }

    #[test]
    fn equal_policies_make_every_estimator_the_return(seed in 0u64..1000, index in 0usize..1000) {
        let p = equal_policy_problem(seed, index);
        let gamma = p.mdp.discount();
        let trajectories = enumerate_trajectories(&p).unwrap();
        for kind in [EstimatorKind::Is, EstimatorKind::Pdis, EstimatorKind::Sis] {
            let values = per_trajectory_returns(&p, &kind, &trajectories).unwrap();
            for (tr, v) in trajectories.iter().zip(values) {
                prop_assert!(close(v, tr.discounted_return(gamma), 1e-12));
            }
        }
    }

    #[test]
    fn unit_weights_make_asis_the_return(seed in 0u64..1000, index in 0usize..1000) {
        let p = problem(seed, index);
        let ones = WeightTable::constant(p.horizon(), p.num_states(), p.num_actions(), 1.0).unwrap();
        let trajectories = enumerate_trajectories(&p).unwrap();
        let values = per_trajectory_returns(&p, &EstimatorKind::Asis(ones), &trajectories).unwrap();
        for (tr, v) in trajectories.iter().zip(values) {
            prop_assert!(close(v, tr.discounted_return(p.mdp.discount()), 1e-12));
        }
    }

    #[test]
    fn covariance_totals_are_variances(seed in 0u64..1000, index in 0usize..1000) {
        let p = problem(seed, index);
        let cov = exact_cov_terms(&p).unwrap();
        let pdis = exact_moments(&p, &EstimatorKind::Pdis).unwrap().variance;
        let sis = exact_moments(&p, &EstimatorKind::Sis).unwrap().variance;
        prop_assert!(close(cov.pdis.total(), pdis, 1e-9));
        prop_assert!(close(cov.sis.total(), sis, 1e-9));
    }

    #[test]
    fn asis_dp_matches_enumeration(seed in 0u64..1000, index in 0usize..1000, wseed in any::<u64>()) {
        let p = problem(seed, index);
        let kind = EstimatorKind::Asis(random_weights(&p, wseed));
        let e = exact_moments(&p, &kind).unwrap();
        let d = moment_dp_variance(&p, &kind).unwrap();
        prop_assert!(close(e.mean, d.mean, 1e-9) && close(e.variance, d.variance, 1e-9));
    }

    #[test]
    fn sampling_is_a_function_of_seed(seed in any::<u64>(), n in 1usize..200) {
        let p = problem(0, 0);
        let a = sample_trajectories(&p, &SamplerConfig::new(seed, n).with_workers(1)).unwrap();
        let b = sample_trajectories(&p, &SamplerConfig::new(seed, n).with_workers(3)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sampled_paths_have_behavior_support(seed in any::<u64>(), index in 0usize..1000) {
        let p = problem(seed % 1000, index);
        let batch = sample_trajectories(&p, &SamplerConfig::new(seed, 20)).unwrap();
        for tr in &batch.trajectories {
            prop_assert_eq!(tr.len(), p.horizon());
            for st in &tr.steps {
                prop_assert!(p.behavior.prob(st.state, st.action) > 0.0);
            }
        }
    }
}
