//! Finite-horizon signatures of the asymptotic variance results.

use ope_lab::exact::{moment_dp_variance, weighted_return_law};
use ope_lab::mdp::{EvaluationProblem, PolicyTable, Rewards, TabularMdp};
use ope_lab::montecarlo::SamplerConfig;
use ope_lab::occupancy::{diagnostics, kl_rate};
use ope_lab::scenarios::{counterexample_mdp, random_ergodic, two_lane};
use ope_lab::sweeps::{
    asis_experiment, horizon_sweep, likelihood_rate_check, min_growth_ratio, pdis_regime, sis_quadratic_constant,
    Regime, SweepMethod, BETA_MAX,
};
use ope_lab::{EstimatorId, EstimatorKind, Problem};

fn ergodic(t: usize) -> ope_lab::Result<Problem> {
    random_ergodic(7, 5, 2, t, 1.0, 0.2)
}

#[test]
fn two_lane_sis_variance_is_t_squared() {
    for t in [4, 8, 16, 32, 64] {
        let p = two_lane::<f64>(t).unwrap();
        let m = moment_dp_variance(&p, &EstimatorKind::Sis).unwrap();
        let t2 = (t * t) as f64;
        assert!((m.variance - t2).abs() <= 1e-9 * t2, "T={t}: {}", m.variance);
        let law = weighted_return_law(&p, &EstimatorKind::Sis).unwrap();
        assert_eq!(law.atoms, vec![(0.0, 0.5), (2.0 * t as f64, 0.5)]);
    }
}

#[test]
fn is_grows_geometrically_and_sis_quadratically() {
    let p = ergodic(200).unwrap();
    assert!(kl_rate(&p).unwrap() > 0.0);
    let is = horizon_sweep(ergodic, &(8..=30).collect::<Vec<_>>(), &[EstimatorId::Is], &SweepMethod::ExactDp).unwrap();
    let rows: Vec<_> = is.rows_for(EstimatorId::Is).collect();
    assert!(min_growth_ratio(&rows, 8, 30).unwrap() >= 1.02);

    let c = sis_quadratic_constant(&p).unwrap();
    let sis = horizon_sweep(ergodic, &(4..=200).collect::<Vec<_>>(), &[EstimatorId::Sis], &SweepMethod::ExactDp).unwrap();
    for r in sis.rows_for(EstimatorId::Sis) {
        assert!(r.variance / (r.horizon * r.horizon) as f64 <= c, "T={}", r.horizon);
    }
}

#[test]
fn pdis_regimes() {
    let d = diagnostics(&ergodic(4).unwrap()).unwrap();
    let grid: Vec<usize> = (4..=200).collect();
    let rows = pdis_regime(|t, g| random_ergodic::<f64>(7, 5, 2, t, g, 0.2), &grid, &[1.0 / d.u_rho, 1.0]).unwrap();
    assert_eq!(rows[0].classification, Regime::Polynomial);
    assert!(rows[0].beta <= BETA_MAX);
    assert_eq!(rows[1].classification, Regime::Exponential);
    assert!(rows.iter().all(|r| r.consistent));
}

/// One state, two actions, `U_ρ = 1.2`.
fn single_state(t: usize, gamma: f64) -> ope_lab::Result<Problem> {
    let mdp = TabularMdp::new(1, 2, t, gamma, vec![1.0, 1.0], Rewards::Stationary(vec![1.0, 0.5]), vec![1.0])?;
    EvaluationProblem::new(mdp, PolicyTable::uniform(1, 2), PolicyTable::from_rows(vec![vec![0.6, 0.4]])?)
}

#[test]
fn bounded_ratio_discount_gives_polynomial_pdis() {
    let rows = pdis_regime(single_state, &(4..=60).collect::<Vec<_>>(), &[0.5]).unwrap();
    assert!((rows[0].u_rho_gamma - 0.6).abs() < 1e-12);
    assert_eq!(rows[0].classification, Regime::Polynomial);
}

#[test]
fn zero_discount_pdis_variance_is_constant() {
    let first = moment_dp_variance(&single_state(1, 0.0).unwrap(), &EstimatorKind::Pdis).unwrap().variance;
    for t in [2, 5, 20] {
        let v = moment_dp_variance(&single_state(t, 0.0).unwrap(), &EstimatorKind::Pdis).unwrap().variance;
        assert!((v - first).abs() <= 1e-12);
    }
}

#[test]
fn log_ratio_rate_approaches_kl_rate() {
    let r = likelihood_rate_check(&ergodic(1).unwrap(), 10_000, &SamplerConfig::new(11, 100)).unwrap();
    assert!(r.within(3.0), "{r:?}");
    assert_eq!(r.n_excluded, 0);
    assert!(r.frac_small > 0.9);
}

#[test]
fn constant_ratio_chain_rate_is_log_ratio() {
    // μ always takes action 0, where π/μ = 1/2; π's other action is never sampled
    let mdp = TabularMdp::new(1, 2, 5, 1.0, vec![1.0, 1.0], Rewards::Stationary(vec![0.0, 0.0]), vec![1.0]).unwrap();
    let mu = PolicyTable::from_rows(vec![vec![1.0, 0.0]]).unwrap();
    let pi = PolicyTable::from_rows(vec![vec![0.5, 0.5]]).unwrap();
    let p = EvaluationProblem::new(mdp, mu, pi).unwrap();
    let r = likelihood_rate_check(&p, 50, &SamplerConfig::new(0, 10)).unwrap();
    assert!((r.mean - 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn asis_bound_holds() {
    let eps = [0.0, 0.01, 0.05, 0.2];
    let mut problems: Vec<Problem> = (1..=3).map(|w| counterexample_mdp(w).unwrap()).collect();
    problems.push(two_lane(10).unwrap());
    for (i, p) in problems.iter().enumerate() {
        for row in asis_experiment(p, &eps, 5).unwrap() {
            assert!(row.holds, "problem {i}: {row:?}");
            if row.eps_target > 0.0 {
                assert!((row.eps_realized - row.eps_target).abs() <= 0.01 * row.eps_target);
            }
        }
    }
    let ex1 = asis_experiment(&problems[0], &[0.01], 5).unwrap();
    assert!(ex1[0].mse <= 0.48 + 1e-9);
}
