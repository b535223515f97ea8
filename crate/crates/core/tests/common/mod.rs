#![allow(dead_code)]

use ope_lab::estimators::WeightTable;
use ope_lab::montecarlo::trajectory_rng;
use ope_lab::scenarios::PopulationSpec;
use ope_lab::Problem;
use rand::Rng;

/// ≤ 4 states, ≤ 3 actions, T ≤ 6.
pub fn small_population(seed: u64) -> PopulationSpec {
    PopulationSpec { seed, ..PopulationSpec::default() }
}

/// Horizons up to 8 with few enough branches to enumerate.
pub fn long_population(seed: u64) -> PopulationSpec {
    PopulationSpec {
        seed,
        max_states: 3,
        max_actions: 2,
        min_horizon: 5,
        max_horizon: 8,
        ..PopulationSpec::default()
    }
}

/// Nonnegative weights with the problem's shape, independent of its
/// occupancies.
pub fn random_weights(problem: &Problem, seed: u64) -> WeightTable<f64> {
    let mut rng = trajectory_rng(seed, 0);
    let n = problem.horizon() * problem.num_states() * problem.num_actions();
    let w = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
    WeightTable::new(problem.horizon(), problem.num_states(), problem.num_actions(), w).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
