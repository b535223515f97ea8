//! Canonical problem instances: three two-step counterexamples, the
//! two-lane lower-bound MDP, and seeded random generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::estimators::EstimatorId;
use crate::mdp::{EvaluationProblem, PolicyTable, Rewards, TabularMdp};
use crate::scalar::Scalar;

/// Exact per-path returns of IS, PDIS and SIS on one counterexample. Paths
/// are `(a1,a1), (a1,a2), (a2,a1), (a2,a2)`, each with probability 1/4
/// under the uniform behavior policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleFixture {
    pub which: u8,
    pub paths: [&'static str; 4],
    pub probabilities: [f64; 4],
    pub is: [f64; 4],
    pub pdis: [f64; 4],
    pub sis: [f64; 4],
    pub mean: f64,
    /// `(IS, PDIS, SIS)`
    pub variances: [f64; 3],
}

const PATHS: [&str; 4] = ["a1,a1", "a1,a2", "a2,a1", "a2,a2"];

pub fn counterexample_fixture(which: u8) -> Result<CounterexampleFixture> {
    let (is, pdis, sis, mean, variances) = match which {
        1 => (
            [1.44, 1.92, 0.96, 1.28],
            [1.2, 2.16, 0.8, 1.44],
            [1.2, 2.0, 0.8, 1.6],
            1.4,
            [0.12, 0.2448, 0.2],
        ),
        2 => (
            [0.0, 1.44, 0.64, 1.92],
            [0.0, 1.44, 0.8, 1.76],
            [0.0, 1.2, 0.8, 2.0],
            1.0,
            [0.5424, 0.4528, 0.52],
        ),
        3 => (
            [0.0, 0.96, 0.96, 1.28],
            [0.0, 0.96, 0.8, 1.44],
            [0.0, 0.8, 0.8, 1.6],
            0.8,
            [0.2304, 0.2688, 0.32],
        ),
        _ => return Err(OpeError::InvalidArgument(format!("no counterexample {which}; expected 1, 2 or 3"))),
    };
    Ok(CounterexampleFixture {
        which,
        paths: PATHS,
        probabilities: [0.25; 4],
        is,
        pdis,
        sis,
        mean,
        variances,
    })
}

impl CounterexampleFixture {
    pub fn returns(&self, id: EstimatorId) -> Option<&[f64; 4]> {
        match id {
            EstimatorId::Is => Some(&self.is),
            EstimatorId::Pdis => Some(&self.pdis),
            EstimatorId::Sis => Some(&self.sis),
            _ => None,
        }
    }

    /// Stored variance of `id`, if it is one of IS, PDIS, SIS.
    pub fn variance(&self, id: EstimatorId) -> Option<f64> {
        match id {
            EstimatorId::Is => Some(self.variances[0]),
            EstimatorId::Pdis => Some(self.variances[1]),
            EstimatorId::Sis => Some(self.variances[2]),
            _ => None,
        }
    }

    /// `(mean, variance)` recomputed from the atoms.
    pub fn recompute(&self, id: EstimatorId) -> Option<(f64, f64)> {
        let xs = self.returns(id)?;
        let mean: f64 = xs.iter().zip(&self.probabilities).map(|(x, p)| x * p).sum();
        let var = xs.iter().zip(&self.probabilities).map(|(x, p)| p * (x - mean) * (x - mean)).sum();
        Some((mean, var))
    }

    pub fn atoms(&self, id: EstimatorId) -> Option<Vec<(f64, f64)>> {
        Some(self.returns(id)?.iter().copied().zip(self.probabilities).collect())
    }
}

/// Ranks estimators by variance, e.g. `"IS < SIS < PDIS"`. Ties print `=`.
pub fn variance_ordering(variances: &[(EstimatorId, f64)]) -> String {
    let mut v = variances.to_vec();
    v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = String::new();
    for (i, (id, x)) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(if *x == v[i - 1].1 { " = " } else { " < " });
        }
        out.push_str(&id.to_string());
    }
    out
}

/// Symbol relating two variances in table rows.
pub fn compare_symbol(lhs: f64, rhs: f64) -> char {
    match lhs.partial_cmp(&rhs) {
        Some(std::cmp::Ordering::Less) => '<',
        Some(std::cmp::Ordering::Greater) => '>',
        _ => '=',
    }
}

/// The two-step MDP of counterexample `which`.
///
/// States `s1 = 0`, `s2 = 1` and an absorbing state `2`. Both actions move
/// `s1 → s2` and `s2 → absorbing`; μ is uniform, γ = 1, T = 2.
///
/// | which | π(a1\|s1) | π(a1\|s2) | r(s1,a1) | r(s1,a2) | r(s2,a1) | r(s2,a2) |
/// |-------|-----------|-----------|----------|----------|----------|----------|
/// | 1     | 0.6       | 0.6       | 1        | 1        | 0        | 1        |
/// | 2     | 0.6       | 0.4       | 0        | 1        | 0        | 1        |
/// | 3     | 0.6       | 0.6       | 0        | 1        | 0        | 1        |
pub fn counterexample_mdp<F: Scalar>(which: u8) -> Result<EvaluationProblem<F>> {
    let (pi_s2, r_s1) = match which {
        1 => (0.6, [1.0, 1.0]),
        2 => (0.4, [0.0, 1.0]),
        3 => (0.6, [0.0, 1.0]),
        _ => return Err(OpeError::InvalidArgument(format!("no counterexample {which}; expected 1, 2 or 3"))),
    };
    let l = F::lit;
    #[rustfmt::skip]
    let transition = vec![
        // s1
        l(0.0), l(1.0), l(0.0),   l(0.0), l(1.0), l(0.0),
        // s2
        l(0.0), l(0.0), l(1.0),   l(0.0), l(0.0), l(1.0),
        // absorbing
        l(0.0), l(0.0), l(1.0),   l(0.0), l(0.0), l(1.0),
    ];
    let reward = vec![l(r_s1[0]), l(r_s1[1]), l(0.0), l(1.0), l(0.0), l(0.0)];
    let mdp = TabularMdp::new(3, 2, 2, F::one(), transition, Rewards::Stationary(reward), vec![l(1.0), l(0.0), l(0.0)])?
        .with_absorbing(2)?;
    let behavior = PolicyTable::uniform(3, 2);
    let target = PolicyTable::from_rows(vec![
        vec![l(0.6), l(0.4)],
        vec![l(pi_s2), l(1.0 - pi_s2)],
        vec![l(0.5), l(0.5)],
    ])?;
    EvaluationProblem::new(mdp, behavior, target)
}

/// Two-lane MDP with horizon `horizon ≥ 4`.
///
/// From `s0` action `a1` enters the rewarding lane and `a2` the empty
/// lane; each lane is a deterministic chain of `T − 1` states ending in
/// the absorbing state. `(s0,a1)` and every rewarding-lane state pay 1, so
/// the rewarding lane collects exactly `T`. μ is uniform everywhere, π
/// takes `a1` at `s0` and equals μ on the chains. Oracle SIS weights are 2
/// on the rewarding lane, so SIS is uniform over `{0, 2T}`.
///
/// State layout: `0 = s0`, `1..T` rewarding lane, `T..2T−1` empty lane,
/// `2T − 1` absorbing.
pub fn two_lane<F: Scalar>(horizon: usize) -> Result<EvaluationProblem<F>> {
    if horizon < 4 {
        return Err(OpeError::InvalidArgument(format!("two-lane needs T ≥ 4, got {horizon}")));
    }
    let lane = horizon - 1;
    let ns = 2 * horizon;
    let absorbing = ns - 1;
    let na = 2;
    let (zero, one) = (F::zero(), F::one());
    let mut transition = vec![zero; ns * na * ns];
    let mut reward = vec![zero; ns * na];
    let mut set = |s: usize, a: usize, s2: usize| transition[(s * na + a) * ns + s2] = one;
    set(0, 0, 1);
    set(0, 1, 1 + lane);
    for i in 0..lane {
        for first in [1, 1 + lane] {
            let s = first + i;
            let next = if i + 1 < lane { s + 1 } else { absorbing };
            for a in 0..na {
                set(s, a, next);
            }
        }
    }
    for a in 0..na {
        set(absorbing, a, absorbing);
    }
    reward[0] = one;
    for s in 1..=lane {
        for a in 0..na {
            reward[s * na + a] = one;
        }
    }
    let mut init = vec![zero; ns];
    init[0] = one;
    let mdp = TabularMdp::new(ns, na, horizon, one, transition, Rewards::Stationary(reward), init)?.with_absorbing(absorbing)?;
    let behavior = PolicyTable::uniform(ns, na);
    let mut target = behavior.clone();
    target.set_row(0, &[one, zero])?;
    EvaluationProblem::new(mdp, behavior, target)
}

/// Strictly positive kernels in `[0.1, 1]` before normalization.
const KERNEL_FLOOR: f64 = 0.1;

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `(1 − λ)μ + λq` with λ chosen so the total variation to μ is at most
/// `gap`. `gap = 0` returns μ exactly.
fn perturb_row(mu: &[f64], q: &[f64], gap: f64) -> Vec<f64> {
    let tv = total_variation(mu, q);
    if gap <= 0.0 || tv == 0.0 {
        return mu.to_vec();
    }
    let lambda = (gap / tv).min(1.0);
    mu.iter().zip(q).map(|(m, x)| (1.0 - lambda) * m + lambda * x).collect()
}

fn to_scalar<F: Scalar>(xs: Vec<f64>) -> Vec<F> {
    xs.into_iter().map(F::lit).collect()
}

/// Seeded random MDP with a strictly positive kernel, so every induced
/// chain is irreducible and aperiodic. μ is uniform, π a perturbation of μ
/// with per-state total variation at most `policy_gap`, rewards i.i.d.
/// uniform on `[0, 1)`, start state 0. Bitwise deterministic per seed.
pub fn random_ergodic<F: Scalar>(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    gamma: f64,
    policy_gap: f64,
) -> Result<EvaluationProblem<F>> {
    if num_states < 2 || num_actions < 2 {
        return Err(OpeError::InvalidArgument("random_ergodic needs at least 2 states and 2 actions".into()));
    }
    if !(0.0..1.0).contains(&policy_gap) {
        return Err(OpeError::InvalidArgument(format!("policy_gap must lie in [0, 1), got {policy_gap}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na) = (num_states, num_actions);
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        transition.extend(normalized((0..ns).map(|_| rng.gen_range(KERNEL_FLOOR..=1.0)).collect()));
    }
    let reward: Vec<f64> = (0..ns * na).map(|_| rng.gen::<f64>()).collect();
    let mu = vec![1.0 / na as f64; na];
    let mut target = Vec::with_capacity(ns);
    for _ in 0..ns {
        let q = normalized((0..na).map(|_| rng.gen::<f64>()).collect());
        target.push(to_scalar(perturb_row(&mu, &q, policy_gap)));
    }
    let mut init = vec![F::zero(); ns];
    init[0] = F::one();
    let mdp = TabularMdp::new(
        ns,
        na,
        horizon,
        F::lit(gamma),
        to_scalar(transition),
        Rewards::Stationary(to_scalar(reward)),
        init,
    )?;
    EvaluationProblem::new(mdp, PolicyTable::uniform(ns, na), PolicyTable::from_rows(target)?)
}

/// Description of a population of small random problems for property and
/// implication tests. Problem `i` depends only on `(seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSpec {
    pub seed: u64,
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub min_horizon: usize,
    pub max_horizon: usize,
    pub gammas: Vec<f64>,
    /// Transition rows may contain zeros (at least one entry stays positive).
    pub sparse: bool,
    /// Random strictly positive μ instead of uniform.
    pub random_behavior: bool,
    /// Random initial distribution instead of a point mass on state 0.
    pub random_initial: bool,
    /// Per-step reward tables instead of one shared table.
    pub time_indexed_rewards: bool,
    /// Fraction of problems with π = μ.
    pub equal_policy_fraction: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            min_states: 2,
            max_states: 4,
            min_actions: 2,
            max_actions: 3,
            min_horizon: 1,
            max_horizon: 6,
            gammas: vec![1.0, 0.9],
            sparse: true,
            random_behavior: true,
            random_initial: true,
            time_indexed_rewards: true,
            equal_policy_fraction: 0.1,
        }
    }
}

impl PopulationSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(OpeError::InvalidArgument(m.into()));
        if self.min_states == 0 || self.min_states > self.max_states {
            return bad("state range is empty");
        }
        if self.min_actions == 0 || self.min_actions > self.max_actions {
            return bad("action range is empty");
        }
        if self.min_horizon == 0 || self.min_horizon > self.max_horizon {
            return bad("horizon range is empty");
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return bad("gammas must be a non-empty list in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.equal_policy_fraction) {
            return bad("equal_policy_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Problem number `index`. Every problem passes validation: μ is
    /// strictly positive, so absolute continuity always holds.
    pub fn generate<F: Scalar>(&self, index: usize) -> Result<EvaluationProblem<F>> {
        self.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let ns = rng.gen_range(self.min_states..=self.max_states);
        let na = rng.gen_range(self.min_actions..=self.max_actions);
        let horizon = rng.gen_range(self.min_horizon..=self.max_horizon);
        let gamma = self.gammas[rng.gen_range(0..self.gammas.len())];

        let mut transition = Vec::with_capacity(ns * na * ns);
        for _ in 0..ns * na {
            let mut w: Vec<f64> = (0..ns)
                .map(|_| if self.sparse && rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(KERNEL_FLOOR..=1.0) })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[rng.gen_range(0..ns)] = 1.0;
            }
            transition.extend(normalized(w));
        }
        let tables = if self.time_indexed_rewards { horizon } else { 1 };
        // Bernoulli rewards make ratio–reward correlations of either sign
        // common; uniform rewards cover the generic case.
        let binary = rng.gen_bool(0.5);
        let reward: Vec<f64> = (0..tables * ns * na)
            .map(|_| if binary { f64::from(u8::from(rng.gen_bool(0.5))) } else { rng.gen::<f64>() })
            .collect();

        let mut behavior = Vec::with_capacity(ns);
        let mut target = Vec::with_capacity(ns);
        let equal = rng.gen_bool(self.equal_policy_fraction);
        for s in 0..ns {
            let mu = if self.random_behavior {
                normalized((0..na).map(|_| rng.gen_range(KERNEL_FLOOR..=1.0)).collect())
            } else {
                vec![1.0 / na as f64; na]
            };
            let pi = if equal {
                mu.clone()
            } else {
                match rng.gen_range(0..3) {
                    // deterministic target
                    0 => {
                        let mut row = vec![0.0; na];
                        row[rng.gen_range(0..na)] = 1.0;
                        row
                    }
                    // tilted toward rewarding actions
                    1 => {
                        let k = rng.gen_range(-3.0..3.0);
                        let r0 = &reward[s * na..(s + 1) * na];
                        normalized(mu.iter().zip(r0).map(|(m, r)| m * f64::exp(k * r)).collect())
                    }
                    _ => {
                        let q = normalized((0..na).map(|_| rng.gen::<f64>()).collect());
                        perturb_row(&mu, &q, rng.gen_range(0.0..0.9))
                    }
                }
            };
            behavior.push(to_scalar(mu));
            target.push(to_scalar(pi));
        }
        let init = if self.random_initial && rng.gen_bool(0.5) {
            normalized((0..ns).map(|_| rng.gen_range(KERNEL_FLOOR..=1.0)).collect())
        } else {
            let mut v = vec![0.0; ns];
            v[0] = 1.0;
            v
        };
        let reward = if self.time_indexed_rewards {
            Rewards::TimeIndexed(to_scalar(reward))
        } else {
            Rewards::Stationary(to_scalar(reward))
        };
        let mdp = TabularMdp::new(ns, na, horizon, F::lit(gamma), to_scalar(transition), reward, to_scalar(init))?;
        EvaluationProblem::new(mdp, PolicyTable::from_rows(behavior)?, PolicyTable::from_rows(target)?)
    }
}

/// Named scenario with parameters, as used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Example1,
    Example2,
    Example3,
    TwoLane {
        horizon: usize,
    },
    RandomErgodic {
        seed: u64,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        #[serde(default = "one")]
        gamma: f64,
        policy_gap: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    pub fn build<F: Scalar>(&self) -> Result<EvaluationProblem<F>> {
        match *self {
            Scenario::Example1 => counterexample_mdp(1),
            Scenario::Example2 => counterexample_mdp(2),
            Scenario::Example3 => counterexample_mdp(3),
            Scenario::TwoLane { horizon } => two_lane(horizon),
            Scenario::RandomErgodic { seed, num_states, num_actions, horizon, gamma, policy_gap } => {
                random_ergodic(seed, num_states, num_actions, horizon, gamma, policy_gap)
            }
        }
    }

    /// Same scenario at another horizon. Counterexamples have a fixed
    /// horizon of 2.
    pub fn with_horizon(&self, t: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Scenario::TwoLane { horizon } | Scenario::RandomErgodic { horizon, .. } => *horizon = t,
            _ => {
                return Err(OpeError::Unsupported("counterexamples have a fixed horizon of 2".into()));
            }
        }
        Ok(out)
    }

    /// Same scenario with another discount, where the scenario allows it.
    pub fn with_gamma(&self, g: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Scenario::RandomErgodic { gamma, .. } => *gamma = g,
            _ => return Err(OpeError::Unsupported("only random_ergodic has a free discount".into())),
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate_problem;

    #[test]
    fn fixtures_recompute_stored_moments() {
        for which in 1..=3 {
            let f = counterexample_fixture(which).unwrap();
            for id in [EstimatorId::Is, EstimatorId::Pdis, EstimatorId::Sis] {
                let (m, v) = f.recompute(id).unwrap();
                assert!((m - f.mean).abs() < 1e-12, "example {which} {id} mean {m}");
                assert!((v - f.variance(id).unwrap()).abs() < 1e-12, "example {which} {id} variance {v}");
            }
        }
    }

    #[test]
    fn scenarios_are_valid() {
        for which in 1..=3 {
            assert!(validate_problem(&counterexample_mdp::<f64>(which).unwrap()).is_empty());
        }
        for t in [4, 7, 12] {
            assert!(validate_problem(&two_lane::<f64>(t).unwrap()).is_empty());
        }
        assert!(two_lane::<f64>(3).is_err());
        let p = random_ergodic::<f64>(7, 5, 2, 10, 1.0, 0.2).unwrap();
        assert!(validate_problem(&p).is_empty());
        let spec = PopulationSpec::default();
        for i in 0..50 {
            assert!(validate_problem(&spec.generate::<f64>(i).unwrap()).is_empty(), "population member {i}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_ergodic::<f64>(3, 4, 3, 5, 0.9, 0.3).unwrap();
        let b = random_ergodic::<f64>(3, 4, 3, 5, 0.9, 0.3).unwrap();
        assert_eq!(a, b);
        let spec = PopulationSpec { seed: 11, ..Default::default() };
        assert_eq!(spec.generate::<f64>(5).unwrap(), spec.generate::<f64>(5).unwrap());
        assert_ne!(spec.generate::<f64>(5).unwrap(), spec.generate::<f64>(6).unwrap());
    }

    #[test]
    fn zero_gap_gives_identical_policies() {
        let p = random_ergodic::<f64>(1, 3, 2, 4, 1.0, 0.0).unwrap();
        assert_eq!(p.behavior, p.target);
    }

    #[test]
    fn ordering_strings() {
        let f = counterexample_fixture(1).unwrap();
        let v = [EstimatorId::Is, EstimatorId::Pdis, EstimatorId::Sis].map(|id| (id, f.variance(id).unwrap()));
        assert_eq!(variance_ordering(&v), "IS < SIS < PDIS");
    }

    #[test]
    fn scenario_config_round_trip() {
        let s: Scenario = serde_json::from_str(r#"{"name":"two_lane","horizon":8}"#).unwrap();
        assert_eq!(s, Scenario::TwoLane { horizon: 8 });
        assert!(serde_json::from_str::<Scenario>(r#"{"name":"two_lane","horizon":8,"x":1}"#).is_err());
    }
}
