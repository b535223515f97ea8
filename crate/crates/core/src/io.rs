//! JSON document form of an evaluation problem.
//!
//! ```json
//! { "num_states": 2, "num_actions": 2, "horizon": 3, "gamma": 1.0,
//!   "transition": [[[..s'..], ..a..], ..s..],
//!   "reward": [[..a..], ..s..]            // or [t][s][a]
//!   "initial_dist": [..], "behavior": [[..]], "target": [[..]],
//!   "absorbing": 1 }                      // optional
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::mdp::{EvaluationProblem, PolicyTable, Rewards, TabularMdp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardDoc {
    /// `[t][s][a]`; listed first so untagged matching tries it first.
    TimeIndexed(Vec<Vec<Vec<f64>>>),
    /// `[s][a]`
    Stationary(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: RewardDoc,
    pub initial_dist: Vec<f64>,
    pub behavior: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbing: Option<usize>,
}

fn flatten2(name: &str, rows: &[Vec<f64>], n: usize, m: usize) -> Result<Vec<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(OpeError::Shape(format!("{name} must be {n}x{m}")));
    }
    Ok(rows.iter().flatten().copied().collect())
}

fn flatten3(name: &str, blocks: &[Vec<Vec<f64>>], n: usize, m: usize, k: usize) -> Result<Vec<f64>> {
    if blocks.len() != n {
        return Err(OpeError::Shape(format!("{name} must be {n}x{m}x{k}")));
    }
    let mut out = Vec::with_capacity(n * m * k);
    for b in blocks {
        out.extend(flatten2(name, b, m, k).map_err(|_| OpeError::Shape(format!("{name} must be {n}x{m}x{k}")))?);
    }
    Ok(out)
}

fn cast<F: Scalar>(xs: Vec<f64>) -> Vec<F> {
    xs.into_iter().map(F::lit).collect()
}

fn nest2<F: Scalar>(flat: &[F], m: usize) -> Vec<Vec<f64>> {
    flat.chunks(m).map(|r| r.iter().map(|x| x.to_f64_lossy()).collect()).collect()
}

fn nest3<F: Scalar>(flat: &[F], m: usize, k: usize) -> Vec<Vec<Vec<f64>>> {
    flat.chunks(m * k).map(|b| nest2(b, k)).collect()
}

impl ProblemDoc {
    /// Builds the problem after shape checks. Probabilistic validity is
    /// left to [`EvaluationProblem::ensure_valid`].
    pub fn to_problem<F: Scalar>(&self) -> Result<EvaluationProblem<F>> {
        let (ns, na, h) = (self.num_states, self.num_actions, self.horizon);
        let transition = flatten3("transition", &self.transition, ns, na, ns)?;
        let reward = match &self.reward {
            RewardDoc::Stationary(r) => Rewards::Stationary(cast(flatten2("reward", r, ns, na)?)),
            RewardDoc::TimeIndexed(r) => Rewards::TimeIndexed(cast(flatten3("reward", r, h, ns, na)?)),
        };
        if self.initial_dist.len() != ns {
            return Err(OpeError::Shape(format!("initial_dist must have {ns} entries")));
        }
        let mut mdp = TabularMdp::new(ns, na, h, F::lit(self.gamma), cast(transition), reward, cast(self.initial_dist.clone()))?;
        if let Some(s) = self.absorbing {
            mdp = mdp.with_absorbing(s)?;
        }
        let behavior = PolicyTable::from_flat(ns, na, cast(flatten2("behavior", &self.behavior, ns, na)?))?;
        let target = PolicyTable::from_flat(ns, na, cast(flatten2("target", &self.target, ns, na)?))?;
        EvaluationProblem::new(mdp, behavior, target)
    }

    pub fn from_problem<F: Scalar>(problem: &EvaluationProblem<F>) -> Self {
        let mdp = &problem.mdp;
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let reward = match mdp.rewards() {
            Rewards::Stationary(r) => RewardDoc::Stationary(nest2(r, na)),
            Rewards::TimeIndexed(r) => RewardDoc::TimeIndexed(nest3(r, ns, na)),
        };
        Self {
            num_states: ns,
            num_actions: na,
            horizon: mdp.horizon(),
            gamma: mdp.discount().to_f64_lossy(),
            transition: nest3(mdp.transition_table(), na, ns),
            reward,
            initial_dist: mdp.initial_dist().iter().map(|x| x.to_f64_lossy()).collect(),
            behavior: nest2(problem.behavior.as_flat(), na),
            target: nest2(problem.target.as_flat(), na),
            absorbing: mdp.absorbing(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{counterexample_mdp, random_ergodic};

    #[test]
    fn round_trip_preserves_problem() {
        for p in [counterexample_mdp::<f64>(2).unwrap(), random_ergodic(3, 3, 2, 4, 0.9, 0.3).unwrap()] {
            let doc = ProblemDoc::from_problem(&p);
            let back = ProblemDoc::from_json(&doc.to_json().unwrap()).unwrap();
            assert_eq!(back.to_problem::<f64>().unwrap(), p);
        }
    }

    #[test]
    fn unknown_keys_and_bad_shapes_are_rejected() {
        let p = counterexample_mdp::<f64>(1).unwrap();
        let mut v = serde_json::to_value(ProblemDoc::from_problem(&p)).unwrap();
        v["extra"] = 1.into();
        assert!(serde_json::from_value::<ProblemDoc>(v.clone()).is_err());
        v.as_object_mut().unwrap().remove("extra");
        v["initial_dist"] = serde_json::json!([1.0]);
        let doc: ProblemDoc = serde_json::from_value(v).unwrap();
        assert!(matches!(doc.to_problem::<f64>(), Err(OpeError::Shape(_))));
    }
}
