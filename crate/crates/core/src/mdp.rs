//! Finite-horizon tabular MDPs, policies, trajectories and the exact value
//! of the target policy.
//!
//! Timesteps are 0-based in the API (`step` ranges over `0..horizon`); the
//! CSV exports label them 1-based.

use serde::Serialize;

use crate::error::{OpeError, PolicyRole, Result, Violation};
use crate::scalar::{Scalar, PROB_SUM_TOL};

/// Reward table, either one `r(s,a)` shared by all steps or one table per
/// step. Both are stored flat, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum Rewards<F> {
    /// `[s][a]`
    Stationary(Vec<F>),
    /// `[t][s][a]`
    TimeIndexed(Vec<F>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<F> {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: F,
    /// `[s][a][s']`
    transition: Vec<F>,
    reward: Rewards<F>,
    initial_dist: Vec<F>,
    absorbing: Option<usize>,
}

impl<F: Scalar> TabularMdp<F> {
    /// Builds an MDP after checking array shapes. Probabilistic invariants
    /// are not checked here; see [`validate_problem`].
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        discount: F,
        transition: Vec<F>,
        reward: Rewards<F>,
        initial_dist: Vec<F>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(OpeError::Shape("need at least one state and one action".into()));
        }
        if horizon == 0 {
            return Err(OpeError::Shape("horizon must be positive".into()));
        }
        let sa = num_states * num_actions;
        if transition.len() != sa * num_states {
            return Err(OpeError::Shape(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                sa * num_states
            )));
        }
        match &reward {
            Rewards::Stationary(r) if r.len() != sa => {
                return Err(OpeError::Shape(format!(
                    "stationary reward has {} entries, expected {sa}",
                    r.len()
                )))
            }
            Rewards::TimeIndexed(r) if r.len() != sa * horizon => {
                return Err(OpeError::Shape(format!(
                    "time-indexed reward has {} entries, expected {}",
                    r.len(),
                    sa * horizon
                )))
            }
            _ => {}
        }
        if initial_dist.len() != num_states {
            return Err(OpeError::Shape(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial_dist.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            discount,
            transition,
            reward,
            initial_dist,
            absorbing: None,
        })
    }

    /// Marks `state` as the absorbing zero-reward state used to pad
    /// episodes that end before the horizon.
    pub fn with_absorbing(mut self, state: usize) -> Result<Self> {
        if state >= self.num_states {
            return Err(OpeError::Shape(format!("absorbing state {state} out of range")));
        }
        self.absorbing = Some(state);
        Ok(self)
    }

    /// Same MDP with a different horizon. Only stationary rewards can be
    /// re-horizoned.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(OpeError::Shape("horizon must be positive".into()));
        }
        if let Rewards::TimeIndexed(_) = self.reward {
            if horizon != self.horizon {
                return Err(OpeError::Unsupported(
                    "cannot change the horizon of an MDP with time-indexed rewards".into(),
                ));
            }
        }
        let mut out = self.clone();
        out.horizon = horizon;
        Ok(out)
    }

    pub fn with_discount(&self, discount: F) -> Self {
        let mut out = self.clone();
        out.discount = discount;
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> F {
        self.discount
    }

    pub fn absorbing(&self) -> Option<usize> {
        self.absorbing
    }

    pub fn initial_dist(&self) -> &[F] {
        &self.initial_dist
    }

    pub fn rewards(&self) -> &Rewards<F> {
        &self.reward
    }

    pub fn transition_table(&self) -> &[F] {
        &self.transition
    }

    /// `p(·|s,a)`
    #[inline]
    pub fn next_dist(&self, state: usize, action: usize) -> &[F] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, step: usize, state: usize, action: usize) -> F {
        let sa = state * self.num_actions + action;
        match &self.reward {
            Rewards::Stationary(r) => r[sa],
            Rewards::TimeIndexed(r) => r[step * self.num_states * self.num_actions + sa],
        }
    }

    /// `γ^step`
    #[inline]
    pub fn discount_pow(&self, step: usize) -> F {
        self.discount.powi(step as i32)
    }
}

/// One action distribution per state, stored row-major `[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTable<F> {
    num_states: usize,
    num_actions: usize,
    probs: Vec<F>,
}

impl<F: Scalar> PolicyTable<F> {
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(OpeError::Shape("policy needs at least one state and action".into()));
        }
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(OpeError::Shape("policy rows have different lengths".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_flat(num_states: usize, num_actions: usize, probs: Vec<F>) -> Result<Self> {
        if probs.len() != num_states * num_actions || probs.is_empty() {
            return Err(OpeError::Shape(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        Ok(Self { num_states, num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = F::one() / F::of_usize(num_actions);
        Self {
            num_states,
            num_actions,
            probs: vec![p; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> F {
        self.probs[state * self.num_actions + action]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[F] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn set_row(&mut self, state: usize, row: &[F]) -> Result<()> {
        if row.len() != self.num_actions || state >= self.num_states {
            return Err(OpeError::Shape("policy row shape".into()));
        }
        self.probs[state * self.num_actions..(state + 1) * self.num_actions].copy_from_slice(row);
        Ok(())
    }

    pub fn as_flat(&self) -> &[F] {
        &self.probs
    }
}

/// An MDP together with the behavior policy μ that generated the data and
/// the target policy π whose value is estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationProblem<F> {
    pub mdp: TabularMdp<F>,
    pub behavior: PolicyTable<F>,
    pub target: PolicyTable<F>,
}

impl<F: Scalar> EvaluationProblem<F> {
    pub fn new(mdp: TabularMdp<F>, behavior: PolicyTable<F>, target: PolicyTable<F>) -> Result<Self> {
        for (role, p) in [("behavior", &behavior), ("target", &target)] {
            if p.num_states() != mdp.num_states() || p.num_actions() != mdp.num_actions() {
                return Err(OpeError::Shape(format!(
                    "{role} policy is {}x{}, MDP is {}x{}",
                    p.num_states(),
                    p.num_actions(),
                    mdp.num_states(),
                    mdp.num_actions()
                )));
            }
        }
        Ok(Self { mdp, behavior, target })
    }

    pub fn horizon(&self) -> usize {
        self.mdp.horizon()
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    /// `π(a|s)/μ(a|s)`, or `None` when μ never takes `a` in `s`.
    #[inline]
    pub fn ratio(&self, state: usize, action: usize) -> Option<F> {
        let mu = self.behavior.prob(state, action);
        if mu > F::zero() {
            Some(self.target.prob(state, action) / mu)
        } else {
            None
        }
    }

    /// Errors with every violation unless the problem is valid.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate_problem(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(OpeError::InvalidProblem(v))
        }
    }

    /// Like [`Self::ensure_valid`] but allows π to take actions μ never
    /// takes. Enough for quantities that live on μ's support, such as the
    /// KL rate `KL(μ‖π)`.
    pub fn ensure_valid_on_behavior_support(&self) -> Result<()> {
        let v: Vec<Violation> = validate_problem(self)
            .into_iter()
            .filter(|v| !matches!(v, Violation::AbsoluteContinuity { .. }))
            .collect();
        if v.is_empty() {
            Ok(())
        } else {
            Err(OpeError::InvalidProblem(v))
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Ok(Self {
            mdp: self.mdp.with_horizon(horizon)?,
            behavior: self.behavior.clone(),
            target: self.target.clone(),
        })
    }

    pub fn with_discount(&self, discount: F) -> Self {
        Self {
            mdp: self.mdp.with_discount(discount),
            behavior: self.behavior.clone(),
            target: self.target.clone(),
        }
    }

    /// States that μ can visit at some step before the horizon, decided
    /// structurally (no floating-point underflow).
    pub fn reachable_under_behavior(&self) -> Vec<bool> {
        reachable_states(&self.mdp, &self.behavior)
    }
}

/// Structural reachability of each state within the horizon under `policy`.
pub fn reachable_states<F: Scalar>(mdp: &TabularMdp<F>, policy: &PolicyTable<F>) -> Vec<bool> {
    let n = mdp.num_states();
    let mut frontier: Vec<bool> = mdp.initial_dist().iter().map(|&p| p > F::zero()).collect();
    let mut seen = frontier.clone();
    for _ in 1..mdp.horizon() {
        let mut next = vec![false; n];
        for s in (0..n).filter(|&s| frontier[s]) {
            for a in 0..mdp.num_actions() {
                if policy.prob(s, a) <= F::zero() {
                    continue;
                }
                for (s2, &p) in mdp.next_dist(s, a).iter().enumerate() {
                    if p > F::zero() {
                        next[s2] = true;
                    }
                }
            }
        }
        if next == frontier {
            break;
        }
        for (s, &r) in next.iter().enumerate() {
            seen[s] |= r;
        }
        frontier = next;
    }
    seen
}

/// One transition of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step<F> {
    pub state: usize,
    pub action: usize,
    pub reward: F,
}

/// A length-`T` sequence of steps. `prob_behavior` is set when the
/// trajectory comes from exact enumeration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<F> {
    pub steps: Vec<Step<F>>,
    pub prob_behavior: Option<F>,
}

impl<F: Scalar> Trajectory<F> {
    pub fn new(steps: Vec<Step<F>>) -> Self {
        Self { steps, prob_behavior: None }
    }

    /// Builds a trajectory from `(state, action)` pairs, filling rewards
    /// from the MDP.
    pub fn from_pairs(mdp: &TabularMdp<F>, pairs: &[(usize, usize)]) -> Self {
        let steps = pairs
            .iter()
            .enumerate()
            .map(|(t, &(s, a))| Step { state: s, action: a, reward: mdp.reward(t, s, a) })
            .collect();
        Self::new(steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `G_T = Σ γ^t r_t` over the 0-based steps.
    pub fn discounted_return(&self, discount: F) -> F {
        discounted_return(&self.steps, discount)
    }
}

pub(crate) fn discounted_return<F: Scalar>(steps: &[Step<F>], discount: F) -> F {
    let mut g = F::zero();
    let mut disc = F::one();
    for st in steps {
        g += disc * st.reward;
        disc *= discount;
    }
    g
}

/// Per-step ratios `ρ_t` and their running products `ρ_{1:t}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRatios<F> {
    pub ratios: Vec<F>,
    pub cumulative: Vec<F>,
}

impl<F: Scalar> StepRatios<F> {
    /// `ρ_{1:T}`, or 1 for an empty trajectory.
    pub fn total(&self) -> F {
        self.cumulative.last().copied().unwrap_or_else(F::one)
    }
}

pub fn step_ratios<F: Scalar>(
    problem: &EvaluationProblem<F>,
    trajectory: &Trajectory<F>,
) -> Result<StepRatios<F>> {
    step_ratios_of(problem, &trajectory.steps)
}

pub(crate) fn step_ratios_of<F: Scalar>(
    problem: &EvaluationProblem<F>,
    steps: &[Step<F>],
) -> Result<StepRatios<F>> {
    let mut ratios = Vec::with_capacity(steps.len());
    let mut cumulative = Vec::with_capacity(steps.len());
    let mut running = F::one();
    for (t, st) in steps.iter().enumerate() {
        let r = problem.ratio(st.state, st.action).ok_or(OpeError::SupportViolation {
            step: t,
            state: st.state,
            action: st.action,
        })?;
        running *= r;
        ratios.push(r);
        cumulative.push(running);
    }
    Ok(StepRatios { ratios, cumulative })
}

/// Lists every broken invariant of `problem`; an empty list means valid.
pub fn validate_problem<F: Scalar>(problem: &EvaluationProblem<F>) -> Vec<Violation> {
    let mdp = &problem.mdp;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let tol = F::tol(PROB_SUM_TOL);
    let mut out = Vec::new();

    for s in 0..ns {
        for a in 0..na {
            let row = mdp.next_dist(s, a);
            for (s2, &p) in row.iter().enumerate() {
                if p < F::zero() || !p.is_finite() {
                    out.push(Violation::NegativeTransition {
                        state: s,
                        action: a,
                        next: s2,
                        value: p.to_f64_lossy(),
                    });
                }
            }
            let sum: F = row.iter().copied().sum();
            if (sum - F::one()).abs() > tol || !sum.is_finite() {
                out.push(Violation::TransitionRowSum { state: s, action: a, sum: sum.to_f64_lossy() });
            }
        }
    }

    let reward_steps = match mdp.rewards() {
        Rewards::Stationary(_) => 1,
        Rewards::TimeIndexed(_) => horizon,
    };
    for t in 0..reward_steps {
        for s in 0..ns {
            for a in 0..na {
                let r = mdp.reward(t, s, a);
                if !(r >= F::zero() && r <= F::one()) {
                    out.push(Violation::RewardOutOfRange {
                        step: t,
                        state: s,
                        action: a,
                        value: r.to_f64_lossy(),
                    });
                }
            }
        }
    }

    for (s, &p) in mdp.initial_dist().iter().enumerate() {
        if p < F::zero() || !p.is_finite() {
            out.push(Violation::NegativeInitial { state: s, value: p.to_f64_lossy() });
        }
    }
    let init_sum: F = mdp.initial_dist().iter().copied().sum();
    if (init_sum - F::one()).abs() > tol || !init_sum.is_finite() {
        out.push(Violation::InitialDistSum { sum: init_sum.to_f64_lossy() });
    }

    let d = mdp.discount();
    if !(d >= F::zero() && d <= F::one()) {
        out.push(Violation::DiscountOutOfRange { value: d.to_f64_lossy() });
    }

    for (role, policy) in [(PolicyRole::Behavior, &problem.behavior), (PolicyRole::Target, &problem.target)] {
        for s in 0..ns {
            let row = policy.row(s);
            for (a, &p) in row.iter().enumerate() {
                if p < F::zero() || !p.is_finite() {
                    out.push(Violation::NegativePolicy {
                        policy: role,
                        state: s,
                        action: a,
                        value: p.to_f64_lossy(),
                    });
                }
            }
            let sum: F = row.iter().copied().sum();
            if (sum - F::one()).abs() > tol || !sum.is_finite() {
                out.push(Violation::PolicyRowSum { policy: role, state: s, sum: sum.to_f64_lossy() });
            }
        }
    }

    if let Some(abs) = mdp.absorbing() {
        for a in 0..na {
            let row = mdp.next_dist(abs, a);
            if (row[abs] - F::one()).abs() > tol {
                out.push(Violation::AbsorbingNotSelfLoop { state: abs, action: a });
            }
            for t in 0..reward_steps {
                let r = mdp.reward(t, abs, a);
                if r != F::zero() {
                    out.push(Violation::AbsorbingReward {
                        step: t,
                        state: abs,
                        action: a,
                        value: r.to_f64_lossy(),
                    });
                }
            }
        }
    }

    let reachable = problem.reachable_under_behavior();
    for s in (0..ns).filter(|&s| reachable[s]) {
        for a in 0..na {
            if problem.target.prob(s, a) > F::zero() && problem.behavior.prob(s, a) <= F::zero() {
                out.push(Violation::AbsoluteContinuity { state: s, action: a });
            }
        }
    }
    out
}

/// `v^π = E_π[Σ_t γ^t r_t]` by backward induction over `(step, state)`.
pub fn target_value<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<F> {
    problem.ensure_valid()?;
    Ok(policy_value(&problem.mdp, &problem.target))
}

/// Expected discounted return of `policy`, without validation.
pub(crate) fn policy_value<F: Scalar>(mdp: &TabularMdp<F>, policy: &PolicyTable<F>) -> F {
    let ns = mdp.num_states();
    let mut next = vec![F::zero(); ns];
    let mut cur = vec![F::zero(); ns];
    for t in (0..mdp.horizon()).rev() {
        for s in 0..ns {
            let mut v = F::zero();
            for a in 0..mdp.num_actions() {
                let p = policy.prob(s, a);
                if p == F::zero() {
                    continue;
                }
                let cont: F = mdp.next_dist(s, a).iter().zip(&next).map(|(&q, &w)| q * w).sum();
                v += p * (mdp.reward(t, s, a) + mdp.discount() * cont);
            }
            cur[s] = v;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    mdp.initial_dist().iter().zip(&next).map(|(&p, &v)| p * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: f64, horizon: usize, discount: f64) -> EvaluationProblem<f64> {
        let mdp = TabularMdp::new(
            1,
            1,
            horizon,
            discount,
            vec![1.0],
            Rewards::Stationary(vec![reward]),
            vec![1.0],
        )
        .unwrap();
        EvaluationProblem::new(mdp, PolicyTable::uniform(1, 1), PolicyTable::uniform(1, 1)).unwrap()
    }

    fn two_state_two_action() -> EvaluationProblem<f64> {
        let mdp = TabularMdp::new(
            2,
            2,
            3,
            0.9,
            vec![0.5, 0.5, 0.2, 0.8, 1.0, 0.0, 0.3, 0.7],
            Rewards::Stationary(vec![0.1, 0.9, 0.4, 0.0]),
            vec![0.6, 0.4],
        )
        .unwrap();
        let mu = PolicyTable::uniform(2, 2);
        let pi = PolicyTable::from_rows(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        EvaluationProblem::new(mdp, mu, pi).unwrap()
    }

    #[test]
    fn constant_reward_value_is_horizon() {
        let p = single_state(1.0, 5, 1.0);
        assert!(validate_problem(&p).is_empty());
        assert_eq!(target_value(&p).unwrap(), 5.0);
    }

    #[test]
    fn short_transition_row_is_reported() {
        let mut p = two_state_two_action();
        p.mdp.transition[2] = 0.1; // row (0,1) now sums to 0.9
        let v = validate_problem(&p);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::TransitionRowSum { state: 0, action: 1, .. }));
    }

    #[test]
    fn missing_behavior_support_is_reported() {
        let mut p = two_state_two_action();
        p.behavior.set_row(1, &[1.0, 0.0]).unwrap();
        p.target.set_row(1, &[0.0, 1.0]).unwrap();
        let v = validate_problem(&p);
        assert_eq!(v, vec![Violation::AbsoluteContinuity { state: 1, action: 1 }]);
        assert!(matches!(target_value(&p), Err(OpeError::InvalidProblem(_))));
    }

    #[test]
    fn unreachable_states_do_not_need_support() {
        let mdp = TabularMdp::new(
            2,
            2,
            3,
            1.0,
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            Rewards::Stationary(vec![0.5; 4]),
            vec![1.0, 0.0],
        )
        .unwrap();
        let mu = PolicyTable::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let pi = PolicyTable::from_rows(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let p = EvaluationProblem::new(mdp, mu, pi).unwrap();
        assert!(validate_problem(&p).is_empty());
    }

    #[test]
    fn absorbing_state_checks() {
        let mdp = TabularMdp::new(
            2,
            1,
            2,
            1.0,
            vec![0.0, 1.0, 0.0, 1.0],
            Rewards::Stationary(vec![1.0, 0.5]),
            vec![1.0, 0.0],
        )
        .unwrap()
        .with_absorbing(1)
        .unwrap();
        let p = EvaluationProblem::new(mdp, PolicyTable::uniform(2, 1), PolicyTable::uniform(2, 1)).unwrap();
        let v = validate_problem(&p);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::AbsorbingReward { state: 1, .. }));
    }

    #[test]
    fn zero_discount_value_is_first_reward() {
        let p = two_state_two_action().with_discount(0.0);
        let direct: f64 = (0..2)
            .map(|s| {
                p.mdp.initial_dist()[s]
                    * (0..2).map(|a| p.target.prob(s, a) * p.mdp.reward(0, s, a)).sum::<f64>()
            })
            .sum();
        assert!((target_value(&p).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn value_is_invariant_under_relabeling() {
        let p = two_state_two_action();
        // swap the two states and the two actions
        let perm_s = [1usize, 0];
        let perm_a = [1usize, 0];
        let (ns, na) = (2, 2);
        let mut trans = vec![0.0; ns * na * ns];
        let mut rew = vec![0.0; ns * na];
        let mut mu = vec![0.0; ns * na];
        let mut pi = vec![0.0; ns * na];
        let mut init = vec![0.0; ns];
        for s in 0..ns {
            init[perm_s[s]] = p.mdp.initial_dist()[s];
            for a in 0..na {
                let (ps, pa) = (perm_s[s], perm_a[a]);
                rew[ps * na + pa] = p.mdp.reward(0, s, a);
                mu[ps * na + pa] = p.behavior.prob(s, a);
                pi[ps * na + pa] = p.target.prob(s, a);
                for s2 in 0..ns {
                    trans[(ps * na + pa) * ns + perm_s[s2]] = p.mdp.next_dist(s, a)[s2];
                }
            }
        }
        let mdp = TabularMdp::new(ns, na, 3, 0.9, trans, Rewards::Stationary(rew), init).unwrap();
        let q = EvaluationProblem::new(
            mdp,
            PolicyTable::from_flat(ns, na, mu).unwrap(),
            PolicyTable::from_flat(ns, na, pi).unwrap(),
        )
        .unwrap();
        assert!((target_value(&p).unwrap() - target_value(&q).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn ratios_identity_and_deterministic_target() {
        let p = two_state_two_action();
        let same = EvaluationProblem::new(p.mdp.clone(), p.behavior.clone(), p.behavior.clone()).unwrap();
        let tr = Trajectory::from_pairs(&p.mdp, &[(0, 1), (1, 0), (0, 0)]);
        let r = step_ratios(&same, &tr).unwrap();
        assert!(r.ratios.iter().chain(&r.cumulative).all(|&x| x == 1.0));

        let mut det = p.clone();
        det.target.set_row(0, &[1.0, 0.0]).unwrap();
        det.target.set_row(1, &[1.0, 0.0]).unwrap();
        let r = step_ratios(&det, &tr).unwrap();
        assert_eq!(r.ratios, vec![0.0, 2.0, 2.0]);
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn ratio_on_unsupported_action_errors() {
        let mut p = two_state_two_action();
        p.behavior.set_row(0, &[1.0, 0.0]).unwrap();
        let tr = Trajectory::from_pairs(&p.mdp, &[(0, 1)]);
        assert!(matches!(
            step_ratios(&p, &tr),
            Err(OpeError::SupportViolation { step: 0, state: 0, action: 1 })
        ));
    }

    #[test]
    fn shapes_are_checked() {
        assert!(TabularMdp::new(2, 2, 1, 1.0, vec![1.0; 3], Rewards::Stationary(vec![0.0; 4]), vec![1.0, 0.0]).is_err());
        assert!(TabularMdp::<f64>::new(1, 1, 2, 1.0, vec![1.0], Rewards::TimeIndexed(vec![0.0]), vec![1.0]).is_err());
    }

    #[test]
    fn value_in_single_precision() {
        let mdp = TabularMdp::<f32>::new(1, 1, 4, 0.5, vec![1.0], Rewards::Stationary(vec![1.0]), vec![1.0]).unwrap();
        let p = EvaluationProblem::new(mdp, PolicyTable::uniform(1, 1), PolicyTable::uniform(1, 1)).unwrap();
        assert!((target_value(&p).unwrap() - 1.875).abs() < 1e-6);
    }
}
