//! Sufficient conditions for the variance orderings PDIS ≤ IS and
//! SIS ≤ PDIS, the covariance-gap inequality behind them, and population
//! checks that the conditions really imply the orderings.
//!
//! All covariances are exact (enumeration). Sign decisions use
//! [`COV_TOL`] relative to `max(1, |lhs|, |rhs|)`, so exactly-zero
//! covariances (π = μ) classify as holding at any magnitude.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{EstimatorId, EstimatorKind};
use crate::exact::{exact_cov_terms, exact_moments, for_each_path, is_terms, pdis_terms, series_moments, weighted_terms};
use crate::mdp::EvaluationProblem;
use crate::occupancy::{forward_occupancy, occupancies};
use crate::scalar::{Scalar, COV_TOL, EXACT_TOL};

/// One checked `(t, k)` pair where the condition fails. Steps are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness<F> {
    pub t: usize,
    pub k: usize,
    pub lhs: F,
    pub rhs: F,
    /// 1-based step the segment starts at.
    pub start_step: usize,
    /// Start state for per-state checks; `None` for the initial
    /// distribution.
    pub start_state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport<F> {
    pub holds: bool,
    pub witnesses: Vec<Witness<F>>,
    /// `min(lhs − rhs)` over all checked pairs.
    pub margin: F,
    pub pairs_checked: usize,
}

impl<F: Scalar> ConditionReport<F> {
    fn new() -> Self {
        Self { holds: true, witnesses: Vec::new(), margin: F::infinity(), pairs_checked: 0 }
    }

    fn record(&mut self, w: Witness<F>) {
        let gap = w.lhs - w.rhs;
        self.pairs_checked += 1;
        self.margin = self.margin.min(gap);
        let scale = F::one().max(w.lhs.abs()).max(w.rhs.abs());
        if gap < -F::tol(COV_TOL) * scale {
            self.holds = false;
            self.witnesses.push(w);
        }
    }
}

/// Checks `Cov(ρ_{t0:k}, r_t ρ_{t0:k}) ≥ 0` for all `t0 ≤ t ≤ k ≤ T`
/// (lhs = covariance, rhs = 0).
///
/// Segments start from the initial distribution, from every initial state
/// when it is not a point mass, and from every state μ can occupy at each
/// later step `t0`. The later starts are what the ordering argument uses
/// after conditioning on a trajectory prefix, so this is the form under
/// which the condition implies `Var(PDIS) ≤ Var(IS)`.
pub fn theorem1_condition<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<ConditionReport<F>> {
    problem.ensure_valid()?;
    let (ns, na, horizon) = (problem.num_states(), problem.num_actions(), problem.horizon());
    let mut report = ConditionReport::new();
    let init = problem.mdp.initial_dist();
    segment_covariances(problem, 0, init, None, &mut report)?;
    let support: Vec<usize> = (0..ns).filter(|&s| init[s] > F::zero()).collect();
    if support.len() > 1 {
        for &s in &support {
            segment_covariances(problem, 0, &point_mass(ns, s), Some(s), &mut report)?;
        }
    }
    let d_mu = forward_occupancy(&problem.mdp, &problem.behavior, horizon);
    for t0 in 1..horizon {
        for s in 0..ns {
            let mass: F = (0..na).map(|a| d_mu[(t0 * ns + s) * na + a]).sum();
            if mass > F::zero() {
                segment_covariances(problem, t0, &point_mass(ns, s), Some(s), &mut report)?;
            }
        }
    }
    Ok(report)
}

fn point_mass<F: Scalar>(n: usize, s: usize) -> Vec<F> {
    let mut v = vec![F::zero(); n];
    v[s] = F::one();
    v
}

fn segment_covariances<F: Scalar>(
    problem: &EvaluationProblem<F>,
    start: usize,
    init: &[F],
    start_state: Option<usize>,
    report: &mut ConditionReport<F>,
) -> Result<()> {
    let len = problem.horizon() - start;
    // e_rho[k] = E[ρ_k], e_r[t][k] = E[r_t ρ_k], e_r2[t][k] = E[r_t ρ_k²]
    let mut e_rho = vec![F::zero(); len];
    let mut e_r = vec![F::zero(); len * len];
    let mut e_r2 = vec![F::zero(); len * len];
    let mut cum = vec![F::zero(); len];
    for_each_path(problem, start, init, crate::exact::enumeration_cap(), |path, p| {
        let mut rho = F::one();
        for (k, st) in path.iter().enumerate() {
            rho *= problem.ratio(st.state, st.action).unwrap_or_else(F::nan);
            cum[k] = rho;
            e_rho[k] += p * rho;
        }
        for (t, st) in path.iter().enumerate() {
            for k in t..len {
                let x = p * st.reward * cum[k];
                e_r[t * len + k] += x;
                e_r2[t * len + k] += x * cum[k];
            }
        }
    })?;
    for t in 0..len {
        for k in t..len {
            let cov = e_r2[t * len + k] - e_rho[k] * e_r[t * len + k];
            report.record(Witness {
                t: start + t + 1,
                k: start + k + 1,
                lhs: cov,
                rhs: F::zero(),
                start_step: start + 1,
                start_state,
            });
        }
    }
    Ok(())
}

/// Checks `Cov(γ^t ρ_{1:t} r_t, γ^k ρ_{1:k} r_k) ≥ Cov(γ^t w*_t r_t, γ^k w*_k r_k)`
/// for all `t ≤ k`.
pub fn theorem2_condition<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<ConditionReport<F>> {
    let cov = exact_cov_terms(problem)?;
    let mut report = ConditionReport::new();
    let n = problem.horizon();
    for t in 0..n {
        for k in t..n {
            report.record(Witness {
                t: t + 1,
                k: k + 1,
                lhs: cov.pdis.get(t, k),
                rhs: cov.sis.get(t, k),
                start_step: 1,
                start_state: None,
            });
        }
    }
    Ok(report)
}

/// Which conditional expectation replaces the per-step summands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `Y_t = γ^t r_t ρ_{1:T}` given the prefix `τ_{1:t}`: IS → PDIS.
    Prefix,
    /// `Y_t = γ^t r_t ρ_{1:t}` given `(s_t, a_t)`: PDIS → SIS.
    StateAction,
    /// Conditioning on the whole trajectory, which changes nothing.
    Trajectory,
}

/// Both sides of
/// `Var(Σ Y_t) − Var(Σ E[Y_t|X_t]) ≥ 2 Σ_{t<k} (E[Y_t Y_k] − E[E[Y_t|X_t] E[Y_k|X_k]])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma2Gap<F> {
    pub conditioning: Conditioning,
    pub lhs: F,
    pub rhs: F,
}

impl<F: Scalar> Lemma2Gap<F> {
    /// `lhs ≥ rhs − tol`, with `tol` relative to the larger side.
    pub fn holds(&self, tol: f64) -> bool {
        let scale = F::one().max(self.lhs.abs()).max(self.rhs.abs());
        self.lhs >= self.rhs - F::tol(tol) * scale
    }
}

pub fn lemma2_gap<F: Scalar>(problem: &EvaluationProblem<F>, conditioning: Conditioning) -> Result<Lemma2Gap<F>> {
    problem.ensure_valid()?;
    let (y, y_hat) = match conditioning {
        Conditioning::Prefix => (
            series_moments(problem, |p, o| is_terms(problem, p, o))?,
            series_moments(problem, |p, o| pdis_terms(problem, p, o))?,
        ),
        Conditioning::StateAction => {
            let occ = occupancies(problem)?;
            (
                series_moments(problem, |p, o| pdis_terms(problem, p, o))?,
                series_moments(problem, |p, o| weighted_terms(problem, occ.ratio(), p, o))?,
            )
        }
        Conditioning::Trajectory => {
            let m = series_moments(problem, |p, o| pdis_terms(problem, p, o))?;
            (m.clone(), m)
        }
    };
    let lhs = y.cov.total() - y_hat.cov.total();
    let rhs = F::lit(2.0) * (y.raw.off_diagonal_sum() - y_hat.raw.off_diagonal_sum());
    Ok(Lemma2Gap { conditioning, lhs, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Implication {
    /// Theorem-1 condition ⇒ `Var(PDIS) ≤ Var(IS)`.
    Thm1,
    /// Theorem-2 condition ⇒ `Var(SIS) ≤ Var(PDIS)`.
    Thm2,
}

impl Implication {
    /// `(smaller, larger)` estimators in the implied ordering.
    pub fn ordering(self) -> (EstimatorId, EstimatorId) {
        match self {
            Implication::Thm1 => (EstimatorId::Pdis, EstimatorId::Is),
            Implication::Thm2 => (EstimatorId::Sis, EstimatorId::Pdis),
        }
    }

    pub fn condition<F: Scalar>(self, problem: &EvaluationProblem<F>) -> Result<ConditionReport<F>> {
        match self {
            Implication::Thm1 => theorem1_condition(problem),
            Implication::Thm2 => theorem2_condition(problem),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicationViolation<F> {
    pub index: usize,
    /// Variance of the estimator that should be smaller.
    pub smaller: F,
    /// Variance of the estimator that should be larger.
    pub larger: F,
    pub condition_margin: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicationSummary<F> {
    pub which: Implication,
    pub n: usize,
    pub n_condition_holds: usize,
    pub n_ordering_holds_given_condition: usize,
    /// Orderings that hold regardless of the condition.
    pub n_ordering_holds: usize,
    pub violations: Vec<ImplicationViolation<F>>,
}

/// Slack on the variance ordering, relative to `max(1, variances)`.
pub const ORDERING_SLACK: f64 = EXACT_TOL;

/// Checks the implication on problems `0..n` of `population`, in
/// parallel. Results are in index order.
pub fn verify_implication<F, P>(population: P, n: usize, which: Implication) -> Result<ImplicationSummary<F>>
where
    F: Scalar,
    P: Fn(usize) -> Result<EvaluationProblem<F>> + Sync,
{
    let (small_id, large_id) = which.ordering();
    let kind_of = |id: EstimatorId| -> EstimatorKind<F> {
        match id {
            EstimatorId::Is => EstimatorKind::Is,
            EstimatorId::Pdis => EstimatorKind::Pdis,
            _ => EstimatorKind::Sis,
        }
    };
    let rows: Vec<(bool, bool, F, F, F)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let problem = population(i)?;
            let report = which.condition(&problem)?;
            let small = exact_moments(&problem, &kind_of(small_id))?.variance;
            let large = exact_moments(&problem, &kind_of(large_id))?.variance;
            let scale = F::one().max(small.abs()).max(large.abs());
            let ordered = small <= large + F::tol(ORDERING_SLACK) * scale;
            Ok((report.holds, ordered, small, large, report.margin))
        })
        .collect::<Result<_>>()?;
    let mut summary = ImplicationSummary {
        which,
        n,
        n_condition_holds: 0,
        n_ordering_holds_given_condition: 0,
        n_ordering_holds: 0,
        violations: Vec::new(),
    };
    for (index, (holds, ordered, smaller, larger, margin)) in rows.into_iter().enumerate() {
        summary.n_ordering_holds += usize::from(ordered);
        if holds {
            summary.n_condition_holds += 1;
            if ordered {
                summary.n_ordering_holds_given_condition += 1;
            } else {
                summary.violations.push(ImplicationViolation { index, smaller, larger, condition_margin: margin });
            }
        }
    }
    Ok(summary)
}
