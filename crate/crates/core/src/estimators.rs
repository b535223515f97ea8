//! Per-trajectory returns of the importance-sampling estimators and their
//! batch averages.
//!
//! | kind | per-step weight on `γ^t r_t` |
//! |------|------------------------------|
//! | IS   | `ρ_{1:T}` (same weight on every step) |
//! | PDIS | `ρ_{1:t}` |
//! | SIS  | `d_t^π(s_t,a_t) / d_t^μ(s_t,a_t)` |
//! | ASIS | a supplied table `w_t(s_t,a_t)` |
//!
//! RCIS only exists at the batch level: it regresses `ρ_{1:T}` on the
//! observed returns and reweights with the fitted values.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OpeError, Result};
use crate::linalg::least_squares;
use crate::mdp::{discounted_return, step_ratios_of, EvaluationProblem, Step, Trajectory};
use crate::occupancy::{occupancies, OccupancyTables};
use crate::scalar::Scalar;

/// `w_t(s,a)` for every step of the horizon, stored `[t][s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightTable<F> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    w: Vec<F>,
}

impl<F: Scalar> WeightTable<F> {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, w: Vec<F>) -> Result<Self> {
        if w.len() != horizon * num_states * num_actions {
            return Err(OpeError::Shape(format!(
                "weight table has {} entries, expected {}",
                w.len(),
                horizon * num_states * num_actions
            )));
        }
        if let Some(i) = w.iter().position(|x| !x.is_finite() || *x < F::zero()) {
            return Err(OpeError::InvalidArgument(format!(
                "weight entry {i} is {} (weights must be finite and non-negative)",
                w[i]
            )));
        }
        Ok(Self { horizon, num_states, num_actions, w })
    }

    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, value: F) -> Result<Self> {
        Self::new(horizon, num_states, num_actions, vec![value; horizon * num_states * num_actions])
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, step: usize, state: usize, action: usize) -> F {
        self.w[(step * self.num_states + state) * self.num_actions + action]
    }

    pub fn as_flat(&self) -> &[F] {
        &self.w
    }

    /// Applies `f(step, state, action, w)` to every entry.
    pub fn map(&self, mut f: impl FnMut(usize, usize, usize, F) -> F) -> Result<Self> {
        let mut w = Vec::with_capacity(self.w.len());
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    w.push(f(t, s, a, self.get(t, s, a)));
                }
            }
        }
        Self::new(self.horizon, self.num_states, self.num_actions, w)
    }

    fn check_fits(&self, problem: &EvaluationProblem<F>) -> Result<()> {
        if self.num_states != problem.num_states()
            || self.num_actions != problem.num_actions()
            || self.horizon < problem.horizon()
        {
            return Err(OpeError::Shape(format!(
                "weight table is {}x{}x{}, problem needs {}x{}x{}",
                self.horizon,
                self.num_states,
                self.num_actions,
                problem.horizon(),
                problem.num_states(),
                problem.num_actions()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind<F> {
    Is,
    Pdis,
    /// Weights are the exact occupancy ratios of the problem.
    Sis,
    /// SIS with an approximate weight table.
    Asis(WeightTable<F>),
    /// Return-conditional IS; batch-only.
    Rcis,
}

impl<F> EstimatorKind<F> {
    pub fn id(&self) -> EstimatorId {
        match self {
            EstimatorKind::Is => EstimatorId::Is,
            EstimatorKind::Pdis => EstimatorId::Pdis,
            EstimatorKind::Sis => EstimatorId::Sis,
            EstimatorKind::Asis(_) => EstimatorId::Asis,
            EstimatorKind::Rcis => EstimatorId::Rcis,
        }
    }
}

/// Name of an estimator without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorId {
    Is,
    Pdis,
    Sis,
    Asis,
    Rcis,
}

impl EstimatorId {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::Is => "is",
            EstimatorId::Pdis => "pdis",
            EstimatorId::Sis => "sis",
            EstimatorId::Asis => "asis",
            EstimatorId::Rcis => "rcis",
        }
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl std::str::FromStr for EstimatorId {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "is" => Ok(EstimatorId::Is),
            "pdis" => Ok(EstimatorId::Pdis),
            "sis" => Ok(EstimatorId::Sis),
            "asis" => Ok(EstimatorId::Asis),
            "rcis" => Ok(EstimatorId::Rcis),
            other => Err(OpeError::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

pub fn is_return<F: Scalar>(problem: &EvaluationProblem<F>, trajectory: &Trajectory<F>) -> Result<F> {
    is_return_of(problem, &trajectory.steps)
}

pub fn pdis_return<F: Scalar>(problem: &EvaluationProblem<F>, trajectory: &Trajectory<F>) -> Result<F> {
    pdis_return_of(problem, &trajectory.steps)
}

pub fn sis_return<F: Scalar>(
    problem: &EvaluationProblem<F>,
    occupancy: &OccupancyTables<F>,
    trajectory: &Trajectory<F>,
) -> Result<F> {
    sis_return_of(problem, occupancy, &trajectory.steps)
}

pub fn asis_return<F: Scalar>(
    problem: &EvaluationProblem<F>,
    weights: &WeightTable<F>,
    trajectory: &Trajectory<F>,
) -> Result<F> {
    weights.check_fits(problem)?;
    Ok(weighted_return(problem, weights, &trajectory.steps))
}

pub(crate) fn is_return_of<F: Scalar>(problem: &EvaluationProblem<F>, steps: &[Step<F>]) -> Result<F> {
    let ratios = step_ratios_of(problem, steps)?;
    Ok(ratios.total() * discounted_return(steps, problem.mdp.discount()))
}

pub(crate) fn pdis_return_of<F: Scalar>(problem: &EvaluationProblem<F>, steps: &[Step<F>]) -> Result<F> {
    let ratios = step_ratios_of(problem, steps)?;
    let gamma = problem.mdp.discount();
    let mut disc = F::one();
    let mut total = F::zero();
    for (st, &cum) in steps.iter().zip(&ratios.cumulative) {
        total += disc * st.reward * cum;
        disc *= gamma;
    }
    Ok(total)
}

pub(crate) fn sis_return_of<F: Scalar>(
    problem: &EvaluationProblem<F>,
    occupancy: &OccupancyTables<F>,
    steps: &[Step<F>],
) -> Result<F> {
    for (t, st) in steps.iter().enumerate() {
        if occupancy.d_mu(t, st.state, st.action) == F::zero() {
            return Err(OpeError::SisSupport { step: t, state: st.state, action: st.action });
        }
    }
    Ok(weighted_return(problem, occupancy.ratio(), steps))
}

pub(crate) fn weighted_return<F: Scalar>(
    problem: &EvaluationProblem<F>,
    weights: &WeightTable<F>,
    steps: &[Step<F>],
) -> F {
    let gamma = problem.mdp.discount();
    let mut disc = F::one();
    let mut total = F::zero();
    for (t, st) in steps.iter().enumerate() {
        total += disc * weights.get(t, st.state, st.action) * st.reward;
        disc *= gamma;
    }
    total
}

/// Per-trajectory return function for one estimator, with the oracle
/// occupancy ratios precomputed when the estimator needs them.
pub struct ReturnEvaluator<'a, F> {
    problem: &'a EvaluationProblem<F>,
    kind: Bound<'a, F>,
}

enum Bound<'a, F> {
    Is,
    Pdis,
    Sis(OccupancyTables<F>),
    Asis(&'a WeightTable<F>),
}

impl<'a, F: Scalar> ReturnEvaluator<'a, F> {
    pub fn new(problem: &'a EvaluationProblem<F>, kind: &'a EstimatorKind<F>) -> Result<Self> {
        let kind = match kind {
            EstimatorKind::Is => Bound::Is,
            EstimatorKind::Pdis => Bound::Pdis,
            EstimatorKind::Sis => Bound::Sis(occupancies(problem)?),
            EstimatorKind::Asis(w) => {
                w.check_fits(problem)?;
                Bound::Asis(w)
            }
            EstimatorKind::Rcis => {
                return Err(OpeError::Unsupported(
                    "RCIS has no per-trajectory return; it is defined on a batch".into(),
                ))
            }
        };
        Ok(Self { problem, kind })
    }

    /// Reuses precomputed occupancy tables for SIS.
    pub fn with_occupancy(problem: &'a EvaluationProblem<F>, occupancy: OccupancyTables<F>) -> Self {
        Self { problem, kind: Bound::Sis(occupancy) }
    }

    pub fn evaluate(&self, trajectory: &Trajectory<F>) -> Result<F> {
        self.evaluate_steps(&trajectory.steps)
    }

    pub(crate) fn evaluate_steps(&self, steps: &[Step<F>]) -> Result<F> {
        match &self.kind {
            Bound::Is => is_return_of(self.problem, steps),
            Bound::Pdis => pdis_return_of(self.problem, steps),
            Bound::Sis(occ) => sis_return_of(self.problem, occ, steps),
            Bound::Asis(w) => Ok(weighted_return(self.problem, w, steps)),
        }
    }

    /// The weight table used by SIS/ASIS, if any.
    pub fn weights(&self) -> Option<&WeightTable<F>> {
        match &self.kind {
            Bound::Sis(occ) => Some(occ.ratio()),
            Bound::Asis(w) => Some(w),
            _ => None,
        }
    }
}

/// Mean of per-trajectory returns with its spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchEstimate<F> {
    pub estimate: F,
    pub n: usize,
    /// Unbiased sample variance; `None` for a single trajectory.
    pub sample_variance: Option<F>,
    pub stderr: Option<F>,
}

impl<F: Scalar> BatchEstimate<F> {
    pub fn from_values(values: &[F]) -> Result<Self> {
        if values.is_empty() {
            return Err(OpeError::EmptyBatch);
        }
        let n = values.len();
        let mean = values.iter().copied().sum::<F>() / F::of_usize(n);
        let (sample_variance, stderr) = if n >= 2 {
            let ss: F = values.iter().map(|&x| (x - mean) * (x - mean)).sum();
            let var = ss / F::of_usize(n - 1);
            (Some(var), Some((var / F::of_usize(n)).sqrt()))
        } else {
            (None, None)
        };
        Ok(Self { estimate: mean, n, sample_variance, stderr })
    }

    /// Sample variance, or an error when fewer than two trajectories were used.
    pub fn variance(&self) -> Result<F> {
        self.sample_variance
            .ok_or(OpeError::InsufficientSamples { needed: 2, got: self.n })
    }
}

/// Per-trajectory returns in batch order. Evaluation runs on the current
/// rayon pool; the output order never depends on scheduling.
pub fn per_trajectory_returns<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
    batch: &[Trajectory<F>],
) -> Result<Vec<F>> {
    let eval = ReturnEvaluator::new(problem, kind)?;
    batch.par_iter().map(|tr| eval.evaluate(tr)).collect()
}

pub fn batch_estimate<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
    batch: &[Trajectory<F>],
) -> Result<BatchEstimate<F>> {
    if batch.is_empty() {
        return Err(OpeError::EmptyBatch);
    }
    if let EstimatorKind::Rcis = kind {
        let fit = rcis_estimate(problem, batch)?;
        // The spread of RCIS is that of the products G_i·Ŷ_i.
        return BatchEstimate::from_values(&fit.weighted_returns).map(|mut b| {
            b.estimate = fit.estimate;
            b
        });
    }
    BatchEstimate::from_values(&per_trajectory_returns(problem, kind, batch)?)
}

/// Result of a return-conditional fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RcisEstimate<F> {
    pub estimate: F,
    /// OLS coefficients, one per feature (for the default design:
    /// slope on the return, then intercept).
    pub coefficients: Vec<F>,
    /// `G_i · Ŷ_i` per trajectory.
    pub weighted_returns: Vec<F>,
}

/// Return-conditional IS with the design `[G_T, 1]`.
pub fn rcis_estimate<F: Scalar>(
    problem: &EvaluationProblem<F>,
    batch: &[Trajectory<F>],
) -> Result<RcisEstimate<F>> {
    let gamma = problem.mdp.discount();
    rcis_estimate_with_features(problem, batch, |tr| vec![tr.discounted_return(gamma), F::one()])
}

/// Return-conditional IS with a user-supplied feature map `φ`.
///
/// `E[ρ_{1:T} | φ]` is fitted by least squares and the estimate is
/// `(1/N) Σ G_i Ŷ_i`. When `G` lies in the span of the features the
/// estimate coincides with crude IS on the same batch.
pub fn rcis_estimate_with_features<F: Scalar>(
    problem: &EvaluationProblem<F>,
    batch: &[Trajectory<F>],
    features: impl Fn(&Trajectory<F>) -> Vec<F> + Sync,
) -> Result<RcisEstimate<F>> {
    if batch.len() < 2 {
        return Err(OpeError::InsufficientSamples { needed: 2, got: batch.len() });
    }
    let gamma = problem.mdp.discount();
    let rows: Vec<(Vec<F>, F, F)> = batch
        .par_iter()
        .map(|tr| {
            let rho = step_ratios_of(problem, &tr.steps)?.total();
            Ok((features(tr), tr.discounted_return(gamma), rho))
        })
        .collect::<Result<_>>()?;
    let p = rows[0].0.len();
    if p == 0 || rows.iter().any(|r| r.0.len() != p) {
        return Err(OpeError::Shape("feature vectors must be non-empty and equally long".into()));
    }
    let design: Vec<F> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let y: Vec<F> = rows.iter().map(|r| r.2).collect();
    let coefficients = least_squares(&design, p, &y);
    let weighted_returns: Vec<F> = rows
        .iter()
        .map(|(phi, g, _)| {
            let fitted: F = phi.iter().zip(&coefficients).map(|(&x, &c)| x * c).sum();
            *g * fitted
        })
        .collect();
    let estimate = weighted_returns.iter().copied().sum::<F>() / F::of_usize(batch.len());
    Ok(RcisEstimate { estimate, coefficients, weighted_returns })
}
