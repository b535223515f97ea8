//! Exact sampling distributions and moments of the estimators.
//!
//! Two independent routes are provided:
//!
//! * **Enumeration** walks every trajectory with positive probability
//!   under μ (depth first, actions and next states in index order) and is
//!   the reference for everything else. It is exponential in the horizon
//!   and guarded by a path cap.
//! * **Moment DP** runs backward recursions over `(step, state)` that carry
//!   the first and second conditional moments of each estimator, which is
//!   polynomial in `|S|·|A|·T`.
//!
//! All expectations are under the behavior policy.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{OpeError, Result};
use crate::estimators::{EstimatorId, EstimatorKind, ReturnEvaluator, WeightTable};
use crate::mdp::{discounted_return, EvaluationProblem, Step, Trajectory};
use crate::occupancy::occupancies;
use crate::scalar::Scalar;

/// Default maximum number of enumerated trajectories.
pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

/// Environment variable that overrides [`DEFAULT_ENUM_CAP`].
pub const ENUM_CAP_ENV: &str = "OPE_LAB_ENUM_CAP";

/// Enumeration cap in effect: `OPE_LAB_ENUM_CAP` if set and parseable,
/// otherwise [`DEFAULT_ENUM_CAP`]. Read once per process.
pub fn enumeration_cap() -> u64 {
    static CAP: OnceLock<u64> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var(ENUM_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_ENUM_CAP)
    })
}

/// Number of positive-probability trajectories from `start_step` to the
/// horizon when the state at `start_step` is drawn from `init`.
pub fn count_paths<F: Scalar>(problem: &EvaluationProblem<F>, start_step: usize, init: &[F]) -> f64 {
    count_paths_until(problem, start_step, problem.horizon(), init)
}

fn count_paths_until<F: Scalar>(problem: &EvaluationProblem<F>, start_step: usize, horizon: usize, init: &[F]) -> f64 {
    let mdp = &problem.mdp;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if start_step >= horizon {
        return 0.0;
    }
    let mut next = vec![1.0f64; ns];
    let mut cur = vec![0.0f64; ns];
    for t in (start_step..horizon).rev() {
        for s in 0..ns {
            let mut n = 0.0;
            for a in 0..na {
                if problem.behavior.prob(s, a) <= F::zero() {
                    continue;
                }
                n += if t + 1 == horizon {
                    1.0
                } else {
                    mdp.next_dist(s, a)
                        .iter()
                        .zip(&next)
                        .filter(|(&p, _)| p > F::zero())
                        .map(|(_, &c)| c)
                        .sum()
                };
            }
            cur[s] = n;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    init.iter()
        .zip(&next)
        .filter(|(&p, _)| p > F::zero())
        .map(|(_, &c)| c)
        .sum()
}

/// Calls `visit(path, probability)` for every trajectory segment from
/// `start_step` to the horizon with positive probability under μ, where
/// the state at `start_step` is drawn from `init`. Rewards use absolute
/// timesteps. Returns the number of visited paths.
pub(crate) fn for_each_path<F: Scalar>(
    problem: &EvaluationProblem<F>,
    start_step: usize,
    init: &[F],
    cap: u64,
    visit: impl FnMut(&[Step<F>], F),
) -> Result<u64> {
    for_each_segment(problem, start_step, problem.horizon(), init, cap, visit)
}

/// As [`for_each_path`] but stopping after step `end - 1`.
pub(crate) fn for_each_segment<F: Scalar>(
    problem: &EvaluationProblem<F>,
    start_step: usize,
    end: usize,
    init: &[F],
    cap: u64,
    mut visit: impl FnMut(&[Step<F>], F),
) -> Result<u64> {
    let paths = count_paths_until(problem, start_step, end, init);
    if paths > cap as f64 {
        return Err(OpeError::EnumerationCap { paths, cap });
    }
    let mut path = Vec::with_capacity(end - start_step);
    for (s, &p) in init.iter().enumerate() {
        if p > F::zero() {
            descend(problem, start_step, end, s, p, &mut path, &mut visit);
        }
    }
    Ok(paths as u64)
}

fn descend<F: Scalar, V: FnMut(&[Step<F>], F)>(
    problem: &EvaluationProblem<F>,
    step: usize,
    end: usize,
    state: usize,
    prob: F,
    path: &mut Vec<Step<F>>,
    visit: &mut V,
) {
    let mdp = &problem.mdp;
    for a in 0..mdp.num_actions() {
        let mu = problem.behavior.prob(state, a);
        if mu <= F::zero() {
            continue;
        }
        let pa = prob * mu;
        path.push(Step { state, action: a, reward: mdp.reward(step, state, a) });
        if step + 1 == end {
            visit(path, pa);
        } else {
            for (s2, &p) in mdp.next_dist(state, a).iter().enumerate() {
                if p > F::zero() {
                    descend(problem, step + 1, end, s2, pa * p, path, visit);
                }
            }
        }
        path.pop();
    }
}

/// Every positive-probability trajectory under μ, with its probability.
pub fn enumerate_trajectories<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<Vec<Trajectory<F>>> {
    problem.ensure_valid()?;
    let mut out = Vec::new();
    for_each_path(problem, 0, problem.mdp.initial_dist(), enumeration_cap(), |path, p| {
        out.push(Trajectory { steps: path.to_vec(), prob_behavior: Some(p) });
    })?;
    Ok(out)
}

/// Exact law of an estimator's return: `(value, probability)` atoms.
/// Atoms are not merged, so repeated values may appear.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnDistribution<F> {
    pub atoms: Vec<(F, F)>,
}

impl<F: Scalar> ReturnDistribution<F> {
    pub fn total_probability(&self) -> F {
        self.atoms.iter().map(|&(_, p)| p).sum()
    }

    pub fn mean(&self) -> F {
        self.atoms.iter().map(|&(x, p)| x * p).sum()
    }

    pub fn second_moment(&self) -> F {
        self.atoms.iter().map(|&(x, p)| x * x * p).sum()
    }

    /// Centered two-pass variance.
    pub fn variance(&self) -> F {
        let m = self.mean();
        self.atoms.iter().map(|&(x, p)| (x - m) * (x - m) * p).sum()
    }

    /// Atoms sorted by value with equal values (within `tol`, relative to
    /// `max(1, |value|)`) combined.
    pub fn merged(&self, tol: F) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut out: Vec<(F, F)> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            match out.last_mut() {
                Some(last) if (x - last.0).abs() <= tol * F::one().max(x.abs()) => last.1 += p,
                _ => out.push((x, p)),
            }
        }
        Self { atoms: out }
    }

    /// Writes `value,probability` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "probability"])?;
        for (x, p) in &self.atoms {
            w.write_record([x.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    Enumeration,
    MomentDp,
}

impl std::fmt::Display for MomentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MomentMethod::Enumeration => "enumeration",
            MomentMethod::MomentDp => "moment_dp",
        })
    }
}

/// Exact first two moments of an estimator's single-trajectory return.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport<F> {
    pub estimator: EstimatorId,
    pub method: MomentMethod,
    pub mean: F,
    pub second_moment: F,
    pub variance: F,
    /// 1-based timestep at which the DP moments left the float range; the
    /// variance is then `+∞`.
    pub overflow_at: Option<usize>,
}

/// Variances this close below zero are rounding noise and are clamped.
const NEG_VARIANCE_TOL: f64 = 1e-12;

fn clamp_variance<F: Scalar>(var: F, scale: F) -> F {
    if var < F::zero() && -var <= F::tol(NEG_VARIANCE_TOL) * F::one().max(scale.abs()) {
        F::zero()
    } else {
        var
    }
}

pub fn enumerate_returns<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
) -> Result<ReturnDistribution<F>> {
    enumerate_returns_capped(problem, kind, enumeration_cap())
}

pub fn enumerate_returns_capped<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
    cap: u64,
) -> Result<ReturnDistribution<F>> {
    problem.ensure_valid()?;
    let eval = ReturnEvaluator::new(problem, kind)?;
    let mut atoms = Vec::new();
    let mut err = None;
    for_each_path(problem, 0, problem.mdp.initial_dist(), cap, |path, p| {
        if err.is_some() {
            return;
        }
        match eval.evaluate_steps(path) {
            Ok(x) => atoms.push((x, p)),
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(ReturnDistribution { atoms }),
    }
}

/// Mean and variance by enumeration.
pub fn exact_moments<F: Scalar>(problem: &EvaluationProblem<F>, kind: &EstimatorKind<F>) -> Result<MomentReport<F>> {
    let dist = enumerate_returns(problem, kind)?;
    let second = dist.second_moment();
    Ok(MomentReport {
        estimator: kind.id(),
        method: MomentMethod::Enumeration,
        mean: dist.mean(),
        second_moment: second,
        variance: clamp_variance(dist.variance(), second),
        overflow_at: None,
    })
}

/// Mean and variance by backward moment recursions.
///
/// * PDIS: `X_t = ρ_t (r_t + γ X_{t+1})`.
/// * IS: `Y_t = ρ_t Y_{t+1}`, `Z_t = ρ_t (r_t Y_{t+1} + γ Z_{t+1})`, carrying
///   `E[Y]`, `E[Z]`, `E[Y²]`, `E[YZ]`, `E[Z²]` per state.
/// * SIS/ASIS: `S_t = γ^t w_t r_t + S_{t+1}`.
pub fn moment_dp_variance<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
) -> Result<MomentReport<F>> {
    problem.ensure_valid()?;
    let (mean, second, overflow_at) = match kind {
        EstimatorKind::Is => is_dp(problem),
        EstimatorKind::Pdis => pdis_dp(problem),
        EstimatorKind::Sis => {
            let occ = occupancies(problem)?;
            weighted_dp(problem, occ.ratio())
        }
        EstimatorKind::Asis(w) => {
            if w.num_states() != problem.num_states()
                || w.num_actions() != problem.num_actions()
                || w.horizon() < problem.horizon()
            {
                return Err(OpeError::Shape("weight table does not fit the problem".into()));
            }
            weighted_dp(problem, w)
        }
        EstimatorKind::Rcis => {
            return Err(OpeError::Unsupported(
                "RCIS is a batch estimator; its moments are not defined per trajectory".into(),
            ))
        }
    };
    let variance = if overflow_at.is_some() || !second.is_finite() || !mean.is_finite() {
        F::infinity()
    } else {
        clamp_variance(second - mean * mean, second)
    };
    Ok(MomentReport {
        estimator: kind.id(),
        method: MomentMethod::MomentDp,
        mean,
        second_moment: second,
        variance,
        overflow_at,
    })
}

/// Expectation over `p(·|s,a)` of a per-state table.
#[inline]
fn expect_next<F: Scalar>(row: &[F], table: &[F]) -> F {
    row.iter().zip(table).map(|(&p, &v)| p * v).sum()
}

fn initial_expectation<F: Scalar>(problem: &EvaluationProblem<F>, table: &[F]) -> F {
    expect_next(problem.mdp.initial_dist(), table)
}

fn pdis_dp<F: Scalar>(problem: &EvaluationProblem<F>) -> (F, F, Option<usize>) {
    let mdp = &problem.mdp;
    let (ns, na, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let two = F::lit(2.0);
    let (mut m_next, mut q_next) = (vec![F::zero(); ns], vec![F::zero(); ns]);
    let (mut m_cur, mut q_cur) = (vec![F::zero(); ns], vec![F::zero(); ns]);
    let mut overflow = None;
    for t in (0..mdp.horizon()).rev() {
        for s in 0..ns {
            let (mut m, mut q) = (F::zero(), F::zero());
            for a in 0..na {
                let mu = problem.behavior.prob(s, a);
                if mu <= F::zero() {
                    continue;
                }
                let pi = problem.target.prob(s, a);
                let r = mdp.reward(t, s, a);
                let row = mdp.next_dist(s, a);
                let (m1, q1) = (expect_next(row, &m_next), expect_next(row, &q_next));
                // μρ = π, μρ² = π²/μ
                m += pi * (r + gamma * m1);
                q += pi * pi / mu * (r * r + two * gamma * r * m1 + gamma * gamma * q1);
            }
            m_cur[s] = m;
            q_cur[s] = q;
        }
        std::mem::swap(&mut m_cur, &mut m_next);
        std::mem::swap(&mut q_cur, &mut q_next);
        if overflow.is_none() && m_next.iter().chain(&q_next).any(|x| !x.is_finite()) {
            overflow = Some(t + 1);
        }
    }
    (initial_expectation(problem, &m_next), initial_expectation(problem, &q_next), overflow)
}

fn is_dp<F: Scalar>(problem: &EvaluationProblem<F>) -> (F, F, Option<usize>) {
    let mdp = &problem.mdp;
    let (ns, na, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let two = F::lit(2.0);
    // y1 = E[Y], z1 = E[Z], y2 = E[Y²], yz = E[YZ], z2 = E[Z²]
    let mut next = [vec![F::one(); ns], vec![F::zero(); ns], vec![F::one(); ns], vec![F::zero(); ns], vec![F::zero(); ns]];
    let mut cur = next.clone();
    let mut overflow = None;
    for t in (0..mdp.horizon()).rev() {
        for s in 0..ns {
            let mut acc = [F::zero(); 5];
            for a in 0..na {
                let mu = problem.behavior.prob(s, a);
                if mu <= F::zero() {
                    continue;
                }
                let pi = problem.target.prob(s, a);
                let w2 = pi * pi / mu;
                let r = mdp.reward(t, s, a);
                let row = mdp.next_dist(s, a);
                let [y1, z1, y2, yz, z2] = [0, 1, 2, 3, 4].map(|k| expect_next(row, &next[k]));
                acc[0] += pi * y1;
                acc[1] += pi * (r * y1 + gamma * z1);
                acc[2] += w2 * y2;
                acc[3] += w2 * (r * y2 + gamma * yz);
                acc[4] += w2 * (r * r * y2 + two * gamma * r * yz + gamma * gamma * z2);
            }
            for k in 0..5 {
                cur[k][s] = acc[k];
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if overflow.is_none() && next.iter().flatten().any(|x| !x.is_finite()) {
            overflow = Some(t + 1);
        }
    }
    (initial_expectation(problem, &next[1]), initial_expectation(problem, &next[4]), overflow)
}

fn weighted_dp<F: Scalar>(problem: &EvaluationProblem<F>, weights: &WeightTable<F>) -> (F, F, Option<usize>) {
    let mdp = &problem.mdp;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let two = F::lit(2.0);
    let (mut m_next, mut q_next) = (vec![F::zero(); ns], vec![F::zero(); ns]);
    let (mut m_cur, mut q_cur) = (vec![F::zero(); ns], vec![F::zero(); ns]);
    let mut overflow = None;
    for t in (0..mdp.horizon()).rev() {
        let disc = mdp.discount_pow(t);
        for s in 0..ns {
            let (mut m, mut q) = (F::zero(), F::zero());
            for a in 0..na {
                let mu = problem.behavior.prob(s, a);
                if mu <= F::zero() {
                    continue;
                }
                let c = disc * weights.get(t, s, a) * mdp.reward(t, s, a);
                let row = mdp.next_dist(s, a);
                let (m1, q1) = (expect_next(row, &m_next), expect_next(row, &q_next));
                m += mu * (c + m1);
                q += mu * (c * c + two * c * m1 + q1);
            }
            m_cur[s] = m;
            q_cur[s] = q;
        }
        std::mem::swap(&mut m_cur, &mut m_next);
        std::mem::swap(&mut q_cur, &mut q_next);
        if overflow.is_none() && m_next.iter().chain(&q_next).any(|x| !x.is_finite()) {
            overflow = Some(t + 1);
        }
    }
    (initial_expectation(problem, &m_next), initial_expectation(problem, &q_next), overflow)
}

/// Exact law of a weighted-reward estimator (SIS or ASIS) by forward
/// propagation of `(state, partial sum)` pairs, merging pairs whose
/// partial sums are bitwise equal. Polynomial whenever the returns take
/// few distinct values, where enumeration would be exponential.
pub fn weighted_return_law<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
) -> Result<ReturnDistribution<F>> {
    problem.ensure_valid()?;
    let occ;
    let weights = match kind {
        EstimatorKind::Sis => {
            occ = occupancies(problem)?;
            occ.ratio()
        }
        EstimatorKind::Asis(w) => w,
        other => {
            return Err(OpeError::Unsupported(format!(
                "{} is not a weighted-reward estimator",
                other.id()
            )))
        }
    };
    let mdp = &problem.mdp;
    // key: (state, value bits) → (value, probability)
    let mut frontier: BTreeMap<(usize, u64), (F, F)> = BTreeMap::new();
    for (s, &p) in mdp.initial_dist().iter().enumerate() {
        if p > F::zero() {
            frontier.insert((s, 0f64.to_bits()), (F::zero(), p));
        }
    }
    let mut finished: BTreeMap<u64, (F, F)> = BTreeMap::new();
    for t in 0..mdp.horizon() {
        let disc = mdp.discount_pow(t);
        let mut next: BTreeMap<(usize, u64), (F, F)> = BTreeMap::new();
        for (&(s, _), &(value, prob)) in &frontier {
            for a in 0..mdp.num_actions() {
                let mu = problem.behavior.prob(s, a);
                if mu <= F::zero() {
                    continue;
                }
                let v = value + disc * weights.get(t, s, a) * mdp.reward(t, s, a);
                let key = v.to_f64_lossy().to_bits();
                if t + 1 == mdp.horizon() {
                    finished.entry(key).or_insert((v, F::zero())).1 += prob * mu;
                } else {
                    for (s2, &p) in mdp.next_dist(s, a).iter().enumerate() {
                        if p > F::zero() {
                            next.entry((s2, key)).or_insert((v, F::zero())).1 += prob * mu * p;
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    let mut atoms: Vec<(F, F)> = finished.into_values().collect();
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ReturnDistribution { atoms })
}

/// Symmetric matrix stored as its packed upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymMatrix<F> {
    n: usize,
    upper: Vec<F>,
}

impl<F: Scalar> SymMatrix<F> {
    pub fn zeros(n: usize) -> Self {
        Self { n, upper: vec![F::zero(); n * (n + 1) / 2] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows 0..i hold n, n-1, .., n-i+1 entries
        i * self.n - i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.upper[self.idx(i, j)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: F) {
        let k = self.idx(i, j);
        self.upper[k] += v;
    }

    /// `Σ_t C[t,t] + 2 Σ_{t<k} C[t,k]`: the variance of the sum of the
    /// underlying series.
    pub fn total(&self) -> F {
        let two = F::lit(2.0);
        let mut acc = F::zero();
        for i in 0..self.n {
            acc += self.get(i, i);
            for j in i + 1..self.n {
                acc += two * self.get(i, j);
            }
        }
        acc
    }

    /// `Σ_{t<k} C[t,k]`
    pub fn off_diagonal_sum(&self) -> F {
        let mut acc = F::zero();
        for i in 0..self.n {
            for j in i + 1..self.n {
                acc += self.get(i, j);
            }
        }
        acc
    }
}

/// Exact first and second moments of a per-step series `(X_1..X_T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesMoments<F> {
    pub mean: Vec<F>,
    /// `E[X_t X_k]`
    pub raw: SymMatrix<F>,
    /// `Cov(X_t, X_k)`, computed from centered values.
    pub cov: SymMatrix<F>,
}

/// Moments of a per-step series computed from each enumerated path by
/// `fill(path, out)`. Two passes for a centered covariance.
pub(crate) fn series_moments<F: Scalar>(
    problem: &EvaluationProblem<F>,
    mut fill: impl FnMut(&[Step<F>], &mut [F]),
) -> Result<SeriesMoments<F>> {
    let n = problem.horizon();
    let init = problem.mdp.initial_dist();
    let cap = enumeration_cap();
    let mut buf = vec![F::zero(); n];
    let mut mean = vec![F::zero(); n];
    for_each_path(problem, 0, init, cap, |path, p| {
        fill(path, &mut buf);
        for (m, &x) in mean.iter_mut().zip(&buf) {
            *m += p * x;
        }
    })?;
    let mut raw = SymMatrix::zeros(n);
    let mut cov = SymMatrix::zeros(n);
    for_each_path(problem, 0, init, cap, |path, p| {
        fill(path, &mut buf);
        for i in 0..n {
            let ci = buf[i] - mean[i];
            for j in i..n {
                raw.add(i, j, p * buf[i] * buf[j]);
                cov.add(i, j, p * ci * (buf[j] - mean[j]));
            }
        }
    })?;
    Ok(SeriesMoments { mean, raw, cov })
}

/// Per-step covariance matrices of the PDIS and oracle-SIS summands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovTerms<F> {
    /// `Cov(γ^t ρ_{1:t} r_t, γ^k ρ_{1:k} r_k)`
    pub pdis: SymMatrix<F>,
    /// `Cov(γ^t w*_t r_t, γ^k w*_k r_k)`
    pub sis: SymMatrix<F>,
}

pub fn exact_cov_terms<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<CovTerms<F>> {
    problem.ensure_valid()?;
    let pdis = series_moments(problem, |path, out| pdis_terms(problem, path, out))?.cov;
    let occ = occupancies(problem)?;
    let sis = series_moments(problem, |path, out| weighted_terms(problem, occ.ratio(), path, out))?.cov;
    Ok(CovTerms { pdis, sis })
}

/// `out[t] = γ^t ρ_{1:t} r_t`. Paths come from μ's support, so every
/// ratio exists.
pub(crate) fn pdis_terms<F: Scalar>(problem: &EvaluationProblem<F>, path: &[Step<F>], out: &mut [F]) {
    let gamma = problem.mdp.discount();
    let (mut rho, mut disc) = (F::one(), F::one());
    for (o, st) in out.iter_mut().zip(path) {
        rho *= problem.ratio(st.state, st.action).unwrap_or_else(F::nan);
        *o = disc * rho * st.reward;
        disc *= gamma;
    }
}

/// `out[t] = γ^t ρ_{1:T} r_t`: the per-step split of the crude IS return.
pub(crate) fn is_terms<F: Scalar>(problem: &EvaluationProblem<F>, path: &[Step<F>], out: &mut [F]) {
    let gamma = problem.mdp.discount();
    let rho: F = path
        .iter()
        .map(|st| problem.ratio(st.state, st.action).unwrap_or_else(F::nan))
        .fold(F::one(), |a, b| a * b);
    let mut disc = F::one();
    for (o, st) in out.iter_mut().zip(path) {
        *o = disc * rho * st.reward;
        disc *= gamma;
    }
}

/// `out[t] = γ^t w_t(s_t,a_t) r_t`
pub(crate) fn weighted_terms<F: Scalar>(
    problem: &EvaluationProblem<F>,
    weights: &WeightTable<F>,
    path: &[Step<F>],
    out: &mut [F],
) {
    let gamma = problem.mdp.discount();
    let mut disc = F::one();
    for (t, (o, st)) in out.iter_mut().zip(path).enumerate() {
        *o = disc * weights.get(t, st.state, st.action) * st.reward;
        disc *= gamma;
    }
}

/// `E_μ[ρ_{1:t} | s_t, a_t]` per state–action pair; `None` where μ never
/// visits the pair at that step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateActionTable<F> {
    num_states: usize,
    num_actions: usize,
    values: Vec<Option<F>>,
}

impl<F: Scalar> StateActionTable<F> {
    pub fn get(&self, state: usize, action: usize) -> Option<F> {
        self.values[state * self.num_actions + action]
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// One prefix `τ_{1:t}` with its likelihood ratio and the conditional
/// expectation of the full-horizon ratio given the prefix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixWeight<F> {
    pub prefix: Vec<(usize, usize)>,
    pub probability: F,
    /// `ρ_{1:t}`
    pub cumulative_ratio: F,
    /// `E_μ[ρ_{1:T} | τ_{1:t}]`
    pub conditional: F,
}

/// Statistic to condition the likelihood ratio on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    StateAction,
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalTable<F> {
    StateAction(StateActionTable<F>),
    Prefix(Vec<PrefixWeight<F>>),
}

/// Conditional expectation of the likelihood ratio at 0-based `step`:
/// `E[ρ_{1:t} | s_t,a_t]` for [`Statistic::StateAction`], and
/// `E[ρ_{1:T} | τ_{1:t}]` for [`Statistic::Prefix`].
pub fn conditional_expectation<F: Scalar>(
    problem: &EvaluationProblem<F>,
    step: usize,
    statistic: Statistic,
) -> Result<ConditionalTable<F>> {
    Ok(match statistic {
        Statistic::StateAction => ConditionalTable::StateAction(conditional_expectation_state_action(problem, step)?),
        Statistic::Prefix => ConditionalTable::Prefix(conditional_expectation_prefix(problem, step)?),
    })
}

pub fn conditional_expectation_state_action<F: Scalar>(
    problem: &EvaluationProblem<F>,
    step: usize,
) -> Result<StateActionTable<F>> {
    problem.ensure_valid()?;
    if step >= problem.horizon() {
        return Err(OpeError::InvalidArgument(format!("step {step} outside horizon")));
    }
    let (ns, na) = (problem.num_states(), problem.num_actions());
    let mut num = vec![F::zero(); ns * na];
    let mut den = vec![F::zero(); ns * na];
    for_each_segment(problem, 0, step + 1, problem.mdp.initial_dist(), enumeration_cap(), |path, p| {
        let rho: F = path
            .iter()
            .map(|st| problem.ratio(st.state, st.action).unwrap_or_else(F::nan))
            .fold(F::one(), |a, b| a * b);
        let last = path[path.len() - 1];
        let k = last.state * na + last.action;
        num[k] += p * rho;
        den[k] += p;
    })?;
    let values = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > F::zero() { Some(n / d) } else { None })
        .collect();
    Ok(StateActionTable { num_states: ns, num_actions: na, values })
}

pub fn conditional_expectation_prefix<F: Scalar>(
    problem: &EvaluationProblem<F>,
    step: usize,
) -> Result<Vec<PrefixWeight<F>>> {
    problem.ensure_valid()?;
    if step >= problem.horizon() {
        return Err(OpeError::InvalidArgument(format!("step {step} outside horizon")));
    }
    // prefix → (Σ p, Σ p ρ_{1:T}, ρ_{1:t})
    let mut groups: BTreeMap<Vec<(usize, usize)>, (F, F, F)> = BTreeMap::new();
    for_each_path(problem, 0, problem.mdp.initial_dist(), enumeration_cap(), |path, p| {
        let ratios: Vec<F> = path
            .iter()
            .map(|st| problem.ratio(st.state, st.action).unwrap_or_else(F::nan))
            .collect();
        let prefix_rho = ratios[..=step].iter().fold(F::one(), |a, &b| a * b);
        let full_rho = ratios[step + 1..].iter().fold(prefix_rho, |a, &b| a * b);
        let key: Vec<(usize, usize)> = path[..=step].iter().map(|st| (st.state, st.action)).collect();
        let e = groups.entry(key).or_insert((F::zero(), F::zero(), prefix_rho));
        e.0 += p;
        e.1 += p * full_rho;
    })?;
    Ok(groups
        .into_iter()
        .map(|(prefix, (prob, weighted, cum))| PrefixWeight {
            prefix,
            probability: prob,
            cumulative_ratio: cum,
            conditional: weighted / prob,
        })
        .collect())
}

/// Variance of crude IS and of its return-conditioned version
/// `G_T · E[ρ_{1:T} | G_T]`, both exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnConditioning<F> {
    pub crude: F,
    pub conditioned: F,
}

/// Returns closer than this (relative) are treated as one value of `G_T`.
const RETURN_MERGE_TOL: f64 = 1e-12;

pub fn return_conditioned_variance<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<ReturnConditioning<F>> {
    problem.ensure_valid()?;
    let gamma = problem.mdp.discount();
    // (G, ρ, p)
    let mut rows: Vec<(F, F, F)> = Vec::new();
    for_each_path(problem, 0, problem.mdp.initial_dist(), enumeration_cap(), |path, p| {
        let rho = path
            .iter()
            .map(|st| problem.ratio(st.state, st.action).unwrap_or_else(F::nan))
            .fold(F::one(), |a, b| a * b);
        rows.push((discounted_return(path, gamma), rho, p));
    })?;
    let crude = ReturnDistribution { atoms: rows.iter().map(|&(g, r, p)| (g * r, p)).collect() };
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let tol = F::tol(RETURN_MERGE_TOL);
    // (G, Σ p, Σ p ρ)
    let mut groups: Vec<(F, F, F)> = Vec::new();
    for (g, rho, p) in rows {
        match groups.last_mut() {
            Some(last) if (g - last.0).abs() <= tol * F::one().max(g.abs()) => {
                last.1 += p;
                last.2 += p * rho;
            }
            _ => groups.push((g, p, p * rho)),
        }
    }
    let conditioned = ReturnDistribution {
        atoms: groups.iter().map(|&(g, p, pr)| (g * pr / p, p)).collect(),
    };
    Ok(ReturnConditioning { crude: crude.variance(), conditioned: conditioned.variance() })
}
