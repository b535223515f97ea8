//! Time-indexed and stationary occupancies, the oracle SIS weights and
//! the diagnostics derived from them.

use std::io::Write;

use serde::Serialize;

use crate::error::{OpeError, Result};
use crate::estimators::WeightTable;
use crate::exact::conditional_expectation_state_action;
use crate::mdp::{EvaluationProblem, PolicyTable, TabularMdp};
use crate::scalar::{Scalar, EXACT_TOL};

/// Maximum number of power-iteration sweeps.
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;
/// L1 residual at which power iteration stops.
pub const STATIONARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyTables<F> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// `d_t^μ(s,a)`, `[t][s][a]`
    d_mu: Vec<F>,
    /// `d_t^π(s,a)`, `[t][s][a]`
    d_pi: Vec<F>,
    /// Discount-weighted average of `d_t^μ` over the horizon, `[s][a]`.
    d_mu_avg: Vec<F>,
    stationary_mu: Option<Vec<F>>,
    stationary_pi: Option<Vec<F>>,
    ratio: WeightTable<F>,
}

impl<F: Scalar> OccupancyTables<F> {
    #[inline]
    fn idx(&self, step: usize, state: usize, action: usize) -> usize {
        (step * self.num_states + state) * self.num_actions + action
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn d_mu(&self, step: usize, state: usize, action: usize) -> F {
        self.d_mu[self.idx(step, state, action)]
    }

    #[inline]
    pub fn d_pi(&self, step: usize, state: usize, action: usize) -> F {
        self.d_pi[self.idx(step, state, action)]
    }

    /// `d_t^π(s,a)/d_t^μ(s,a)`, zero where both occupancies vanish.
    pub fn ratio(&self) -> &WeightTable<F> {
        &self.ratio
    }

    pub fn into_ratio(self) -> WeightTable<F> {
        self.ratio
    }

    pub fn d_mu_avg(&self) -> &[F] {
        &self.d_mu_avg
    }

    /// State marginal `d_t^μ(s)`.
    pub fn state_marginal_mu(&self, step: usize) -> Vec<F> {
        self.state_marginal(&self.d_mu, step)
    }

    pub fn state_marginal_pi(&self, step: usize) -> Vec<F> {
        self.state_marginal(&self.d_pi, step)
    }

    fn state_marginal(&self, table: &[F], step: usize) -> Vec<F> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| table[self.idx(step, s, a)]).sum())
            .collect()
    }

    /// State ratio `d_t^π(s)/d_t^μ(s)` with the same 0/0 convention.
    pub fn state_ratio(&self, step: usize) -> Vec<F> {
        let mu = self.state_marginal_mu(step);
        let pi = self.state_marginal_pi(step);
        mu.iter()
            .zip(&pi)
            .map(|(&m, &p)| if m > F::zero() { p / m } else { F::zero() })
            .collect()
    }

    pub fn stationary_mu(&self) -> Option<&[F]> {
        self.stationary_mu.as_deref()
    }

    pub fn stationary_pi(&self) -> Option<&[F]> {
        self.stationary_pi.as_deref()
    }

    /// Fills in the stationary limits of both policy-induced chains.
    pub fn attach_stationary(&mut self, problem: &EvaluationProblem<F>) -> Result<()> {
        self.stationary_mu = Some(stationary_distribution(&problem.mdp, &problem.behavior)?);
        self.stationary_pi = Some(stationary_distribution(&problem.mdp, &problem.target)?);
        Ok(())
    }

    /// `E_{d_t^μ}[w_t²]` for every step.
    pub fn ratio_second_moments(&self) -> Vec<F> {
        (0..self.horizon)
            .map(|t| {
                let mut acc = F::zero();
                for s in 0..self.num_states {
                    for a in 0..self.num_actions {
                        let w = self.ratio.get(t, s, a);
                        acc += self.d_mu(t, s, a) * w * w;
                    }
                }
                acc
            })
            .collect()
    }

    /// Writes `t,s,a,d_mu,d_pi,ratio` rows with 1-based `t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row<F> {
            t: usize,
            s: usize,
            a: usize,
            d_mu: F,
            d_pi: F,
            ratio: F,
        }
        let mut w = csv::Writer::from_writer(out);
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    w.serialize(Row {
                        t: t + 1,
                        s,
                        a,
                        d_mu: self.d_mu(t, s, a),
                        d_pi: self.d_pi(t, s, a),
                        ratio: self.ratio.get(t, s, a),
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `d_t(s,a)` for `t = 0..horizon` by forward recursion.
pub fn forward_occupancy<F: Scalar>(mdp: &TabularMdp<F>, policy: &PolicyTable<F>, horizon: usize) -> Vec<F> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut out = Vec::with_capacity(horizon * ns * na);
    let mut state = mdp.initial_dist().to_vec();
    for t in 0..horizon {
        for s in 0..ns {
            for a in 0..na {
                out.push(state[s] * policy.prob(s, a));
            }
        }
        if t + 1 < horizon {
            let base = t * ns * na;
            state = propagate(mdp, &out[base..base + ns * na]);
        }
    }
    out
}

/// Next-step state distribution from a state–action distribution.
fn propagate<F: Scalar>(mdp: &TabularMdp<F>, sa: &[F]) -> Vec<F> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut next = vec![F::zero(); ns];
    for s in 0..ns {
        for a in 0..na {
            let mass = sa[s * na + a];
            if mass == F::zero() {
                continue;
            }
            for (s2, &p) in mdp.next_dist(s, a).iter().enumerate() {
                next[s2] += mass * p;
            }
        }
    }
    next
}

/// Time-indexed occupancies of both policies and the oracle ratios.
pub fn occupancies<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<OccupancyTables<F>> {
    problem.ensure_valid()?;
    let mdp = &problem.mdp;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let d_mu = forward_occupancy(mdp, &problem.behavior, horizon);
    let d_pi = forward_occupancy(mdp, &problem.target, horizon);

    let mut ratio = Vec::with_capacity(d_mu.len());
    for (i, (&m, &p)) in d_mu.iter().zip(&d_pi).enumerate() {
        if m > F::zero() {
            ratio.push(p / m);
        } else if p > F::zero() {
            let (t, rest) = (i / (ns * na), i % (ns * na));
            return Err(OpeError::SisSupport { step: t, state: rest / na, action: rest % na });
        } else {
            ratio.push(F::zero());
        }
    }

    // Weights γ^t / Σγ^t; at γ = 0 this is the t = 0 table (0^0 = 1).
    let mut d_mu_avg = vec![F::zero(); ns * na];
    let mut norm = F::zero();
    for t in 0..horizon {
        let wt = mdp.discount_pow(t);
        norm += wt;
        for (acc, &d) in d_mu_avg.iter_mut().zip(&d_mu[t * ns * na..(t + 1) * ns * na]) {
            *acc += wt * d;
        }
    }
    for x in &mut d_mu_avg {
        *x /= norm;
    }

    Ok(OccupancyTables {
        horizon,
        num_states: ns,
        num_actions: na,
        d_mu,
        d_pi,
        d_mu_avg,
        stationary_mu: None,
        stationary_pi: None,
        ratio: WeightTable::new(horizon, ns, na, ratio)?,
    })
}

/// Stationary state–action distribution `d(s)·policy(a|s)` of the chain
/// induced by `policy`, by power iteration from the uniform distribution.
pub fn stationary_distribution<F: Scalar>(mdp: &TabularMdp<F>, policy: &PolicyTable<F>) -> Result<Vec<F>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let tol = F::tol(STATIONARY_TOL);
    let mut d = vec![F::one() / F::of_usize(ns); ns];
    let mut sa = vec![F::zero(); ns * na];
    let mut residual = F::infinity();
    for _ in 0..STATIONARY_MAX_ITERS {
        for s in 0..ns {
            for a in 0..na {
                sa[s * na + a] = d[s] * policy.prob(s, a);
            }
        }
        let next = propagate(mdp, &sa);
        residual = next.iter().zip(&d).map(|(&x, &y)| (x - y).abs()).sum();
        d = next;
        if residual <= tol {
            return Ok((0..ns * na).map(|i| d[i / na] * policy.prob(i / na, i % na)).collect());
        }
    }
    Err(OpeError::StationaryNotConverged {
        iterations: STATIONARY_MAX_ITERS,
        residual: residual.to_f64_lossy(),
    })
}

fn state_marginal_of<F: Scalar>(sa: &[F], ns: usize, na: usize) -> Vec<F> {
    (0..ns).map(|s| sa[s * na..(s + 1) * na].iter().copied().sum()).collect()
}

/// `c = Σ_s d^μ(s) KL(μ(·|s) ‖ π(·|s))` under the stationary behavior
/// distribution. Infinite when π drops an action μ takes in a recurrent
/// state.
pub fn kl_rate<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<F> {
    problem.ensure_valid_on_behavior_support()?;
    let (ns, na) = (problem.num_states(), problem.num_actions());
    let d = state_marginal_of(&stationary_distribution(&problem.mdp, &problem.behavior)?, ns, na);
    Ok(kl_rate_with(problem, &d))
}

fn kl_rate_with<F: Scalar>(problem: &EvaluationProblem<F>, d_state: &[F]) -> F {
    let mut c = F::zero();
    for (s, &ds) in d_state.iter().enumerate() {
        if ds == F::zero() {
            continue;
        }
        let mut kl = F::zero();
        for a in 0..problem.num_actions() {
            let mu = problem.behavior.prob(s, a);
            if mu == F::zero() {
                continue;
            }
            let pi = problem.target.prob(s, a);
            if pi == F::zero() {
                return F::infinity();
            }
            kl += mu * (mu / pi).ln();
        }
        c += ds * kl;
    }
    c.max(F::zero())
}

/// Largest gap `|E_μ[ρ_{1:t} | s_t,a_t] − w*_t(s_t,a_t)|` at 0-based
/// `step`, over pairs the behavior policy can visit. The conditional
/// expectation is computed by enumerating every length-`step+1` prefix.
pub fn conditional_weight_check<F: Scalar>(problem: &EvaluationProblem<F>, step: usize) -> Result<F> {
    if step >= problem.horizon() {
        return Err(OpeError::InvalidArgument(format!(
            "step {step} is outside the horizon {}",
            problem.horizon()
        )));
    }
    let occ = occupancies(problem)?;
    let cond = conditional_expectation_state_action(problem, step)?;
    let mut worst = F::zero();
    for s in 0..problem.num_states() {
        for a in 0..problem.num_actions() {
            if occ.d_mu(step, s, a) == F::zero() {
                continue;
            }
            let e = cond.get(s, a).unwrap_or_else(F::nan);
            let gap = (e - occ.ratio.get(step, s, a)).abs();
            worst = if gap.is_nan() { F::infinity() } else { worst.max(gap) };
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemDiagnostics<F> {
    /// `E_{d^μ}[KL(μ‖π)]`
    pub c: F,
    /// Largest one-step ratio over reachable pairs.
    pub u_rho: F,
    /// Where `u_rho` is attained (or where it is infinite).
    pub u_rho_at: Option<(usize, usize)>,
    /// Largest stationary state ratio `d^π(s)/d^μ(s)`.
    pub u_s: F,
    /// Largest per-state `E_{a∼μ}[ρ²]` over reachable states.
    pub m_rho_sq: F,
}

pub fn diagnostics<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<ProblemDiagnostics<F>> {
    problem.ensure_valid()?;
    let (ns, na) = (problem.num_states(), problem.num_actions());
    let st_mu = state_marginal_of(&stationary_distribution(&problem.mdp, &problem.behavior)?, ns, na);
    let st_pi = state_marginal_of(&stationary_distribution(&problem.mdp, &problem.target)?, ns, na);
    let reachable = problem.reachable_under_behavior();

    let mut u_rho = F::zero();
    let mut u_rho_at = None;
    let mut m_rho_sq = F::zero();
    for s in (0..ns).filter(|&s| reachable[s]) {
        let mut second = F::zero();
        for a in 0..na {
            let (mu, pi) = (problem.behavior.prob(s, a), problem.target.prob(s, a));
            let r = if mu > F::zero() {
                second += pi * pi / mu;
                pi / mu
            } else if pi > F::zero() {
                second = F::infinity();
                F::infinity()
            } else {
                continue;
            };
            if r > u_rho || u_rho_at.is_none() {
                u_rho = r;
                u_rho_at = Some((s, a));
            }
        }
        m_rho_sq = m_rho_sq.max(second);
    }

    let mut u_s = F::zero();
    for (&m, &p) in st_mu.iter().zip(&st_pi) {
        if m > F::zero() {
            u_s = u_s.max(p / m);
        }
    }

    Ok(ProblemDiagnostics {
        c: kl_rate_with(problem, &st_mu),
        u_rho,
        u_rho_at,
        u_s,
        m_rho_sq,
    })
}

/// `Σ_{s,a} d_t^μ(s,a) w*_t(s,a)` for every step; each entry should be 1.
pub fn ratio_normalization<F: Scalar>(occ: &OccupancyTables<F>) -> Vec<F> {
    (0..occ.horizon)
        .map(|t| {
            let mut acc = F::zero();
            for s in 0..occ.num_states {
                for a in 0..occ.num_actions {
                    acc += occ.d_mu(t, s, a) * occ.ratio.get(t, s, a);
                }
            }
            acc
        })
        .collect()
}

/// True when every step's weights normalize to 1 within `EXACT_TOL`.
pub fn ratios_normalized<F: Scalar>(occ: &OccupancyTables<F>) -> bool {
    ratio_normalization(occ)
        .into_iter()
        .all(|x| (x - F::one()).abs() <= F::tol(EXACT_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Rewards;

    fn chain(trans: Vec<f64>, ns: usize) -> TabularMdp<f64> {
        let mut init = vec![0.0; ns];
        init[0] = 1.0;
        TabularMdp::new(ns, 1, 4, 1.0, trans, Rewards::Stationary(vec![0.0; ns]), init).unwrap()
    }

    #[test]
    fn single_state_stationary_is_policy() {
        let mdp = TabularMdp::<f64>::new(1, 2, 3, 1.0, vec![1.0, 1.0], Rewards::Stationary(vec![0.0, 1.0]), vec![1.0]).unwrap();
        let pol = PolicyTable::from_rows(vec![vec![0.3, 0.7]]).unwrap();
        let d = stationary_distribution(&mdp, &pol).unwrap();
        assert!((d[0] - 0.3).abs() < 1e-15 && (d[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn doubly_stochastic_chain_is_uniform() {
        let t = vec![0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5];
        let mdp = chain(t, 3);
        let d = stationary_distribution(&mdp, &PolicyTable::uniform(3, 1)).unwrap();
        for x in d {
            assert!((x - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn aperiodic_chain_converges_bipartite_chain_does_not() {
        // 0→1→2→{0,1}: cycle lengths 2 and 3, so aperiodic
        let cyc = TabularMdp::new(
            3,
            1,
            2,
            1.0,
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0],
            Rewards::Stationary(vec![0.0; 3]),
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        assert!(stationary_distribution(&cyc, &PolicyTable::uniform(3, 1)).is_ok());

        // {0} ↔ {1,2}: period 2, and the uniform start puts unequal mass
        // on the two sides, so the iterates oscillate
        let bip = TabularMdp::new(
            3,
            1,
            2,
            1.0,
            vec![
                0.0, 0.5, 0.5, //
                1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0,
            ],
            Rewards::Stationary(vec![0.0; 3]),
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        assert!(matches!(
            stationary_distribution(&bip, &PolicyTable::uniform(3, 1)),
            Err(OpeError::StationaryNotConverged { .. })
        ));
    }

    #[test]
    fn kl_rate_single_state() {
        let mdp = TabularMdp::<f64>::new(1, 2, 3, 1.0, vec![1.0, 1.0], Rewards::Stationary(vec![0.0, 1.0]), vec![1.0]).unwrap();
        let p = EvaluationProblem::new(
            mdp,
            PolicyTable::uniform(1, 2),
            PolicyTable::from_rows(vec![vec![0.6, 0.4]]).unwrap(),
        )
        .unwrap();
        // 0.5 ln(0.5/0.6) + 0.5 ln(0.5/0.4) = 0.5 ln(25/24)
        let c = kl_rate(&p).unwrap();
        assert!((c - 0.5 * (25.0f64 / 24.0).ln()).abs() < 1e-15);
        assert!((c - 0.0204).abs() < 1e-4);

        let d = diagnostics(&p).unwrap();
        assert!((d.u_rho - 1.2).abs() < 1e-15);
        assert!((d.m_rho_sq - 1.04).abs() < 1e-15);
        assert!((d.u_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_rate_infinite_when_target_drops_action() {
        let mdp = TabularMdp::<f64>::new(1, 2, 3, 1.0, vec![1.0, 1.0], Rewards::Stationary(vec![0.0, 1.0]), vec![1.0]).unwrap();
        let p = EvaluationProblem::new(
            mdp,
            PolicyTable::uniform(1, 2),
            PolicyTable::from_rows(vec![vec![1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        assert!(kl_rate(&p).unwrap().is_infinite());
    }
}
