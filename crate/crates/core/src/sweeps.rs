//! Horizon-scaling experiments: exact variance curves, exponential and
//! polynomial fits, the PDIS regime split, the ASIS error bound and the
//! log-likelihood-ratio rate.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::estimators::{EstimatorId, EstimatorKind, WeightTable};
use crate::exact::{exact_moments, moment_dp_variance, MomentReport};
use crate::linalg::fit_line;
use crate::mdp::{target_value, EvaluationProblem};
use crate::montecarlo::{estimator_stats, trajectory_rng, walk, with_workers, SamplerConfig};
use crate::occupancy::{diagnostics, kl_rate, occupancies};
use crate::scalar::{Scalar, ORACLE_TOL};

/// Horizons below this are excluded from fits.
pub const FIT_MIN_T: usize = 4;
/// Fitted exponential rates at or below this count as flat.
pub const ALPHA_FLAT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepMethod {
    ExactDp,
    /// Full enumeration; rows over the enumeration cap fall back to the
    /// moment DP.
    Enumeration,
    MonteCarlo(SamplerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow<F> {
    pub estimator: EstimatorId,
    pub horizon: usize,
    pub gamma: F,
    pub mean: F,
    pub variance: F,
    /// `exact_dp`, `enumeration` or `monte_carlo`.
    pub method: &'static str,
    pub seed: Option<u64>,
}

/// Least-squares fits of `ln Var` against `T` (rate α) and `ln T`
/// (degree β) over rows with finite positive variance and `T ≥ FIT_MIN_T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub estimator: EstimatorId,
    pub alpha: f64,
    pub beta: f64,
    pub t_min: usize,
    pub t_max: usize,
    /// RMS residual of the exponential fit.
    pub residual: f64,
    /// RMS residual of the polynomial fit.
    pub residual_beta: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult<F> {
    pub rows: Vec<SweepRow<F>>,
    pub fits: Vec<FitSummary>,
    /// Why a fit was skipped, one line per estimator.
    pub skipped: Vec<String>,
}

impl<F: Scalar> SweepResult<F> {
    /// Rows `estimator,horizon,gamma,mean,variance,method,seed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "horizon", "gamma", "mean", "variance", "method", "seed"])?;
        for r in &self.rows {
            w.write_record([
                r.estimator.as_str().to_string(),
                r.horizon.to_string(),
                r.gamma.to_string(),
                r.mean.to_string(),
                r.variance.to_string(),
                r.method.to_string(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rows_for(&self, id: EstimatorId) -> impl Iterator<Item = &SweepRow<F>> {
        self.rows.iter().filter(move |r| r.estimator == id)
    }

    pub fn fit_for(&self, id: EstimatorId) -> Option<&FitSummary> {
        self.fits.iter().find(|f| f.estimator == id)
    }
}

fn plain_kind<F>(id: EstimatorId) -> Result<EstimatorKind<F>> {
    match id {
        EstimatorId::Is => Ok(EstimatorKind::Is),
        EstimatorId::Pdis => Ok(EstimatorKind::Pdis),
        EstimatorId::Sis => Ok(EstimatorKind::Sis),
        other => Err(OpeError::Unsupported(format!("{other} cannot be swept over horizons"))),
    }
}

fn exact_row<F: Scalar>(problem: &EvaluationProblem<F>, kind: &EstimatorKind<F>, method: &SweepMethod) -> Result<(MomentReport<F>, &'static str)> {
    match method {
        SweepMethod::Enumeration => match exact_moments(problem, kind) {
            Ok(m) => Ok((m, "enumeration")),
            Err(OpeError::EnumerationCap { .. }) => Ok((moment_dp_variance(problem, kind)?, "exact_dp")),
            Err(e) => Err(e),
        },
        _ => Ok((moment_dp_variance(problem, kind)?, "exact_dp")),
    }
}

/// One row per `(kind, T)`, ordered by kind then horizon, with fits per
/// kind. Rows are computed in parallel on the current rayon pool.
pub fn horizon_sweep<F, Fam>(family: Fam, t_grid: &[usize], kinds: &[EstimatorId], method: &SweepMethod) -> Result<SweepResult<F>>
where
    F: Scalar,
    Fam: Fn(usize) -> Result<EvaluationProblem<F>> + Sync,
{
    if t_grid.is_empty() || kinds.is_empty() {
        return Err(OpeError::InvalidArgument("sweep needs at least one horizon and one estimator".into()));
    }
    let jobs: Vec<(EstimatorId, usize)> = kinds.iter().flat_map(|&k| t_grid.iter().map(move |&t| (k, t))).collect();
    let rows: Vec<SweepRow<F>> = jobs
        .par_iter()
        .map(|&(id, t)| {
            let problem = family(t)?;
            let kind = plain_kind(id)?;
            let (mean, variance, method_name, seed) = match method {
                SweepMethod::MonteCarlo(cfg) => {
                    let est = estimator_stats(&problem, &kind, &SamplerConfig { num_workers: 0, ..cfg.clone() })?;
                    (est.estimate, est.variance()?, "monte_carlo", Some(cfg.seed))
                }
                _ => {
                    let (m, name) = exact_row(&problem, &kind, method)?;
                    (m.mean, m.variance, name, None)
                }
            };
            Ok(SweepRow {
                estimator: id,
                horizon: t,
                gamma: problem.mdp.discount(),
                mean,
                variance,
                method: method_name,
                seed,
            })
        })
        .collect::<Result<_>>()?;
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for &id in kinds {
        let pts: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.estimator == id)
            .map(|r| (r.horizon, r.variance.to_f64_lossy()))
            .collect();
        match fit_rates(id, &pts) {
            Some(f) => fits.push(f),
            None => skipped.push(format!(
                "{id}: fewer than two rows with T ≥ {FIT_MIN_T} and finite positive variance"
            )),
        }
    }
    Ok(SweepResult { rows, fits, skipped })
}

/// Exponential and polynomial fits of `(T, variance)` points.
pub fn fit_rates(id: EstimatorId, points: &[(usize, f64)]) -> Option<FitSummary> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, v)| *t >= FIT_MIN_T && v.is_finite() && *v > 0.0)
        .map(|&(t, v)| (t as f64, v.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let ts: Vec<f64> = usable.iter().map(|p| p.0).collect();
    let logs: Vec<f64> = usable.iter().map(|p| p.1).collect();
    let log_ts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (_, alpha, residual) = fit_line(&ts, &logs)?;
    let (_, beta, residual_beta) = fit_line(&log_ts, &logs)?;
    Some(FitSummary {
        estimator: id,
        alpha,
        beta,
        t_min: ts.iter().copied().fold(f64::INFINITY, f64::min) as usize,
        t_max: ts.iter().copied().fold(0.0, f64::max) as usize,
        residual,
        residual_beta,
        n_points: usable.len(),
    })
}

/// Smallest `Var(T+1)/Var(T)` over consecutive horizons in `rows` within
/// `[t_lo, t_hi]`.
pub fn min_growth_ratio<F: Scalar>(rows: &[&SweepRow<F>], t_lo: usize, t_hi: usize) -> Option<f64> {
    let mut pts: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.horizon >= t_lo && r.horizon <= t_hi)
        .map(|r| (r.horizon, r.variance.to_f64_lossy()))
        .collect();
    pts.sort_by_key(|p| p.0);
    pts.windows(2)
        .filter(|w| w[1].0 == w[0].0 + 1)
        .map(|w| w[1].1 / w[0].1)
        .reduce(f64::min)
}

/// `C = max_t γ^{2t} E_{d_t^μ}[(w*_t)²]`. With rewards in `[0, 1]`,
/// Cauchy–Schwarz gives `Var(SIS) ≤ T Σ_t E[(γ^t w*_t r_t)²] ≤ C·T²` for
/// every horizon up to that of `problem`.
pub fn sis_quadratic_constant<F: Scalar>(problem: &EvaluationProblem<F>) -> Result<F> {
    let occ = occupancies(problem)?;
    let moments = occ.ratio_second_moments();
    Ok(moments
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            let d = problem.mdp.discount_pow(t);
            d * d * m
        })
        .fold(F::zero(), F::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Exponential,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u_rho_gamma: f64,
    /// `U_ρ·γ ≤ 1`, the sufficient condition for polynomial PDIS variance.
    pub bounded_ratio_condition: bool,
    pub classification: Regime,
    /// Whether the fit agrees with the sufficient condition when it holds:
    /// polynomial classification with `β ≤ 2.5`.
    pub consistent: bool,
}

/// Maximum polynomial degree accepted for "polynomial" variance growth.
pub const BETA_MAX: f64 = 2.5;

/// Classifies exact PDIS variance growth for each discount in
/// `gamma_grid`. A curve is exponential when its exponential fit has a
/// rate above [`ALPHA_FLAT`] and beats the polynomial fit.
pub fn pdis_regime<F, Fam>(family: Fam, t_grid: &[usize], gamma_grid: &[f64]) -> Result<Vec<RegimeRow>>
where
    F: Scalar,
    Fam: Fn(usize, f64) -> Result<EvaluationProblem<F>> + Sync,
{
    if gamma_grid.is_empty() {
        return Err(OpeError::InvalidArgument("empty gamma grid".into()));
    }
    gamma_grid
        .iter()
        .map(|&gamma| {
            let probe = family(t_grid.first().copied().unwrap_or(FIT_MIN_T), gamma)?;
            let u_rho = diagnostics(&probe)?.u_rho.to_f64_lossy();
            let sweep = horizon_sweep(|t| family(t, gamma), t_grid, &[EstimatorId::Pdis], &SweepMethod::ExactDp)?;
            let fit = sweep
                .fit_for(EstimatorId::Pdis)
                .ok_or_else(|| OpeError::InvalidArgument(format!("no PDIS fit at gamma {gamma}: {:?}", sweep.skipped)))?;
            let exponential = fit.alpha > ALPHA_FLAT && fit.residual < fit.residual_beta;
            let classification = if exponential { Regime::Exponential } else { Regime::Polynomial };
            let condition = u_rho * gamma <= 1.0;
            Ok(RegimeRow {
                gamma,
                alpha: fit.alpha,
                beta: fit.beta,
                u_rho_gamma: u_rho * gamma,
                bounded_ratio_condition: condition,
                classification,
                consistent: !condition || (classification == Regime::Polynomial && fit.beta <= BETA_MAX),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsisRow<F> {
    pub eps_target: f64,
    /// `max_t E_{d_t^μ}[(w_t − w*_t)²]` of the weights actually used.
    pub eps_realized: f64,
    pub mse: F,
    pub bias: F,
    pub variance: F,
    pub sis_variance: F,
    /// `2·Var(SIS) + 2T²·eps_realized`
    pub bound: F,
    pub holds: bool,
}

/// Relative accuracy of the realized weight error against its target.
const EPS_MATCH: f64 = 1e-6;

/// Exact MSE of ASIS with perturbed oracle weights `w = max(0, w* + λz)`,
/// `z` uniform on `[−1, 1]` from `perturbation_seed`, with `λ` tuned so the
/// realized weight error matches each target.
pub fn asis_experiment<F: Scalar>(
    problem: &EvaluationProblem<F>,
    eps_grid: &[f64],
    perturbation_seed: u64,
) -> Result<Vec<AsisRow<F>>> {
    let occ = occupancies(problem)?;
    let oracle = occ.ratio();
    let v_pi = target_value(problem)?;
    let sis_variance = moment_dp_variance(problem, &EstimatorKind::Sis)?.variance;
    let (h, ns, na) = (problem.horizon(), problem.num_states(), problem.num_actions());
    let mut rng = trajectory_rng(perturbation_seed, 0);
    let noise: Vec<f64> = (0..h * ns * na).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let base: Vec<f64> = oracle.as_flat().iter().map(|x| x.to_f64_lossy()).collect();
    let d_mu: Vec<f64> = (0..h)
        .flat_map(|t| (0..ns).flat_map(move |s| (0..na).map(move |a| (t, s, a))))
        .map(|(t, s, a)| occ.d_mu(t, s, a).to_f64_lossy())
        .collect();
    let weights = |lambda: f64| -> Vec<f64> { base.iter().zip(&noise).map(|(w, z)| (w + lambda * z).max(0.0)).collect() };
    let realized = |w: &[f64]| -> f64 {
        (0..h)
            .map(|t| {
                let r = t * ns * na..(t + 1) * ns * na;
                w[r.clone()].iter().zip(&base[r.clone()]).zip(&d_mu[r]).map(|((x, y), d)| d * (x - y) * (x - y)).sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    let t2 = F::of_usize(h * h);
    let two = F::lit(2.0);
    eps_grid
        .iter()
        .map(|&eps| {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(OpeError::InvalidArgument(format!("weight error target {eps} must be finite and ≥ 0")));
            }
            let lambda = if eps == 0.0 { 0.0 } else { solve_lambda(|l| realized(&weights(l)), eps)? };
            let w = weights(lambda);
            let eps_realized = realized(&w);
            let table = WeightTable::new(h, ns, na, w.into_iter().map(F::lit).collect())?;
            let m = moment_dp_variance(problem, &EstimatorKind::Asis(table))?;
            let bias = m.mean - v_pi;
            let mse = bias * bias + m.variance;
            let bound = two * sis_variance + two * t2 * F::lit(eps_realized);
            Ok(AsisRow {
                eps_target: eps,
                eps_realized,
                mse,
                bias,
                variance: m.variance,
                sis_variance,
                bound,
                holds: mse <= bound + F::tol(ORACLE_TOL),
            })
        })
        .collect()
}

/// Root of the nondecreasing `f(λ) = target` by doubling then bisection.
fn solve_lambda(f: impl Fn(f64) -> f64, target: f64) -> Result<f64> {
    let mut hi = 1.0;
    let mut doublings = 0;
    while f(hi) < target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(OpeError::InvalidArgument(format!("weight error {target} is unreachable by perturbation")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() <= EPS_MATCH * target {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCheck<F> {
    pub horizon: usize,
    pub n_used: usize,
    /// Trajectories with a zero ratio, whose log is undefined.
    pub n_excluded: usize,
    /// Mean of `(1/T) log ρ_{1:T}` over used trajectories.
    pub mean: F,
    pub stderr: F,
    pub c: F,
    /// `|mean + c|`
    pub deviation: F,
    /// Fraction of all trajectories with `ρ_{1:T} < e^{−cT/2}`.
    pub frac_small: F,
}

impl<F: Scalar> RateCheck<F> {
    /// `deviation ≤ k·stderr`
    pub fn within(&self, k: f64) -> bool {
        self.deviation <= F::lit(k) * self.stderr
    }
}

/// Empirical per-step log-likelihood-ratio rate over `T`-step trajectories
/// under μ, against the KL rate `c`. Only the behavior chain is simulated,
/// so rewards and the problem's own horizon are irrelevant, and π may put
/// mass where μ has none: only ratios on μ's support enter.
pub fn likelihood_rate_check<F: Scalar>(problem: &EvaluationProblem<F>, horizon: usize, config: &SamplerConfig) -> Result<RateCheck<F>> {
    problem.ensure_valid_on_behavior_support()?;
    if config.num_trajectories < 2 || horizon == 0 {
        return Err(OpeError::InsufficientSamples { needed: 2, got: config.num_trajectories });
    }
    let c = kl_rate(problem)?;
    let mdp = &problem.mdp;
    // per trajectory: Σ log ρ_t, or None if some ρ_t = 0
    let logs: Vec<Option<f64>> = with_workers(config.num_workers, || {
        (0..config.num_trajectories as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = trajectory_rng(config.seed, i);
                let mut total = 0.0f64;
                let mut zero = false;
                walk(mdp, &problem.behavior, horizon, &mut rng, |_, s, a| {
                    let r = problem.ratio(s, a).map_or(0.0, |x| x.to_f64_lossy());
                    if r > 0.0 {
                        total += r.ln();
                    } else {
                        zero = true;
                    }
                });
                (!zero).then_some(total)
            })
            .collect()
    })?;
    let tf = horizon as f64;
    let rates: Vec<f64> = logs.iter().flatten().map(|l| l / tf).collect();
    let n_used = rates.len();
    if n_used < 2 {
        return Err(OpeError::InsufficientSamples { needed: 2, got: n_used });
    }
    let mean = rates.iter().sum::<f64>() / n_used as f64;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n_used - 1) as f64;
    let cf = c.to_f64_lossy();
    let threshold = -cf * tf / 2.0;
    let small = logs.iter().filter(|l| l.map_or(true, |x| x < threshold)).count();
    Ok(RateCheck {
        horizon,
        n_used,
        n_excluded: logs.len() - n_used,
        mean: F::lit(mean),
        stderr: F::lit((var / n_used as f64).sqrt()),
        c,
        deviation: F::lit((mean + cf).abs()),
        frac_small: F::lit(small as f64 / logs.len() as f64),
    })
}
