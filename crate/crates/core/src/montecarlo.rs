//! Seeded trajectory sampling and Monte Carlo estimator statistics.
//!
//! Trajectory `i` draws from its own ChaCha stream `(seed, i)`, so a batch
//! is bitwise identical for any worker count, and the first `n`
//! trajectories of a larger batch are exactly the batch of size `n`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::estimators::{batch_estimate, per_trajectory_returns, BatchEstimate, EstimatorKind};
use crate::mdp::{EvaluationProblem, PolicyTable, Step, TabularMdp, Trajectory};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    pub num_trajectories: usize,
    /// Worker threads; 0 uses the ambient rayon pool.
    #[serde(default)]
    pub num_workers: usize,
}

impl SamplerConfig {
    pub fn new(seed: u64, num_trajectories: usize) -> Self {
        Self { seed, num_trajectories, num_workers: 0 }
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.num_workers = n;
        self
    }
}

/// Runs `f` on a pool of `workers` threads, or on the ambient pool when
/// `workers` is 0.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| OpeError::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Random stream of trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Index drawn from `probs` by inverse CDF. Rounding slack in the last
/// bucket falls on the last positive entry.
#[inline]
fn categorical<F: Scalar>(probs: &[F], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Walks one trajectory of length `horizon` under `policy`, calling
/// `visit(step, state, action)` at every step.
pub(crate) fn walk<F: Scalar>(
    mdp: &TabularMdp<F>,
    policy: &PolicyTable<F>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(usize, usize, usize),
) {
    let mut s = categorical(mdp.initial_dist(), rng);
    for t in 0..horizon {
        let a = categorical(policy.row(s), rng);
        visit(t, s, a);
        if t + 1 < horizon {
            s = categorical(mdp.next_dist(s, a), rng);
        }
    }
}

fn sample_one<F: Scalar>(mdp: &TabularMdp<F>, policy: &PolicyTable<F>, seed: u64, index: u64) -> Trajectory<F> {
    let mut rng = trajectory_rng(seed, index);
    let mut steps = Vec::with_capacity(mdp.horizon());
    walk(mdp, policy, mdp.horizon(), &mut rng, |t, s, a| {
        steps.push(Step { state: s, action: a, reward: mdp.reward(t, s, a) });
    });
    Trajectory::new(steps)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch<F> {
    pub trajectories: Vec<Trajectory<F>>,
}

impl<F: Scalar> TrajectoryBatch<F> {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Rows `traj_id,t,s,a,r` with 1-based `t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["traj_id", "t", "s", "a", "r"])?;
        for (i, tr) in self.trajectories.iter().enumerate() {
            for (t, st) in tr.steps.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    (t + 1).to_string(),
                    st.state.to_string(),
                    st.action.to_string(),
                    st.reward.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `N` i.i.d. trajectories under the behavior policy.
pub fn sample_trajectories<F: Scalar>(
    problem: &EvaluationProblem<F>,
    config: &SamplerConfig,
) -> Result<TrajectoryBatch<F>> {
    sample_with_policy(problem, &problem.behavior, config)
}

/// `N` i.i.d. trajectories under an arbitrary policy, e.g. the target for
/// on-policy cross-checks of `v^π`.
pub fn sample_with_policy<F: Scalar>(
    problem: &EvaluationProblem<F>,
    policy: &PolicyTable<F>,
    config: &SamplerConfig,
) -> Result<TrajectoryBatch<F>> {
    problem.ensure_valid()?;
    if config.num_trajectories == 0 {
        return Err(OpeError::EmptyBatch);
    }
    let mdp = &problem.mdp;
    let trajectories = with_workers(config.num_workers, || {
        (0..config.num_trajectories as u64)
            .into_par_iter()
            .map(|i| sample_one(mdp, policy, config.seed, i))
            .collect()
    })?;
    Ok(TrajectoryBatch { trajectories })
}

/// Plug-in mean, sample variance and standard error of one estimator over
/// a sampled batch.
pub fn estimator_stats<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
    config: &SamplerConfig,
) -> Result<BatchEstimate<F>> {
    if config.num_trajectories < 2 {
        return Err(OpeError::InsufficientSamples { needed: 2, got: config.num_trajectories });
    }
    let batch = sample_trajectories(problem, config)?;
    with_workers(config.num_workers, || batch_estimate(problem, kind, &batch.trajectories))?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow<F> {
    pub n: usize,
    pub mean: F,
    pub sample_variance: F,
    pub stderr: F,
    /// Median per-trajectory return; far below the mean when the
    /// estimator is dominated by rare large weights.
    pub median: F,
}

/// Statistics over nested prefixes of one batch: row `N` uses the first
/// `N` trajectories of the largest batch.
pub fn convergence_curve<F: Scalar>(
    problem: &EvaluationProblem<F>,
    kind: &EstimatorKind<F>,
    seed: u64,
    n_grid: &[usize],
    num_workers: usize,
) -> Result<Vec<CurveRow<F>>> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] < 2 {
        return Err(OpeError::InvalidArgument("N grid must be increasing and start at 2 or more".into()));
    }
    if let EstimatorKind::Rcis = kind {
        return Err(OpeError::Unsupported("convergence curves need per-trajectory returns".into()));
    }
    let n_max = *n_grid.last().expect("non-empty grid");
    let config = SamplerConfig::new(seed, n_max).with_workers(num_workers);
    let batch = sample_trajectories(problem, &config)?;
    let returns = with_workers(num_workers, || per_trajectory_returns(problem, kind, &batch.trajectories))??;
    n_grid
        .iter()
        .map(|&n| {
            let est = BatchEstimate::from_values(&returns[..n])?;
            let mut sorted = returns[..n].to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / F::lit(2.0)
            };
            Ok(CurveRow {
                n,
                mean: est.estimate,
                sample_variance: est.variance()?,
                stderr: est.stderr.unwrap_or_else(F::nan),
                median,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::counterexample_mdp;

    #[test]
    fn batches_do_not_depend_on_workers() {
        let p = counterexample_mdp::<f64>(1).unwrap();
        let a = sample_trajectories(&p, &SamplerConfig::new(5, 500).with_workers(1)).unwrap();
        let b = sample_trajectories(&p, &SamplerConfig::new(5, 500).with_workers(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prefix_of_larger_batch() {
        let p = counterexample_mdp::<f64>(2).unwrap();
        let small = sample_trajectories(&p, &SamplerConfig::new(9, 10)).unwrap();
        let large = sample_trajectories(&p, &SamplerConfig::new(9, 1000)).unwrap();
        assert_eq!(small.trajectories[..], large.trajectories[..10]);
    }

    #[test]
    fn curve_rows_match_prefix_stats() {
        let p = counterexample_mdp::<f64>(1).unwrap();
        let rows = convergence_curve(&p, &EstimatorKind::Is, 3, &[10, 100, 1000], 2).unwrap();
        let batch = sample_trajectories(&p, &SamplerConfig::new(3, 10)).unwrap();
        let direct = batch_estimate(&p, &EstimatorKind::Is, &batch.trajectories).unwrap();
        assert_eq!(rows[0].mean, direct.estimate);
        assert_eq!(rows[0].sample_variance, direct.sample_variance.unwrap());
    }

    #[test]
    fn categorical_skips_zero_mass() {
        let mut rng = trajectory_rng(1, 0);
        for _ in 0..1000 {
            assert_eq!(categorical(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
