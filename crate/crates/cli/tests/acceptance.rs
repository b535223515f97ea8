//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so the verdict lines are always
//! printed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ope_lab::conditions::{lemma2_gap, theorem1_condition, theorem2_condition, verify_implication, Conditioning, Implication};
use ope_lab::estimators::{batch_estimate, rcis_estimate, WeightTable};
use ope_lab::exact::{exact_moments, moment_dp_variance, weighted_return_law};
use ope_lab::mdp::target_value;
use ope_lab::montecarlo::{sample_trajectories, trajectory_rng, SamplerConfig};
use ope_lab::occupancy::{conditional_weight_check, kl_rate};
use ope_lab::scenarios::{counterexample_fixture, counterexample_mdp, random_ergodic, two_lane, PopulationSpec};
use ope_lab::sweeps::{
    asis_experiment, horizon_sweep, likelihood_rate_check, min_growth_ratio, pdis_regime, sis_quadratic_constant,
    Regime, SweepMethod, BETA_MAX,
};
use ope_lab::{EstimatorId, EstimatorKind, Problem};
use rand::Rng;

type Outcome = Result<String, String>;

const TABLE: [(f64, [f64; 3]); 3] = [(1.4, [0.12, 0.2448, 0.2]), (1.0, [0.5424, 0.4528, 0.52]), (0.8, [0.2304, 0.2688, 0.32])];
const ORDERINGS: [&str; 3] = ["IS < SIS < PDIS", "PDIS < SIS < IS", "IS < PDIS < SIS"];
const IDS: [EstimatorId; 3] = [EstimatorId::Is, EstimatorId::Pdis, EstimatorId::Sis];

fn kind(id: EstimatorId) -> EstimatorKind<f64> {
    match id {
        EstimatorId::Is => EstimatorKind::Is,
        EstimatorId::Pdis => EstimatorKind::Pdis,
        _ => EstimatorKind::Sis,
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ope-lab"))
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

/// ≤ 4 states, ≤ 3 actions, T ≤ 6.
fn population(seed: u64) -> PopulationSpec {
    PopulationSpec { seed, ..PopulationSpec::default() }
}

fn ergodic(t: usize) -> ope_lab::Result<Problem> {
    random_ergodic(7, 5, 2, t, 1.0, 0.2)
}

fn c1_table() -> Outcome {
    let start = Instant::now();
    let out = bin().args(["counterexamples", "--format", "json"]).output().map_err(e2s)?;
    let elapsed = start.elapsed();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(e2s)?;
    let mut worst_atom = 0.0f64;
    let mut worst_mdp = 0.0f64;
    for (which, (mean, vars)) in (1..=3u8).zip(TABLE) {
        let fx = counterexample_fixture(which).map_err(e2s)?;
        let p = counterexample_mdp::<f64>(which).map_err(e2s)?;
        for (id, want) in IDS.into_iter().zip(vars) {
            let (m, v) = fx.recompute(id).ok_or("no atoms")?;
            worst_atom = worst_atom.max((m - mean).abs()).max((v - want).abs());
            let e = exact_moments(&p, &kind(id)).map_err(e2s)?;
            worst_mdp = worst_mdp.max((e.mean - mean).abs()).max((e.variance - want).abs());
        }
        let row = &report["examples"][usize::from(which) - 1];
        let cli = [row["var_is"].as_f64(), row["var_pdis"].as_f64(), row["var_sis"].as_f64()];
        if cli.iter().zip(vars).any(|(c, w)| c.map_or(true, |c| (c - w).abs() > 1e-12)) {
            return Err(format!("example {which}: CLI reports {cli:?}"));
        }
    }
    check(
        out.status.success()
            && report["cross_check"] == "ok"
            && worst_atom <= 1e-12
            && worst_mdp <= 1e-9
            && elapsed < Duration::from_secs(1),
        format!("atoms {worst_atom:.1e} (≤ 1e-12), MDP enumeration {worst_mdp:.1e} (≤ 1e-9), {elapsed:.2?} (< 1 s)"),
    )
}

fn c2_orderings() -> Outcome {
    let out = bin().args(["counterexamples", "--format", "table"]).output().map_err(e2s)?;
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().skip(1).take(3).collect();
    let ok = lines.len() == 3 && lines.iter().zip(ORDERINGS).all(|(l, o)| l.trim_end().ends_with(o));
    check(ok, format!("{}", lines.iter().map(|l| l.split("  ").last().unwrap_or("").trim()).collect::<Vec<_>>().join(" | ")))
}

fn c3_unbiased() -> Outcome {
    let start = Instant::now();
    let pop = population(0);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let p = pop.generate::<f64>(i).map_err(e2s)?;
        let v = target_value(&p).map_err(e2s)?;
        for id in IDS {
            worst = worst.max((exact_moments(&p, &kind(id)).map_err(e2s)?.mean - v).abs());
        }
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-10 && elapsed < Duration::from_secs(30), format!("200 problems, max |mean − v^π| {worst:.1e} (≤ 1e-10), {elapsed:.2?} (< 30 s)"))
}

fn c4_lemma1() -> Outcome {
    let pop = population(0);
    let mut worst = 0.0f64;
    let mut steps = 0;
    for i in 0..200 {
        let p = pop.generate::<f64>(i).map_err(e2s)?;
        for t in 0..p.horizon() {
            worst = worst.max(conditional_weight_check(&p, t).map_err(e2s)?);
            steps += 1;
        }
    }
    check(worst <= 1e-10, format!("{steps} (problem, step) pairs, max |E[ρ_1:t | s,a] − w*| {worst:.1e} (≤ 1e-10)"))
}

fn c5_oracles() -> Outcome {
    let pop = PopulationSpec { seed: 2, max_states: 3, max_actions: 2, min_horizon: 5, max_horizon: 8, ..PopulationSpec::default() };
    let mut worst = 0.0f64;
    let mut max_t = 0;
    for i in 0..100 {
        let p = pop.generate::<f64>(i).map_err(e2s)?;
        max_t = max_t.max(p.horizon());
        let mut rng = trajectory_rng(i as u64, 0);
        let n = p.horizon() * p.num_states() * p.num_actions();
        let w = WeightTable::new(p.horizon(), p.num_states(), p.num_actions(), (0..n).map(|_| rng.gen_range(0.0..3.0)).collect())
            .map_err(e2s)?;
        for k in [EstimatorKind::Is, EstimatorKind::Pdis, EstimatorKind::Sis, EstimatorKind::Asis(w)] {
            let e = exact_moments(&p, &k).map_err(e2s)?.variance;
            let d = moment_dp_variance(&p, &k).map_err(e2s)?.variance;
            worst = worst.max((e - d).abs() / e.abs().max(1.0));
        }
    }
    check(worst <= 1e-9, format!("100 problems, T ≤ {max_t}, IS/PDIS/SIS/ASIS, max gap {worst:.1e} (≤ 1e-9)"))
}

fn c6_implications() -> Outcome {
    let pop = population(1);
    let mut parts = Vec::new();
    let mut ok = true;
    for which in [Implication::Thm1, Implication::Thm2] {
        let s = verify_implication(|i| pop.generate::<f64>(i), 1000, which).map_err(e2s)?;
        ok &= s.violations.is_empty();
        parts.push(format!("{which:?}: condition on {}/1000, {} violations", s.n_condition_holds, s.violations.len()));
    }
    let ex1 = theorem1_condition(&counterexample_mdp::<f64>(1).map_err(e2s)?).map_err(e2s)?;
    let ex2 = theorem2_condition(&counterexample_mdp::<f64>(2).map_err(e2s)?).map_err(e2s)?;
    ok &= !ex1.holds && !ex2.holds;
    parts.push(format!("example 1 fails Thm1 condition: {}, example 2 fails Thm2 condition: {}", !ex1.holds, !ex2.holds));
    check(ok, parts.join("; "))
}

fn c7_lemma2() -> Outcome {
    let mut n = 0;
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for seed in [0, 1] {
        let pop = population(seed);
        for i in 0..500 {
            let p = pop.generate::<f64>(i).map_err(e2s)?;
            for c in [Conditioning::Prefix, Conditioning::StateAction] {
                let g = lemma2_gap(&p, c).map_err(e2s)?;
                n += 1;
                failures += usize::from(!g.holds(1e-10));
                worst = worst.min(g.lhs - g.rhs);
            }
        }
    }
    check(failures == 0, format!("{n} checks, {failures} failures, min lhs − rhs {worst:.3e} (≥ −1e-10)"))
}

fn c8_two_lane() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for t in [4, 8, 16, 32, 64] {
        let p = two_lane::<f64>(t).map_err(e2s)?;
        let v = moment_dp_variance(&p, &EstimatorKind::Sis).map_err(e2s)?.variance;
        let law = weighted_return_law(&p, &EstimatorKind::Sis).map_err(e2s)?;
        let t2 = (t * t) as f64;
        ok &= (v - t2).abs() <= 1e-9 * t2 && law.atoms == vec![(0.0, 0.5), (2.0 * t as f64, 0.5)];
        parts.push(format!("T={t}: {v}"));
    }
    check(ok, format!("Var(SIS) {}; law uniform on {{0, 2T}}", parts.join(", ")))
}

fn c9_rcis() -> Outcome {
    let pop = population(5);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let p = pop.generate::<f64>(i).map_err(e2s)?;
        let n = [2, 10, 1000][i % 3];
        let batch = sample_trajectories(&p, &SamplerConfig::new(i as u64, n)).map_err(e2s)?;
        let is = batch_estimate(&p, &EstimatorKind::Is, &batch.trajectories).map_err(e2s)?.estimate;
        let rcis = rcis_estimate(&p, &batch.trajectories).map_err(e2s)?.estimate;
        worst = worst.max((is - rcis).abs());
    }
    // rank-deficient: every return equal
    let p = counterexample_mdp::<f64>(1).map_err(e2s)?;
    let batch = sample_trajectories(&p, &SamplerConfig::new(0, 50)).map_err(e2s)?;
    let flat: Vec<_> = batch.trajectories.into_iter().filter(|t| t.discounted_return(1.0) == 1.0).collect();
    let is = batch_estimate(&p, &EstimatorKind::Is, &flat).map_err(e2s)?.estimate;
    let rcis = rcis_estimate(&p, &flat).map_err(e2s)?.estimate;
    let flat_gap = (is - rcis).abs();
    check(
        worst <= 1e-10 && flat_gap <= 1e-10 && flat.len() >= 2,
        format!("100 batches, max |RCIS − IS| {worst:.1e}; equal-return batch of {} gap {flat_gap:.1e} (≤ 1e-10)", flat.len()),
    )
}

fn c10_scaling() -> Outcome {
    let start = Instant::now();
    let p = ergodic(200).map_err(e2s)?;
    let c_kl = kl_rate(&p).map_err(e2s)?;
    let is = horizon_sweep(ergodic, &(8..=30).collect::<Vec<_>>(), &[EstimatorId::Is], &SweepMethod::ExactDp).map_err(e2s)?;
    let growth = min_growth_ratio(&is.rows_for(EstimatorId::Is).collect::<Vec<_>>(), 8, 30).ok_or("no IS rows")?;
    let c = sis_quadratic_constant(&p).map_err(e2s)?;
    let sis = horizon_sweep(ergodic, &(4..=200).collect::<Vec<_>>(), &[EstimatorId::Sis], &SweepMethod::ExactDp).map_err(e2s)?;
    let sis_max = sis.rows_for(EstimatorId::Sis).map(|r| r.variance / (r.horizon * r.horizon) as f64).fold(0.0, f64::max);
    let u_rho = ope_lab::occupancy::diagnostics(&p).map_err(e2s)?.u_rho;
    let regime = pdis_regime(|t, g| random_ergodic::<f64>(7, 5, 2, t, g, 0.2), &(4..=200).collect::<Vec<_>>(), &[1.0 / u_rho])
        .map_err(e2s)?;
    let r = &regime[0];
    let elapsed = start.elapsed();
    check(
        c_kl > 0.0
            && growth >= 1.02
            && sis_max <= c
            && r.u_rho_gamma <= 1.0 + 1e-12
            && r.classification == Regime::Polynomial
            && r.beta <= BETA_MAX
            && elapsed < Duration::from_secs(300),
        format!(
            "c = {c_kl:.4}; min Var_IS(T+1)/Var_IS(T) over [8,30] {growth:.4} (≥ 1.02); max Var_SIS/T² over [4,200] {sis_max:.4} ≤ C = {c:.4}; \
             PDIS at U_ρ·γ = {:.3}: β {:.3} (≤ {BETA_MAX}); {elapsed:.2?}",
            r.u_rho_gamma, r.beta
        ),
    )
}

fn c11_rate() -> Outcome {
    let r = likelihood_rate_check(&ergodic(1).map_err(e2s)?, 10_000, &SamplerConfig::new(11, 100)).map_err(e2s)?;
    check(
        r.within(3.0),
        format!("mean {:.6} vs −c {:.6}: deviation {:.2e} = {:.2} stderr (≤ 3)", r.mean, -r.c, r.deviation, r.deviation / r.stderr),
    )
}

fn c12_asis() -> Outcome {
    let eps = [0.0, 0.01, 0.05, 0.2];
    let mut problems = Vec::new();
    for w in 1..=3 {
        problems.push((format!("example {w}"), counterexample_mdp::<f64>(w).map_err(e2s)?));
    }
    problems.push(("two-lane T=10".into(), two_lane::<f64>(10).map_err(e2s)?));
    let mut cases = 0;
    let mut worst_slack = f64::INFINITY;
    for (name, p) in &problems {
        for row in asis_experiment(p, &eps, 5).map_err(e2s)? {
            cases += 1;
            worst_slack = worst_slack.min(row.bound - row.mse);
            if !row.holds {
                return Err(format!("{name} eps {}: MSE {} > bound {}", row.eps_target, row.mse, row.bound));
            }
        }
    }
    check(true, format!("{cases} cases, min bound − MSE {worst_slack:.4}"))
}

fn c13_reproducible() -> Outcome {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("counterexamples", vec!["counterexamples".into(), "--format".into(), "json".into()]),
        ("evaluate", vec!["evaluate".into(), "--config".into(), data("evaluate_mc.json")]),
        ("sweep", vec!["sweep".into(), "--config".into(), data("sweep_ergodic.json")]),
        ("conditions", vec!["conditions".into(), "--config".into(), data("conditions_thm2.json")]),
        ("two-lane", vec!["two-lane".into()]),
        ("rate-check", vec!["rate-check".into(), "--config".into(), data("rate_check.json")]),
        ("validate", vec!["validate".into(), "--config".into(), data("validate_example3.json")]),
    ];
    let mut compared = 0;
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for (k, workers) in ["1", "4", "4"].iter().enumerate() {
            let out = dir.path().join(format!("{name}-{k}"));
            let status = bin()
                .args(args)
                .args(["--workers", workers, "--out", out.to_str().unwrap()])
                .output()
                .map_err(e2s)?
                .status;
            if !status.success() {
                return Err(format!("{name} exited with {status}"));
            }
            outputs.push(read_tree(&out)?);
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{name}: outputs differ across runs or worker counts"));
        }
        compared += outputs[0].len();
    }
    check(true, format!("{} commands × 3 runs (--workers 1, 4, 4), {compared} files bitwise identical", runs.len()))
}

/// File name and contents, for a file or every file in a directory.
fn read_tree(path: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    if path.is_file() {
        return Ok(vec![(String::new(), std::fs::read(path).map_err(e2s)?)]);
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(path)
        .map_err(e2s)?
        .map(|e| {
            let e = e.map_err(e2s)?;
            Ok((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(e2s)?))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("counterexample variances and means", c1_table),
        ("ordering annotations", c2_orderings),
        ("unbiasedness", c3_unbiased),
        ("conditional weight identity", c4_lemma1),
        ("moment DP equals enumeration", c5_oracles),
        ("sufficient conditions imply orderings", c6_implications),
        ("covariance-gap inequality", c7_lemma2),
        ("two-lane SIS variance T²", c8_two_lane),
        ("RCIS equals IS", c9_rcis),
        ("horizon scaling signatures", c10_scaling),
        ("log-ratio rate", c11_rate),
        ("ASIS error bound", c12_asis),
        ("reproducibility across workers", c13_reproducible),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} [{tag}] {title}: {detail}", i + 1);
    }
    println!("{}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
