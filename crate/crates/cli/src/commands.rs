//! Subcommand implementations. Each returns its artifacts and a verdict;
//! nothing is written until a command has finished.

use serde::Serialize;

use ope_lab::conditions::{lemma2_gap, theorem1_condition, theorem2_condition, verify_implication, Conditioning, Implication};
use ope_lab::estimators::WeightTable;
use ope_lab::exact::{exact_moments, moment_dp_variance, weighted_return_law, MomentReport};
use ope_lab::mdp::{target_value, validate_problem};
use ope_lab::montecarlo::{estimator_stats, SamplerConfig};
use ope_lab::occupancy::diagnostics;
use ope_lab::scenarios::{counterexample_fixture, counterexample_mdp, two_lane, variance_ordering, CounterexampleFixture};
use ope_lab::sweeps::{asis_experiment, horizon_sweep, likelihood_rate_check, pdis_regime, SweepMethod};
use ope_lab::{EstimatorId, EstimatorKind, OpeError, Problem};

use crate::config::{self, Check, ConditionsConfig, EvaluateConfig, RateCheckConfig, SweepConfig, TwoLaneConfig, ValidateConfig};
use crate::output::{csv_bytes, json_bytes, Artifact, Format, Run, Table};
use crate::{CliError, Globals};

/// Fixture-from-atoms tolerance.
const ATOM_TOL: f64 = 1e-12;
/// Fixture-versus-MDP tolerance.
const MDP_TOL: f64 = 1e-9;
/// Two-lane `Var(SIS) = T²` relative tolerance.
const TWO_LANE_TOL: f64 = 1e-9;
/// Lemma-2 slack.
const LEMMA2_TOL: f64 = 1e-10;

fn kind_of(id: EstimatorId) -> Result<EstimatorKind<f64>, CliError> {
    match id {
        EstimatorId::Is => Ok(EstimatorKind::Is),
        EstimatorId::Pdis => Ok(EstimatorKind::Pdis),
        EstimatorId::Sis => Ok(EstimatorKind::Sis),
        EstimatorId::Rcis => Ok(EstimatorKind::Rcis),
        EstimatorId::Asis => Err(CliError::Config("asis needs asis_weights".into())),
    }
}

fn seed_or(g: &Globals, seed: u64) -> u64 {
    g.seed.unwrap_or(seed)
}

fn reject_table(format: Format, command: &str) -> Result<(), CliError> {
    if format == Format::Table {
        return Err(CliError::Config(format!("{command} does not support --format table")));
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationReport {
    valid: bool,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    gamma: f64,
    violations: Vec<ViolationRow>,
}

#[derive(Serialize)]
struct ViolationRow {
    #[serde(flatten)]
    violation: ope_lab::Violation,
    message: String,
}

pub fn validate(g: &Globals) -> Result<Run, CliError> {
    let (cfg, base): (ValidateConfig, _) = config::require(g.config.as_deref(), "validate")?;
    let format = g.format.unwrap_or(Format::Json);
    reject_table(format, "validate")?;
    let problem = cfg.problem.load(&base)?;
    let violations = validate_problem(&problem);
    let report = ValidationReport {
        valid: violations.is_empty(),
        num_states: problem.num_states(),
        num_actions: problem.num_actions(),
        horizon: problem.horizon(),
        gamma: problem.mdp.discount(),
        violations: violations
            .iter()
            .map(|v| ViolationRow { violation: v.clone(), message: v.to_string() })
            .collect(),
    };
    let mut summary = vec![format!("valid: {}", report.valid)];
    summary.extend(report.violations.iter().map(|v| format!("  {}", v.message)));
    let body = match format {
        Format::Csv => csv_bytes(
            ["kind", "message"],
            report.violations.iter().map(|v| {
                let kind = serde_json::to_value(&v.violation).ok().and_then(|x| x["kind"].as_str().map(String::from));
                vec![kind.unwrap_or_default(), v.message.clone()]
            }),
        )?,
        _ => json_bytes(&report)?,
    };
    let run = Run::single(body, summary);
    Ok(if report.valid { run } else { run.runtime_failure("problem is invalid") })
}

#[derive(Serialize)]
struct EvalRow {
    estimator: EstimatorId,
    method: String,
    mean: f64,
    variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_moment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overflow_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl From<MomentReport<f64>> for EvalRow {
    fn from(m: MomentReport<f64>) -> Self {
        Self {
            estimator: m.estimator,
            method: m.method.to_string(),
            mean: m.mean,
            variance: m.variance,
            second_moment: Some(m.second_moment),
            overflow_at: m.overflow_at,
            stderr: None,
            num_trajectories: None,
            seed: None,
        }
    }
}

#[derive(Serialize)]
struct DiagnosticsRow {
    c: f64,
    u_rho: f64,
    u_s: f64,
    m_rho_sq: f64,
}

#[derive(Serialize)]
struct EvaluationReport {
    v_pi: f64,
    /// `null` when the stationary distributions do not exist.
    diagnostics: Option<DiagnosticsRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics_error: Option<String>,
    reports: Vec<EvalRow>,
}

pub fn evaluate(g: &Globals) -> Result<Run, CliError> {
    let (cfg, base): (EvaluateConfig, _) = config::require(g.config.as_deref(), "evaluate")?;
    let format = g.format.unwrap_or(Format::Json);
    if cfg.estimators.is_empty() {
        return Err(CliError::Config("estimators must not be empty".into()));
    }
    let problem = cfg.problem.load(&base)?;
    problem.ensure_valid()?;
    let mut kinds = Vec::new();
    for &id in &cfg.estimators {
        let kind = match (id, &cfg.asis_weights) {
            (EstimatorId::Asis, Some(w)) => EstimatorKind::Asis(weight_table(&problem, w)?),
            _ => kind_of(id)?,
        };
        if id == EstimatorId::Rcis && !matches!(cfg.method, SweepMethod::MonteCarlo(_)) {
            return Err(CliError::Config("rcis is batch-only; use the monte_carlo method".into()));
        }
        kinds.push(kind);
    }
    let mut reports = Vec::new();
    for kind in &kinds {
        let row = match &cfg.method {
            SweepMethod::ExactDp => moment_dp_variance(&problem, kind)?.into(),
            SweepMethod::Enumeration => exact_moments(&problem, kind)?.into(),
            SweepMethod::MonteCarlo(mc) => {
                let mc = SamplerConfig { seed: seed_or(g, mc.seed), ..mc.clone() };
                let est = estimator_stats(&problem, kind, &mc)?;
                EvalRow {
                    estimator: kind.id(),
                    method: "monte_carlo".into(),
                    mean: est.estimate,
                    variance: est.variance()?,
                    second_moment: None,
                    overflow_at: None,
                    stderr: est.stderr,
                    num_trajectories: Some(est.n),
                    seed: Some(mc.seed),
                }
            }
        };
        reports.push(row);
    }
    let (diag, diag_err) = match diagnostics(&problem) {
        Ok(d) => (Some(DiagnosticsRow { c: d.c, u_rho: d.u_rho, u_s: d.u_s, m_rho_sq: d.m_rho_sq }), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = EvaluationReport { v_pi: target_value(&problem)?, diagnostics: diag, diagnostics_error: diag_err, reports };
    let summary = report
        .reports
        .iter()
        .map(|r| format!("{}: mean {} variance {} ({})", r.estimator, r.mean, r.variance, r.method))
        .collect();
    let rows = || report.reports.iter().map(|r| vec![r.estimator.as_str().into(), r.method.clone(), r.mean.to_string(), r.variance.to_string()]);
    let body = match format {
        Format::Json => json_bytes(&report)?,
        Format::Csv => csv_bytes(["estimator", "method", "mean", "variance"], rows())?,
        Format::Table => {
            let mut t = Table::new(["estimator", "method", "mean", "variance"]);
            for r in rows() {
                t.row(r);
            }
            format!("v_pi = {}\n{}", report.v_pi, t.render()).into_bytes()
        }
    };
    Ok(Run::single(body, summary))
}

fn weight_table(problem: &Problem, w: &[Vec<Vec<f64>>]) -> Result<WeightTable<f64>, CliError> {
    let (h, ns, na) = (problem.horizon(), problem.num_states(), problem.num_actions());
    if w.len() != h || w.iter().any(|b| b.len() != ns || b.iter().any(|r| r.len() != na)) {
        return Err(CliError::Config(format!("asis_weights must be {h}x{ns}x{na}")));
    }
    WeightTable::new(h, ns, na, w.iter().flatten().flatten().copied().collect()).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct CounterexampleRow {
    example: u8,
    mean: f64,
    var_is: f64,
    var_pdis: f64,
    var_sis: f64,
    ordering: String,
    /// Largest deviation of the atom-recomputed moments from the fixture.
    atom_deviation: f64,
    /// Largest deviation of the MDP-enumerated moments from the fixture.
    mdp_deviation: f64,
    fixture: CounterexampleFixture,
}

#[derive(Serialize)]
struct CounterexampleReport {
    cross_check: &'static str,
    examples: Vec<CounterexampleRow>,
}

const KINDS: [EstimatorId; 3] = [EstimatorId::Is, EstimatorId::Pdis, EstimatorId::Sis];

pub fn counterexamples(g: &Globals) -> Result<Run, CliError> {
    let format = g.format.unwrap_or(Format::Table);
    let mut rows = Vec::new();
    for which in 1..=3u8 {
        let fx = counterexample_fixture(which)?;
        let problem = counterexample_mdp::<f64>(which)?;
        let mut atom_dev = 0.0f64;
        let mut mdp_dev = 0.0f64;
        for id in KINDS {
            let (m, v) = fx.recompute(id).expect("plain estimator");
            let want = fx.variance(id).expect("plain estimator");
            atom_dev = atom_dev.max((m - fx.mean).abs()).max((v - want).abs());
            let ex = exact_moments(&problem, &kind_of(id)?)?;
            mdp_dev = mdp_dev.max((ex.mean - fx.mean).abs()).max((ex.variance - want).abs());
        }
        let [var_is, var_pdis, var_sis] = fx.variances;
        rows.push(CounterexampleRow {
            example: which,
            mean: fx.mean,
            var_is,
            var_pdis,
            var_sis,
            ordering: variance_ordering(&[(EstimatorId::Is, var_is), (EstimatorId::Pdis, var_pdis), (EstimatorId::Sis, var_sis)]),
            atom_deviation: atom_dev,
            mdp_deviation: mdp_dev,
            fixture: fx,
        });
    }
    let ok = rows.iter().all(|r| r.atom_deviation <= ATOM_TOL && r.mdp_deviation <= MDP_TOL);
    let report = CounterexampleReport { cross_check: if ok { "ok" } else { "deviation" }, examples: rows };
    let mut summary: Vec<String> =
        report.examples.iter().map(|r| format!("example {}: {}", r.example, r.ordering)).collect();
    summary.push(format!("cross-check: {}", report.cross_check));
    let cells = |r: &CounterexampleRow| {
        vec![
            r.example.to_string(),
            r.var_is.to_string(),
            r.var_pdis.to_string(),
            r.var_sis.to_string(),
            r.mean.to_string(),
            r.ordering.clone(),
        ]
    };
    let header = ["example", "var_is", "var_pdis", "var_sis", "mean", "ordering"];
    let body = match format {
        Format::Json => json_bytes(&report)?,
        Format::Csv => csv_bytes(header, report.examples.iter().map(cells))?,
        Format::Table => {
            let mut t = Table::new(header);
            for r in &report.examples {
                t.row(cells(r));
            }
            format!("{}cross-check: {}\n", t.render(), report.cross_check).into_bytes()
        }
    };
    let run = Run::single(body, summary);
    Ok(if ok { run } else { run.check_failure("counterexample moments deviate from the fixtures") })
}

pub fn sweep(g: &Globals) -> Result<Run, CliError> {
    let (cfg, _): (SweepConfig, _) = config::require(g.config.as_deref(), "sweep")?;
    if cfg.horizons.is_empty() || cfg.horizons.contains(&0) {
        return Err(CliError::Config("horizons must be a non-empty list of positive integers".into()));
    }
    if cfg.estimators.is_empty() || cfg.estimators.iter().any(|id| !KINDS.contains(id)) {
        return Err(CliError::Config("estimators must be a non-empty subset of is, pdis, sis".into()));
    }
    let family = cfg.family.clone();
    family.with_horizon(1).map_err(|e| CliError::Config(e.to_string()))?;
    let method = match cfg.method {
        SweepMethod::MonteCarlo(mc) => SweepMethod::MonteCarlo(SamplerConfig { seed: seed_or(g, mc.seed), ..mc }),
        m => m,
    };
    let build = |t: usize| family.with_horizon(t)?.build::<f64>();
    let result = horizon_sweep(build, &cfg.horizons, &cfg.estimators, &method)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let mut summary: Vec<String> = result
        .fits
        .iter()
        .map(|f| {
            format!(
                "{}: alpha {:.4} beta {:.4} over T in [{}, {}] ({} points)",
                f.estimator, f.alpha, f.beta, f.t_min, f.t_max, f.n_points
            )
        })
        .collect();
    summary.extend(result.skipped.iter().cloned());
    let mut artifacts = vec![Artifact::new("sweep.csv", csv), Artifact::new("fits.json", json_bytes(&result.fits)?)];
    if !cfg.gammas.is_empty() {
        family.with_gamma(1.0).map_err(|e| CliError::Config(e.to_string()))?;
        let regime = pdis_regime(|t, gm| family.with_horizon(t)?.with_gamma(gm)?.build::<f64>(), &cfg.horizons, &cfg.gammas)?;
        summary.extend(regime.iter().map(|r| {
            format!("PDIS at gamma {}: {:?} (U_rho*gamma {:.4}, beta {:.4})", r.gamma, r.classification, r.u_rho_gamma, r.beta)
        }));
        artifacts.push(Artifact::new("regime.json", json_bytes(&regime)?));
    }
    if let Some(asis) = &cfg.asis {
        let problem = build(asis.horizon)?;
        let rows = asis_experiment(&problem, &asis.eps, seed_or(g, asis.seed))?;
        let body = csv_bytes(
            ["eps_target", "eps_realized", "mse", "bias", "variance", "sis_variance", "bound", "holds"],
            rows.iter().map(|r| {
                vec![
                    r.eps_target.to_string(),
                    r.eps_realized.to_string(),
                    r.mse.to_string(),
                    r.bias.to_string(),
                    r.variance.to_string(),
                    r.sis_variance.to_string(),
                    r.bound.to_string(),
                    r.holds.to_string(),
                ]
            }),
        )?;
        summary.extend(rows.iter().map(|r| format!("ASIS eps {}: mse {} bound {} holds {}", r.eps_target, r.mse, r.bound, r.holds)));
        artifacts.push(Artifact::new("asis.csv", body));
        if rows.iter().any(|r| !r.holds) {
            return Ok(Run::multi(artifacts, summary).check_failure("ASIS bound violated"));
        }
    }
    Ok(Run::multi(artifacts, summary))
}

#[derive(Serialize)]
struct Lemma2Failure {
    index: usize,
    conditioning: Conditioning,
    lhs: f64,
    rhs: f64,
}

#[derive(Serialize)]
struct Lemma2Summary {
    n: usize,
    n_holds: usize,
    failures: Vec<Lemma2Failure>,
}

#[derive(Serialize, Default)]
struct PopulationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    thm1: Option<ope_lab::conditions::ImplicationSummary<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thm2: Option<ope_lab::conditions::ImplicationSummary<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma2: Option<Lemma2Summary>,
}

#[derive(Serialize, Default)]
struct SingleReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    thm1: Option<ope_lab::conditions::ConditionReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thm2: Option<ope_lab::conditions::ConditionReport<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    lemma2: Vec<ope_lab::conditions::Lemma2Gap<f64>>,
}

const LEMMA2_CONDITIONINGS: [Conditioning; 3] = [Conditioning::Prefix, Conditioning::StateAction, Conditioning::Trajectory];

pub fn conditions(g: &Globals) -> Result<Run, CliError> {
    let (mut cfg, base): (ConditionsConfig, _) = config::require(g.config.as_deref(), "conditions")?;
    reject_table(g.format.unwrap_or(Format::Json), "conditions")?;
    if g.format == Some(Format::Csv) {
        return Err(CliError::Config("conditions writes JSON only".into()));
    }
    if cfg.checks.is_empty() {
        return Err(CliError::Config("checks must not be empty".into()));
    }
    if let Some(source) = &cfg.problem {
        let problem = source.load(&base)?;
        let mut report = SingleReport::default();
        let mut summary = Vec::new();
        for check in &cfg.checks {
            match check {
                Check::Thm1 => report.thm1 = Some(theorem1_condition(&problem)?),
                Check::Thm2 => report.thm2 = Some(theorem2_condition(&problem)?),
                Check::Lemma2 => {
                    for c in LEMMA2_CONDITIONINGS {
                        report.lemma2.push(lemma2_gap(&problem, c)?);
                    }
                }
            }
        }
        for (name, r) in [("thm1", &report.thm1), ("thm2", &report.thm2)] {
            if let Some(r) = r {
                summary.push(format!("{name}: holds {} (margin {:e}, {} pairs)", r.holds, r.margin, r.pairs_checked));
            }
        }
        for gap in &report.lemma2 {
            summary.push(format!("lemma2 {:?}: lhs {:e} rhs {:e}", gap.conditioning, gap.lhs, gap.rhs));
        }
        let failed = report.lemma2.iter().any(|gap| !gap.holds(LEMMA2_TOL));
        let run = Run::single(json_bytes(&report)?, summary);
        return Ok(if failed { run.check_failure("covariance-gap inequality fails") } else { run });
    }
    if let Some(seed) = g.seed {
        cfg.population.seed = seed;
    }
    cfg.population.check().map_err(|e| CliError::Config(e.to_string()))?;
    let pop = &cfg.population;
    let gen = |i: usize| pop.generate::<f64>(i);
    let mut report = PopulationReport::default();
    let mut summary = Vec::new();
    let mut failed = false;
    for check in &cfg.checks {
        match check {
            Check::Thm1 | Check::Thm2 => {
                let which = if *check == Check::Thm1 { Implication::Thm1 } else { Implication::Thm2 };
                let s = verify_implication(gen, cfg.count, which)?;
                summary.push(format!(
                    "{which:?}: condition holds on {}/{}, ordering holds on {} of those, {} violations",
                    s.n_condition_holds,
                    s.n,
                    s.n_ordering_holds_given_condition,
                    s.violations.len()
                ));
                failed |= !s.violations.is_empty();
                if which == Implication::Thm1 {
                    report.thm1 = Some(s);
                } else {
                    report.thm2 = Some(s);
                }
            }
            Check::Lemma2 => {
                let mut failures = Vec::new();
                let mut n = 0;
                for index in 0..cfg.count {
                    let problem = gen(index)?;
                    for c in LEMMA2_CONDITIONINGS {
                        let gap = lemma2_gap(&problem, c)?;
                        n += 1;
                        if !gap.holds(LEMMA2_TOL) {
                            failures.push(Lemma2Failure { index, conditioning: c, lhs: gap.lhs, rhs: gap.rhs });
                        }
                    }
                }
                summary.push(format!("Lemma2: holds on {}/{n} checks", n - failures.len()));
                failed |= !failures.is_empty();
                report.lemma2 = Some(Lemma2Summary { n, n_holds: n - failures.len(), failures });
            }
        }
    }
    let run = Run::single(json_bytes(&report)?, summary);
    Ok(if failed { run.check_failure("a condition held without its ordering") } else { run })
}

pub fn two_lane_cmd(g: &Globals) -> Result<Run, CliError> {
    let cfg: TwoLaneConfig = match g.config.as_deref() {
        Some(p) => config::read(p)?.0,
        None => TwoLaneConfig::default(),
    };
    if cfg.horizons.is_empty() || cfg.horizons.iter().any(|&t| t < 4) {
        return Err(CliError::Config("two-lane horizons must be non-empty and at least 4".into()));
    }
    let format = g.format.unwrap_or(Format::Csv);
    let header = ["horizon", "sis_mean", "sis_variance", "t_squared", "relative_error", "atoms", "law"];
    let mut rows = Vec::new();
    let mut ok = true;
    for &t in &cfg.horizons {
        let problem = two_lane::<f64>(t)?;
        let m = moment_dp_variance(&problem, &EstimatorKind::Sis)?;
        let law = weighted_return_law(&problem, &EstimatorKind::Sis)?;
        let t2 = (t * t) as f64;
        let rel = (m.variance - t2).abs() / t2;
        let two_t = 2.0 * t as f64;
        let uniform_two_atom = law.atoms.len() == 2
            && law.atoms[0].0 == 0.0
            && (law.atoms[1].0 - two_t).abs() <= TWO_LANE_TOL * two_t
            && law.atoms.iter().all(|a| (a.1 - 0.5).abs() <= TWO_LANE_TOL);
        ok &= rel <= TWO_LANE_TOL && uniform_two_atom;
        let law_text = law.atoms.iter().map(|(x, p)| format!("{x}:{p}")).collect::<Vec<_>>().join(";");
        rows.push(vec![
            t.to_string(),
            m.mean.to_string(),
            m.variance.to_string(),
            t2.to_string(),
            rel.to_string(),
            law.atoms.len().to_string(),
            law_text,
        ]);
    }
    let summary = rows.iter().map(|r| format!("T={}: Var(SIS) {} vs T^2 {}, law {}", r[0], r[2], r[3], r[6])).collect();
    let body = match format {
        Format::Csv => csv_bytes(header, rows.iter().cloned())?,
        Format::Json => {
            let objs: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| header.iter().zip(r).map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone()))).collect())
                .collect();
            json_bytes(&objs)?
        }
        Format::Table => {
            let mut t = Table::new(header);
            for r in &rows {
                t.row(r.clone());
            }
            t.render().into_bytes()
        }
    };
    let run = Run::single(body, summary);
    Ok(if ok { run } else { run.check_failure("two-lane SIS law deviates from the two-atom law with variance T^2") })
}

#[derive(Serialize)]
struct RateReport {
    #[serde(flatten)]
    check: ope_lab::sweeps::RateCheck<f64>,
    seed: u64,
    num_trajectories: usize,
    within_3_stderr: bool,
}

pub fn rate_check(g: &Globals) -> Result<Run, CliError> {
    let (cfg, base): (RateCheckConfig, _) = config::require(g.config.as_deref(), "rate-check")?;
    reject_table(g.format.unwrap_or(Format::Json), "rate-check")?;
    if g.format == Some(Format::Csv) {
        return Err(CliError::Config("rate-check writes JSON only".into()));
    }
    if cfg.horizon == 0 || cfg.num_trajectories < 2 {
        return Err(CliError::Config("rate-check needs horizon ≥ 1 and at least 2 trajectories".into()));
    }
    let problem = cfg.problem.load(&base)?;
    let seed = seed_or(g, cfg.seed);
    let check = likelihood_rate_check(&problem, cfg.horizon, &SamplerConfig::new(seed, cfg.num_trajectories))?;
    let within = check.within(3.0);
    let summary = vec![format!(
        "mean (1/T) log rho = {} vs -c = {}; deviation {} ({} stderr); {} excluded",
        check.mean,
        -check.c,
        check.deviation,
        if check.stderr > 0.0 { check.deviation / check.stderr } else { 0.0 },
        check.n_excluded
    )];
    let report = RateReport { check, seed, num_trajectories: cfg.num_trajectories, within_3_stderr: within };
    let run = Run::single(json_bytes(&report)?, summary);
    Ok(if within { run } else { run.check_failure("empirical rate is more than 3 standard errors from -c") })
}

impl From<OpeError> for CliError {
    fn from(e: OpeError) -> Self {
        match e {
            OpeError::Json(e) => CliError::Config(e.to_string()),
            e => CliError::Runtime(e),
        }
    }
}
