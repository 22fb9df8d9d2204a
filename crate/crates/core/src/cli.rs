//! Config-driven experiment runner behind the `refprior` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::asymptotics::{convergence_series, limit_functional, limit_functional_mc, ConvergenceSeries};
use crate::estimators::{exact_count_mi, mc_mutual_information, posterior_ratio_stat, Budgets, MIEstimate, Method};
use crate::fdiv::{parse_divergence, validate_theorem_conditions, ConditionReport};
use crate::model::{fisher_information, parse_model, subgaussian_diagnostic, Interval, SubGaussianReport};
use crate::prior::{jeffreys_prior, parse_prior, Prior};
use crate::quadrature::QuadSpec;
use crate::refsearch::{
    maximize_over_family, parse_family, select_by_entropy, verify_reference, SearchResult, VerifyReport,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Fisher,
    Jeffreys,
    Mi,
    Limit,
    Converge,
    Search,
    Verify,
    Diagnose,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Fisher => "fisher",
            CommandKind::Jeffreys => "jeffreys",
            CommandKind::Mi => "mi",
            CommandKind::Limit => "limit",
            CommandKind::Converge => "converge",
            CommandKind::Search => "search",
            CommandKind::Verify => "verify",
            CommandKind::Diagnose => "diagnose",
        }
    }

    fn stochastic(self) -> bool {
        matches!(
            self,
            CommandKind::Mi | CommandKind::Converge | CommandKind::Search | CommandKind::Diagnose
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub model: String,
    pub prior: Option<String>,
    pub divergence: Option<String>,
    pub compact: Option<Vec<[f64; 2]>>,
    pub ks: Vec<usize>,
    pub budgets: Budgets,
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub family: Option<String>,
    pub param_range: Option<[f64; 2]>,
    pub grid_n: usize,
    pub refine_tol: f64,
    pub theta: Option<Vec<f64>>,
    pub sigma: f64,
    pub method: Option<MethodChoice>,
    pub n_probe: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialBudgets {
    n_theta: Option<usize>,
    n_y: Option<usize>,
    n_marginal: Option<usize>,
    n_rep: Option<usize>,
}

const KNOWN_FIELDS: &[&str] = &[
    "command",
    "model",
    "prior",
    "divergence",
    "compact",
    "ks",
    "budgets",
    "seed",
    "output",
    "family",
    "param_range",
    "grid_n",
    "refine_tol",
    "theta",
    "sigma",
    "method",
    "n_probe",
    "n_samples",
];

/// Errors surfaced by the runner.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{}: {}", .0.name(), .0)]
    Numeric(#[from] crate::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn field<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    let v = map.remove(key)?;
    if v.is_null() {
        return None;
    }
    match serde_json::from_value(v) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("field '{key}': {e}"));
            None
        }
    }
}

/// Parse and check a config; `command` overrides (and must agree with) the
/// `command` field of the document. Every problem found is reported.
pub fn validate_config_for(text: &[u8], command: Option<CommandKind>) -> Result<ExperimentConfig, CliError> {
    let value: Value = serde_json::from_slice(text)
        .map_err(|e| CliError::Config(vec![format!("line {} column {}: {e}", e.line(), e.column())]))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Config(vec!["config must be a JSON object".into()]));
    };
    let mut errors = Vec::new();
    let unknown: Vec<String> = map
        .keys()
        .filter(|k| !KNOWN_FIELDS.contains(&k.as_str()))
        .cloned()
        .collect();
    for k in unknown {
        errors.push(format!("unknown field '{k}'"));
    }

    let doc_command: Option<CommandKind> = field(&mut map, "command", &mut errors);
    let command = match (command, doc_command) {
        (Some(c), Some(d)) if c != d => {
            errors.push(format!(
                "field 'command': config says '{}' but '{}' was requested",
                d.name(),
                c.name()
            ));
            Some(c)
        }
        (Some(c), _) | (None, Some(c)) => Some(c),
        (None, None) => {
            errors.push("field 'command' is required".into());
            None
        }
    };
    let model: Option<String> = field(&mut map, "model", &mut errors);
    let prior: Option<String> = field(&mut map, "prior", &mut errors);
    let divergence: Option<String> = field(&mut map, "divergence", &mut errors);
    let compact: Option<Vec<[f64; 2]>> = field(&mut map, "compact", &mut errors);
    let ks: Option<Vec<usize>> = field(&mut map, "ks", &mut errors);
    let budgets: Option<PartialBudgets> = field(&mut map, "budgets", &mut errors);
    let seed: Option<u64> = field(&mut map, "seed", &mut errors);
    let output: Option<String> = field(&mut map, "output", &mut errors);
    let family: Option<String> = field(&mut map, "family", &mut errors);
    let param_range: Option<[f64; 2]> = field(&mut map, "param_range", &mut errors);
    let grid_n: Option<usize> = field(&mut map, "grid_n", &mut errors);
    let refine_tol: Option<f64> = field(&mut map, "refine_tol", &mut errors);
    let theta: Option<Vec<f64>> = field(&mut map, "theta", &mut errors);
    let sigma: Option<f64> = field(&mut map, "sigma", &mut errors);
    let method: Option<MethodChoice> = field(&mut map, "method", &mut errors);
    let n_probe: Option<usize> = field(&mut map, "n_probe", &mut errors);
    let n_samples: Option<usize> = field(&mut map, "n_samples", &mut errors);

    let defaults = Budgets::default();
    let b = budgets.unwrap_or_default();
    let budgets = Budgets {
        n_theta: b.n_theta.unwrap_or(defaults.n_theta),
        n_y: b.n_y.unwrap_or(defaults.n_y),
        n_marginal: b.n_marginal.unwrap_or(defaults.n_marginal),
        n_rep: b.n_rep.unwrap_or(defaults.n_rep),
    };
    let cfg = command.map(|command| ExperimentConfig {
        command,
        model: model.clone().unwrap_or_default(),
        prior,
        divergence,
        compact,
        ks: ks.unwrap_or_default(),
        budgets,
        seed,
        output,
        family,
        param_range,
        grid_n: grid_n.unwrap_or(crate::refsearch::DEFAULT_GRID_N),
        refine_tol: refine_tol.unwrap_or(crate::refsearch::DEFAULT_REFINE_TOL),
        theta,
        sigma: sigma.unwrap_or(0.05),
        method,
        n_probe: n_probe.unwrap_or(200),
        n_samples: n_samples.unwrap_or(100_000),
    });
    if model.is_none() {
        errors.push("field 'model' is required".into());
    }
    if let Some(cfg) = &cfg {
        check_semantics(cfg, model.is_some(), &mut errors);
    }
    match cfg {
        Some(cfg) if errors.is_empty() => Ok(cfg),
        _ => Err(CliError::Config(errors)),
    }
}

pub fn validate_config(text: &[u8]) -> Result<ExperimentConfig, CliError> {
    validate_config_for(text, None)
}

fn check_semantics(cfg: &ExperimentConfig, have_model: bool, errors: &mut Vec<String>) {
    use CommandKind::*;
    let c = cfg.command;
    let mut need = |present: bool, name: &str| {
        if !present {
            errors.push(format!("field '{name}' is required for command '{}'", c.name()));
        }
    };
    if c.stochastic() {
        need(cfg.seed.is_some(), "seed");
    }
    if matches!(c, Mi | Limit | Converge | Verify) {
        need(cfg.prior.is_some(), "prior");
    }
    if matches!(c, Mi | Limit | Converge | Search | Verify | Diagnose) {
        need(cfg.divergence.is_some(), "divergence");
    }
    if matches!(c, Mi | Converge) {
        need(!cfg.ks.is_empty(), "ks");
    }
    if matches!(c, Search | Verify) {
        need(cfg.family.is_some(), "family");
    }
    if c == Diagnose {
        need(cfg.theta.is_some(), "theta");
    }

    if cfg.ks.contains(&0) {
        errors.push("field 'ks': entries must be positive".into());
    }
    if c == Converge && cfg.ks.windows(2).any(|w| w[0] >= w[1]) {
        errors.push("field 'ks': must be strictly increasing".into());
    }
    let b = cfg.budgets;
    if b.n_theta == 0 || b.n_y == 0 || b.n_marginal == 0 || b.n_rep == 0 {
        errors.push("field 'budgets': every budget must be positive".into());
    }
    if cfg.grid_n < 3 {
        errors.push("field 'grid_n': must be at least 3".into());
    }
    if !(cfg.refine_tol > 0.0) {
        errors.push("field 'refine_tol': must be positive".into());
    }
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        errors.push("field 'sigma': must be positive".into());
    }
    if cfg.n_probe == 0 {
        errors.push("field 'n_probe': must be positive".into());
    }
    if c == Diagnose && cfg.n_samples < 1000 {
        errors.push("field 'n_samples': the diagnostic needs at least 1000".into());
    } else if cfg.n_samples == 0 {
        errors.push("field 'n_samples': must be positive".into());
    }
    if let Some([lo, hi]) = cfg.param_range {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            errors.push("field 'param_range': expected finite [lo, hi] with lo <= hi".into());
        }
    }
    if let Some(d) = &cfg.divergence {
        if let Err(e) = parse_divergence(d) {
            errors.push(format!("field 'divergence': {e}"));
        }
    }
    if !have_model {
        return;
    }
    let model = match parse_model(&cfg.model) {
        Ok(m) => m,
        Err(e) => {
            errors.push(format!("field 'model': {e}"));
            return;
        }
    };
    let dim = model.param_space().dim();
    let mut compact_ok = true;
    if let Some(compact) = &cfg.compact {
        let bounds = model.param_space().bounds();
        if compact.len() != dim {
            errors.push(format!(
                "field 'compact': expected {dim} intervals, got {}",
                compact.len()
            ));
            compact_ok = false;
        } else {
            for (i, [lo, hi]) in compact.iter().enumerate() {
                if !(lo < hi && *lo >= bounds[i].0 && *hi <= bounds[i].1) {
                    errors.push(format!(
                        "field 'compact': interval {i} [{lo}, {hi}] is not inside {:?}",
                        bounds[i]
                    ));
                    compact_ok = false;
                }
            }
        }
    }
    if let Some(theta) = &cfg.theta {
        if theta.len() != dim {
            errors.push(format!(
                "field 'theta': expected {dim} coordinates, got {}",
                theta.len()
            ));
        } else if !model.param_space().contains(theta) {
            errors.push(format!("field 'theta': {theta:?} is outside the parameter space"));
        }
    }
    if matches!(c, Fisher | Jeffreys) && cfg.theta.is_none() {
        let finite = table_bounds(cfg, model.param_space().bounds()).is_some();
        if dim != 1 || !finite {
            errors.push(format!(
                "command '{}' needs 'theta' or a bounded one-dimensional 'compact'",
                c.name()
            ));
        }
    }
    if !compact_ok {
        return;
    }
    let compact = compact_of(cfg);
    if let Some(p) = &cfg.prior {
        if let Err(e) = parse_prior(p, model.clone(), compact.as_deref()) {
            errors.push(format!("field 'prior': {e}"));
        }
    }
    if let Some(f) = &cfg.family {
        if let Err(e) = parse_family(f, cfg.param_range.map(|[a, b]| (a, b)), compact.as_ref().map(|c| c[0])) {
            errors.push(format!("field 'family': {e}"));
        }
    }
}

fn compact_of(cfg: &ExperimentConfig) -> Option<Vec<Interval>> {
    cfg.compact.as_ref().map(|c| c.iter().map(|[a, b]| (*a, *b)).collect())
}

fn table_bounds(cfg: &ExperimentConfig, bounds: &[Interval]) -> Option<Interval> {
    let (lo, hi) = compact_of(cfg).map(|c| c[0]).unwrap_or(bounds[0]);
    (lo.is_finite() && hi.is_finite()).then_some((lo, hi))
}

/// 1001 points on `[lo + 1e−3 w, hi − 1e−3 w]`.
pub fn table_grid(lo: f64, hi: f64) -> Vec<f64> {
    let w = hi - lo;
    let (a, b) = (lo + 1e-3 * w, hi - 1e-3 * w);
    (0..1001).map(|i| a + (b - a) * i as f64 / 1000.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherPoint {
    pub theta: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub k: usize,
    pub n_rep: usize,
    /// Share of replicates with `|exp(log_ratio − laplace_log) − 1| < 0.2`.
    pub fraction_within: f64,
    pub median_abs_log_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandResult {
    Fisher {
        points: Vec<FisherPoint>,
    },
    Jeffreys {
        log_norm_const: Option<f64>,
        theta: Vec<f64>,
        density: Vec<f64>,
    },
    Mi {
        estimates: Vec<MIEstimate>,
    },
    Limit {
        value: f64,
        stderr: Option<f64>,
        conditions: Option<ConditionReport>,
    },
    Converge {
        series: ConvergenceSeries,
        subgaussian: Option<SubGaussianReport>,
    },
    Search {
        search: SearchResult,
        selected_prior: String,
        sample_files: Vec<String>,
    },
    Verify {
        report: VerifyReport,
    },
    Diagnose {
        conditions: ConditionReport,
        posterior_ratio: Vec<RatioSummary>,
    },
}

/// The `<prefix>.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub version: String,
    pub config: ExperimentConfig,
    pub result: CommandResult,
}

/// Everything one run writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub output: RunOutput,
    pub csv: String,
    /// `(suffix, contents)` pairs written to `<prefix><suffix>`.
    pub extra: Vec<(String, String)>,
}

fn e16(x: f64) -> String {
    format!("{x:.16e}")
}

fn method_for(cfg: &ExperimentConfig) -> Method {
    let counting = cfg.model == "bernoulli" || cfg.model.starts_with("binomial");
    match cfg.method {
        Some(MethodChoice::Mc) => Method::NestedMC,
        Some(MethodChoice::Exact) => Method::ExactCount,
        None if counting => Method::ExactCount,
        None => Method::NestedMC,
    }
}

fn samples_csv(prior: &Prior, n: usize, seed: u64, index: u64) -> crate::Result<String> {
    let draws = prior.sample_n(n, seed, index)?;
    let mut out = String::with_capacity(n * 24);
    let header: Vec<String> = (0..prior.dim()).map(|i| format!("theta_{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for d in draws {
        let row: Vec<String> = d.into_iter().map(e16).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Execute a validated config.
pub fn run(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let model = parse_model(&cfg.model)?;
    let compact = compact_of(cfg);
    let quad = QuadSpec::singular();
    let gen = cfg.divergence.as_deref().map(parse_divergence).transpose()?;
    let prior = match &cfg.prior {
        Some(p) => Some(parse_prior(p, model.clone(), compact.as_deref())?),
        None => None,
    };
    let need = |what: &str| CliError::Config(vec![format!("field '{what}' is required")]);
    let seed = cfg.seed.unwrap_or(0);
    let mut csv = String::new();
    let mut extra = Vec::new();

    let result = match cfg.command {
        CommandKind::Fisher => {
            let thetas: Vec<Vec<f64>> = match &cfg.theta {
                Some(t) => vec![t.clone()],
                None => {
                    let (lo, hi) = table_bounds(cfg, model.param_space().bounds()).ok_or_else(|| need("theta"))?;
                    table_grid(lo, hi).into_iter().map(|t| vec![t]).collect()
                }
            };
            let d = model.param_space().dim();
            let mut head: Vec<String> = (0..d).map(|i| format!("theta_{i}")).collect();
            for i in 0..d {
                for j in 0..d {
                    head.push(format!("i_{i}_{j}"));
                }
            }
            csv.push_str(&head.join(","));
            csv.push('\n');
            let mut points = Vec::with_capacity(thetas.len());
            for t in thetas {
                let m = fisher_information(model.as_ref(), &t)?;
                let matrix: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| m[(i, j)]).collect()).collect();
                let row: Vec<String> = t.iter().chain(matrix.iter().flatten()).map(|v| e16(*v)).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
                points.push(FisherPoint { theta: t, matrix });
            }
            CommandResult::Fisher { points }
        }
        CommandKind::Jeffreys => {
            let j = jeffreys_prior(model.clone(), compact.as_deref())?;
            let (lo, hi) = table_bounds(cfg, model.param_space().bounds()).ok_or_else(|| need("compact"))?;
            let theta = table_grid(lo, hi);
            let density: Vec<f64> = theta.iter().map(|t| j.density(&[*t])).collect();
            csv.push_str("theta,density\n");
            for (t, p) in theta.iter().zip(&density) {
                let _ = writeln!(csv, "{},{}", e16(*t), e16(*p));
            }
            CommandResult::Jeffreys {
                log_norm_const: j.log_norm_const(),
                theta,
                density,
            }
        }
        CommandKind::Mi => {
            let (prior, gen) = (
                prior.as_ref().ok_or_else(|| need("prior"))?,
                gen.as_ref().ok_or_else(|| need("divergence"))?,
            );
            let method = method_for(cfg);
            let mut estimates = Vec::with_capacity(cfg.ks.len());
            csv.push_str("k,value,stderr\n");
            for (i, &k) in cfg.ks.iter().enumerate() {
                let est = match method {
                    Method::NestedMC => {
                        let s = crate::sampling::substream(seed, i as u64);
                        let s = rand::RngCore::next_u64(&mut { s });
                        mc_mutual_information(model.as_ref(), prior, k, gen, cfg.budgets, s)?
                    }
                    _ => exact_count_mi(model.as_ref(), prior, k, gen, quad)?,
                };
                let _ = writeln!(csv, "{},{},{}", k, e16(est.value), e16(est.stderr));
                estimates.push(est);
            }
            CommandResult::Mi { estimates }
        }
        CommandKind::Limit => {
            let (prior, gen) = (
                prior.as_ref().ok_or_else(|| need("prior"))?,
                gen.as_ref().ok_or_else(|| need("divergence"))?,
            );
            let (value, stderr) = if prior.dim() == 1 {
                (limit_functional(model.as_ref(), prior, gen, quad)?, None)
            } else {
                let (v, se) = limit_functional_mc(model.as_ref(), prior, gen, 100_000, seed)?;
                (v, Some(se))
            };
            let conditions = validate_theorem_conditions(gen, None).ok();
            csv.push_str("limit,stderr\n");
            let _ = writeln!(csv, "{},{}", e16(value), e16(stderr.unwrap_or(0.0)));
            CommandResult::Limit {
                value,
                stderr,
                conditions,
            }
        }
        CommandKind::Converge => {
            let (prior, gen) = (
                prior.as_ref().ok_or_else(|| need("prior"))?,
                gen.as_ref().ok_or_else(|| need("divergence"))?,
            );
            let series = convergence_series(
                model.as_ref(),
                prior,
                gen,
                &cfg.ks,
                method_for(cfg),
                cfg.budgets,
                seed,
                quad,
            )?;
            let subgaussian = match &cfg.theta {
                Some(t) => Some(subgaussian_diagnostic(
                    model.as_ref(),
                    t,
                    cfg.sigma,
                    cfg.n_samples.max(1000),
                    seed,
                )?),
                None => None,
            };
            csv = series.to_csv();
            CommandResult::Converge { series, subgaussian }
        }
        CommandKind::Search => {
            let gen = gen.as_ref().ok_or_else(|| need("divergence"))?;
            let family = parse_family(
                cfg.family.as_deref().ok_or_else(|| need("family"))?,
                cfg.param_range.map(|[a, b]| (a, b)),
                compact.as_ref().map(|c| c[0]),
            )?;
            let search = maximize_over_family(&family, model.as_ref(), gen, cfg.grid_n, cfg.refine_tol, quad)?;
            let chosen = select_by_entropy(&search, &family)?;
            csv.push_str("lambda,l\n");
            for g in &search.grid {
                let l = g.l.map(e16).unwrap_or_default();
                let _ = writeln!(csv, "{},{}", e16(g.lambda), l);
            }
            let mut sample_files = Vec::new();
            let j = jeffreys_prior(model.clone(), compact.as_deref())?;
            extra.push((
                "_samples_jeffreys.csv".to_string(),
                samples_csv(&j, cfg.n_samples, seed, 0)?,
            ));
            sample_files.push("jeffreys".to_string());
            for (i, m) in search.maximizers.iter().enumerate() {
                let p = family.make(m.lambda)?;
                extra.push((
                    format!("_samples_max{i}.csv"),
                    samples_csv(&p, cfg.n_samples, seed, i as u64 + 1)?,
                ));
                sample_files.push(format!("max{i}"));
            }
            CommandResult::Search {
                search,
                selected_prior: chosen.id(),
                sample_files,
            }
        }
        CommandKind::Verify => {
            let (prior, gen) = (
                prior.as_ref().ok_or_else(|| need("prior"))?,
                gen.as_ref().ok_or_else(|| need("divergence"))?,
            );
            let family = parse_family(
                cfg.family.as_deref().ok_or_else(|| need("family"))?,
                cfg.param_range.map(|[a, b]| (a, b)),
                compact.as_ref().map(|c| c[0]),
            )?;
            let report = verify_reference(prior, &family, model.as_ref(), gen, cfg.n_probe, quad)?;
            csv.push_str("lambda,l,l_candidate\n");
            for v in &report.violations {
                let _ = writeln!(csv, "{},{},{}", e16(v.lambda), e16(v.l), e16(report.l_candidate));
            }
            CommandResult::Verify { report }
        }
        CommandKind::Diagnose => {
            let gen = gen.as_ref().ok_or_else(|| need("divergence"))?;
            let theta = cfg.theta.as_ref().ok_or_else(|| need("theta"))?;
            let sg = subgaussian_diagnostic(model.as_ref(), theta, cfg.sigma, cfg.n_samples, seed)?;
            let conditions = validate_theorem_conditions(gen, Some(sg))?;
            let mut posterior_ratio = Vec::new();
            if let Some(prior) = &prior {
                for (i, &k) in cfg.ks.iter().enumerate() {
                    let s = rand::RngCore::next_u64(&mut crate::sampling::substream(seed, i as u64 + 1));
                    let reps = posterior_ratio_stat(model.as_ref(), prior, theta, k, cfg.budgets.n_rep, s)?;
                    let within = reps
                        .iter()
                        .filter(|r| ((r.log_ratio - r.laplace_log).exp() - 1.0).abs() < 0.2)
                        .count();
                    let mut gaps: Vec<f64> = reps.iter().map(|r| (r.log_ratio - r.laplace_log).abs()).collect();
                    gaps.sort_by(f64::total_cmp);
                    let n = gaps.len();
                    let median = if n % 2 == 1 {
                        gaps[n / 2]
                    } else {
                        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
                    };
                    posterior_ratio.push(RatioSummary {
                        k,
                        n_rep: n,
                        fraction_within: within as f64 / n as f64,
                        median_abs_log_gap: median,
                    });
                }
            }
            csv.push_str("k,fraction_within,median_abs_log_gap\n");
            for r in &posterior_ratio {
                let _ = writeln!(csv, "{},{},{}", r.k, e16(r.fraction_within), e16(r.median_abs_log_gap));
            }
            CommandResult::Diagnose {
                conditions,
                posterior_ratio,
            }
        }
    };
    Ok(Artifacts {
        output: RunOutput {
            version: VERSION.to_string(),
            config: cfg.clone(),
            result,
        },
        csv,
        extra,
    })
}

fn write_file(path: PathBuf, contents: &str) -> Result<(), CliError> {
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// Writes `<prefix>.csv`, `<prefix>.json` and any extra files.
pub fn write_artifacts(artifacts: &Artifacts, prefix: &Path) -> Result<(), CliError> {
    let with = |suffix: &str| {
        let mut s = prefix.as_os_str().to_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let mut json = serde_json::to_string_pretty(&artifacts.output).expect("results serialize");
    json.push('\n');
    write_file(with(".csv"), &artifacts.csv)?;
    write_file(with(".json"), &json)?;
    for (suffix, body) in &artifacts.extra {
        write_file(with(suffix), body)?;
    }
    Ok(())
}

/// Parse a `<prefix>.json` document back into a typed result.
pub fn parse_run_output(text: &str) -> serde_json::Result<RunOutput> {
    serde_json::from_str(text)
}

#[derive(Debug, Parser)]
#[command(
    name = "refprior",
    version,
    about = "Generalized mutual information and reference prior experiments"
)]
pub struct Args {
    pub command: CommandKind,
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads; falls back to REFPRIOR_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output path prefix, overriding the config.
    #[arg(long)]
    pub output: Option<String>,
}

fn execute(args: Args) -> Result<(), CliError> {
    let threads = match args.threads {
        Some(n) => Some(n),
        None => match std::env::var("REFPRIOR_THREADS") {
            Ok(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(vec![format!("REFPRIOR_THREADS='{s}' is not a count")]))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config(vec!["thread count must be positive".into()]));
        }
        // a pool set up earlier in the process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = std::fs::read(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg = validate_config_for(&text, Some(args.command))?;
    if args.output.is_some() {
        cfg.output = args.output;
    }
    let prefix = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Config(vec!["no output prefix: set 'output' or pass --output".into()]))?;
    let artifacts = run(&cfg)?;
    write_artifacts(&artifacts, Path::new(&prefix))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errs(text: &str) -> Vec<String> {
        match validate_config(text.as_bytes()) {
            Err(CliError::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_fisher_config() {
        let cfg = validate_config(br#"{"command": "fisher", "model": "bernoulli"}"#).unwrap();
        assert_eq!(cfg.command, CommandKind::Fisher);
        assert_eq!(cfg.budgets, Budgets::default());
    }

    #[test]
    fn mi_without_seed_names_seed() {
        let e = errs(r#"{"command": "mi", "model": "bernoulli", "prior": "uniform", "divergence": "kl", "ks": [4]}"#);
        assert_eq!(e.len(), 1);
        assert!(e[0].contains("'seed'"), "{e:?}");
    }

    #[test]
    fn alpha_one_cites_open_interval() {
        let e = errs(r#"{"command": "limit", "model": "bernoulli", "prior": "uniform", "divergence": "alpha:a=1.0"}"#);
        assert!(e.iter().any(|m| m.contains("open interval")), "{e:?}");
    }

    #[test]
    fn all_errors_reported() {
        let e = errs(r#"{"command": "converge", "model": "poisson", "ks": [8, 4], "bogus": 1, "grid_n": "x"}"#);
        for needle in [
            "'bogus'",
            "'grid_n'",
            "'model'",
            "'seed'",
            "'prior'",
            "'divergence'",
            "increasing",
        ] {
            assert!(e.iter().any(|m| m.contains(needle)), "{needle} missing from {e:?}");
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let e = errs("{\n  \"command\": \"fisher\",\n  \"model\" \"bernoulli\"\n}");
        assert!(e[0].starts_with("line 3 column"), "{e:?}");
    }

    #[test]
    fn command_mismatch_rejected() {
        let r = validate_config_for(
            br#"{"command": "fisher", "model": "bernoulli"}"#,
            Some(CommandKind::Jeffreys),
        );
        assert!(matches!(r, Err(CliError::Config(_))));
        let ok = validate_config_for(br#"{"model": "bernoulli"}"#, Some(CommandKind::Jeffreys)).unwrap();
        assert_eq!(ok.command, CommandKind::Jeffreys);
    }

    #[test]
    fn fisher_run_round_trips() {
        let cfg = validate_config(br#"{"command": "fisher", "model": "bernoulli", "theta": [0.25]}"#).unwrap();
        let art = run(&cfg).unwrap();
        let json = serde_json::to_string(&art.output).unwrap();
        let back = parse_run_output(&json).unwrap();
        assert_eq!(back, art.output);
        let CommandResult::Fisher { points } = back.result else {
            panic!()
        };
        assert!((points[0].matrix[0][0] - 1.0 / (0.25 * 0.75)).abs() < 1e-10);
    }

    #[test]
    fn numeric_errors_exit_three() {
        let e = CliError::from(crate::Error::NoFeasiblePoint);
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().starts_with("NoFeasiblePoint:"));
    }
}
