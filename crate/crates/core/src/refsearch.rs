//! Maximization of the limit functional over one-parameter prior families.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{limit_functional, limit_functional_beta_bernoulli};
use crate::error::{domain, Error, Result};
use crate::fdiv::DivergenceGen;
use crate::ids::ParsedId;
use crate::model::{Interval, StatModel};
use crate::prior::{
    beta_prior, mean_constrained_beta, prior_entropy, restrict_normalize, variance_constrained_beta, Prior,
};
use crate::quadrature::QuadSpec;

pub const DEFAULT_GRID_N: usize = 2048;
pub const DEFAULT_REFINE_TOL: f64 = 1e-8;

/// Relative distance to the best value within which a maximizer counts as global.
const GLOBAL_REL_TOL: f64 = 1e-6;
/// Entropy differences below this are ties, resolved toward smaller λ.
const ENTROPY_TIE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintTag {
    MeanBeta { c: f64 },
    VarBeta { v: f64 },
    FreeBeta2D,
    Custom1D,
}

pub type MakePrior = Arc<dyn Fn(f64) -> Result<Prior> + Send + Sync>;

/// A family `λ ↦ π_λ` over a closed parameter range.
#[derive(Clone)]
pub struct PriorFamily {
    pub id: String,
    pub tag: ConstraintTag,
    pub param_range: (f64, f64),
    /// Compact every member is restricted to, if any.
    pub compact: Option<Interval>,
    make: MakePrior,
}

impl std::fmt::Debug for PriorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PriorFamily")
            .field("id", &self.id)
            .field("tag", &self.tag)
            .field("param_range", &self.param_range)
            .field("compact", &self.compact)
            .finish()
    }
}

fn check_range(range: (f64, f64)) -> Result<()> {
    if !(range.0.is_finite() && range.1.is_finite() && range.0 <= range.1) {
        return domain(format!("invalid parameter range {range:?}"));
    }
    Ok(())
}

fn restrict_maybe(prior: Prior, compact: Option<Interval>) -> Result<Prior> {
    match compact {
        Some(c) => restrict_normalize(&prior, &[c]),
        None => Ok(prior),
    }
}

impl PriorFamily {
    pub fn custom_1d(id: &str, param_range: (f64, f64), make: MakePrior) -> Result<Self> {
        check_range(param_range)?;
        Ok(PriorFamily {
            id: id.to_string(),
            tag: ConstraintTag::Custom1D,
            param_range,
            compact: None,
            make,
        })
    }

    /// Beta(λ, λ(c−1)), optionally restricted to `compact`.
    pub fn mean_beta(c: f64, param_range: (f64, f64), compact: Option<Interval>) -> Result<Self> {
        check_range(param_range)?;
        mean_constrained_beta(c, 1.0)?;
        let suffix = compact.map(|(a, b)| format!("@[{a},{b}]")).unwrap_or_default();
        Ok(PriorFamily {
            id: format!("mean-beta:c={c}{suffix}"),
            tag: ConstraintTag::MeanBeta { c },
            param_range,
            compact,
            make: Arc::new(move |lambda| restrict_maybe(mean_constrained_beta(c, lambda)?, compact)),
        })
    }

    /// The Beta with variance `v` and mean `m = λ`, optionally restricted.
    pub fn var_beta(v: f64, param_range: (f64, f64), compact: Option<Interval>) -> Result<Self> {
        check_range(param_range)?;
        if !(v > 0.0 && v < 0.25) {
            return domain(format!("variance constraint needs 0 < V < 1/4, got {v}"));
        }
        let suffix = compact.map(|(a, b)| format!("@[{a},{b}]")).unwrap_or_default();
        Ok(PriorFamily {
            id: format!("var-beta:V={v}{suffix}"),
            tag: ConstraintTag::VarBeta { v },
            param_range,
            compact,
            make: Arc::new(move |m| restrict_maybe(variance_constrained_beta(v, m)?, compact)),
        })
    }

    /// The single-member family.
    pub fn constant(prior: Prior) -> Self {
        PriorFamily {
            id: format!("constant:{}", prior.id()),
            tag: ConstraintTag::Custom1D,
            param_range: (0.0, 0.0),
            compact: None,
            make: Arc::new(move |_| Ok(prior.clone())),
        }
    }

    pub fn make(&self, lambda: f64) -> Result<Prior> {
        (self.make)(lambda)
    }
}

/// Feasible means for a variance constraint: `m(1−m) > V`.
pub fn var_beta_mean_range(v: f64) -> Result<(f64, f64)> {
    if !(v > 0.0 && v < 0.25) {
        return domain(format!("variance constraint needs 0 < V < 1/4, got {v}"));
    }
    let r = (1.0 - 4.0 * v).sqrt();
    Ok((0.5 * (1.0 - r), 0.5 * (1.0 + r)))
}

/// Resolve `mean-beta:c=1.5` or `var-beta:V=0.1875`. The default range is
/// (0.01, 20) for λ and the feasible means shrunk by 1e−4 for m.
pub fn parse_family(id: &str, range: Option<(f64, f64)>, compact: Option<Interval>) -> Result<PriorFamily> {
    let p = ParsedId::parse(id)?;
    match p.name.as_str() {
        "mean-beta" => {
            p.expect_keys(&["c"])?;
            PriorFamily::mean_beta(p.f64("c")?, range.unwrap_or((0.01, 20.0)), compact)
        }
        "var-beta" => {
            p.expect_keys(&["V"])?;
            let v = p.f64("V")?;
            let (lo, hi) = var_beta_mean_range(v)?;
            PriorFamily::var_beta(v, range.unwrap_or((lo + 1e-4, hi - 1e-4)), compact)
        }
        other => domain(format!("unknown prior family '{other}'")),
    }
}

/// `l(π)`: the Beta×Bernoulli closed form when it applies, quadrature otherwise.
pub fn objective(model: &dyn StatModel, prior: &Prior, gen: &DivergenceGen, quad: QuadSpec) -> Result<f64> {
    if model.id() == "bernoulli" {
        if let (Some((a, b)), Some(p)) = (prior.beta_params(), gen.profile()) {
            return limit_functional_beta_bernoulli(a, b, p.exponent, p.coeff);
        }
    }
    limit_functional(model, prior, gen, quad)
}

fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::Integrability(_) | Error::InfeasibleMoment { .. } | Error::ZeroMass
    )
}

/// `l(make(λ))`, with `None` for members outside the admissible class.
fn family_value(
    family: &PriorFamily,
    model: &dyn StatModel,
    gen: &DivergenceGen,
    lambda: f64,
    quad: QuadSpec,
) -> Result<Option<f64>> {
    let value = family.make(lambda).and_then(|p| objective(model, &p, gen, quad));
    match value {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_infeasible(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    pub lambda: f64,
    pub l: f64,
    pub entropy: f64,
    /// Within 1e−6 relative of the best value found.
    pub global: bool,
    /// Strictly above both grid neighbours.
    pub strict_local: bool,
    /// Sits on an end of the parameter range.
    pub boundary: bool,
    /// `l(λ ± 10·refine_tol) ≤ l(λ)` on the objective.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub family: String,
    /// Sorted by λ.
    pub maximizers: Vec<Maximizer>,
    /// Index of the entropy-maximal global maximizer.
    pub selected: usize,
    pub grid_size: usize,
    pub refine_tol: f64,
    pub infeasible_ranges: Vec<(f64, f64)>,
    #[serde(skip)]
    pub grid: Vec<GridPoint>,
}

fn golden_section(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        iters += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x)?;
    let best = [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok(best)
}

/// Grid search plus golden-section refinement of every strict local maximum
/// and of the global grid maximum.
pub fn maximize_over_family(
    family: &PriorFamily,
    model: &dyn StatModel,
    gen: &DivergenceGen,
    grid_n: usize,
    refine_tol: f64,
    quad: QuadSpec,
) -> Result<SearchResult> {
    if gen.profile().is_none() {
        return Err(Error::Unsupported(format!("{} has no limit functional", gen.name())));
    }
    if !(refine_tol > 0.0) {
        return domain("refine_tol must be positive");
    }
    let (lo, hi) = family.param_range;
    let n = if lo == hi { 1 } else { grid_n.max(3) };
    let lambdas: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let values: Vec<Result<Option<f64>>> = lambdas
        .par_iter()
        .map(|&l| family_value(family, model, gen, l, quad))
        .collect();
    let values: Vec<Option<f64>> = values.into_iter().collect::<Result<_>>()?;
    if values.iter().all(Option::is_none) {
        return Err(Error::NoFeasiblePoint);
    }

    let mut infeasible_ranges = Vec::new();
    let mut i = 0;
    while i < n {
        if values[i].is_none() {
            let start = i;
            while i + 1 < n && values[i + 1].is_none() {
                i += 1;
            }
            infeasible_ranges.push((lambdas[start], lambdas[i]));
        }
        i += 1;
    }

    let below = |j: Option<usize>, v: f64| -> bool {
        match j {
            None => true,
            Some(j) => values[j].is_none_or(|w| w < v),
        }
    };
    let argmax = (0..n)
        .filter(|&j| values[j].is_some())
        .fold(None::<usize>, |best, j| match best {
            Some(b) if values[b] >= values[j] => Some(b),
            _ => Some(j),
        })
        .expect("a feasible point exists");
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&j| {
            let Some(v) = values[j] else { return false };
            let interior = j > 0 && j + 1 < n;
            interior
                && values[j - 1].is_some()
                && values[j + 1].is_some()
                && below(Some(j - 1), v)
                && below(Some(j + 1), v)
        })
        .collect();
    if !candidates.contains(&argmax) {
        candidates.push(argmax);
        candidates.sort_unstable();
    }

    let f = |l: f64| -> Result<f64> { Ok(family_value(family, model, gen, l, quad)?.unwrap_or(f64::NEG_INFINITY)) };
    let mut found: Vec<(f64, f64, bool, bool)> = Vec::new();
    for &j in &candidates {
        let v = values[j].expect("candidate is feasible");
        let strict = j > 0 && j + 1 < n && below(Some(j - 1), v) && below(Some(j + 1), v);
        let (lambda, l) = if n == 1 {
            (lambdas[j], v)
        } else {
            let a = lambdas[j.saturating_sub(1)];
            let b = lambdas[(j + 1).min(n - 1)];
            let (x, fx) = golden_section(&f, a, b, refine_tol)?;
            if fx >= v {
                (x, fx)
            } else {
                (lambdas[j], v)
            }
        };
        let boundary = n > 1 && ((lambda - lo).abs() <= refine_tol * 10.0 || (hi - lambda).abs() <= refine_tol * 10.0);
        if found.iter().all(|m| (m.0 - lambda).abs() > 10.0 * refine_tol) {
            found.push((lambda, l, strict, boundary));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = found.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);

    let mut maximizers = Vec::with_capacity(found.len());
    for (lambda, l, strict, boundary) in found {
        let global = (best - l).abs() <= GLOBAL_REL_TOL * best.abs().max(f64::MIN_POSITIVE);
        if !(global || strict) {
            continue;
        }
        let step = 10.0 * refine_tol;
        let mut certified = n > 1;
        for probe in [lambda - step, lambda + step] {
            if probe < lo || probe > hi || n == 1 {
                continue;
            }
            // relative slack for rounding in the objective
            if f(probe)? > l + 1e-12 * l.abs() {
                certified = false;
            }
        }
        let entropy = prior_entropy(&family.make(lambda)?)?;
        maximizers.push(Maximizer {
            lambda,
            l,
            entropy,
            global,
            strict_local: strict,
            boundary,
            certified,
        });
    }
    let selected = entropy_choice(&maximizers).ok_or(Error::NoFeasiblePoint)?;
    Ok(SearchResult {
        family: family.id.clone(),
        maximizers,
        selected,
        grid_size: n,
        refine_tol,
        infeasible_ranges,
        grid: lambdas
            .into_iter()
            .zip(values)
            .map(|(lambda, l)| GridPoint { lambda, l })
            .collect(),
    })
}

/// Index of the maximizer with the largest entropy among the global ones;
/// ties within 1e−10 go to the smaller λ.
pub fn entropy_choice(maximizers: &[Maximizer]) -> Option<usize> {
    let pool: Vec<usize> = if maximizers.iter().any(|m| m.global) {
        (0..maximizers.len()).filter(|&i| maximizers[i].global).collect()
    } else {
        (0..maximizers.len()).collect()
    };
    let mut best: Option<usize> = None;
    for i in pool {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (mb, mi) = (&maximizers[b], &maximizers[i]);
                let better = mi.entropy > mb.entropy + ENTROPY_TIE
                    || ((mi.entropy - mb.entropy).abs() <= ENTROPY_TIE && mi.lambda < mb.lambda);
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// The prior of the entropy-selected maximizer.
pub fn select_by_entropy(result: &SearchResult, family: &PriorFamily) -> Result<Prior> {
    let i = entropy_choice(&result.maximizers).ok_or(Error::NoFeasiblePoint)?;
    family.make(result.maximizers[i].lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub lambda: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub family: String,
    pub l_candidate: f64,
    pub probes: usize,
    pub infeasible_probes: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `l(candidate) ≥ l(make(λ)) − 1e−8` at `n_probe` evenly spread λ.
pub fn verify_reference(
    candidate: &Prior,
    family: &PriorFamily,
    model: &dyn StatModel,
    gen: &DivergenceGen,
    n_probe: usize,
    quad: QuadSpec,
) -> Result<VerifyReport> {
    if n_probe == 0 {
        return domain("n_probe must be positive");
    }
    let l_candidate = objective(model, candidate, gen, quad)?;
    let (lo, hi) = family.param_range;
    let probes: Vec<f64> = (0..n_probe)
        .map(|j| lo + (hi - lo) * (j as f64 + 0.5) / n_probe as f64)
        .collect();
    let values: Vec<Result<Option<f64>>> = probes
        .par_iter()
        .map(|&l| family_value(family, model, gen, l, quad))
        .collect();
    let mut violations = Vec::new();
    let mut infeasible = 0;
    for (lambda, v) in probes.iter().zip(values) {
        match v? {
            None => infeasible += 1,
            Some(l) if l > l_candidate + 1e-8 => violations.push(Violation { lambda: *lambda, l }),
            Some(_) => {}
        }
    }
    Ok(VerifyReport {
        family: family.id.clone(),
        l_candidate,
        probes: n_probe,
        infeasible_probes: infeasible,
        violations,
    })
}

/// Maximizer of `l` over all Beta(a, b) for the Bernoulli model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBetaResult {
    pub a: f64,
    pub b: f64,
    pub l: f64,
}

/// Log-spaced grid over `[range.0, range.1]²` followed by cyclic
/// golden-section sweeps in each coordinate.
pub fn maximize_free_beta(gen: &DivergenceGen, range: (f64, f64), grid_n: usize, tol: f64) -> Result<FreeBetaResult> {
    let p = gen
        .profile()
        .ok_or_else(|| Error::Unsupported(format!("{} has no limit functional", gen.name())))?;
    if !(range.0 > 0.0 && range.1 > range.0) || grid_n < 3 {
        return domain("free Beta search needs 0 < lo < hi and grid_n >= 3");
    }
    let f = |a: f64, b: f64| -> f64 {
        limit_functional_beta_bernoulli(a, b, p.exponent, p.coeff).unwrap_or(f64::NEG_INFINITY)
    };
    let (la, lb) = (range.0.ln(), range.1.ln());
    let pts: Vec<f64> = (0..grid_n)
        .map(|i| (la + (lb - la) * i as f64 / (grid_n - 1) as f64).exp())
        .collect();
    let mut best = (pts[0], pts[0], f64::NEG_INFINITY);
    for &a in &pts {
        for &b in &pts {
            let v = f(a, b);
            if v > best.2 {
                best = (a, b, v);
            }
        }
    }
    let ratio = (lb - la) / (grid_n - 1) as f64;
    let (mut a, mut b) = (best.0, best.1);
    for _ in 0..100 {
        let (a0, b0) = (a, b);
        let fa = |x: f64| Ok(f(x, b));
        a = golden_section(
            &fa,
            (a.ln() - ratio).exp().max(range.0),
            (a.ln() + ratio).exp().min(range.1),
            tol,
        )?
        .0;
        let fb = |x: f64| Ok(f(a, x));
        b = golden_section(
            &fb,
            (b.ln() - ratio).exp().max(range.0),
            (b.ln() + ratio).exp().min(range.1),
            tol,
        )?
        .0;
        if (a - a0).abs() < tol && (b - b0).abs() < tol {
            break;
        }
    }
    let l = f(a, b);
    beta_prior(a, b)?;
    Ok(FreeBetaResult { a, b, l })
}
