//! Prior densities on parameter boxes: Beta families, flat and Jeffreys
//! priors, compact restriction and differential entropy.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ids::ParsedId;
use crate::model::{fisher_information, xlogy, Interval, StatModel};
use crate::quadrature::{Grid, Node, QuadSpec};
use crate::sampling::{open_unit, sample_beta, sample_beta_ln, substream};
use crate::special::{digamma, ln_beta, KahanSum};

/// Relative agreement required between two quadrature layouts when
/// normalizing a one-dimensional density.
const NORMALIZE_TOL: f64 = 1e-9;

/// Smallest admissible mass of a compact restriction.
const MIN_MASS: f64 = 1e-300;

/// Family metadata carried by a [`Prior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyTag {
    Beta { a: f64, b: f64 },
    Uniform,
    Jeffreys { model: String },
    MeanConstrainedBeta { c: f64, lambda: f64 },
    VarConstrainedBeta { v: f64, m: f64 },
    Custom { name: String },
}

/// Log of an unnormalized density.
pub type LogKernelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kernel {
    Beta { a: f64, b: f64 },
    Flat,
    Jeffreys(Arc<dyn StatModel>),
    Custom(LogKernelFn),
}

impl Kernel {
    fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            Kernel::Beta { a, b } => {
                let t = theta[0];
                if !(t > 0.0 && t < 1.0) {
                    return f64::NEG_INFINITY;
                }
                xlogy(a - 1.0, t.ln()) + xlogy(b - 1.0, (-t).ln_1p())
            }
            Kernel::Flat => 0.0,
            Kernel::Jeffreys(m) => jeffreys_log_kernel(m.as_ref(), theta).unwrap_or(f64::NAN),
            Kernel::Custom(f) => f(theta),
        }
    }

    fn eval_node(&self, n: &Node) -> f64 {
        match self {
            Kernel::Beta { a, b } => xlogy(a - 1.0, n.ln_above(0.0)) + xlogy(b - 1.0, n.ln_below(1.0)),
            Kernel::Flat => 0.0,
            Kernel::Jeffreys(m) => m.ln_det_fisher_node(n).map(|v| 0.5 * v).unwrap_or(f64::NAN),
            Kernel::Custom(f) => f(&[n.x]),
        }
    }
}

fn jeffreys_log_kernel(model: &dyn StatModel, theta: &[f64]) -> Result<f64> {
    if theta.len() == 1 {
        return Ok(0.5 * model.ln_det_fisher_node(&Node::at(theta[0]))?);
    }
    let info = fisher_information(model, theta)?;
    Ok(0.5 * info.determinant().ln())
}

/// Inverse-CDF table for one-dimensional priors without a direct sampler.
#[derive(Debug)]
struct CdfTable {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl CdfTable {
    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        let u = open_unit(rng);
        let i = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        if i == 0 {
            return self.xs[0];
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        if c1 <= c0 {
            x1
        } else {
            x0 + (x1 - x0) * (u - c0) / (c1 - c0)
        }
    }
}

/// A prior density on a box, possibly unnormalized.
#[derive(Clone)]
pub struct Prior {
    family: FamilyTag,
    kernel: Kernel,
    support: Vec<Interval>,
    log_norm_const: Option<f64>,
    restricted: bool,
    table: Arc<OnceLock<Result<CdfTable>>>,
    envelope: Arc<OnceLock<Result<f64>>>,
}

impl fmt::Debug for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Prior")
            .field("family", &self.family)
            .field("support", &self.support)
            .field("log_norm_const", &self.log_norm_const)
            .field("restricted", &self.restricted)
            .finish()
    }
}

impl Prior {
    fn build(family: FamilyTag, kernel: Kernel, support: Vec<Interval>, log_norm_const: Option<f64>) -> Prior {
        Prior {
            family,
            kernel,
            support,
            log_norm_const,
            restricted: false,
            table: Arc::new(OnceLock::new()),
            envelope: Arc::new(OnceLock::new()),
        }
    }

    /// A user-supplied log kernel on `support`, normalized by quadrature when
    /// the support is bounded.
    pub fn custom(name: &str, support: Vec<Interval>, log_kernel: LogKernelFn) -> Result<Prior> {
        check_support(&support)?;
        let kernel = Kernel::Custom(log_kernel);
        let norm = normalizer(&kernel, &support)?;
        Ok(Prior::build(
            FamilyTag::Custom { name: name.to_string() },
            kernel,
            support,
            norm,
        ))
    }

    pub fn family(&self) -> &FamilyTag {
        &self.family
    }

    pub fn support(&self) -> &[Interval] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.log_norm_const.is_some()
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    /// Additive constant turning the log kernel into a log density.
    pub fn log_norm_const(&self) -> Option<f64> {
        self.log_norm_const
    }

    /// Short human-readable identifier.
    pub fn id(&self) -> String {
        let base = match &self.family {
            FamilyTag::Beta { a, b } => format!("beta:a={a},b={b}"),
            FamilyTag::Uniform => "uniform".to_string(),
            FamilyTag::Jeffreys { model } => format!("jeffreys[{model}]"),
            FamilyTag::MeanConstrainedBeta { c, lambda } => format!("mean-beta:c={c},lambda={lambda}"),
            FamilyTag::VarConstrainedBeta { v, m } => format!("var-beta:V={v},m={m}"),
            FamilyTag::Custom { name } => format!("custom:{name}"),
        };
        let bounds: Vec<String> = self.support.iter().map(|(lo, hi)| format!("[{lo},{hi}]")).collect();
        format!("{base}@{}", bounds.join("x"))
    }

    /// Shape parameters when the prior is an unrestricted Beta on (0, 1).
    pub fn beta_params(&self) -> Option<(f64, f64)> {
        match self.kernel {
            Kernel::Beta { a, b } if !self.restricted => Some((a, b)),
            _ => None,
        }
    }

    /// Shape parameters of the underlying Beta kernel, restricted or not.
    pub fn beta_kernel(&self) -> Option<(f64, f64)> {
        match self.kernel {
            Kernel::Beta { a, b } => Some((a, b)),
            _ => None,
        }
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(&self.support)
                .all(|(t, &(lo, hi))| *t >= lo && *t <= hi)
    }

    /// Log density (log kernel when unnormalized); -∞ outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.in_support(theta) {
            return f64::NEG_INFINITY;
        }
        self.kernel.eval(theta) + self.log_norm_const.unwrap_or(0.0)
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        self.log_density(theta).exp()
    }

    /// Log density at a quadrature node of a one-dimensional grid lying in
    /// the support; uses the node's endpoint distances.
    pub fn log_density_node(&self, node: &Node) -> f64 {
        self.kernel.eval_node(node) + self.log_norm_const.unwrap_or(0.0)
    }

    /// Quadrature grid over a one-dimensional bounded support.
    pub fn grid(&self, spec: QuadSpec) -> Result<Grid> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "one-dimensional quadrature over a {}-dimensional prior",
                self.dim()
            )));
        }
        let (lo, hi) = self.support[0];
        Grid::sin2(lo, hi, spec)
    }

    /// One draw from the prior.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if !self.is_normalized() {
            return Err(Error::NormalizationError);
        }
        match &self.kernel {
            Kernel::Beta { a, b } if !self.restricted => Ok(vec![sample_beta(*a, *b, rng)]),
            Kernel::Flat => Ok(self
                .support
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()),
            _ if self.dim() == 1 => {
                let table = self.table.get_or_init(|| self.cdf_table());
                match table {
                    Ok(t) => Ok(vec![t.draw(rng)]),
                    Err(e) => Err(e.clone()),
                }
            }
            _ => self.sample_rejection(rng),
        }
    }

    /// `n` draws from substream `index` of `seed`.
    pub fn sample_n(&self, n: usize, seed: u64, index: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = substream(seed, index);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }

    fn cdf_table(&self) -> Result<CdfTable> {
        let grid = self.grid(QuadSpec::default())?;
        let mut xs = Vec::with_capacity(grid.len() + 2);
        let mut cdf = Vec::with_capacity(grid.len() + 2);
        let mut acc = KahanSum::default();
        xs.push(grid.lo);
        cdf.push(0.0);
        for n in &grid.nodes {
            acc.add((self.log_density_node(n) + n.ln_weight).exp());
            xs.push(n.x);
            cdf.push(acc.total());
        }
        xs.push(grid.hi);
        cdf.push(acc.total());
        let total = acc.total();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ZeroMass);
        }
        for c in &mut cdf {
            *c /= total;
        }
        Ok(CdfTable { xs, cdf })
    }

    fn sample_rejection(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if self.support.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite())) {
            return Err(Error::Unsupported("sampling a prior on an unbounded box".into()));
        }
        let bound = self.envelope.get_or_init(|| self.log_envelope()).clone()?;
        for _ in 0..1_000_000 {
            let theta: Vec<f64> = self
                .support
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * open_unit(rng))
                .collect();
            if open_unit(rng).ln() <= self.log_density(&theta) - bound {
                return Ok(theta);
            }
        }
        Err(Error::EstimateDiverged(
            "rejection sampler acceptance rate too low".into(),
        ))
    }

    /// Log of an upper envelope for rejection sampling: grid maximum plus a margin.
    fn log_envelope(&self) -> Result<f64> {
        let mut max = f64::NEG_INFINITY;
        let per_dim: usize = 64;
        let total = per_dim.pow(self.dim() as u32);
        let mut theta = vec![0.0; self.dim()];
        for i in 0..total {
            let mut rem = i;
            for (j, &(lo, hi)) in self.support.iter().enumerate() {
                let idx = rem % per_dim;
                rem /= per_dim;
                theta[j] = lo + (hi - lo) * idx as f64 / (per_dim - 1) as f64;
            }
            let v = self.log_density(&theta);
            if v.is_nan() {
                return Err(Error::NonFinite("prior density on envelope grid".into()));
            }
            max = max.max(v);
        }
        Ok(max + 0.5)
    }
}

fn check_support(support: &[Interval]) -> Result<()> {
    if support.is_empty() {
        return domain("prior support needs at least one dimension");
    }
    for &(lo, hi) in support {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return domain(format!("invalid support interval [{lo}, {hi}]"));
        }
    }
    Ok(())
}

fn bounded(support: &[Interval]) -> bool {
    support.iter().all(|(lo, hi)| lo.is_finite() && hi.is_finite())
}

/// `ln ∫ exp(kernel)` over a bounded one-dimensional interval, accepted once
/// two layouts agree.
fn log_mass_1d(kernel: &Kernel, lo: f64, hi: f64) -> Result<f64> {
    let layouts = [
        (QuadSpec::default(), QuadSpec::default().refined()),
        (QuadSpec::singular(), QuadSpec::singular().refined()),
    ];
    let mut last = (f64::NAN, f64::NAN);
    for (coarse, fine) in layouts {
        let a = Grid::sin2(lo, hi, coarse)?.log_integrate(|n| kernel.eval_node(n));
        let b = Grid::sin2(lo, hi, fine)?.log_integrate(|n| kernel.eval_node(n));
        if a.is_nan() || b.is_nan() {
            return Err(Error::NonFinite(format!("prior kernel on [{lo}, {hi}]")));
        }
        if a.is_finite() && b.is_finite() && (a - b).abs() <= NORMALIZE_TOL * (1.0 + b.abs()) {
            return Ok(b);
        }
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            return Ok(b);
        }
        last = (a, b);
    }
    Err(Error::QuadratureFailure(format!(
        "normalizing constant on [{lo}, {hi}] unstable under refinement ({} vs {})",
        last.0, last.1
    )))
}

/// `ln ∫ exp(kernel)` over a bounded box of dimension 2 or more, by a
/// tensor product of mapped Gauss–Legendre rules.
fn log_mass_nd(kernel: &Kernel, support: &[Interval]) -> Result<f64> {
    let spec = QuadSpec {
        nodes: 40,
        panels: 4,
        end_levels: 10,
        end_nodes: 8,
    };
    let grids: Vec<Grid> = support
        .iter()
        .map(|&(lo, hi)| Grid::sin2(lo, hi, spec))
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = grids.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().product();
    let mut terms = Vec::with_capacity(total);
    let mut theta = vec![0.0; support.len()];
    for i in 0..total {
        let mut rem = i;
        let mut lw = 0.0;
        for (j, g) in grids.iter().enumerate() {
            let n = &g.nodes[rem % sizes[j]];
            rem /= sizes[j];
            theta[j] = n.x;
            lw += n.ln_weight;
        }
        let v = kernel.eval(&theta);
        if v.is_nan() {
            return Err(Error::NonFinite(format!("prior kernel at {theta:?}")));
        }
        terms.push(v + lw);
    }
    Ok(crate::special::log_sum_exp(&terms))
}

fn log_mass(kernel: &Kernel, support: &[Interval]) -> Result<f64> {
    if let Kernel::Flat = kernel {
        return Ok(support.iter().map(|(lo, hi)| (hi - lo).ln()).sum());
    }
    if support.len() == 1 {
        log_mass_1d(kernel, support[0].0, support[0].1)
    } else {
        log_mass_nd(kernel, support)
    }
}

fn normalizer(kernel: &Kernel, support: &[Interval]) -> Result<Option<f64>> {
    if !bounded(support) {
        return Ok(None);
    }
    let lm = log_mass(kernel, support)?;
    if lm == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }
    if !lm.is_finite() {
        return Err(Error::NonFinite(format!("log normalizing constant {lm}")));
    }
    Ok(Some(-lm))
}

/// Beta(a, b) on (0, 1).
pub fn beta_prior(a: f64, b: f64) -> Result<Prior> {
    beta_with_tag(a, b, FamilyTag::Beta { a, b })
}

fn beta_with_tag(a: f64, b: f64, tag: FamilyTag) -> Result<Prior> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return domain(format!("Beta shapes must be positive, got ({a}, {b})"));
    }
    Ok(Prior::build(
        tag,
        Kernel::Beta { a, b },
        vec![(0.0, 1.0)],
        Some(-ln_beta(a, b)),
    ))
}

/// Flat density on a box; improper when the box is unbounded.
pub fn uniform(support: Vec<Interval>) -> Result<Prior> {
    check_support(&support)?;
    let norm = normalizer(&Kernel::Flat, &support)?;
    Ok(Prior::build(FamilyTag::Uniform, Kernel::Flat, support, norm))
}

/// Beta(λ, λ(c − 1)), the Beta priors with mean 1/c.
pub fn mean_constrained_beta(c: f64, lambda: f64) -> Result<Prior> {
    if !(c > 1.0 && c.is_finite()) {
        return domain(format!("mean constraint needs c > 1, got {c}"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    beta_with_tag(lambda, lambda * (c - 1.0), FamilyTag::MeanConstrainedBeta { c, lambda })
}

/// The Beta prior with mean `m` and variance `v`.
pub fn variance_constrained_beta(v: f64, m: f64) -> Result<Prior> {
    if !(m > 0.0 && m < 1.0) || !(v > 0.0) {
        return domain(format!(
            "variance constraint needs V > 0 and m in (0, 1), got V={v}, m={m}"
        ));
    }
    let s = m * (1.0 - m) / v - 1.0;
    if !(s > 0.0) {
        return Err(Error::InfeasibleMoment { mean: m, variance: v });
    }
    beta_with_tag(m * s, (1.0 - m) * s, FamilyTag::VarConstrainedBeta { v, m })
}

/// Jeffreys prior `|det I(θ)|^{1/2}` on `region` (defaults to the model's
/// compact, then its full box). Normalized whenever the region is bounded.
pub fn jeffreys_prior(model: Arc<dyn StatModel>, region: Option<&[Interval]>) -> Result<Prior> {
    let space = model.param_space();
    let region: Vec<Interval> = match region {
        Some(r) => r.to_vec(),
        None => space.compact().unwrap_or(space.bounds()).to_vec(),
    };
    check_support(&region)?;
    if region.len() != space.dim() {
        return domain(format!(
            "region has {} intervals for a {}-dimensional model",
            region.len(),
            space.dim()
        ));
    }
    for (&(a, b), &(lo, hi)) in region.iter().zip(space.bounds()) {
        if a < lo || b > hi {
            return domain(format!("region [{a}, {b}] leaves the parameter box ({lo}, {hi})"));
        }
    }
    let kernel = Kernel::Jeffreys(Arc::clone(&model));
    check_fisher_on_region(model.as_ref(), &region)?;
    let norm = normalizer(&kernel, &region)?;
    Ok(Prior::build(
        FamilyTag::Jeffreys { model: model.id() },
        kernel,
        region,
        norm,
    ))
}

fn check_fisher_on_region(model: &dyn StatModel, region: &[Interval]) -> Result<()> {
    if region.len() == 1 && bounded(region) {
        let grid = Grid::sin2(region[0].0, region[0].1, QuadSpec::default())?;
        for n in &grid.nodes {
            let v = model.ln_det_fisher_node(n)?;
            if !v.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: v.exp(),
                });
            }
        }
        return Ok(());
    }
    // a few interior probe points per dimension
    let probes = 5usize;
    let total = probes.pow(region.len() as u32);
    let mut theta = vec![0.0; region.len()];
    for i in 0..total {
        let mut rem = i;
        for (j, &(lo, hi)) in region.iter().enumerate() {
            let t = (rem % probes) as f64 / (probes - 1) as f64;
            rem /= probes;
            theta[j] = interior_point(lo, hi, t);
        }
        fisher_information(model, &theta)?;
    }
    Ok(())
}

fn interior_point(lo: f64, hi: f64, t: f64) -> f64 {
    let t = 0.05 + 0.9 * t;
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => lo + (hi - lo) * t,
        (true, false) => lo + t / (1.0 - t),
        (false, true) => hi - (1.0 - t) / t,
        (false, false) => (t - 0.5) * 10.0,
    }
}

/// Renormalized restriction of `prior` to the closed box `compact`.
pub fn restrict_normalize(prior: &Prior, compact: &[Interval]) -> Result<Prior> {
    if compact.len() != prior.dim() {
        return domain(format!(
            "compact has {} intervals for a {}-dimensional prior",
            compact.len(),
            prior.dim()
        ));
    }
    for (&(a, b), &(lo, hi)) in compact.iter().zip(&prior.support) {
        if !(a.is_finite() && b.is_finite() && a < b && a >= lo && b <= hi) {
            return domain(format!("compact [{a}, {b}] is not inside the support [{lo}, {hi}]"));
        }
    }
    if prior.is_normalized() && compact == prior.support.as_slice() {
        return Ok(prior.clone());
    }
    let lm = log_mass(&prior.kernel, compact)?;
    let mass_rel = lm + prior.log_norm_const.unwrap_or(0.0);
    if !(mass_rel >= MIN_MASS.ln()) {
        return Err(Error::ZeroMass);
    }
    Ok(Prior {
        family: prior.family.clone(),
        kernel: prior.kernel.clone(),
        support: compact.to_vec(),
        log_norm_const: Some(-lm),
        restricted: true,
        table: Arc::new(OnceLock::new()),
        envelope: Arc::new(OnceLock::new()),
    })
}

/// Differential entropy of a Beta(a, b) distribution.
pub fn beta_entropy(a: f64, b: f64) -> f64 {
    ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b)
}

/// Differential entropy `-∫ π ln π`.
///
/// Closed form for unrestricted Beta and flat priors, quadrature on bounded
/// one-dimensional supports, Monte Carlo ([`prior_entropy_mc`], 10⁵ draws,
/// seed 0) otherwise.
pub fn prior_entropy(prior: &Prior) -> Result<f64> {
    if !prior.is_normalized() {
        return Err(Error::NormalizationError);
    }
    if let Some((a, b)) = prior.beta_params() {
        return Ok(beta_entropy(a, b));
    }
    if let Kernel::Flat = prior.kernel {
        return Ok(-prior.log_norm_const.unwrap_or(0.0));
    }
    if prior.dim() == 1 {
        let grid = prior.grid(QuadSpec::singular())?;
        let h = -grid.integrate(|n| {
            let lp = prior.log_density_node(n);
            if lp == f64::NEG_INFINITY {
                0.0
            } else {
                lp.exp() * lp
            }
        });
        if !h.is_finite() {
            return Err(Error::NonFinite("entropy quadrature".into()));
        }
        return Ok(h);
    }
    Ok(prior_entropy_mc(prior, 100_000, 0)?.0)
}

/// Monte Carlo entropy `-E[ln π(θ)]` with its standard error.
pub fn prior_entropy_mc(prior: &Prior, n: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 2 {
        return domain("entropy estimate needs at least two draws");
    }
    let values: Vec<f64> = match prior.beta_params() {
        // log-space draws: Beta mass can sit closer to 0 or 1 than f64 resolves
        Some((a, b)) => {
            let mut rng = substream(seed, 0);
            let ln_b = ln_beta(a, b);
            (0..n)
                .map(|_| {
                    let (lx, l1x) = sample_beta_ln(a, b, &mut rng);
                    ln_b - xlogy(a - 1.0, lx) - xlogy(b - 1.0, l1x)
                })
                .collect()
        }
        None => prior
            .sample_n(n, seed, 0)?
            .iter()
            .map(|t| -prior.log_density(t))
            .collect(),
    };
    let mut sum = KahanSum::default();
    let mut sum_sq = KahanSum::default();
    for v in values {
        sum.add(v);
        sum_sq.add(v * v);
    }
    let nf = n as f64;
    let mean = sum.total() / nf;
    let var = (sum_sq.total() / nf - mean * mean) * nf / (nf - 1.0);
    if !(var.is_finite() && mean.is_finite()) {
        return Err(Error::EstimateDiverged("entropy variance is not finite".into()));
    }
    Ok((mean, (var.max(0.0) / nf).sqrt()))
}

/// Resolve a prior identifier for `model`: `uniform`, `beta:a=..,b=..`,
/// `jeffreys`, `mean-beta:c=..,lambda=..`, `var-beta:V=..,m=..`.
///
/// When `compact` is given, flat and Jeffreys priors live on it and Beta
/// priors are restricted to it. Without it, flat and Jeffreys priors use the
/// model's box.
pub fn parse_prior(id: &str, model: Arc<dyn StatModel>, compact: Option<&[Interval]>) -> Result<Prior> {
    let p = ParsedId::parse(id)?;
    let restrict = |prior: Prior| match compact {
        Some(c) => restrict_normalize(&prior, c),
        None => Ok(prior),
    };
    match p.name.as_str() {
        "uniform" => {
            p.expect_keys(&["lo", "hi"])?;
            let region = match (p.params.get("lo"), compact) {
                (Some(_), _) => vec![(p.f64("lo")?, p.f64("hi")?)],
                (None, Some(c)) => c.to_vec(),
                (None, None) => model.param_space().bounds().to_vec(),
            };
            uniform(region)
        }
        "beta" => {
            p.expect_keys(&["a", "b"])?;
            restrict(beta_prior(p.f64("a")?, p.f64("b")?)?)
        }
        "jeffreys" => {
            p.expect_keys(&[])?;
            jeffreys_prior(model, compact)
        }
        "mean-beta" => {
            p.expect_keys(&["c", "lambda"])?;
            restrict(mean_constrained_beta(p.f64("c")?, p.f64("lambda")?)?)
        }
        "var-beta" => {
            p.expect_keys(&["V", "m"])?;
            restrict(variance_constrained_beta(p.f64("V")?, p.f64("m")?)?)
        }
        other => domain(format!("unknown prior '{other}'")),
    }
}
