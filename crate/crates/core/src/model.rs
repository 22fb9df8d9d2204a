//! Parametric sampling models, Fisher information and score diagnostics.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ids::ParsedId;
use crate::quadrature::{adaptive_real_line, Node};
use crate::sampling::{open_unit, substream};
use crate::special::{ln_binomial, KahanSum};

/// Closed interval bounds `(lo, hi)`; infinite values allowed for open boxes.
pub type Interval = (f64, f64);

/// Smallest eigenvalue accepted as positive for Fisher matrices.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Guard keeping Bernoulli-type parameters away from {0, 1}.
pub const UNIT_GUARD: f64 = 1e-12;

/// Open parameter box with an optional compact sub-box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    bounds: Vec<Interval>,
    compact: Option<Vec<Interval>>,
}

impl ParamSpace {
    pub fn new(bounds: Vec<Interval>) -> Result<ParamSpace> {
        if bounds.is_empty() {
            return domain("parameter space needs at least one dimension");
        }
        for &(lo, hi) in &bounds {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return domain(format!("invalid parameter interval ({lo}, {hi})"));
            }
        }
        Ok(ParamSpace { bounds, compact: None })
    }

    /// Attach a compact box; each interval must lie strictly inside the open box.
    pub fn with_compact(mut self, compact: Vec<Interval>) -> Result<ParamSpace> {
        if compact.len() != self.bounds.len() {
            return domain(format!(
                "compact has {} intervals for a {}-dimensional space",
                compact.len(),
                self.bounds.len()
            ));
        }
        for (&(a, b), &(lo, hi)) in compact.iter().zip(&self.bounds) {
            if !(a.is_finite() && b.is_finite() && a <= b && a > lo && b < hi) {
                return domain(format!("compact [{a}, {b}] is not inside ({lo}, {hi})"));
            }
        }
        self.compact = Some(compact);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn compact(&self) -> Option<&[Interval]> {
        self.compact.as_deref()
    }

    /// Whether `theta` lies in the open box.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(&self.bounds).all(|(t, &(lo, hi))| *t > lo && *t < hi)
    }
}

/// Observation space of a single draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObsSpace {
    /// Finitely many atoms, each with positive probability.
    Finite(Vec<f64>),
    /// Density with respect to the named reference measure.
    Continuous { dim: usize, measure: String },
}

/// A parametric model `ℓ(y|θ)` for one observation.
///
/// Observations are real scalars; Bernoulli and Binomial draws are encoded
/// as their integer values.
pub trait StatModel: Send + Sync + Debug {
    fn id(&self) -> String;

    fn param_space(&self) -> &ParamSpace;

    fn obs_space(&self) -> ObsSpace;

    /// `log ℓ(y|θ)`.
    fn log_lik(&self, y: f64, theta: &[f64]) -> f64;

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64;

    /// `∇_θ log ℓ(y|θ)`. Central differences unless overridden.
    fn score(&self, y: f64, theta: &[f64]) -> DVector<f64> {
        let d = theta.len();
        let mut g = DVector::zeros(d);
        let mut t = theta.to_vec();
        for i in 0..d {
            let h = fd_step(theta[i]);
            t[i] = theta[i] + h;
            let up = self.log_lik(y, &t);
            t[i] = theta[i] - h;
            let down = self.log_lik(y, &t);
            t[i] = theta[i];
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }

    /// `∇²_θ log ℓ(y|θ)`. Central differences of the score unless overridden.
    fn hessian(&self, y: f64, theta: &[f64]) -> DMatrix<f64> {
        let d = theta.len();
        let mut h = DMatrix::zeros(d, d);
        let mut t = theta.to_vec();
        for i in 0..d {
            let step = fd_step(theta[i]);
            t[i] = theta[i] + step;
            let up = self.score(y, &t);
            t[i] = theta[i] - step;
            let down = self.score(y, &t);
            t[i] = theta[i];
            for j in 0..d {
                h[(i, j)] = (up[j] - down[j]) / (2.0 * step);
            }
        }
        (&h + h.transpose()) * 0.5
    }

    fn fisher_analytic(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Rejects parameters outside the open box.
    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if !self.param_space().contains(theta) {
            return domain(format!("theta {theta:?} is outside the parameter box of {}", self.id()));
        }
        Ok(())
    }

    /// Location and scale of the observation density, used to map the real
    /// line onto a bounded interval in continuous quadratures.
    fn obs_center_scale(&self, _theta: &[f64]) -> (f64, f64) {
        (0.0, 1.0)
    }

    /// `θ ↦ log ℓ_k(ys|θ)` on one-dimensional quadrature nodes.
    ///
    /// Built-in models reduce `ys` to sufficient statistics once so each
    /// evaluation is O(1).
    fn node_log_lik_k<'a>(&'a self, ys: &'a [f64]) -> Box<dyn Fn(&Node) -> f64 + Send + Sync + 'a> {
        Box::new(move |node: &Node| ys.iter().map(|&y| self.log_lik(y, &[node.x])).sum())
    }

    /// `ln det I(θ)` at a one-dimensional node. Nodes whose coordinate
    /// rounds onto an end of the parameter box are moved one ulp inside.
    fn ln_det_fisher_node(&self, node: &Node) -> Result<f64> {
        let (lo, hi) = self.param_space().bounds()[0];
        let x = if node.x <= lo {
            lo.next_up()
        } else if node.x >= hi {
            hi.next_down()
        } else {
            node.x
        };
        let info = fisher_information(self, &[x])?;
        Ok(info[(0, 0)].ln())
    }
}

fn fd_step(t: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + t.abs())
}

/// Bernoulli(θ), θ ∈ (0, 1).
#[derive(Debug, Clone)]
pub struct Bernoulli {
    space: ParamSpace,
}

impl Bernoulli {
    pub fn new() -> Self {
        Bernoulli {
            space: ParamSpace::new(vec![(0.0, 1.0)]).expect("valid box"),
        }
    }
}

impl Default for Bernoulli {
    fn default() -> Self {
        Self::new()
    }
}

fn check_unit(id: &str, theta: &[f64]) -> Result<()> {
    if theta.len() != 1 || !(theta[0] >= UNIT_GUARD && theta[0] <= 1.0 - UNIT_GUARD) {
        return domain(format!(
            "{id} needs a scalar theta in ({UNIT_GUARD}, 1 - {UNIT_GUARD}), got {theta:?}"
        ));
    }
    Ok(())
}

impl StatModel for Bernoulli {
    fn id(&self) -> String {
        "bernoulli".into()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_space(&self) -> ObsSpace {
        ObsSpace::Finite(vec![0.0, 1.0])
    }

    fn log_lik(&self, y: f64, theta: &[f64]) -> f64 {
        let t = theta[0];
        if y == 1.0 {
            t.ln()
        } else if y == 0.0 {
            (-t).ln_1p()
        } else {
            f64::NAN
        }
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        if open_unit(rng) < theta[0] {
            1.0
        } else {
            0.0
        }
    }

    fn score(&self, y: f64, theta: &[f64]) -> DVector<f64> {
        let t = theta[0];
        DVector::from_element(1, y / t - (1.0 - y) / (1.0 - t))
    }

    fn hessian(&self, y: f64, theta: &[f64]) -> DMatrix<f64> {
        let t = theta[0];
        DMatrix::from_element(1, 1, -y / (t * t) - (1.0 - y) / ((1.0 - t) * (1.0 - t)))
    }

    fn fisher_analytic(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let t = theta[0];
        Some(DMatrix::from_element(1, 1, 1.0 / (t * (1.0 - t))))
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_unit("bernoulli", theta)
    }

    fn node_log_lik_k<'a>(&'a self, ys: &'a [f64]) -> Box<dyn Fn(&Node) -> f64 + Send + Sync + 'a> {
        let k = ys.len() as f64;
        let s: f64 = ys.iter().sum();
        Box::new(move |n: &Node| xlogy(s, n.ln_above(0.0)) + xlogy(k - s, n.ln_below(1.0)))
    }

    fn ln_det_fisher_node(&self, node: &Node) -> Result<f64> {
        Ok(-(node.ln_above(0.0) + node.ln_below(1.0)))
    }
}

/// `c·ln_x` with the convention `0·(-∞) = 0`.
pub(crate) fn xlogy(c: f64, ln_x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * ln_x
    }
}

/// Binomial(n, θ) with known trial count.
#[derive(Debug, Clone)]
pub struct Binomial {
    trials: u64,
    space: ParamSpace,
}

impl Binomial {
    pub fn new(trials: u64) -> Result<Self> {
        if trials == 0 {
            return domain("binomial needs n >= 1");
        }
        Ok(Binomial {
            trials,
            space: ParamSpace::new(vec![(0.0, 1.0)])?,
        })
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }
}

impl StatModel for Binomial {
    fn id(&self) -> String {
        format!("binomial:n={}", self.trials)
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_space(&self) -> ObsSpace {
        ObsSpace::Finite((0..=self.trials).map(|i| i as f64).collect())
    }

    fn log_lik(&self, y: f64, theta: &[f64]) -> f64 {
        let n = self.trials as f64;
        if y < 0.0 || y > n || y.fract() != 0.0 {
            return f64::NAN;
        }
        let t = theta[0];
        ln_binomial(self.trials, y as u64) + xlogy(y, t.ln()) + xlogy(n - y, (-t).ln_1p())
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        (0..self.trials).filter(|_| open_unit(rng) < theta[0]).count() as f64
    }

    fn score(&self, y: f64, theta: &[f64]) -> DVector<f64> {
        let t = theta[0];
        let n = self.trials as f64;
        DVector::from_element(1, y / t - (n - y) / (1.0 - t))
    }

    fn hessian(&self, y: f64, theta: &[f64]) -> DMatrix<f64> {
        let t = theta[0];
        let n = self.trials as f64;
        DMatrix::from_element(1, 1, -y / (t * t) - (n - y) / ((1.0 - t) * (1.0 - t)))
    }

    fn fisher_analytic(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let t = theta[0];
        Some(DMatrix::from_element(1, 1, self.trials as f64 / (t * (1.0 - t))))
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_unit("binomial", theta)
    }

    fn node_log_lik_k<'a>(&'a self, ys: &'a [f64]) -> Box<dyn Fn(&Node) -> f64 + Send + Sync + 'a> {
        let n = self.trials as f64;
        let s: f64 = ys.iter().sum();
        let f: f64 = ys.len() as f64 * n - s;
        let constant: f64 = ys.iter().map(|&y| ln_binomial(self.trials, y as u64)).sum();
        Box::new(move |node: &Node| constant + xlogy(s, node.ln_above(0.0)) + xlogy(f, node.ln_below(1.0)))
    }

    fn ln_det_fisher_node(&self, node: &Node) -> Result<f64> {
        Ok((self.trials as f64).ln() - (node.ln_above(0.0) + node.ln_below(1.0)))
    }
}

/// Gaussian location model N(θ, σ²) with known σ.
#[derive(Debug, Clone)]
pub struct GaussLocation {
    sigma: f64,
    space: ParamSpace,
}

impl GaussLocation {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("gaussian location needs sigma > 0, got {sigma}"));
        }
        Ok(GaussLocation {
            sigma,
            space: ParamSpace::new(vec![(f64::NEG_INFINITY, f64::INFINITY)])?,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl StatModel for GaussLocation {
    fn id(&self) -> String {
        format!("gauss-loc:sigma={}", self.sigma)
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_space(&self) -> ObsSpace {
        ObsSpace::Continuous {
            dim: 1,
            measure: "lebesgue".into(),
        }
    }

    fn log_lik(&self, y: f64, theta: &[f64]) -> f64 {
        let z = (y - theta[0]) / self.sigma;
        -0.5 * (2.0 * PI).ln() - self.sigma.ln() - 0.5 * z * z
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta[0] + self.sigma * z
    }

    fn score(&self, y: f64, theta: &[f64]) -> DVector<f64> {
        DVector::from_element(1, (y - theta[0]) / (self.sigma * self.sigma))
    }

    fn hessian(&self, _y: f64, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -1.0 / (self.sigma * self.sigma))
    }

    fn fisher_analytic(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 1.0 / (self.sigma * self.sigma)))
    }

    fn obs_center_scale(&self, theta: &[f64]) -> (f64, f64) {
        (theta[0], self.sigma)
    }

    fn node_log_lik_k<'a>(&'a self, ys: &'a [f64]) -> Box<dyn Fn(&Node) -> f64 + Send + Sync + 'a> {
        let k = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / k;
        let ss: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        let s2 = self.sigma * self.sigma;
        let base = -0.5 * k * (2.0 * PI * s2).ln() - 0.5 * ss / s2;
        Box::new(move |n: &Node| {
            let d = mean - n.x;
            base - 0.5 * k * d * d / s2
        })
    }

    fn ln_det_fisher_node(&self, _node: &Node) -> Result<f64> {
        Ok(-2.0 * self.sigma.ln())
    }
}

/// Gaussian location–scale model N(μ, σ²), θ = (μ, σ).
#[derive(Debug, Clone)]
pub struct GaussLocationScale {
    space: ParamSpace,
}

impl GaussLocationScale {
    pub fn new() -> Self {
        GaussLocationScale {
            space: ParamSpace::new(vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)]).expect("valid box"),
        }
    }
}

impl Default for GaussLocationScale {
    fn default() -> Self {
        Self::new()
    }
}

impl StatModel for GaussLocationScale {
    fn id(&self) -> String {
        "gauss-loc-scale".into()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_space(&self) -> ObsSpace {
        ObsSpace::Continuous {
            dim: 1,
            measure: "lebesgue".into(),
        }
    }

    fn log_lik(&self, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        let z = (y - mu) / sigma;
        -0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * z * z
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta[0] + theta[1] * z
    }

    fn score(&self, y: f64, theta: &[f64]) -> DVector<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let r = y - mu;
        DVector::from_vec(vec![r / (s * s), -1.0 / s + r * r / (s * s * s)])
    }

    fn hessian(&self, y: f64, theta: &[f64]) -> DMatrix<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let r = y - mu;
        let s2 = s * s;
        let off = -2.0 * r / (s2 * s);
        DMatrix::from_row_slice(2, 2, &[-1.0 / s2, off, off, 1.0 / s2 - 3.0 * r * r / (s2 * s2)])
    }

    fn fisher_analytic(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let s2 = theta[1] * theta[1];
        Some(DMatrix::from_row_slice(2, 2, &[1.0 / s2, 0.0, 0.0, 2.0 / s2]))
    }

    fn obs_center_scale(&self, theta: &[f64]) -> (f64, f64) {
        (theta[0], theta[1])
    }
}

/// Resolve a model identifier: `bernoulli`, `binomial:n=10`,
/// `gauss-loc:sigma=1.0`, `gauss-loc-scale`.
pub fn parse_model(id: &str) -> Result<Arc<dyn StatModel>> {
    let p = ParsedId::parse(id)?;
    match p.name.as_str() {
        "bernoulli" => {
            p.expect_keys(&[])?;
            Ok(Arc::new(Bernoulli::new()))
        }
        "binomial" => {
            p.expect_keys(&["n"])?;
            Ok(Arc::new(Binomial::new(p.u64("n")?)?))
        }
        "gauss-loc" => {
            p.expect_keys(&["sigma"])?;
            Ok(Arc::new(GaussLocation::new(p.f64_or("sigma", 1.0)?)?))
        }
        "gauss-loc-scale" => {
            p.expect_keys(&[])?;
            Ok(Arc::new(GaussLocationScale::new()))
        }
        other => domain(format!("unknown model '{other}'")),
    }
}

/// `Σ log ℓ(y_i|θ)`, accumulated term by term in log space.
pub fn log_lik_k(model: &dyn StatModel, ys: &[f64], theta: &[f64]) -> Result<f64> {
    if ys.is_empty() {
        return domain("log_lik_k needs at least one observation");
    }
    model.check_theta(theta)?;
    let mut acc = KahanSum::default();
    for (index, &y) in ys.iter().enumerate() {
        let value = model.log_lik(y, theta);
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::NonFiniteLogLik { index, value });
        }
        acc.add(value);
    }
    Ok(acc.total())
}

fn check_positive_definite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
        });
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= PD_TOLERANCE {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Fisher information `I(θ)`: the analytic form when the model has one,
/// otherwise [`fisher_numeric`].
pub fn fisher_information<M: StatModel + ?Sized>(model: &M, theta: &[f64]) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    let info = match model.fisher_analytic(theta) {
        Some(m) => m,
        None => fisher_numeric_inner(model, theta)?,
    };
    check_positive_definite(&info)?;
    Ok(info)
}

/// `-E[∇² log ℓ]` by exact enumeration (finite observation spaces) or by
/// adaptive quadrature over y (one-dimensional continuous observations).
pub fn fisher_numeric(model: &dyn StatModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    let info = fisher_numeric_inner(model, theta)?;
    check_positive_definite(&info)?;
    Ok(info)
}

fn fisher_numeric_inner<M: StatModel + ?Sized>(model: &M, theta: &[f64]) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let mut info = DMatrix::zeros(d, d);
    match model.obs_space() {
        ObsSpace::Finite(atoms) => {
            for y in atoms {
                let w = model.log_lik(y, theta).exp();
                if w == 0.0 {
                    continue;
                }
                info -= model.hessian(y, theta) * w;
            }
        }
        ObsSpace::Continuous { dim: 1, .. } => {
            let (c, s) = model.obs_center_scale(theta);
            for i in 0..d {
                for j in i..d {
                    let f = |y: f64| -model.log_lik(y, theta).exp() * model.hessian(y, theta)[(i, j)];
                    let v = adaptive_real_line(&f, c, s, 1e-8, 1e-6)?;
                    info[(i, j)] = v;
                    info[(j, i)] = v;
                }
            }
        }
        ObsSpace::Continuous { dim, .. } => {
            return Err(Error::Unsupported(format!(
                "numeric Fisher information over {dim}-dimensional observations"
            )))
        }
    }
    Ok((&info + info.transpose()) * 0.5)
}

/// `S_k = k^{-1/2} Σ ∇_θ log ℓ(y_i|θ)` at a parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStat {
    pub s_k: Vec<f64>,
    pub k: usize,
    pub theta: Vec<f64>,
}

pub fn score_stat(model: &dyn StatModel, ys: &[f64], theta: &[f64]) -> Result<ScoreStat> {
    if ys.is_empty() {
        return domain("score_stat needs at least one observation");
    }
    model.check_theta(theta)?;
    let d = theta.len();
    let mut acc = vec![KahanSum::default(); d];
    for (index, &y) in ys.iter().enumerate() {
        let ll = model.log_lik(y, theta);
        if ll.is_nan() || ll == f64::INFINITY {
            return Err(Error::NonFiniteLogLik { index, value: ll });
        }
        let g = model.score(y, theta);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogLik { index, value: ll });
        }
        for (a, v) in acc.iter_mut().zip(g.iter()) {
            a.add(*v);
        }
    }
    let scale = (ys.len() as f64).sqrt();
    Ok(ScoreStat {
        s_k: acc.iter().map(|a| a.total() / scale).collect(),
        k: ys.len(),
        theta: theta.to_vec(),
    })
}

/// Monte Carlo check of `E_θ[exp(σ‖∇ log ℓ‖²)] < 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGaussianReport {
    pub sigma: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub passes: bool,
}

pub fn subgaussian_diagnostic(
    model: &dyn StatModel,
    theta: &[f64],
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SubGaussianReport> {
    if n_samples < 1000 {
        return domain(format!(
            "subgaussian diagnostic needs n_samples >= 1000, got {n_samples}"
        ));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    model.check_theta(theta)?;
    let mut rng = substream(seed, 0);
    let mut sum = KahanSum::default();
    let mut sum_sq = KahanSum::default();
    for i in 0..n_samples {
        let y = model.sample(theta, &mut rng);
        let g = model.score(y, theta);
        let v = (sigma * g.norm_squared()).exp();
        sum.add(v);
        sum_sq.add(v * v);
        let running = sum.total() / (i + 1) as f64;
        if !(running <= 1e12) {
            return Err(Error::EstimateDiverged(format!(
                "running mean {running:e} after {} draws at sigma = {sigma}",
                i + 1
            )));
        }
    }
    let n = n_samples as f64;
    let mean = sum.total() / n;
    let var = ((sum_sq.total() / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(SubGaussianReport {
        sigma,
        estimate: mean,
        stderr: (var / n).sqrt(),
        n_samples,
        passes: mean < 2.0,
    })
}
