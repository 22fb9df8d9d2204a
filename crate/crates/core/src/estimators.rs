//! Mutual information `I_{D_f}(π|k) = ∫ Σ_y ℓ_k f(p_Y/ℓ_k) dπ` by exact
//! counting, quadrature and nested Monte Carlo, plus the posterior-ratio
//! statistic.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fdiv::DivergenceGen;
use crate::model::{fisher_information, log_lik_k, score_stat, xlogy, ObsSpace, StatModel};
use crate::prior::Prior;
use crate::quadrature::{Grid, Node, QuadSpec};
use crate::sampling::substream;
use crate::special::{ln_beta, ln_binomial, log_sum_exp, KahanSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ExactCount,
    Quadrature,
    NestedMC,
}

/// An evaluation of `I_{D_f}(π|k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub stderr: f64,
    pub k: usize,
    pub method: Method,
    pub n_theta: usize,
    pub n_y: usize,
    pub n_marginal: usize,
    pub seed: u64,
}

/// Sample sizes for the nested Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub n_theta: usize,
    pub n_y: usize,
    /// Prior draws per θ for the marginal when no quadrature applies.
    pub n_marginal: usize,
    /// Replicates for the posterior-ratio statistic.
    pub n_rep: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            n_theta: 400,
            n_y: 400,
            n_marginal: 1000,
            n_rep: 500,
        }
    }
}

fn require_normalized(prior: &Prior) -> Result<()> {
    if prior.is_normalized() {
        Ok(())
    } else {
        Err(Error::NormalizationError)
    }
}

/// Number of Bernoulli trials behind `k` draws of a count model.
fn trials_per_draw(model: &dyn StatModel) -> Result<u64> {
    let id = model.id();
    if id == "bernoulli" {
        return Ok(1);
    }
    if let Some(n) = id.strip_prefix("binomial:n=") {
        return n
            .parse()
            .map_err(|_| Error::Domain(format!("malformed binomial id {id}")));
    }
    Err(Error::Unsupported(format!("exact counting for model {id}")))
}

/// Exact MI for a Bernoulli model, summing over the success count.
pub fn exact_bernoulli_mi(prior: &Prior, k: usize, gen: &DivergenceGen, quad: QuadSpec) -> Result<MIEstimate> {
    exact_count_total(prior, k, k as u64, gen, quad)
}

/// Exact MI for Bernoulli or Binomial(n) models; `k` Binomial(n) draws
/// carry the same information as `n·k` Bernoulli draws.
pub fn exact_count_mi(
    model: &dyn StatModel,
    prior: &Prior,
    k: usize,
    gen: &DivergenceGen,
    quad: QuadSpec,
) -> Result<MIEstimate> {
    let n = trials_per_draw(model)?;
    exact_count_total(prior, k, n * k as u64, gen, quad)
}

fn exact_count_total(prior: &Prior, k: usize, trials: u64, gen: &DivergenceGen, quad: QuadSpec) -> Result<MIEstimate> {
    require_normalized(prior)?;
    if k == 0 {
        return domain("k must be at least 1");
    }
    if prior.dim() != 1 {
        return domain("exact counting needs a one-dimensional prior");
    }
    let (lo, hi) = prior.support()[0];
    if lo < 0.0 || hi > 1.0 {
        return domain(format!("prior support [{lo}, {hi}] is not inside (0, 1)"));
    }
    let grid = prior.grid(quad)?;
    let lp = count_log_marginals(prior, &grid, trials)?;
    let m = trials as f64;
    let ln_c: Vec<f64> = (0..=trials).map(|s| ln_binomial(trials, s)).collect();

    let per_node: Vec<Result<f64>> = grid
        .nodes
        .par_iter()
        .map(|n| {
            let lw = prior.log_density_node(n) + n.ln_weight;
            if lw == f64::NEG_INFINITY {
                return Ok(0.0);
            }
            let (l1, l0) = (n.ln_above(0.0), n.ln_below(1.0));
            let mut acc = KahanSum::default();
            for s in 0..=trials {
                let sf = s as f64;
                let ll = xlogy(sf, l1) + xlogy(m - sf, l0);
                acc.add(gen.weighted(ln_c[s as usize] + ll + lw, lp[s as usize] - ll));
            }
            let v = acc.total();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("MI integrand at theta = {}", n.x)))
            }
        })
        .collect();
    let mut total = KahanSum::default();
    for v in per_node {
        total.add(v?);
    }
    Ok(MIEstimate {
        value: total.total(),
        stderr: 0.0,
        k,
        method: Method::ExactCount,
        n_theta: grid.len(),
        n_y: trials as usize + 1,
        n_marginal: grid.len(),
        seed: 0,
    })
}

/// `ln ∫ θ^s (1−θ)^{m−s} dπ(θ)` for every count `s`.
fn count_log_marginals(prior: &Prior, grid: &Grid, m: u64) -> Result<Vec<f64>> {
    let mf = m as f64;
    if let Some((a, b)) = prior.beta_params() {
        let lb = ln_beta(a, b);
        return Ok((0..=m).map(|s| ln_beta(a + s as f64, b + mf - s as f64) - lb).collect());
    }
    let base: Vec<(f64, f64, f64)> = grid
        .nodes
        .iter()
        .map(|n| {
            (
                n.ln_above(0.0),
                n.ln_below(1.0),
                prior.log_density_node(n) + n.ln_weight,
            )
        })
        .collect();
    let out: Vec<f64> = (0..=m)
        .into_par_iter()
        .map(|s| {
            let sf = s as f64;
            let terms: Vec<f64> = base
                .iter()
                .map(|&(l1, l0, lw)| xlogy(sf, l1) + xlogy(mf - sf, l0) + lw)
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("count marginal".into()));
    }
    if out.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::AllUnderflow);
    }
    Ok(out)
}

/// Prior-weighted quadrature nodes reused across many marginals.
struct MarginalGrid<'a> {
    grid: Grid,
    ln_prior_w: Vec<f64>,
    model: &'a dyn StatModel,
}

impl<'a> MarginalGrid<'a> {
    fn new(model: &'a dyn StatModel, prior: &Prior, spec: QuadSpec) -> Result<Self> {
        let grid = prior.grid(spec)?;
        let ln_prior_w = grid
            .nodes
            .iter()
            .map(|n| prior.log_density_node(n) + n.ln_weight)
            .collect();
        Ok(MarginalGrid {
            grid,
            ln_prior_w,
            model,
        })
    }

    fn log_marginal(&self, ys: &[f64]) -> Result<f64> {
        let ll = self.model.node_log_lik_k(ys);
        let terms: Vec<f64> = self
            .grid
            .nodes
            .iter()
            .zip(&self.ln_prior_w)
            .map(|(n, lw)| {
                if *lw == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    ll(n) + lw
                }
            })
            .collect();
        let v = log_sum_exp(&terms);
        if v.is_nan() {
            return Err(Error::NonFinite("log marginal".into()));
        }
        if v == f64::NEG_INFINITY {
            return Err(Error::AllUnderflow);
        }
        Ok(v)
    }
}

fn check_marginal_inputs(model: &dyn StatModel, prior: &Prior) -> Result<()> {
    require_normalized(prior)?;
    if model.param_space().dim() != 1 || prior.dim() != 1 {
        return domain("quadrature marginals need a one-dimensional parameter");
    }
    Ok(())
}

/// `ln p_Y(ys) = ln ∫ ℓ_k(ys|θ) dπ(θ)`, refined until two successive layouts
/// agree to 1e−8.
pub fn marginal_log_density(model: &dyn StatModel, prior: &Prior, ys: &[f64], quad: QuadSpec) -> Result<f64> {
    check_marginal_inputs(model, prior)?;
    if ys.is_empty() {
        return domain("marginal needs at least one observation");
    }
    let mut spec = quad;
    let mut prev = MarginalGrid::new(model, prior, spec)?.log_marginal(ys)?;
    for _ in 0..5 {
        spec = spec.refined();
        let next = MarginalGrid::new(model, prior, spec)?.log_marginal(ys)?;
        if (next - prev).abs() <= 1e-8 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure(format!(
        "marginal of {} observations did not stabilize",
        ys.len()
    )))
}

/// Shared state of one nested Monte Carlo run.
struct McContext<'a> {
    model: &'a dyn StatModel,
    prior: &'a Prior,
    gen: &'a DivergenceGen,
    k: usize,
    n_y: usize,
    n_marginal: usize,
    grid: Option<MarginalGrid<'a>>,
    cache_marginals: bool,
}

impl<'a> McContext<'a> {
    fn new(
        model: &'a dyn StatModel,
        prior: &'a Prior,
        gen: &'a DivergenceGen,
        k: usize,
        n_y: usize,
        n_marginal: usize,
    ) -> Result<Self> {
        require_normalized(prior)?;
        if k == 0 {
            return domain("k must be at least 1");
        }
        if n_y < 100 || n_marginal < 100 {
            return domain(format!(
                "budgets must be at least 100, got n_y={n_y}, n_marginal={n_marginal}"
            ));
        }
        if prior.dim() != model.param_space().dim() {
            return domain("prior and model dimensions differ");
        }
        let grid = if prior.dim() == 1 {
            Some(MarginalGrid::new(model, prior, QuadSpec::default())?)
        } else {
            None
        };
        Ok(McContext {
            model,
            prior,
            gen,
            k,
            n_y,
            n_marginal,
            grid,
            cache_marginals: matches!(model.obs_space(), ObsSpace::Finite(_)),
        })
    }

    /// Mean and sample variance of `f(p_Y/ℓ_k)` over `n_y` datasets at `θ`.
    fn divergence_at(&self, theta: &[f64], rng: &mut dyn rand::RngCore) -> Result<(f64, f64)> {
        self.model.check_theta(theta)?;
        let inner: Option<Vec<Vec<f64>>> = match self.grid {
            Some(_) => None,
            None => Some(
                (0..self.n_marginal)
                    .map(|_| self.prior.sample(rng))
                    .collect::<Result<_>>()?,
            ),
        };
        let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
        let mut sum = KahanSum::default();
        let mut sum_sq = KahanSum::default();
        let mut ys = vec![0.0; self.k];
        for _ in 0..self.n_y {
            for y in ys.iter_mut() {
                *y = self.model.sample(theta, rng);
            }
            let ll = log_lik_k(self.model, &ys, theta)?;
            let lm = if self.cache_marginals {
                let mut key: Vec<u64> = ys.iter().map(|y| y.to_bits()).collect();
                key.sort_unstable();
                match cache.get(&key) {
                    Some(v) => *v,
                    None => {
                        let v = self.log_marginal(&ys, inner.as_deref())?;
                        cache.insert(key, v);
                        v
                    }
                }
            } else {
                self.log_marginal(&ys, inner.as_deref())?
            };
            let v = self.gen.eval_ln_centered(lm - ll);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("f(p/l) = {v} at theta = {theta:?}")));
            }
            sum.add(v);
            sum_sq.add(v * v);
        }
        let n = self.n_y as f64;
        let mean = sum.total() / n;
        let var = ((sum_sq.total() / n - mean * mean) * n / (n - 1.0)).max(0.0);
        Ok((mean, var))
    }

    fn log_marginal(&self, ys: &[f64], inner: Option<&[Vec<f64>]>) -> Result<f64> {
        if let Some(g) = &self.grid {
            return g.log_marginal(ys);
        }
        let draws = inner.expect("prior draws exist when no grid is available");
        let terms: Vec<f64> = draws
            .iter()
            .map(|t| ys.iter().map(|&y| self.model.log_lik(y, t)).sum())
            .collect();
        let v = log_sum_exp(&terms) - (draws.len() as f64).ln();
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::AllUnderflow);
        }
        Ok(v)
    }
}

/// Monte Carlo estimate of `D_f(P_Y ‖ P_{Y|θ})` at a fixed `θ`, with its
/// standard error.
#[allow(clippy::too_many_arguments)]
pub fn mc_divergence(
    model: &dyn StatModel,
    prior: &Prior,
    theta: &[f64],
    k: usize,
    gen: &DivergenceGen,
    n_y: usize,
    n_marginal: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let ctx = McContext::new(model, prior, gen, k, n_y, n_marginal)?;
    let mut rng = substream(seed, 0);
    let (mean, var) = ctx.divergence_at(theta, &mut rng)?;
    Ok((mean, (var / n_y as f64).sqrt()))
}

/// Nested Monte Carlo estimate of `I_{D_f}(π|k)`.
///
/// θ-repetition `i` draws from substream `i` of `seed`, so the result does
/// not depend on the thread count. The standard error is the spread of the
/// per-θ means, which carries both the between-θ variance and the within-θ
/// variance divided by `n_y`.
pub fn mc_mutual_information(
    model: &dyn StatModel,
    prior: &Prior,
    k: usize,
    gen: &DivergenceGen,
    budgets: Budgets,
    seed: u64,
) -> Result<MIEstimate> {
    if budgets.n_theta < 100 {
        return domain(format!("n_theta must be at least 100, got {}", budgets.n_theta));
    }
    let ctx = McContext::new(model, prior, gen, k, budgets.n_y, budgets.n_marginal)?;
    let per_theta: Vec<Result<f64>> = (0..budgets.n_theta)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let theta = prior.sample(&mut rng)?;
            Ok(ctx.divergence_at(&theta, &mut rng)?.0)
        })
        .collect();
    let means: Vec<f64> = per_theta.into_iter().collect::<Result<_>>()?;
    let n = means.len() as f64;
    let mean = means.iter().copied().collect::<KahanSum>().total() / n;
    let var = means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .collect::<KahanSum>()
        .total()
        / (n - 1.0);
    Ok(MIEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
        k,
        method: Method::NestedMC,
        n_theta: budgets.n_theta,
        n_y: budgets.n_y,
        n_marginal: if prior.dim() == 1 { 0 } else { budgets.n_marginal },
        seed,
    })
}

/// One replicate of the posterior-ratio statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub k: usize,
    pub theta: Vec<f64>,
    /// `ln p_Y(ys) − ln ℓ_k(ys|θ)`.
    pub log_ratio: f64,
    /// Log of the Laplace surrogate
    /// `k^{−d/2} π(θ) (2π)^{d/2} |I(θ)|^{−1/2} exp(s_quad)`.
    pub laplace_log: f64,
    /// `½ S_kᵀ I(θ)⁻¹ S_k`.
    pub s_quad: f64,
}

/// Replicates of `p_Y/ℓ_k` at a fixed θ next to their Laplace surrogate.
pub fn posterior_ratio_stat(
    model: &dyn StatModel,
    prior: &Prior,
    theta: &[f64],
    k: usize,
    n_rep: usize,
    seed: u64,
) -> Result<Vec<RatioSample>> {
    check_marginal_inputs(model, prior)?;
    if k == 0 || n_rep == 0 {
        return domain("k and n_rep must be positive");
    }
    let (lo, hi) = prior.support()[0];
    if !(theta[0] > lo && theta[0] < hi) {
        return domain(format!("theta {theta:?} is not interior to the prior support"));
    }
    let info = fisher_information(model, theta)?;
    let d = theta.len() as f64;
    let ln_prior = prior.log_density(theta);
    let base = -0.5 * d * (k as f64).ln() + ln_prior + 0.5 * d * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * info.determinant().ln();
    let chol = info.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    let coarse = MarginalGrid::new(model, prior, QuadSpec::default())?;
    let fine = MarginalGrid::new(model, prior, QuadSpec::default().refined())?;

    let samples: Vec<Result<RatioSample>> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let ys: Vec<f64> = (0..k).map(|_| model.sample(theta, &mut rng)).collect();
            let ll = log_lik_k(model, &ys, theta)?;
            let a = coarse.log_marginal(&ys)?;
            let lm = fine.log_marginal(&ys)?;
            if (a - lm).abs() > 1e-8 {
                return Err(Error::QuadratureFailure(format!(
                    "marginal unstable under refinement ({a} vs {lm})"
                )));
            }
            let s = DVector::from_vec(score_stat(model, &ys, theta)?.s_k);
            let s_quad = 0.5 * s.dot(&chol.solve(&s));
            let sample = RatioSample {
                k,
                theta: theta.to_vec(),
                log_ratio: lm - ll,
                laplace_log: base + s_quad,
                s_quad,
            };
            if [sample.log_ratio, sample.laplace_log, sample.s_quad]
                .iter()
                .all(|v| v.is_finite())
            {
                Ok(sample)
            } else {
                Err(Error::NonFinite(format!("ratio sample {r}")))
            }
        })
        .collect();
    samples.into_iter().collect()
}

/// KL mutual information computed on the data side,
/// `Σ_y p_Y(y) KL(π(·|y) ‖ π)`, by enumerating every observation sequence of
/// a finite model and integrating each posterior on the prior grid.
pub fn kl_mi_y_side(model: &dyn StatModel, prior: &Prior, k: usize, quad: QuadSpec) -> Result<f64> {
    check_marginal_inputs(model, prior)?;
    let ObsSpace::Finite(atoms) = model.obs_space() else {
        return Err(Error::Unsupported(
            "sequence enumeration needs a finite observation space".into(),
        ));
    };
    let total = (atoms.len() as f64).powi(k as i32);
    if k == 0 || total > (1u64 << 22) as f64 {
        return domain(format!("cannot enumerate {total} sequences"));
    }
    let grid = prior.grid(quad)?;
    let lw: Vec<f64> = grid
        .nodes
        .iter()
        .map(|n| prior.log_density_node(n) + n.ln_weight)
        .collect();
    let count = total as usize;
    let parts: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|mut code| {
            let ys: Vec<f64> = (0..k)
                .map(|_| {
                    let y = atoms[code % atoms.len()];
                    code /= atoms.len();
                    y
                })
                .collect();
            let lls: Vec<f64> = grid.nodes.iter().map(|n| direct_log_lik(model, &ys, n)).collect();
            let terms: Vec<f64> = lls.iter().zip(&lw).map(|(l, w)| l + w).collect();
            let lp = log_sum_exp(&terms);
            // E_post[ln ℓ_k] − ln p_Y, weighted by p_Y
            let post_mean: f64 = lls
                .iter()
                .zip(&terms)
                .map(|(l, t)| {
                    if *t == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (t - lp).exp() * l
                    }
                })
                .collect::<KahanSum>()
                .total();
            lp.exp() * (post_mean - lp)
        })
        .collect();
    Ok(parts.into_iter().collect::<KahanSum>().total())
}

fn direct_log_lik(model: &dyn StatModel, ys: &[f64], n: &Node) -> f64 {
    ys.iter().map(|&y| model.log_lik(y, &[n.x])).sum()
}
