//! The limit functional
//! `l(π) = coeff·C_β·∫ π(θ)^{1+β} |I(θ)|^{−β/2} dθ`, the limit of
//! `k^{dβ/2}·(I_{D_f}(π|k) − offset)`, and tools to watch the convergence.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimators::{exact_count_mi, mc_mutual_information, Budgets, Method};
use crate::fdiv::{jeffreys_sign_ok, AsymptoticProfile, DivergenceGen};
use crate::model::{fisher_information, Interval, StatModel};
use crate::prior::{jeffreys_prior, restrict_normalize, Prior};
use crate::quadrature::QuadSpec;
use crate::sampling::substream;
use crate::special::{ln_beta, KahanSum};

/// Largest relative change of the limit integral under refinement that is
/// still accepted as converged.
const LIMIT_REFINE_TOL: f64 = 1e-9;

/// `C_β = (2π)^{dβ/2} (1−β)^{−d/2}`.
pub fn c_beta(d: usize, beta: f64) -> Result<f64> {
    if d == 0 {
        return domain("dimension must be positive");
    }
    if !(beta < 1.0) {
        return domain(format!("C_beta needs beta < 1, got {beta}"));
    }
    let d = d as f64;
    Ok((0.5 * d * beta * (2.0 * std::f64::consts::PI).ln() - 0.5 * d * (-beta).ln_1p()).exp())
}

fn profile_of(gen: &DivergenceGen) -> Result<AsymptoticProfile> {
    gen.profile()
        .ok_or_else(|| Error::Unsupported(format!("{} has no power expansion at zero", gen.name())))
}

/// `l(π)` for a prior on a bounded region.
///
/// One-dimensional priors are integrated on the graded sin² grid; the
/// integral is recomputed on a refined grid and an increase beyond 1e−9
/// relative is reported as [`Error::Integrability`]. Higher dimensions use
/// 10⁵ prior draws (seed 0), see [`limit_functional_mc`].
pub fn limit_functional(model: &dyn StatModel, prior: &Prior, gen: &DivergenceGen, quad: QuadSpec) -> Result<f64> {
    let p = profile_of(gen)?;
    if !prior.is_normalized() {
        return Err(Error::NormalizationError);
    }
    if prior.dim() != model.param_space().dim() {
        return domain("prior and model dimensions differ");
    }
    let d = prior.dim();
    let scale = p.coeff * c_beta(d, p.exponent)?;
    if d > 1 {
        return Ok(limit_functional_mc(model, prior, gen, 100_000, 0)?.0);
    }
    let coarse = ln_limit_integral(model, prior, p.exponent, quad)?;
    let fine = ln_limit_integral(model, prior, p.exponent, quad.refined())?;
    if fine == f64::INFINITY || (fine - coarse > LIMIT_REFINE_TOL && fine > coarse) {
        return Err(Error::Integrability(format!(
            "∫ π^(1+β)|I|^(-β/2) grows under refinement for {} (ln {coarse} -> ln {fine})",
            prior.id()
        )));
    }
    if (fine - coarse).abs() > LIMIT_REFINE_TOL {
        return Err(Error::QuadratureFailure(format!(
            "limit integral unstable under refinement (ln {coarse} -> ln {fine})"
        )));
    }
    Ok(scale * fine.exp())
}

fn ln_limit_integral(model: &dyn StatModel, prior: &Prior, beta: f64, quad: QuadSpec) -> Result<f64> {
    let grid = prior.grid(quad)?;
    let mut terms = Vec::with_capacity(grid.len());
    for n in &grid.nodes {
        let lp = prior.log_density_node(n);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let ld = model.ln_det_fisher_node(n)?;
        terms.push((1.0 + beta) * lp - 0.5 * beta * ld + n.ln_weight);
    }
    let v = crate::special::log_sum_exp(&terms);
    if v.is_nan() {
        return Err(Error::NonFinite("limit integrand".into()));
    }
    Ok(v)
}

/// `l(π)` as `coeff·C_β·E_π[π^β |I|^{−β/2}]` over `n` prior draws, with its
/// standard error.
pub fn limit_functional_mc(
    model: &dyn StatModel,
    prior: &Prior,
    gen: &DivergenceGen,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let p = profile_of(gen)?;
    if n < 2 {
        return domain("need at least two draws");
    }
    let scale = p.coeff * c_beta(prior.dim(), p.exponent)?;
    let mut rng = substream(seed, 0);
    let mut sum = KahanSum::default();
    let mut sum_sq = KahanSum::default();
    for _ in 0..n {
        let t = prior.sample(&mut rng as &mut dyn RngCore)?;
        let det = fisher_information(model, &t)?.determinant();
        let v = (p.exponent * prior.log_density(&t) - 0.5 * p.exponent * det.ln()).exp();
        if !v.is_finite() {
            return Err(Error::Integrability(format!("integrand {v} at {t:?}")));
        }
        sum.add(v);
        sum_sq.add(v * v);
    }
    let nf = n as f64;
    let mean = sum.total() / nf;
    let var = ((sum_sq.total() / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok((scale * mean, scale.abs() * (var / nf).sqrt()))
}

/// Exponent of θ (and of 1−θ) in the limit integrand of a Beta(a, ·) prior
/// under the Bernoulli model: `(a−1)(1+β) + β/2`.
pub fn beta_bernoulli_exponent(a: f64, beta: f64) -> f64 {
    (a - 1.0) * (1.0 + beta) + 0.5 * beta
}

/// Closed form of `l(Beta(a, b))` for the Bernoulli model:
/// `coeff·C_β·B(a,b)^{−(1+β)}·B(e_a + 1, e_b + 1)`.
pub fn limit_functional_beta_bernoulli(a: f64, b: f64, beta: f64, coeff: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return domain(format!("Beta shapes must be positive, got ({a}, {b})"));
    }
    let (ea, eb) = (beta_bernoulli_exponent(a, beta), beta_bernoulli_exponent(b, beta));
    if !(ea > -1.0 && eb > -1.0) {
        return Err(Error::Integrability(format!(
            "Beta({a}, {b}) with beta = {beta}: endpoint exponents ({ea}, {eb}) must exceed -1"
        )));
    }
    let ln = ln_beta(ea + 1.0, eb + 1.0) - (1.0 + beta) * ln_beta(a, b);
    Ok(coeff * c_beta(1, beta)? * ln.exp())
}

/// Scaled mutual information against `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    pub ks: Vec<usize>,
    pub mi_raw: Vec<f64>,
    /// `I − offset`.
    pub mi_shifted: Vec<f64>,
    /// `k^{dβ/2}·(I − offset)`.
    pub scaled_mi: Vec<f64>,
    /// Standard error of the scaled value (0 for exact counting).
    pub stderr: Vec<f64>,
    pub limit_value: f64,
    pub offset: f64,
    /// Slope of `ln|I − offset|` against `ln k` over the last half of the
    /// series; the theory predicts `−dβ/2`.
    pub fitted_rate: Option<f64>,
    pub method: Method,
    pub gen_name: String,
    pub prior_id: String,
    pub model_id: String,
}

impl ConvergenceSeries {
    /// CSV with columns `k,mi_raw,mi_shifted,scaled,limit,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mi_raw,mi_shifted,scaled,limit,stderr\n");
        for i in 0..self.ks.len() {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.ks[i], self.mi_raw[i], self.mi_shifted[i], self.scaled_mi[i], self.limit_value, self.stderr[i]
            ));
        }
        out
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Evaluates `k^{dβ/2}(I_{D_f}(π|k) − offset)` along `ks`.
///
/// `ExactCount` needs a Bernoulli or Binomial model; `NestedMC` gives
/// point `i` the seed drawn from substream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_series(
    model: &dyn StatModel,
    prior: &Prior,
    gen: &DivergenceGen,
    ks: &[usize],
    method: Method,
    budgets: Budgets,
    seed: u64,
    quad: QuadSpec,
) -> Result<ConvergenceSeries> {
    let p = profile_of(gen)?;
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return domain("ks must be a nonempty strictly increasing list of positive integers");
    }
    let corrected = gen.shift_corrected();
    let d = prior.dim() as f64;
    let rate = 0.5 * d * p.exponent;
    let limit_value = limit_functional(model, prior, gen, quad)?;
    let mut series = ConvergenceSeries {
        ks: ks.to_vec(),
        mi_raw: vec![],
        mi_shifted: vec![],
        scaled_mi: vec![],
        stderr: vec![],
        limit_value,
        offset: p.offset(),
        fitted_rate: None,
        method,
        gen_name: gen.name(),
        prior_id: prior.id(),
        model_id: model.id(),
    };
    for (i, &k) in ks.iter().enumerate() {
        let est = match method {
            Method::ExactCount => exact_count_mi(model, prior, k, &corrected, quad)?,
            Method::NestedMC => {
                let s = substream(seed, i as u64).next_u64();
                mc_mutual_information(model, prior, k, &corrected, budgets, s)?
            }
            Method::Quadrature => {
                return Err(Error::Unsupported("quadrature convergence series".into()));
            }
        };
        let factor = (k as f64).powf(rate);
        series.mi_shifted.push(est.value);
        series.mi_raw.push(est.value + p.offset());
        series.scaled_mi.push(factor * est.value);
        series.stderr.push(factor * est.stderr);
    }
    let half = ks.len().div_ceil(2);
    let start = ks.len() - half;
    let xs: Vec<f64> = ks[start..].iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = series.mi_shifted[start..].iter().map(|v| v.abs().ln()).collect();
    if ys.iter().all(|v| v.is_finite()) {
        series.fitted_rate = least_squares_slope(&xs, &ys);
    }
    Ok(series)
}

/// `l(J) − l(π)` on a compact, with whether the generator's sign conditions
/// make Jeffreys the certified maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JeffreysGap {
    pub gap: f64,
    pub l_jeffreys: f64,
    pub l_prior: f64,
    pub certified: bool,
}

pub fn jeffreys_gap(
    model: std::sync::Arc<dyn StatModel>,
    prior: &Prior,
    gen: &DivergenceGen,
    compact: &[Interval],
    quad: QuadSpec,
) -> Result<JeffreysGap> {
    let p = profile_of(gen)?;
    let restricted = restrict_normalize(prior, compact)?;
    let j = jeffreys_prior(model.clone(), Some(compact))?;
    let l_jeffreys = limit_functional(model.as_ref(), &j, gen, quad)?;
    let l_prior = limit_functional(model.as_ref(), &restricted, gen, quad)?;
    Ok(JeffreysGap {
        gap: l_jeffreys - l_prior,
        l_jeffreys,
        l_prior,
        certified: jeffreys_sign_ok(&p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdiv::{alpha_divergence, kl_generator, power_divergence};
    use crate::model::{Bernoulli, GaussLocation};
    use crate::prior::{beta_prior, uniform};
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn c_beta_examples() {
        assert!((c_beta(1, 0.5).unwrap() - (2.0 * PI).powf(0.25) * 2f64.sqrt()).abs() < 1e-14);
        assert!((c_beta(1, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        assert!((c_beta(2, 0.5).unwrap() - 5.01326).abs() < 1e-5);
        assert!((c_beta(1, -0.5).unwrap() - (2.0 * PI).powf(-0.25) / 1.5f64.sqrt()).abs() < 1e-15);
        assert!(c_beta(1, 1.0).is_err());
    }

    #[test]
    fn limit_examples() {
        let m = Bernoulli::new();
        let a = alpha_divergence(0.5).unwrap();
        let u = uniform(vec![(0.0, 1.0)]).unwrap();
        let l = limit_functional(&m, &u, &a, QuadSpec::singular()).unwrap();
        let closed = limit_functional_beta_bernoulli(1.0, 1.0, 0.5, -4.0).unwrap();
        assert!((l - closed).abs() < 1e-9 * closed.abs(), "{l} {closed}");
        // -4·C·B(5/4, 5/4) with B(5/4,5/4) = Γ(5/4)²/Γ(5/2)
        let b = 0.906_402_477_055_477f64.powi(2) / (0.75 * PI.sqrt());
        assert!((closed + 4.0 * c_beta(1, 0.5).unwrap() * b).abs() < 1e-12);

        let g = GaussLocation::new(1.0).unwrap();
        let lg = limit_functional(&g, &u, &a, QuadSpec::default()).unwrap();
        assert!((lg + 4.0 * c_beta(1, 0.5).unwrap()).abs() < 1e-12);

        let j = jeffreys_prior(Arc::new(Bernoulli::new()), None).unwrap();
        let lj = limit_functional(&m, &j, &a, QuadSpec::singular()).unwrap();
        let expected = -4.0 * c_beta(1, 0.5).unwrap() / PI.sqrt();
        assert!((lj - expected).abs() < 1e-9 * expected.abs(), "{lj} {expected}");
        let lj_closed = limit_functional_beta_bernoulli(0.5, 0.5, 0.5, -4.0).unwrap();
        assert!((lj_closed - expected).abs() < 1e-12);
    }

    #[test]
    fn negative_exponent_closed_form() {
        let v = limit_functional_beta_bernoulli(1.0, 1.0, -0.5, 1.0).unwrap();
        let b34 = (2.0 * crate::special::ln_gamma(0.75) - crate::special::ln_gamma(1.5)).exp();
        assert!((v - c_beta(1, -0.5).unwrap() * b34).abs() < 1e-13);
        let m = Bernoulli::new();
        let q = limit_functional(
            &m,
            &uniform(vec![(0.0, 1.0)]).unwrap(),
            &power_divergence(1.0, -0.5).unwrap(),
            QuadSpec::singular(),
        )
        .unwrap();
        assert!((q - v).abs() < 1e-9 * v, "{q} {v}");
    }

    #[test]
    fn integrability_is_detected() {
        let m = Bernoulli::new();
        let a = alpha_divergence(0.5).unwrap();
        // Beta(1/6, 1/6): exponent (1/6 − 1)(3/2) + 1/4 = −1
        let p = beta_prior(1.0 / 6.0, 1.0 / 6.0).unwrap();
        assert!(matches!(
            limit_functional_beta_bernoulli(1.0 / 6.0, 1.0 / 6.0, 0.5, -4.0),
            Err(Error::Integrability(_))
        ));
        assert!(matches!(
            limit_functional(&m, &p, &a, QuadSpec::singular()),
            Err(Error::Integrability(_))
        ));
        let p2 = beta_prior(0.1, 0.5).unwrap();
        assert!(matches!(
            limit_functional(&m, &p2, &a, QuadSpec::singular()),
            Err(Error::Integrability(_))
        ));
        assert!(limit_functional(&m, &beta_prior(1.0, 1.0).unwrap(), &kl_generator(), QuadSpec::default()).is_err());
    }

    #[test]
    fn gap_examples() {
        let model: Arc<dyn StatModel> = Arc::new(Bernoulli::new());
        let a = alpha_divergence(0.5).unwrap();
        let c = [(0.05, 0.95)];
        let u = uniform(vec![(0.0, 1.0)]).unwrap();
        let g = jeffreys_gap(model.clone(), &u, &a, &c, QuadSpec::default()).unwrap();
        assert!(g.gap > 0.0 && g.certified);
        let j = jeffreys_prior(model.clone(), Some(&c)).unwrap();
        let g = jeffreys_gap(model.clone(), &j, &a, &c, QuadSpec::default()).unwrap();
        assert!(g.gap.abs() < 1e-12);
        let g = jeffreys_gap(
            model.clone(),
            &beta_prior(2.0, 2.0).unwrap(),
            &a,
            &[(0.1, 0.9)],
            QuadSpec::default(),
        )
        .unwrap();
        assert!(g.gap > 0.0);
        let g = jeffreys_gap(
            model,
            &u,
            &power_divergence(-1.0, -0.5).unwrap(),
            &c,
            QuadSpec::default(),
        )
        .unwrap();
        assert!(!g.certified);
    }

    #[test]
    fn series_shape_and_csv() {
        let m = Bernoulli::new();
        let u = uniform(vec![(0.0, 1.0)]).unwrap();
        let s = convergence_series(
            &m,
            &u,
            &alpha_divergence(0.5).unwrap(),
            &[16, 64, 256],
            Method::ExactCount,
            Budgets::default(),
            0,
            QuadSpec::default(),
        )
        .unwrap();
        assert_eq!(s.offset, 4.0);
        assert!(s.scaled_mi.iter().all(|v| *v < 0.0));
        let rate = s.fitted_rate.unwrap();
        assert!((rate + 0.25).abs() < 0.05, "{rate}");
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("k,mi_raw,mi_shifted,scaled,limit,stderr\n"));
        assert!(convergence_series(
            &m,
            &u,
            &kl_generator(),
            &[1, 2],
            Method::ExactCount,
            Budgets::default(),
            0,
            QuadSpec::default()
        )
        .is_err());
        assert!(convergence_series(
            &m,
            &u,
            &alpha_divergence(0.5).unwrap(),
            &[4, 2],
            Method::ExactCount,
            Budgets::default(),
            0,
            QuadSpec::default()
        )
        .is_err());
    }
}
