mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use refprior::asymptotics::{convergence_series, limit_functional, limit_functional_beta_bernoulli};
use refprior::estimators::{
    exact_bernoulli_mi, kl_mi_y_side, marginal_log_density, mc_mutual_information, Budgets, Method,
};
use refprior::fdiv::{alpha_divergence, kl_generator, power_divergence, DivergenceGen};
use refprior::model::{
    fisher_information, fisher_numeric, log_lik_k, Bernoulli, Binomial, GaussLocation, GaussLocationScale, StatModel,
};
use refprior::prior::{
    beta_entropy, beta_prior, jeffreys_prior, prior_entropy, prior_entropy_mc, restrict_normalize,
    variance_constrained_beta,
};
use refprior::quadrature::QuadSpec;
use refprior::refsearch::{maximize_over_family, objective, PriorFamily};

use common::{oracle_limit, BernoulliAngle};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    }
}

fn finite_models(n: u64) -> Vec<(Box<dyn StatModel>, Vec<f64>)> {
    let support: Vec<f64> = (0..=n).map(|y| y as f64).collect();
    vec![
        (Box::new(Bernoulli::new()), vec![0.0, 1.0]),
        (Box::new(Binomial::new(n).unwrap()), support),
    ]
}

proptest! {
    #![proptest_config(cases(20))]

    #[test]
    fn analytic_fisher_matches_numeric(t in 0.05f64..0.95, mu in -3.0f64..3.0, s in 0.3f64..3.0, n in 1u64..12) {
        let cases: Vec<(Box<dyn StatModel>, Vec<f64>)> = vec![
            (Box::new(Bernoulli::new()), vec![t]),
            (Box::new(Binomial::new(n).unwrap()), vec![t]),
            (Box::new(GaussLocation::new(s).unwrap()), vec![mu]),
            (Box::new(GaussLocationScale::new()), vec![mu, s]),
        ];
        for (m, theta) in cases {
            let a = fisher_information(m.as_ref(), &theta).unwrap();
            let num = fisher_numeric(m.as_ref(), &theta).unwrap();
            prop_assert!((&a - &num).norm() <= 1e-6 * (1.0 + num.norm()), "{} at {theta:?}", m.id());
        }
    }

    #[test]
    fn score_and_information_identities(t in 0.02f64..0.98, n in 1u64..15) {
        for (m, support) in finite_models(n) {
            let theta = [t];
            let mut mean_score = 0.0;
            let mut outer = 0.0;
            let mut neg_hess = 0.0;
            for &y in &support {
                let p = m.log_lik(y, &theta).exp();
                let g = m.score(y, &theta)[0];
                mean_score += p * g;
                outer += p * g * g;
                neg_hess -= p * m.hessian(y, &theta)[(0, 0)];
            }
            prop_assert!(mean_score.abs() <= 1e-10 * (1.0 + outer.sqrt()), "{} score {mean_score}", m.id());
            prop_assert!((outer - neg_hess).abs() <= 1e-8 * (1.0 + outer), "{} {outer} vs {neg_hess}", m.id());
        }
    }

    #[test]
    fn log_lik_k_is_additive(
        t in 0.05f64..0.95,
        ys1 in prop::collection::vec(0u8..2, 1..40),
        ys2 in prop::collection::vec(0u8..2, 1..40),
    ) {
        let m = Bernoulli::new();
        let a: Vec<f64> = ys1.iter().map(|&y| y as f64).collect();
        let b: Vec<f64> = ys2.iter().map(|&y| y as f64).collect();
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        let whole = log_lik_k(&m, &both, &[t]).unwrap();
        let parts = log_lik_k(&m, &a, &[t]).unwrap() + log_lik_k(&m, &b, &[t]).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
    }

    #[test]
    fn restriction_is_idempotent_with_unit_mass(a in 0.3f64..5.0, b in 0.3f64..5.0, lo in 0.01f64..0.4, w in 0.1f64..0.5) {
        let compact = [(lo, lo + w)];
        let once = restrict_normalize(&beta_prior(a, b).unwrap(), &compact).unwrap();
        let twice = restrict_normalize(&once, &compact).unwrap();
        let mass = once.grid(QuadSpec::default()).unwrap().integrate(|n| once.density(&[n.x]));
        prop_assert!((mass - 1.0).abs() <= 1e-8, "mass {mass}");
        for x in [lo + 0.1 * w, lo + 0.5 * w, lo + 0.9 * w] {
            prop_assert!((once.log_density(&[x]) - twice.log_density(&[x])).abs() <= 1e-12);
        }
    }

    #[test]
    fn fd_generators_are_convex_and_vanish_at_one(i in 1usize..10, x in 0.01f64..50.0) {
        let g = alpha_divergence(i as f64 / 10.0).unwrap();
        prop_assert_eq!(g.eval(1.0), 0.0);
        let h = 1e-3 * x;
        let second = (g.eval(x + h) - 2.0 * g.eval(x) + g.eval(x - h)) / (h * h);
        prop_assert!(second >= -1e-9, "f'' = {second}");
    }

    #[test]
    fn shifted_generator_subtracts_exactly(x in 1e-6f64..1e6, gamma in -10.0f64..10.0, a in 0.05f64..0.95) {
        for g in [alpha_divergence(a).unwrap(), power_divergence(1.5, -a).unwrap(), kl_generator()] {
            prop_assert_eq!(g.shifted(gamma).eval(x), g.eval(x) - gamma);
        }
    }

    #[test]
    fn exact_mi_is_nonnegative(a in 0.3f64..5.0, b in 0.3f64..5.0, k in 1usize..64, alpha in 0.05f64..0.95) {
        let prior = beta_prior(a, b).unwrap();
        let gens = [
            alpha_divergence(alpha).unwrap(),
            kl_generator(),
            power_divergence(2.0, -alpha).unwrap().shifted(2.0),
        ];
        for g in gens {
            let v = exact_bernoulli_mi(&prior, k, &g, QuadSpec::default()).unwrap().value;
            prop_assert!(v >= -1e-9, "{} k={k}: {v}", g.name());
        }
    }

    #[test]
    fn holder_bound_holds(a in 0.2f64..5.0, b in 0.2f64..5.0, beta in 0.05f64..0.95) {
        let ea = (a - 1.0) * (1.0 + beta) + beta / 2.0;
        let eb = (b - 1.0) * (1.0 + beta) + beta / 2.0;
        prop_assume!(ea > -0.95 && eb > -0.95);
        let coeff = -1.0;
        // ∫π^{1+β}|I|^{−β/2} for Beta(a, b) and ∫|I|^{1/2} = π on (0, 1)
        let integral = limit_functional_beta_bernoulli(a, b, beta, 1.0).unwrap()
            / refprior::asymptotics::c_beta(1, beta).unwrap();
        prop_assert!(coeff * integral <= coeff * PI.powf(-beta) + 1e-12);
    }

    #[test]
    fn quadrature_limit_matches_closed_form(a in 0.3f64..5.0, b in 0.3f64..5.0, beta in -0.9f64..0.9) {
        prop_assume!(beta.abs() > 0.05);
        let ea = (a - 1.0) * (1.0 + beta) + beta / 2.0;
        let eb = (b - 1.0) * (1.0 + beta) + beta / 2.0;
        prop_assume!(ea > -0.9 && eb > -0.9);
        let gen = if beta > 0.0 { alpha_divergence(beta).unwrap() } else { power_divergence(1.0, beta).unwrap() };
        let coeff = gen.profile().unwrap().coeff;
        let quad = limit_functional(&Bernoulli::new(), &beta_prior(a, b).unwrap(), &gen, QuadSpec::singular()).unwrap();
        let closed = limit_functional_beta_bernoulli(a, b, beta, coeff).unwrap();
        let oracle = oracle_limit(a, b, coeff, beta);
        prop_assert!((quad - closed).abs() <= 1e-7 * closed.abs(), "quad {quad} closed {closed}");
        prop_assert!((closed - oracle).abs() <= 1e-10 * oracle.abs(), "closed {closed} oracle {oracle}");
    }

    #[test]
    fn var_beta_limit_is_mirror_symmetric(v in 0.005f64..0.04, m in 0.3f64..0.7) {
        let gen = alpha_divergence(0.5).unwrap();
        let model = Bernoulli::new();
        let l = objective(&model, &variance_constrained_beta(v, m).unwrap(), &gen, QuadSpec::default()).unwrap();
        let r = objective(&model, &variance_constrained_beta(v, 1.0 - m).unwrap(), &gen, QuadSpec::default()).unwrap();
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()), "{l} vs {r}");
    }
}

proptest! {
    #![proptest_config(cases(10))]

    #[test]
    fn jeffreys_is_reparametrization_invariant(lo in 0.01f64..0.3, w in 0.3f64..1.2) {
        // Jeffreys in θ pushed to φ against Jeffreys computed in φ
        let hi = (lo + w).min(PI / 2.0 - 0.01);
        let j_phi = jeffreys_prior(Arc::new(BernoulliAngle::new()), Some(&[(lo, hi)])).unwrap();
        let (tlo, thi) = (lo.sin().powi(2), hi.sin().powi(2));
        let j_theta = jeffreys_prior(Arc::new(Bernoulli::new()), Some(&[(tlo, thi)])).unwrap();
        let mut sup = 0f64;
        for i in 0..=200 {
            let phi = lo + (hi - lo) * (0.0005 + 0.999 * i as f64 / 200.0);
            let (s, c) = phi.sin_cos();
            let pushed = j_theta.density(&[s * s]) * 2.0 * s * c;
            sup = sup.max((pushed - j_phi.density(&[phi])).abs());
        }
        prop_assert!(sup <= 1e-6, "sup diff {sup}");
    }

    #[test]
    fn beta_sampler_matches_moments(a in 0.2f64..6.0, b in 0.2f64..6.0, seed in any::<u64>()) {
        let n = 100_000;
        let draws = beta_prior(a, b).unwrap().sample_n(n, seed, 0).unwrap();
        let xs: Vec<f64> = draws.into_iter().map(|d| d[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let mu = a / (a + b);
        let sigma2 = a * b / ((a + b).powi(2) * (a + b + 1.0));
        let m4: f64 = xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n as f64;
        prop_assert!((mean - mu).abs() <= 4.0 * (sigma2 / n as f64).sqrt(), "mean {mean} vs {mu}");
        let var_se = ((m4 - sigma2 * sigma2) / n as f64).sqrt();
        prop_assert!((var - sigma2).abs() <= 4.0 * var_se, "var {var} vs {sigma2}");
    }

    #[test]
    fn entropy_closed_form_matches_mc(a in 0.2f64..5.0, b in 0.2f64..5.0, seed in any::<u64>()) {
        let p = beta_prior(a, b).unwrap();
        let (mc, se) = prior_entropy_mc(&p, 100_000, seed).unwrap();
        let exact = prior_entropy(&p).unwrap();
        prop_assert_eq!(exact, beta_entropy(a, b));
        prop_assert!((mc - exact).abs() <= 3.0 * se + 1e-12, "mc {mc} ± {se} vs {exact}");
    }

    #[test]
    fn kl_fubini_small_k(a in 0.3f64..5.0, b in 0.3f64..5.0, k in 1usize..=8) {
        let prior = beta_prior(a, b).unwrap();
        let y = kl_mi_y_side(&Bernoulli::new(), &prior, k, QuadSpec::default()).unwrap();
        let t = exact_bernoulli_mi(&prior, k, &kl_generator(), QuadSpec::default()).unwrap().value;
        prop_assert!((y - t).abs() <= 1e-6, "{y} vs {t}");
    }

    #[test]
    fn mc_is_deterministic(seed in any::<u64>(), k in 1usize..16) {
        let prior = beta_prior(2.0, 3.0).unwrap();
        let budgets = Budgets { n_theta: 100, n_y: 100, n_marginal: 100, n_rep: 100 };
        let gen = alpha_divergence(0.5).unwrap();
        let a = mc_mutual_information(&Bernoulli::new(), &prior, k, &gen, budgets, seed).unwrap();
        let b = mc_mutual_information(&Bernoulli::new(), &prior, k, &gen, budgets, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn search_maximizers_are_certified(c in 1.2f64..4.0) {
        let fam = PriorFamily::mean_beta(c, (0.05, 20.0), None).unwrap();
        let gen = alpha_divergence(0.5).unwrap();
        let model = Bernoulli::new();
        let r = maximize_over_family(&fam, &model, &gen, 256, 1e-8, QuadSpec::default()).unwrap();
        let again = maximize_over_family(&fam, &model, &gen, 256, 1e-8, QuadSpec::default()).unwrap();
        prop_assert_eq!(&r, &again);
        for m in r.maximizers.iter().filter(|m| !m.boundary) {
            let l = |lam: f64| {
                let (a, b) = fam.make(lam).unwrap().beta_params().unwrap();
                oracle_limit(a, b, -4.0, 0.5)
            };
            prop_assert!(m.certified);
            prop_assert!(l(m.lambda - 1e-7) <= l(m.lambda) + 1e-12 && l(m.lambda + 1e-7) <= l(m.lambda) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(cases(6))]

    #[test]
    fn marginal_sums_to_one(a in 0.3f64..5.0, b in 0.3f64..5.0, k in 1usize..=10) {
        let prior = beta_prior(a, b).unwrap();
        let m = Bernoulli::new();
        let mut total = 0.0;
        for bits in 0u32..(1 << k) {
            let ys: Vec<f64> = (0..k).map(|i| ((bits >> i) & 1) as f64).collect();
            total += marginal_log_density(&m, &prior, &ys, QuadSpec::default()).unwrap().exp();
        }
        prop_assert!((total - 1.0).abs() <= 1e-8, "sum {total}");
    }
}

#[test]
fn profile_residual_shrinks_toward_zero() {
    let gens: Vec<DivergenceGen> = (1..10)
        .map(|i| alpha_divergence(i as f64 / 10.0).unwrap())
        .chain([-0.9, -0.5, -0.1].map(|b| power_divergence(1.0, b).unwrap()))
        .collect();
    for g in gens {
        let p = g.profile().unwrap();
        let resid =
            |x: f64| (g.eval(x) - p.shift - p.coeff * x.powf(p.exponent) - p.linear * x).abs() / x.powf(p.exponent);
        let r: Vec<f64> = [1e-4, 1e-5, 1e-6].into_iter().map(resid).collect();
        assert!(r.iter().all(|v| *v <= 1e-2), "{}: {r:?}", g.name());
        // the o(x^β) part beyond the linear term is identically zero here
        assert!(r.iter().all(|v| *v <= 1e-9), "{}: {r:?}", g.name());
        // without the linear term the residual linear·x^{1−β} still decreases
        let lit = |x: f64| (g.eval(x) - p.shift - p.coeff * x.powf(p.exponent)).abs() / x.powf(p.exponent);
        if p.linear != 0.0 {
            assert!(lit(1e-6) < lit(1e-5) && lit(1e-5) < lit(1e-4), "{}", g.name());
        }
    }
}

#[test]
fn exact_series_error_decreases() {
    let ks: Vec<usize> = (6..=12).map(|e| 1usize << e).collect();
    for gen in [alpha_divergence(0.5).unwrap(), power_divergence(1.0, -0.5).unwrap()] {
        for (a, b) in [(1.0, 1.0), (2.0, 2.0), (0.5, 0.5)] {
            let s = convergence_series(
                &Bernoulli::new(),
                &beta_prior(a, b).unwrap(),
                &gen,
                &ks,
                Method::ExactCount,
                Budgets::default(),
                0,
                QuadSpec::singular(),
            )
            .unwrap();
            let err: Vec<f64> = s.scaled_mi.iter().map(|v| (v - s.limit_value).abs()).collect();
            assert!(
                err.windows(2).all(|w| w[1] < w[0]),
                "{} Beta({a},{b}): {err:?}",
                gen.name()
            );
            assert!(err.last().unwrap() / s.limit_value.abs() <= 0.05);
        }
    }
}
