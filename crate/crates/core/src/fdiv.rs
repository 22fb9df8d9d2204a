//! Generators of f-divergences and their expansions at zero.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ids::ParsedId;
use crate::model::SubGaussianReport;

/// Behaviour of a generator near zero:
/// `f(x) = shift + coeff·x^exponent + linear·x + o(x^exponent)`.
///
/// `linear` is nonzero only for the α family, whose generator is exactly
/// `shift + coeff·x^a + linear·x`. Because `E[p_Y/ℓ_k] = 1`, the linear part
/// adds the constant `linear` to every mutual information, so the quantity
/// that scales like `k^{dβ/2}` is `I - offset()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticProfile {
    pub coeff: f64,
    pub exponent: f64,
    pub shift: f64,
    pub linear: f64,
}

impl AsymptoticProfile {
    /// Constant the mutual information converges to: `shift + linear`.
    pub fn offset(&self) -> f64 {
        self.shift + self.linear
    }
}

/// Which of the two limit theorems a profile falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// β ∈ (0, 1): limit is maximized by Jeffreys when coeff < 0.
    PositiveExponent,
    /// β ∈ (−1, 0): limit is maximized by Jeffreys when coeff·(β+1) > 0.
    NegativeExponent,
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    Alpha { a: f64 },
    Power { coeff: f64, beta: f64 },
    Kl,
}

/// A generator `f` on (0, ∞), minus an optional constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceGen {
    pub kind: GenKind,
    /// Constant subtracted from the base generator.
    pub minus: f64,
}

/// f(x) = (x^a − a·x − (1−a)) / (a(a−1)), 0 < a < 1.
pub fn alpha_divergence(a: f64) -> Result<DivergenceGen> {
    if !(a > 0.0 && a < 1.0) {
        return domain(format!(
            "alpha divergence requires a in the open interval (0, 1), got {a}"
        ));
    }
    Ok(DivergenceGen {
        kind: GenKind::Alpha { a },
        minus: 0.0,
    })
}

/// f(x) = coeff·x^β, −1 < β < 0.
pub fn power_divergence(coeff: f64, beta: f64) -> Result<DivergenceGen> {
    if beta == -1.0 {
        return Err(Error::ChiSquareBoundary);
    }
    if !(beta > -1.0 && beta < 0.0) {
        return domain(format!(
            "power generator requires beta in the open interval (-1, 0), got {beta}"
        ));
    }
    if !coeff.is_finite() || coeff == 0.0 {
        return domain(format!(
            "power generator needs a finite nonzero coefficient, got {coeff}"
        ));
    }
    Ok(DivergenceGen {
        kind: GenKind::Power { coeff, beta },
        minus: 0.0,
    })
}

/// f(x) = −ln x.
pub fn kl_generator() -> DivergenceGen {
    DivergenceGen {
        kind: GenKind::Kl,
        minus: 0.0,
    }
}

impl DivergenceGen {
    pub fn name(&self) -> String {
        let base = match self.kind {
            GenKind::Alpha { a } => format!("alpha(a={a})"),
            GenKind::Power { coeff, beta } => format!("power(coeff={coeff},beta={beta})"),
            GenKind::Kl => "kl".to_string(),
        };
        if self.minus == 0.0 {
            base
        } else {
            format!("{base}-{}", self.minus)
        }
    }

    pub fn profile(&self) -> Option<AsymptoticProfile> {
        match self.kind {
            GenKind::Alpha { a } => Some(AsymptoticProfile {
                coeff: 1.0 / (a * (a - 1.0)),
                exponent: a,
                shift: 1.0 / a - self.minus,
                linear: 1.0 / (1.0 - a),
            }),
            GenKind::Power { coeff, beta } => Some(AsymptoticProfile {
                coeff,
                exponent: beta,
                shift: -self.minus,
                linear: 0.0,
            }),
            GenKind::Kl => None,
        }
    }

    /// `f(x) − γ`.
    pub fn shifted(&self, gamma: f64) -> DivergenceGen {
        DivergenceGen {
            kind: self.kind,
            minus: self.minus + gamma,
        }
    }

    /// The generator minus its profile offset, whose mutual information
    /// vanishes at the rate `k^{dβ/2}`. Returns `self` for KL.
    pub fn shift_corrected(&self) -> DivergenceGen {
        match self.profile() {
            Some(p) => self.shifted(p.offset()),
            None => *self,
        }
    }

    /// `f(x)` for `x > 0`.
    pub fn eval(&self, x: f64) -> f64 {
        let base = match self.kind {
            GenKind::Alpha { a } => (x.powf(a) - a * x - (1.0 - a)) / (a * (a - 1.0)),
            GenKind::Power { coeff, beta } => coeff * (beta * x.ln()).exp(),
            GenKind::Kl => -x.ln(),
        };
        base - self.minus
    }

    /// `f(exp(ln_x))` without forming `x` when it would under- or overflow.
    pub fn eval_ln(&self, ln_x: f64) -> f64 {
        match self.kind {
            GenKind::Alpha { a } => {
                if ln_x.abs() < 0.5 {
                    return self.eval(ln_x.exp());
                }
                1.0 / a + (a * ln_x).exp() / (a * (a - 1.0)) + ln_x.exp() / (1.0 - a) - self.minus
            }
            GenKind::Power { coeff, beta } => coeff * (beta * ln_x).exp() - self.minus,
            GenKind::Kl => -ln_x - self.minus,
        }
    }

    /// `f(x) − linear·(x − 1)` from `ln x`. Under `ℓ_k` this has the same mean
    /// as `f(x)` since `E[p_Y/ℓ_k] = 1`, but it grows sublinearly, which keeps
    /// Monte Carlo averages away from the rare huge ratios.
    pub fn eval_ln_centered(&self, ln_x: f64) -> f64 {
        match self.kind {
            GenKind::Alpha { a } => -(a * ln_x).exp_m1() / (a * (1.0 - a)) - self.minus,
            _ => self.eval_ln(ln_x),
        }
    }

    /// `w·f(x)` from `ln w` and `ln x`, never forming `0·∞`.
    pub fn weighted(&self, ln_w: f64, ln_x: f64) -> f64 {
        if ln_w == f64::NEG_INFINITY {
            return 0.0;
        }
        match self.kind {
            GenKind::Alpha { a } => {
                if ln_x.abs() < 0.5 {
                    return ln_w.exp() * self.eval(ln_x.exp());
                }
                (1.0 / a - self.minus) * ln_w.exp() - (ln_w + a * ln_x).exp() / (a * (1.0 - a))
                    + (ln_w + ln_x).exp() / (1.0 - a)
            }
            GenKind::Power { coeff, beta } => coeff * (ln_w + beta * ln_x).exp() - self.minus * ln_w.exp(),
            GenKind::Kl => -(ln_x + self.minus) * ln_w.exp(),
        }
    }
}

/// Numerical check of the hypotheses of the limit theorems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub generator: String,
    pub branch: Branch,
    pub exponent_in_range: bool,
    pub coeff_sign_ok: bool,
    pub linear_growth_ok: bool,
    pub local_bounded_ok: bool,
    /// Sub-Gaussian score diagnostic, when one was run.
    pub subgaussian: Option<SubGaussianReport>,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.exponent_in_range
            && self.coeff_sign_ok
            && self.linear_growth_ok
            && self.local_bounded_ok
            && self.subgaussian.as_ref().is_none_or(|s| s.passes)
    }
}

fn geometric(lo_exp: i32, hi_exp: i32, per_decade: usize) -> Vec<f64> {
    let n = (hi_exp - lo_exp) as usize * per_decade;
    (0..=n)
        .map(|i| 10f64.powf(lo_exp as f64 + i as f64 / per_decade as f64))
        .collect()
}

pub fn branch_of(profile: &AsymptoticProfile) -> Branch {
    let b = profile.exponent;
    if b > 0.0 && b < 1.0 {
        Branch::PositiveExponent
    } else if b > -1.0 && b < 0.0 {
        Branch::NegativeExponent
    } else {
        Branch::OutOfRange
    }
}

/// Whether the sign of the profile coefficient makes Jeffreys the maximizer
/// of the limit functional.
pub fn jeffreys_sign_ok(profile: &AsymptoticProfile) -> bool {
    match branch_of(profile) {
        Branch::PositiveExponent => profile.coeff < 0.0,
        Branch::NegativeExponent => profile.coeff * (profile.exponent + 1.0) > 0.0,
        Branch::OutOfRange => false,
    }
}

pub fn validate_theorem_conditions(
    gen: &DivergenceGen,
    subgaussian: Option<SubGaussianReport>,
) -> Result<ConditionReport> {
    let profile = gen
        .profile()
        .ok_or_else(|| Error::Unsupported(format!("{} has no power expansion at zero", gen.name())))?;
    let branch = branch_of(&profile);
    let ratios: Vec<f64> = geometric(0, 8, 4).into_iter().map(|x| gen.eval(x) / x).collect();
    let n = ratios.len();
    let linear_growth_ok =
        ratios.iter().all(|r| r.is_finite()) && ratios[n - 1].abs() <= 2.0 * ratios[n - 5].abs() + 1e-12;
    let local_bounded_ok = geometric(-8, 8, 8).into_iter().all(|x| gen.eval(x).is_finite());
    Ok(ConditionReport {
        generator: gen.name(),
        branch,
        exponent_in_range: branch != Branch::OutOfRange,
        coeff_sign_ok: jeffreys_sign_ok(&profile),
        linear_growth_ok,
        local_bounded_ok,
        subgaussian,
    })
}

/// Resolve `alpha:a=0.5`, `power:coeff=1,beta=-0.5` or `kl`.
pub fn parse_divergence(id: &str) -> Result<DivergenceGen> {
    let p = ParsedId::parse(id)?;
    match p.name.as_str() {
        "alpha" => {
            p.expect_keys(&["a"])?;
            alpha_divergence(p.f64("a")?)
        }
        "power" => {
            p.expect_keys(&["coeff", "beta"])?;
            power_divergence(p.f64_or("coeff", 1.0)?, p.f64("beta")?)
        }
        "kl" => {
            p.expect_keys(&[])?;
            Ok(kl_generator())
        }
        other => domain(format!("unknown divergence '{other}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_alpha_drops_only_the_linear_part() {
        let g = alpha_divergence(0.3).unwrap().shifted(0.7);
        for x in [1e-6, 0.2, 1.0, 3.0, 1e5] {
            let lin = g.profile().unwrap().linear * (x - 1.0);
            assert!((g.eval_ln_centered(x.ln()) + lin - g.eval(x)).abs() <= 1e-9 * (1.0 + x));
        }
        let p = power_divergence(2.0, -0.5).unwrap();
        assert_eq!(p.eval_ln_centered(0.4), p.eval_ln(0.4));
    }

    #[test]
    fn alpha_examples() {
        let g = alpha_divergence(0.5).unwrap();
        let p = g.profile().unwrap();
        assert_eq!((p.coeff, p.exponent, p.shift), (-4.0, 0.5, 2.0));
        assert_eq!(p.linear, 2.0);
        assert!(g.eval(1.0).abs() < 1e-12);
        assert!((g.eval(4.0) - 2.0).abs() < 1e-12);
        for x in [0.01, 0.3, 2.0, 9.0] {
            assert!((g.eval(x) - (-4.0 * x.sqrt() + 2.0 * x + 2.0)).abs() < 1e-12);
        }
        for a in [0.0, 1.0, -0.3, 1.2] {
            let e = alpha_divergence(a).unwrap_err();
            assert!(e.to_string().contains("open interval (0, 1)"), "{e}");
        }
    }

    #[test]
    fn power_examples() {
        let g = power_divergence(1.0, -0.5).unwrap();
        assert!((g.eval(4.0) - 0.5).abs() < 1e-15);
        let p = g.profile().unwrap();
        assert_eq!((p.coeff, p.exponent, p.shift, p.linear), (1.0, -0.5, 0.0, 0.0));
        assert!((power_divergence(2.0, -0.25).unwrap().eval(16.0) - 1.0).abs() < 1e-15);
        assert_eq!(power_divergence(1.0, -1.0), Err(Error::ChiSquareBoundary));
        assert!(matches!(power_divergence(1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(power_divergence(1.0, -1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn kl_examples() {
        let g = kl_generator();
        assert_eq!(g.eval(1.0), 0.0);
        assert!((g.eval(std::f64::consts::E) + 1.0).abs() < 1e-15);
        assert!((g.eval(0.5) - 2f64.ln()).abs() < 1e-15);
        assert!(g.profile().is_none());
        assert!(validate_theorem_conditions(&g, None).is_err());
    }

    #[test]
    fn condition_reports() {
        let r = validate_theorem_conditions(&alpha_divergence(0.5).unwrap(), None).unwrap();
        assert_eq!(r.branch, Branch::PositiveExponent);
        assert!(r.all_ok(), "{r:?}");
        let r = validate_theorem_conditions(&power_divergence(1.0, -0.5).unwrap(), None).unwrap();
        assert_eq!(r.branch, Branch::NegativeExponent);
        assert!(r.all_ok(), "{r:?}");
        let r = validate_theorem_conditions(&power_divergence(-1.0, -0.5).unwrap(), None).unwrap();
        assert!(!r.coeff_sign_ok);
        assert!(r.exponent_in_range && r.linear_growth_ok && r.local_bounded_ok);
    }

    #[test]
    fn log_paths_agree_with_direct_evaluation() {
        let gens = [
            alpha_divergence(0.3).unwrap(),
            alpha_divergence(0.5).unwrap().shift_corrected(),
            power_divergence(1.5, -0.7).unwrap(),
            kl_generator().shifted(0.25),
        ];
        for g in gens {
            for lx in [-30.0, -3.0, -0.2, 0.0, 0.4, 2.0, 25.0] {
                let x: f64 = f64::exp(lx);
                let direct = g.eval(x);
                assert!(
                    (g.eval_ln(lx) - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
                    "{} {lx}",
                    g.name()
                );
                let w = -1.7f64;
                let weighted = g.weighted(w, lx);
                assert!((weighted - w.exp() * direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            }
            assert_eq!(g.weighted(f64::NEG_INFINITY, 800.0), 0.0);
            assert!(g.weighted(-800.0, 790.0).is_finite());
        }
    }

    #[test]
    fn shift_correction_subtracts_offset_exactly() {
        let g = alpha_divergence(0.5).unwrap();
        let s = g.shift_corrected();
        for x in [1e-6, 0.2, 3.0] {
            assert_eq!(s.eval(x), g.eval(x) - 4.0);
        }
        assert_eq!(s.profile().unwrap().offset(), 0.0);
        assert_eq!(kl_generator().shift_corrected(), kl_generator());
    }

    #[test]
    fn parse_ids() {
        assert_eq!(parse_divergence("alpha:a=0.5").unwrap(), alpha_divergence(0.5).unwrap());
        assert_eq!(
            parse_divergence("power:coeff=1,beta=-0.5").unwrap(),
            power_divergence(1.0, -0.5).unwrap()
        );
        assert_eq!(parse_divergence("kl").unwrap(), kl_generator());
        assert!(parse_divergence("alpha:a=1.0")
            .unwrap_err()
            .to_string()
            .contains("open interval"));
        assert_eq!(parse_divergence("power:beta=-1"), Err(Error::ChiSquareBoundary));
        assert!(parse_divergence("renyi:a=2").is_err());
    }
}
