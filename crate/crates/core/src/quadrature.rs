//! Gauss–Legendre quadrature on finite intervals.
//!
//! Integrals over a parameter interval `[lo, hi]` go through the substitution
//! `θ = lo + (hi - lo)·sin²(u)`, `u ∈ [0, π/2]`, which turns endpoint
//! singularities of type `(θ - lo)^{-1/2}` into smooth integrands. The end
//! panels in `u` are additionally graded geometrically so that stronger
//! algebraic singularities are resolved down to distances of order
//! `10^{-2·end_levels}` from the endpoints.
//!
//! Every [`Node`] records its distance to both interval ends, computed from
//! the nearer end and also kept in log form, so that `ln θ` and `ln(1 - θ)`
//! stay accurate even where `θ` itself rounds to an endpoint or the distance
//! underflows.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log_sum_exp, KahanSum};

/// Composite rule layout for the mapped grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Gauss–Legendre nodes per interior panel.
    pub nodes: usize,
    /// Number of equal panels in `u`.
    pub panels: usize,
    /// Geometric sub-panels (ratio 1/10) replacing each end panel; 0 disables grading.
    pub end_levels: usize,
    /// Nodes per graded sub-panel.
    pub end_nodes: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            nodes: 200,
            panels: 8,
            end_levels: 30,
            end_nodes: 16,
        }
    }
}

impl QuadSpec {
    /// Layout for integrands with strong algebraic endpoint singularities.
    pub fn singular() -> Self {
        QuadSpec {
            nodes: 200,
            panels: 8,
            end_levels: 150,
            end_nodes: 16,
        }
    }

    /// Twice the interior panels and 20 more graded levels.
    pub fn refined(self) -> Self {
        QuadSpec {
            panels: self.panels * 2,
            end_levels: if self.end_levels == 0 { 0 } else { self.end_levels + 20 },
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.panels < 2 || (self.end_levels > 0 && self.end_nodes < 2) {
            return Err(Error::Domain(format!("invalid quadrature layout {self:?}")));
        }
        Ok(())
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache.lock().expect("rule cache poisoned").insert(n, Arc::clone(&rule));
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, dp)
}

/// One abscissa of a one-dimensional rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    /// `x - lo`, accurate near `lo`.
    pub from_lo: f64,
    /// `hi - x`, accurate near `hi`.
    pub from_hi: f64,
    /// `ln(x - lo)`, finite even where `from_lo` underflows.
    pub ln_from_lo: f64,
    /// `ln(hi - x)`.
    pub ln_from_hi: f64,
    pub lo: f64,
    pub hi: f64,
    /// Quadrature weight including the Jacobian of the substitution.
    pub weight: f64,
    pub ln_weight: f64,
}

impl Node {
    /// A bare evaluation point with no quadrature weight.
    pub fn at(x: f64) -> Node {
        Node {
            x,
            from_lo: 0.0,
            from_hi: 0.0,
            ln_from_lo: f64::NEG_INFINITY,
            ln_from_hi: f64::NEG_INFINITY,
            lo: x,
            hi: x,
            weight: 0.0,
            ln_weight: f64::NEG_INFINITY,
        }
    }

    /// `ln(x - a)` for `a <= lo`, accurate when `a == lo`.
    pub fn ln_above(&self, a: f64) -> f64 {
        if a == self.lo {
            self.ln_from_lo
        } else if a < self.lo {
            ((self.lo - a) + self.from_lo).ln()
        } else {
            (self.x - a).ln()
        }
    }

    /// `ln(b - x)` for `b >= hi`, accurate when `b == hi`.
    pub fn ln_below(&self, b: f64) -> f64 {
        if b == self.hi {
            self.ln_from_hi
        } else if b > self.hi {
            ((b - self.hi) + self.from_hi).ln()
        } else {
            (b - self.x).ln()
        }
    }
}

/// Nodes of the sin²-mapped composite rule on a finite interval.
#[derive(Debug, Clone)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<Node>,
    /// Number of nodes in the innermost graded sub-panel at each end.
    pub innermost: usize,
}

impl Grid {
    pub fn sin2(lo: f64, hi: f64, spec: QuadSpec) -> Result<Grid> {
        spec.validate()?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!(
                "mapped quadrature needs a finite interval, got [{lo}, {hi}]"
            )));
        }
        let width = hi - lo;
        let h = FRAC_PI_2 / spec.panels as f64;
        // (distance from u=0, distance from u=π/2, gl weight × half width)
        let mut raw: Vec<(f64, f64, f64)> = Vec::new();
        let mut left_end: Vec<(f64, f64)> = Vec::new();
        if spec.end_levels == 0 {
            push_panel(&mut left_end, 0.0, h, spec.nodes);
        } else {
            let mut bounds = vec![h];
            for _ in 0..spec.end_levels {
                let inner = bounds.last().copied().unwrap_or(h) * 0.1;
                bounds.push(inner);
            }
            for pair in bounds.windows(2).rev() {
                push_panel(&mut left_end, pair[1], pair[0], spec.end_nodes);
            }
        }
        // left end panel(s), measured from u = 0
        for &(v, wt) in &left_end {
            raw.push((v, FRAC_PI_2 - v, wt));
        }
        // interior panels
        let mut interior = Vec::new();
        for p in 1..spec.panels - 1 {
            push_panel(&mut interior, p as f64 * h, (p + 1) as f64 * h, spec.nodes);
        }
        for &(u, wt) in &interior {
            raw.push((u, FRAC_PI_2 - u, wt));
        }
        // right end, mirrored and measured from u = π/2
        for &(v, wt) in left_end.iter().rev() {
            raw.push((FRAC_PI_2 - v, v, wt));
        }
        let nodes = raw
            .into_iter()
            .map(|(v, w, wt)| {
                let (sv, sw) = (v.sin(), w.sin());
                let from_lo = width * sv * sv;
                let from_hi = width * sw * sw;
                let x = if from_lo <= from_hi { lo + from_lo } else { hi - from_hi };
                let jac = 2.0 * width * sv * sw;
                let ln_weight = wt.ln() + (2.0 * width).ln() + sv.ln() + sw.ln();
                Node {
                    x,
                    from_lo,
                    from_hi,
                    ln_from_lo: width.ln() + 2.0 * sv.ln(),
                    ln_from_hi: width.ln() + 2.0 * sw.ln(),
                    lo,
                    hi,
                    weight: wt * jac,
                    ln_weight,
                }
            })
            .collect();
        let innermost = if spec.end_levels == 0 {
            spec.nodes
        } else {
            spec.end_nodes
        };
        Ok(Grid {
            lo,
            hi,
            nodes,
            innermost,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫ f(θ) dθ.
    pub fn integrate(&self, mut f: impl FnMut(&Node) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).collect::<KahanSum>().total()
    }

    /// ln ∫ exp(g(θ)) dθ, accumulated in log space.
    pub fn log_integrate(&self, mut g: impl FnMut(&Node) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().map(|n| g(n) + n.ln_weight).collect();
        log_sum_exp(&terms)
    }

    /// Share of `∫ |f|` carried by the innermost sub-panels at both ends.
    pub fn end_share(&self, mut f: impl FnMut(&Node) -> f64) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|n| (n.weight * f(n)).abs()).collect();
        let total: f64 = vals.iter().sum();
        let m = self.innermost.min(vals.len() / 2);
        let ends: f64 = vals[..m].iter().sum::<f64>() + vals[vals.len() - m..].iter().sum::<f64>();
        if total == 0.0 {
            0.0
        } else {
            ends / total
        }
    }
}

fn push_panel(out: &mut Vec<(f64, f64)>, a: f64, b: f64, n: usize) {
    let rule = gauss_legendre(n);
    let (xs, ws) = (&rule.0, &rule.1);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in xs.iter().zip(ws) {
        out.push((mid + half * x, w * half));
    }
}

/// Plain composite Gauss–Legendre on `[a, b]`.
pub fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize, panels: usize) -> f64 {
    let rule = gauss_legendre(nodes);
    let h = (b - a) / panels as f64;
    let mut acc = KahanSum::default();
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let half = 0.5 * h;
        let mid = lo + half;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            acc.add(w * half * f(mid + half * x));
        }
    }
    acc.total()
}

const ADAPTIVE_NODES: usize = 20;
const ADAPTIVE_MAX_DEPTH: usize = 40;
const ADAPTIVE_MAX_EVALS: usize = 2_000_000;

/// Adaptive Gauss–Legendre with interval bisection.
///
/// Stops when the bisected estimate differs from the parent by less than
/// `max(abs_tol, rel_tol·|value|)`.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let whole = composite(f, a, b, ADAPTIVE_NODES, 1);
    let mut evals = ADAPTIVE_NODES;
    let scale = whole.abs();
    let tol = abs_tol.max(rel_tol * scale);
    let v = bisect(f, a, b, whole, tol, 0, &mut evals)?;
    if !v.is_finite() {
        return Err(Error::QuadratureFailure(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(v)
}

fn bisect(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    evals: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = composite(f, a, m, ADAPTIVE_NODES, 1);
    let right = composite(f, m, b, ADAPTIVE_NODES, 1);
    *evals += 2 * ADAPTIVE_NODES;
    let both = left + right;
    if (both - whole).abs() <= tol {
        return Ok(both);
    }
    if depth >= ADAPTIVE_MAX_DEPTH || *evals > ADAPTIVE_MAX_EVALS {
        return Err(Error::QuadratureFailure(format!(
            "adaptive refinement budget exhausted near [{a}, {b}]"
        )));
    }
    Ok(bisect(f, a, m, left, 0.5 * tol, depth + 1, evals)? + bisect(f, m, b, right, 0.5 * tol, depth + 1, evals)?)
}

/// Adaptive integral over the real line via `y = c + s·t/(1 - t²)`.
pub fn adaptive_real_line(f: &dyn Fn(f64) -> f64, center: f64, scale: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        let y = center + scale * t / d;
        let jac = scale * (1.0 + t * t) / (d * d);
        let v = f(y) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // split at the centre so the peak is never straddled by the first panel
    let left = adaptive(&g, -1.0, 0.0, 0.5 * abs_tol, rel_tol)?;
    let right = adaptive(&g, 0.0, 1.0, 0.5 * abs_tol, rel_tol)?;
    Ok(left + right)
}
