//! Seeded substreams and Beta variate generation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for task `index` under a run-level `seed`.
///
/// Every task of a parallel computation draws from its own ChaCha stream,
/// so results do not depend on scheduling or thread count.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draw from Beta(a, b).
///
/// Jöhnk's method (in log space) when either shape is below 1/2 or both are
/// below 1, Cheng's BB when both exceed 1, Cheng's BC otherwise.
pub fn sample_beta(a: f64, b: f64, rng: &mut dyn RngCore) -> f64 {
    let (lx, l1x) = sample_beta_ln(a, b, rng);
    if lx <= l1x {
        lx.exp()
    } else {
        -l1x.exp_m1()
    }
}

/// A Beta(a, b) draw as `(ln x, ln(1 − x))`, keeping precision for draws
/// closer to 0 or 1 than `f64` can resolve.
pub fn sample_beta_ln(a: f64, b: f64, rng: &mut dyn RngCore) -> (f64, f64) {
    debug_assert!(a > 0.0 && b > 0.0);
    if a.min(b) < 0.5 || a.max(b) < 1.0 {
        johnk(a, b, rng)
    } else if a.min(b) > 1.0 {
        cheng_bb(a, b, rng)
    } else {
        cheng_bc(a, b, rng)
    }
}

fn johnk(a: f64, b: f64, rng: &mut dyn RngCore) -> (f64, f64) {
    loop {
        let lx = open_unit(rng).ln() / a;
        let ly = open_unit(rng).ln() / b;
        let hi = lx.max(ly);
        let lsum = hi + ((lx - hi).exp() + (ly - hi).exp()).ln();
        if lsum <= 0.0 {
            return (lx - lsum, ly - lsum);
        }
    }
}

fn cheng_bb(a0: f64, b0: f64, rng: &mut dyn RngCore) -> (f64, f64) {
    let (a, b) = if a0 <= b0 { (a0, b0) } else { (b0, a0) };
    let alpha = a + b;
    let beta = ((alpha - 2.0) / (2.0 * a * b - alpha)).sqrt();
    let gamma = a + 1.0 / beta;
    let ln4 = 4f64.ln();
    loop {
        let u1 = open_unit(rng);
        let u2 = open_unit(rng);
        let v = beta * (u1 / (1.0 - u1)).ln();
        let w = a * v.exp();
        let z = u1 * u1 * u2;
        let r = gamma * v - ln4;
        let s = a + r - w;
        let accept = s + 2.609_438 >= 5.0 * z || s >= z.ln() || r + alpha * (alpha / (b + w)).ln() >= z.ln();
        if accept {
            return finish(a0, a, b, v);
        }
    }
}

fn cheng_bc(a0: f64, b0: f64, rng: &mut dyn RngCore) -> (f64, f64) {
    let (a, b) = if a0 >= b0 { (a0, b0) } else { (b0, a0) };
    let alpha = a + b;
    let beta = 1.0 / b;
    let delta = 1.0 + a - b;
    let k1 = delta * (0.013_888_9 + 0.041_666_7 * b) / (a * beta - 0.777_778);
    let k2 = 0.25 + (0.5 + 0.25 / delta) * b;
    loop {
        let u1 = open_unit(rng);
        let u2 = open_unit(rng);
        let z;
        if u1 < 0.5 {
            let y = u1 * u2;
            z = u1 * y;
            if 0.25 * u2 + z - y >= k1 {
                continue;
            }
        } else {
            z = u1 * u1 * u2;
            if z <= 0.25 {
                let v = beta * (u1 / (1.0 - u1)).ln();
                return finish(a0, a, b, v);
            }
            if z >= k2 {
                continue;
            }
        }
        let v = beta * (u1 / (1.0 - u1)).ln();
        let w = a * v.exp();
        if alpha * ((alpha / (b + w)).ln() + v) - 1.386_294_4 >= z.ln() {
            return finish(a0, a, b, v);
        }
    }
}

/// `(ln x, ln(1 − x))` for `x = w/(b + w)`, `ln w = ln a + v`, mirrored when
/// the shape parameters were swapped.
fn finish(a0: f64, a: f64, b: f64, v: f64) -> (f64, f64) {
    let lw = a.ln() + v;
    let lb = b.ln();
    let hi = lw.max(lb);
    let lden = if hi == f64::INFINITY {
        hi
    } else {
        hi + (-(lw - lb).abs()).exp().ln_1p()
    };
    let pair = if lw == f64::INFINITY {
        (0.0, f64::NEG_INFINITY)
    } else {
        (lw - lden, lb - lden)
    };
    if a == a0 {
        pair
    } else {
        (pair.1, pair.0)
    }
}
