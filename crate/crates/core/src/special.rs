//! Sine/cosine integrals and closed-form integrals of `sinc²` against
//! piecewise-linear spectra.
//!
//! Every decoherence exponent in this crate has the shape
//! `∫₀^∞ S(ω) sinc²(a(ω − c)) dω` with `S` linear between grid nodes and
//! flat outside the grid. Splitting `S` into hat functions turns the exponent
//! into a dot product `Σ S_i w_i`, and each `w_i` has a closed form in terms of
//! `Si` and `Cin`. That keeps the exponent exactly linear in the node values
//! (the spectral estimator relies on this) and avoids resolving thousands of
//! narrow `sinc²` lobes numerically.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Sine and cosine integrals `(Ci(x), Si(x))` for `x > 2`, by Lentz's
/// continued fraction for `E₁(ix)`.
fn cisi_cf(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = Complex64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 2..200 {
        let a = -(((i - 1) * (i - 1)) as f64);
        b += 2.0;
        d = Complex64::new(1.0, 0.0) / (d * a + b);
        c = b + c.inv() * a;
        let del = c * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    let h = Complex64::new(x.cos(), -x.sin()) * h;
    (-h.re, FRAC_PI_2 + h.im)
}

/// Sine integral `Si(x) = ∫₀^x sin(t)/t dt`.
pub fn si(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 2.0 {
        // Σ (−1)^k x^{2k+1} / ((2k+1)(2k+1)!)
        let x2 = ax * ax;
        let mut term = ax;
        let mut sum = ax;
        let mut k = 0usize;
        loop {
            k += 1;
            let n = (2 * k) as f64;
            term *= -x2 / (n * (n + 1.0));
            let add = term / (n + 1.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        cisi_cf(ax).1
    };
    v.copysign(x)
}

/// Entire cosine integral `Cin(x) = ∫₀^x (1 − cos t)/t dt`, even in `x`.
pub fn cin(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 2.0 {
        // Σ_{k≥1} (−1)^{k+1} x^{2k} / (2k (2k)!)
        let x2 = ax * ax;
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut k = 0usize;
        loop {
            k += 1;
            let n = (2 * k) as f64;
            term *= -x2 / ((n - 1.0) * n);
            let add = -term / n;
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        EULER_GAMMA + ax.ln() - cisi_cf(ax).0
    }
}

/// `∫₀^u sinc²(s) ds` (odd in `u`, tends to ±π/2).
pub fn sinc2_primitive(u: f64) -> f64 {
    if u.abs() < 1.0 {
        // Σ_{k≥1} (−1)^{k+1} 2^{2k} u^{2k−1} / (2 (2k)! (2k−1))
        let u2 = u * u;
        let mut b = u;
        let mut sum = u;
        for k in 1..60 {
            let n = (2 * k) as f64;
            b *= -4.0 * u2 / ((n + 1.0) * (n + 2.0));
            let add = b / (n + 1.0);
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let s = u.sin();
        si(2.0 * u) - s * s / u
    }
}

/// `∫₀^u sin²(s)/s ds = Cin(2|u|)/2` (even in `u`).
pub fn sinc2_moment_primitive(u: f64) -> f64 {
    0.5 * cin(2.0 * u)
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Zeroth and first moments of `sinc²(a(ω − c))` over `[l, r]`:
/// `(∫ K, ∫ (ω − l) K)`.
fn interval_moments(l: f64, r: f64, a: f64, c: f64) -> (f64, f64) {
    let width = r - l;
    if a * width <= 1.0 {
        // Narrow in lobe units: the integrand is smooth, Gauss–Legendre is
        // exact to rounding and sidesteps cancellation in the primitives.
        let half = 0.5 * width;
        let mid = 0.5 * (l + r);
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            let om = mid + half * x;
            let k = sinc(a * (om - c)).powi(2) * w * half;
            m0 += k;
            m1 += k * (om - l);
        }
        (m0, m1)
    } else {
        let ul = a * (l - c);
        let ur = a * (r - c);
        let d0 = sinc2_primitive(ur) - sinc2_primitive(ul);
        let d1 = sinc2_moment_primitive(ur) - sinc2_moment_primitive(ul);
        let m0 = d0 / a;
        let m1 = (c - l) * d0 / a + d1 / (a * a);
        (m0, m1)
    }
}

/// Weights `w_i = ∫₀^∞ φ_i(ω) sinc²(a(ω − c)) dω` for the hat basis `φ_i` of
/// an ascending non-negative grid, with the first and last hats extended
/// flat to `0` and `∞`.
///
/// For any spectrum linear between nodes and flat outside,
/// `∫₀^∞ S(ω) sinc²(a(ω − c)) dω = Σ S(ω_i) w_i` exactly.
pub fn sinc2_hat_weights(grid: &[f64], a: f64, c: f64) -> Vec<f64> {
    assert!(a > 0.0, "sinc² scale must be positive");
    let n = grid.len();
    let mut w = vec![0.0; n];
    if n == 0 {
        return w;
    }
    if grid[0] > 0.0 {
        w[0] += interval_moments(0.0, grid[0], a, c).0;
    }
    for i in 0..n - 1 {
        let (l, r) = (grid[i], grid[i + 1]);
        let (m0, m1) = interval_moments(l, r, a, c);
        let right = m1 / (r - l);
        w[i] += m0 - right;
        w[i + 1] += right;
    }
    let ul = a * (grid[n - 1] - c);
    w[n - 1] += (FRAC_PI_2 - sinc2_primitive(ul)) / a;
    w
}
