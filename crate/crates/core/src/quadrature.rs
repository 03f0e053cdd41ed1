//! One-dimensional Gaussian expectations.
//!
//! Smooth integrands use a fixed Gauss-Hermite rule. Integrands that are
//! nearly a step on the scale of the standard deviation defeat any fixed
//! polynomial rule. For the logistic there is an exact split into a normal
//! CDF plus a smooth Laguerre-weighted remainder; other steep integrands go
//! to adaptive Gauss-Kronrod on the standard normal density over
//! `[-Z_MAX, Z_MAX]`, where the truncated tail mass is below 1e-18, split at
//! the location of the step.

use std::sync::OnceLock;

use statrs::function::erf::erfc;

pub const HERMITE_NODES: usize = 64;
pub const LAGUERRE_NODES: usize = 48;
const Z_MAX: f64 = 9.0;

/// Nodes and weights for `∫ e^{-x²} f(x) dx`, computed by Newton iteration
/// on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and weights for `∫₀^∞ e^{-x} f(x) dx`, by Newton iteration on the
/// Laguerre recurrence.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let a = (i - 1) as f64;
                z + ((1.0 + 2.55 * a) / (1.9 * a)) * (z - x[i - 2])
            }
        };
        let mut pp = 0.0;
        let mut p2 = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    (x, w)
}

fn laguerre_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_laguerre(LAGUERRE_NODES))
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `E[1 / (1 + e^{-(m + sZ)})]` for `Z ~ N(0, 1)`, accurate to about 1e-10
/// for `s ≥ 2`; smaller `s` belongs to the Gauss-Hermite rule.
///
/// The logistic equals the unit step plus a remainder that decays as
/// `e^{-|u|}` on both sides of zero, so the expectation is `Φ(m/s)` plus two
/// Laguerre-weighted integrals of the smooth normal density.
pub fn logistic_normal_expectation(m: f64, s: f64) -> f64 {
    debug_assert!(s > 0.0);
    let (v, w) = laguerre_rule();
    let inv = 1.0 / s;
    let dens = |u: f64| {
        let z = (u - m) * inv;
        (-0.5 * z * z).exp()
    };
    let mut rem = 0.0;
    for (&vi, &wi) in v.iter().zip(w) {
        rem += wi * (dens(-vi) - dens(vi)) / (1.0 + (-vi).exp());
    }
    let norm = inv / (2.0 * std::f64::consts::PI).sqrt();
    (std_normal_cdf(m * inv) + norm * rem).clamp(0.0, 1.0)
}

struct StdNormalRule {
    z: Vec<f64>,
    w: Vec<f64>,
}

fn std_normal_rule() -> &'static StdNormalRule {
    static RULE: OnceLock<StdNormalRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_hermite(HERMITE_NODES);
        let s = std::f64::consts::PI.sqrt();
        StdNormalRule {
            z: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            w: w.iter().map(|v| v / s).collect(),
        }
    })
}

/// `E[f(Z)]` for `Z ~ N(0, 1)` by the cached Gauss-Hermite rule.
pub fn hermite_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let r = std_normal_rule();
    r.z.iter().zip(&r.w).map(|(&z, &w)| w * f(z)).sum()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and the embedded 7-point Gauss error estimate.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn gauss_kronrod(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(&f, a, b, tol, 40)
}

/// `E[g(μ + σ Z)]` for `Z ~ N(0, 1)`.
///
/// `roughness` is the product of `σ` and the largest rate at which `g`
/// changes; above `smooth_limit` the adaptive rule is used, split at
/// `center`, the point where `g` changes fastest.
pub fn normal_expectation(
    g: impl Fn(f64) -> f64,
    mu: f64,
    sigma: f64,
    roughness: f64,
    smooth_limit: f64,
    center: f64,
) -> f64 {
    if sigma == 0.0 {
        return g(mu);
    }
    if roughness <= smooth_limit {
        hermite_expectation(|z| g(mu + sigma * z))
    } else {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let f = |z: f64| g(mu + sigma * z) * norm * (-0.5 * z * z).exp();
        // Breakpoints at the step and 40 transition widths either side, so
        // no panel can straddle the step unseen.
        let zc = (center - mu) / sigma;
        let half = 40.0 / roughness;
        let cuts = [-Z_MAX, zc - half, zc, zc + half, Z_MAX].map(|z| z.clamp(-Z_MAX, Z_MAX));
        cuts.windows(2).map(|w| gauss_kronrod(f, w[0], w[1], 0.25e-12)).sum()
    }
}
