//! Reference values computed independently of the library: closed forms and
//! adaptive Simpson quadrature in plain `f64`.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson rule on `[a, b]` with relative tolerance `rel`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // A coarse first pass sets the absolute scale of the target.
    let scale = simpson_step(f, a, b, fa, fm, fb, whole, 0.0, 6).abs();
    simpson_step(f, a, b, fa, fm, fb, whole, rel * scale, 30)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        left + right + diff / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// One-dimensional Gaussian kernel.
pub fn gauss(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `min(x₊^α, 1)`.
pub fn capped(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(alpha).min(1.0)
    }
}

/// `∂ₓ P_τ f(x)` for `f = min(x₊^α, 1)`, written as `∫₀¹ f'(z) K(τ, x − z) dz`
/// and integrated after `z = s^{1/α}`, which turns `f'(z) dz` into `ds`.
pub fn capped_gradient(alpha: f64, tau: f64, x: f64) -> f64 {
    let g = |s: f64| gauss(tau, x - s.powf(1.0 / alpha));
    let rel = 1e-10;
    let sigma = tau.sqrt();
    // Split at the Gaussian peak and at ±8σ around it so the rule sees the
    // narrow bump.
    let mut cuts = vec![0.0, 1.0];
    for z in [x - 8.0 * sigma, x, x + 8.0 * sigma] {
        if z > 0.0 && z < 1.0 {
            cuts.push(z.powf(alpha));
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| simpson(&g, w[0], w[1], rel)).sum()
}

/// `∫₀ᵗ |∂P_τ f(x) − ∂P_τ f(y)|² dτ`, the second moment of the gradient
/// increment of `∫ P_{t−r} f dW_r`, after `τ = s²`.
pub fn capped_increment_moment(alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    let g = |s: f64| {
        if s == 0.0 {
            return 0.0;
        }
        let tau = s * s;
        let d = capped_gradient(alpha, tau, x) - capped_gradient(alpha, tau, y);
        2.0 * s * d * d
    };
    let top = t.sqrt();
    // Dyadic cuts in s toward 0 resolve the change of regime at τ ≈ |x − y|².
    let mut cuts = vec![0.0];
    let mut c = top;
    while c > 1e-6 {
        cuts.push(c);
        c *= 0.5;
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| simpson(&g, w[0], w[1], 1e-8)).sum()
}

/// `E|∂u(t,2^{-k}) − ∂u(t,0)|²` for `f = min(x₊^{1/2}, 1)`, `t = 1/4`, `k = 3..=10`,
/// from an independent SciPy `quad` computation.
pub const FROZEN_INCREMENT_MOMENTS: [f64; 8] = [
    8.52095427e-03,
    4.81512443e-03,
    2.56231205e-03,
    1.32182547e-03,
    6.71324857e-04,
    3.38295830e-04,
    1.69810047e-04,
    8.50710279e-05,
];

/// Least-squares slope of `log y` on `log x`.
pub fn loglog_slope(rows: &[(f64, f64)]) -> f64 {
    let n = rows.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sample mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
