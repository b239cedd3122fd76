//! Gauss-Legendre rules and singularity-graded meshes for time integrals.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature points `(s, weight)` for `∫_0^t G(s) ds` where `G` may carry an
/// integrable singularity like `s^{a-1}` at `s = 0`.
///
/// Breakpoints are the absolute dyadic levels `2^j` that fall inside `(0, t)`,
/// so two horizons share every complete cell below the smaller one. Each cell
/// is integrated in the variable `√s`; the innermost cell `[0, s_min]` uses the
/// same substitution.
pub fn dyadic_singular_rule(t: f64, rule: &GaussLegendre, levels: u32) -> Vec<(f64, f64)> {
    assert!(t > 0.0);
    let top = t.log2().ceil() as i32;
    let bottom = top - levels as i32;
    let mut breaks: Vec<f64> = (bottom..top).map(|j| 2f64.powi(j)).filter(|&s| s < t).collect();
    breaks.push(t);
    let mut out = Vec::with_capacity(rule.order() * (breaks.len() + 1));
    let mut lo = 0.0_f64;
    for &hi in &breaks {
        let (a, b) = (lo, hi);
        // s = v², ds = 2v dv on [√a, √b].
        for (v, w) in rule.on_interval(a.sqrt(), b.sqrt()) {
            out.push((v * v, 2.0 * v * w));
        }
        lo = hi;
    }
    out
}

/// Quadrature points on `(0, t]` from a mesh graded toward `s = 0` with
/// exponent `kappa`: breakpoints `t·(j/m)^kappa`.
pub fn graded_rule(t: f64, cells: usize, kappa: f64, rule: &GaussLegendre) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(cells * rule.order());
    for j in 0..cells {
        let a = t * (j as f64 / cells as f64).powf(kappa);
        let b = t * ((j + 1) as f64 / cells as f64).powf(kappa);
        out.extend(rule.on_interval(a, b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for order in 1..12 {
            let gl = GaussLegendre::new(order);
            for deg in 0..(2 * order) {
                let got = gl.integrate(0.0, 2.0, |x| x.powi(deg as i32));
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!((got - exact).abs() < 1e-12 * exact.max(1.0), "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn dyadic_rule_handles_inverse_square_root() {
        let gl = GaussLegendre::new(8);
        let pts = dyadic_singular_rule(0.3, &gl, 60);
        let got: f64 = pts.iter().map(|&(s, w)| w / s.sqrt()).sum();
        assert!((got - 2.0 * 0.3f64.sqrt()).abs() < 1e-12);
        let mass: f64 = pts.iter().map(|&(_, w)| w).sum();
        assert!((mass - 0.3).abs() < 1e-14);
    }

    #[test]
    fn dyadic_rule_shares_cells_between_horizons() {
        let gl = GaussLegendre::new(4);
        let a = dyadic_singular_rule(0.25, &gl, 20);
        let b = dyadic_singular_rule(0.5, &gl, 21);
        assert_eq!(&b[..a.len()], &a[..]);
    }

    #[test]
    fn graded_rule_covers_interval() {
        let gl = GaussLegendre::new(3);
        let pts = graded_rule(2.0, 16, 2.0, &gl);
        let mass: f64 = pts.iter().map(|&(_, w)| w).sum();
        assert!((mass - 2.0).abs() < 1e-13);
        assert!(pts.iter().all(|&(s, _)| s > 0.0 && s < 2.0));
    }
}
