use serde::{Deserialize, Serialize};

use super::NoiseError;
use crate::quadrature::GaussLegendre;

/// Points in the inverse-CDF table of a tabulated density.
pub const INVERSE_CDF_POINTS: usize = 4096;

/// Density of `ν` on the charged mark range `[ρ, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum LevyDensity {
    /// Constant density with total mass `mass` on `[ρ, c)`.
    Uniform { mass: f64 },
    /// `scale · v^{-1-sigma}` on `(0, c)`; only `[ρ, c)` is ever charged.
    PowerLaw { scale: f64, sigma: f64 },
    /// Piecewise-linear density through `(v, density)` points spanning `[ρ, c]`.
    Table { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureConfig {
    pub outer_radius: f64,
    pub inner_cutoff: f64,
    pub density: LevyDensity,
}

/// Lévy measure on `E = B_c(0) \ {0}` restricted to marks in `[ρ, c)`, where
/// the jump coefficient is allowed to be non-zero. The restriction has finite
/// mass `Λ`, so jumps form a compound Poisson stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyMeasureConfig", into = "LevyMeasureConfig")]
pub struct LevyMeasureSpec {
    config: LevyMeasureConfig,
    mass: f64,
    levy_integral: f64,
    /// Monotone CDF samples on a uniform mark grid, tabulated family only.
    cdf_table: Vec<f64>,
}

impl From<LevyMeasureSpec> for LevyMeasureConfig {
    fn from(spec: LevyMeasureSpec) -> Self {
        spec.config
    }
}

impl TryFrom<LevyMeasureConfig> for LevyMeasureSpec {
    type Error = NoiseError;

    fn try_from(config: LevyMeasureConfig) -> Result<Self, Self::Error> {
        Self::new(config)
    }
}

impl LevyMeasureSpec {
    pub fn new(config: LevyMeasureConfig) -> Result<Self, NoiseError> {
        let c = config.outer_radius;
        let rho = config.inner_cutoff;
        if !(c > 0.0) || !c.is_finite() {
            return Err(NoiseError::InvalidMeasure(format!("outer radius {c} must be positive")));
        }
        if !(rho > 0.0 && rho < c) {
            return Err(NoiseError::InvalidMeasure(format!(
                "inner cutoff {rho} must lie in (0, {c})"
            )));
        }
        let mut spec = Self {
            config,
            mass: 0.0,
            levy_integral: 0.0,
            cdf_table: Vec::new(),
        };
        match &spec.config.density {
            LevyDensity::Uniform { mass } => {
                if !(*mass >= 0.0) || !mass.is_finite() {
                    return Err(NoiseError::InvalidMeasure(format!(
                        "mass {mass} must be finite and non-negative"
                    )));
                }
            }
            LevyDensity::PowerLaw { scale, sigma } => {
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return Err(NoiseError::InvalidMeasure(format!(
                        "scale {scale} must be finite and non-negative"
                    )));
                }
                if !(*sigma < 2.0) {
                    return Err(NoiseError::NotLevy(format!(
                        "power-law index {sigma} ≥ 2 makes ∫(1∧|v|²)ν(dv) diverge at the origin"
                    )));
                }
            }
            LevyDensity::Table { points } => {
                if points.len() < 2 {
                    return Err(NoiseError::InvalidMeasure("density table needs two points".into()));
                }
                if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(NoiseError::InvalidMeasure("table abscissae must increase".into()));
                }
                if points.iter().any(|p| !(p[1] >= 0.0) || !p[1].is_finite()) {
                    return Err(NoiseError::InvalidMeasure(
                        "table densities must be finite and non-negative".into(),
                    ));
                }
                if points[0][0] > rho || points[points.len() - 1][0] < c {
                    return Err(NoiseError::InvalidMeasure(format!("table must span [{rho}, {c}]")));
                }
            }
        }
        spec.mass = spec.mass_between(rho, c);
        if !spec.mass.is_finite() {
            return Err(NoiseError::InvalidMeasure("effective mass is not finite".into()));
        }
        spec.levy_integral = spec.compute_levy_integral();
        if !spec.levy_integral.is_finite() {
            return Err(NoiseError::NotLevy("∫(1∧|v|²)ν(dv) is not finite".into()));
        }
        if let LevyDensity::Table { .. } = spec.config.density {
            spec.cdf_table = spec.build_cdf_table();
        }
        Ok(spec)
    }

    pub fn uniform(inner_cutoff: f64, outer_radius: f64, mass: f64) -> Result<Self, NoiseError> {
        Self::new(LevyMeasureConfig {
            outer_radius,
            inner_cutoff,
            density: LevyDensity::Uniform { mass },
        })
    }

    pub fn power_law(inner_cutoff: f64, outer_radius: f64, scale: f64, sigma: f64) -> Result<Self, NoiseError> {
        Self::new(LevyMeasureConfig {
            outer_radius,
            inner_cutoff,
            density: LevyDensity::PowerLaw { scale, sigma },
        })
    }

    pub fn config(&self) -> &LevyMeasureConfig {
        &self.config
    }

    pub fn inner_cutoff(&self) -> f64 {
        self.config.inner_cutoff
    }

    pub fn outer_radius(&self) -> f64 {
        self.config.outer_radius
    }

    /// `Λ = ν([ρ, c))`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `∫_E (1 ∧ |v|²) ν(dv)` of the measure on all of `E`.
    pub fn levy_integral(&self) -> f64 {
        self.levy_integral
    }

    pub fn density(&self, v: f64) -> f64 {
        let (rho, c) = (self.inner_cutoff(), self.outer_radius());
        match &self.config.density {
            LevyDensity::Uniform { mass } => {
                if (rho..c).contains(&v) {
                    mass / (c - rho)
                } else {
                    0.0
                }
            }
            LevyDensity::PowerLaw { scale, sigma } => {
                if v > 0.0 && v < c {
                    scale * v.powf(-1.0 - sigma)
                } else {
                    0.0
                }
            }
            LevyDensity::Table { points } => {
                if !(rho..c).contains(&v) {
                    return 0.0;
                }
                let k = points.partition_point(|p| p[0] <= v).clamp(1, points.len() - 1);
                let (a, b) = (points[k - 1], points[k]);
                a[1] + (b[1] - a[1]) * (v - a[0]) / (b[0] - a[0])
            }
        }
    }

    /// `ν([a, b) ∩ [ρ, c))`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let (rho, c) = (self.inner_cutoff(), self.outer_radius());
        let (a, b) = (a.max(rho), b.min(c));
        if !(b > a) {
            return 0.0;
        }
        match &self.config.density {
            LevyDensity::Uniform { mass } => mass * (b - a) / (c - rho),
            LevyDensity::PowerLaw { scale, sigma } => scale * power_antiderivative(*sigma, a, b),
            LevyDensity::Table { .. } => self.integrate_on(a, b, |_| 1.0),
        }
    }

    /// `∫_{[ρ,c)} ψ(v) ν(dv)` by composite Gauss-Legendre.
    pub fn integrate<F: Fn(f64) -> f64>(&self, psi: F) -> f64 {
        self.integrate_on(self.inner_cutoff(), self.outer_radius(), psi)
    }

    fn integrate_on<F: Fn(f64) -> f64>(&self, a: f64, b: f64, psi: F) -> f64 {
        let gl = GaussLegendre::new(8);
        let breaks: Vec<f64> = match &self.config.density {
            LevyDensity::Table { points } => {
                let mut br: Vec<f64> = std::iter::once(a)
                    .chain(points.iter().map(|p| p[0]).filter(|&v| v > a && v < b))
                    .chain(std::iter::once(b))
                    .collect();
                br.dedup();
                br
            }
            // Geometric cells resolve the power-law density near the cutoff.
            _ => {
                let cells = 32;
                (0..=cells).map(|j| a * (b / a).powf(j as f64 / cells as f64)).collect()
            }
        };
        breaks
            .windows(2)
            .map(|w| gl.integrate(w[0], w[1], |v| psi(v) * self.density(v)))
            .sum()
    }

    fn compute_levy_integral(&self) -> f64 {
        let c = self.outer_radius();
        match &self.config.density {
            LevyDensity::PowerLaw { scale, sigma } => {
                let near = c.min(1.0);
                let mut total = scale * near.powf(2.0 - sigma) / (2.0 - sigma);
                if c > 1.0 {
                    total += scale * power_antiderivative(*sigma, 1.0, c);
                }
                total
            }
            _ => {
                let (rho, c) = (self.inner_cutoff(), self.outer_radius());
                let split = 1.0f64.clamp(rho, c);
                self.integrate_on(rho, split, |v| v * v) + self.integrate_on(split, c, |_| 1.0)
            }
        }
    }

    fn build_cdf_table(&self) -> Vec<f64> {
        let (rho, c) = (self.inner_cutoff(), self.outer_radius());
        let n = INVERSE_CDF_POINTS;
        let h = (c - rho) / (n - 1) as f64;
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..n {
            let a = rho + (i - 1) as f64 * h;
            acc += self.integrate_on(a, a + h, |_| 1.0);
            cdf.push(acc);
        }
        let total = acc;
        for v in cdf.iter_mut() {
            *v = if total > 0.0 { *v / total } else { 0.0 };
        }
        // Monotone by construction; pin the ends.
        cdf[n - 1] = 1.0;
        cdf
    }

    /// Mark with CDF value `u ∈ [0, 1)` under `ν` normalized on `[ρ, c)`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (rho, c) = (self.inner_cutoff(), self.outer_radius());
        let v = match &self.config.density {
            LevyDensity::Uniform { .. } => rho + u * (c - rho),
            LevyDensity::PowerLaw { sigma, .. } => {
                if *sigma == 0.0 {
                    rho * (c / rho).powf(u)
                } else {
                    let (ra, ca) = (rho.powf(-sigma), c.powf(-sigma));
                    (ra - u * (ra - ca)).powf(-1.0 / sigma)
                }
            }
            LevyDensity::Table { .. } => {
                let t = &self.cdf_table;
                let h = (c - rho) / (t.len() - 1) as f64;
                let k = t.partition_point(|&p| p <= u).clamp(1, t.len() - 1);
                let (lo, hi) = (t[k - 1], t[k]);
                let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
                rho + ((k - 1) as f64 + frac) * h
            }
        };
        v.clamp(rho, c.next_down())
    }
}

fn power_antiderivative(sigma: f64, a: f64, b: f64) -> f64 {
    if sigma == 0.0 {
        (b / a).ln()
    } else {
        (a.powf(-sigma) - b.powf(-sigma)) / sigma
    }
}
