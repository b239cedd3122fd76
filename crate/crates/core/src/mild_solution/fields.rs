//! Coefficient fields with declared Hölder metadata.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MildError;
use crate::heat_kernel::GridSpec;
use crate::levy_noise::LevyMeasureSpec;

/// Spatial profile of a coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FieldSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + Σ slope_i x_i`.
    Linear {
        slope: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `scale · min((x_axis)₊^alpha, 1)`.
    CappedPower {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        axis: usize,
    },
    /// `scale · min(|x|^beta, 1)` with the Euclidean norm.
    CappedAbsPower {
        beta: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `amplitude · exp(-|x - center|² / (2 width²))`.
    GaussianBump {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `amplitude · sin(frequency · x_axis + phase)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        axis: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FieldSpec::Zero => 0.0,
            FieldSpec::Constant { value } => *value,
            FieldSpec::Linear { slope, offset } => offset + slope.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>(),
            FieldSpec::CappedPower { alpha, scale, axis } => {
                let z = x.get(*axis).copied().unwrap_or(0.0);
                if z <= 0.0 {
                    0.0
                } else {
                    scale * z.powf(*alpha).min(1.0)
                }
            }
            FieldSpec::CappedAbsPower { beta, scale } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    0.0
                } else {
                    scale * r.powf(*beta).min(1.0)
                }
            }
            FieldSpec::GaussianBump {
                amplitude,
                width,
                center,
            } => {
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| (xi - center.get(i).copied().unwrap_or(0.0)).powi(2))
                    .sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            FieldSpec::Sine {
                amplitude,
                frequency,
                phase,
                axis,
            } => amplitude * (frequency * x.get(*axis).copied().unwrap_or(0.0) + phase).sin(),
        }
    }

    /// True when the field is the same constant everywhere.
    pub fn is_constant(&self) -> bool {
        match self {
            FieldSpec::Zero | FieldSpec::Constant { .. } => true,
            FieldSpec::Linear { slope, .. } => slope.iter().all(|&s| s == 0.0),
            FieldSpec::CappedPower { scale, .. } | FieldSpec::CappedAbsPower { scale, .. } => *scale == 0.0,
            FieldSpec::GaussianBump { amplitude, .. } | FieldSpec::Sine { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldSpec::Zero => true,
            FieldSpec::Constant { value } => *value == 0.0,
            FieldSpec::Linear { offset, .. } => *offset == 0.0 && self.is_constant(),
            _ => self.is_constant(),
        }
    }

    /// Hölder exponent the profile is built around.
    pub fn natural_exponent(&self) -> f64 {
        match self {
            FieldSpec::CappedPower { alpha, .. } => *alpha,
            FieldSpec::CappedAbsPower { beta, .. } => *beta,
            _ => 1.0,
        }
    }

    /// Analytic bound on `[φ]_e` over the box `[-L, L]^d`.
    pub fn natural_seminorm(&self, exponent: f64, dim: usize, half_width: f64) -> f64 {
        let diam = 2.0 * half_width * (dim as f64).sqrt();
        let lip_to_holder = |lip: f64, osc: f64| {
            // |φ(x) - φ(y)| ≤ min(lip·r, osc) ≤ lip^e osc^{1-e} r^e
            lip.powf(exponent) * osc.powf(1.0 - exponent)
        };
        match self {
            FieldSpec::Zero | FieldSpec::Constant { .. } => 0.0,
            FieldSpec::Linear { slope, .. } => {
                let norm = slope.iter().map(|s| s * s).sum::<f64>().sqrt();
                norm * diam.powf(1.0 - exponent)
            }
            FieldSpec::CappedPower { alpha, scale, .. } | FieldSpec::CappedAbsPower { beta: alpha, scale } => {
                if exponent <= *alpha {
                    scale.abs()
                } else {
                    f64::INFINITY
                }
            }
            FieldSpec::GaussianBump { amplitude, width, .. } => {
                let lip = amplitude.abs() / (width * std::f64::consts::E.sqrt());
                lip_to_holder(lip, amplitude.abs())
            }
            FieldSpec::Sine {
                amplitude, frequency, ..
            } => lip_to_holder(amplitude.abs() * frequency.abs(), 2.0 * amplitude.abs()),
        }
    }

    /// Bound on `sup |φ|` over the box `[-L, L]^d`.
    pub fn natural_sup_norm(&self, half_width: f64) -> f64 {
        match self {
            FieldSpec::Zero => 0.0,
            FieldSpec::Constant { value } => value.abs(),
            FieldSpec::Linear { slope, offset } => {
                offset.abs() + half_width * slope.iter().map(|s| s.abs()).sum::<f64>()
            }
            FieldSpec::CappedPower { scale, .. } | FieldSpec::CappedAbsPower { scale, .. } => scale.abs(),
            FieldSpec::GaussianBump { amplitude, .. } | FieldSpec::Sine { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Scalar time modulation `c(t)` of a coefficient `c(t)·φ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeFactor {
    #[default]
    Constant,
    /// `a + b·t`.
    Affine { a: f64, b: f64 },
}

impl TimeFactor {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Constant => 1.0,
            TimeFactor::Affine { a, b } => a + b * t,
        }
    }

    /// `max_{0 ≤ s ≤ T} |c(s)|`.
    pub fn max_abs(&self, horizon: f64) -> f64 {
        self.eval(0.0).abs().max(self.eval(horizon).abs())
    }
}

/// Declared regularity data of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderMeta {
    pub exponent: f64,
    pub seminorm: f64,
    pub sup_norm: f64,
}

/// A coefficient `c(t)·φ(x)` together with its declared Hölder exponent,
/// seminorm and sup-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderField {
    pub spec: FieldSpec,
    #[serde(default)]
    pub time: TimeFactor,
    /// Last time at which the field is defined; `None` means all times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared: Option<HolderMeta>,
}

impl Default for HolderField {
    fn default() -> Self {
        Self::zero()
    }
}

/// Result of comparing declared metadata with grid measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredCheck {
    pub pairs: usize,
    pub empirical_seminorm: f64,
    pub empirical_sup: f64,
    pub declared: HolderMeta,
    pub pass: bool,
}

/// Node pairs sampled by [`HolderField::check_declared`]: this many random
/// pairs plus every dyadic neighbour pair of a sweep of anchors.
pub const CHECK_RANDOM_PAIRS: usize = 1024;

impl HolderField {
    pub fn new(spec: FieldSpec) -> Self {
        Self {
            spec,
            time: TimeFactor::Constant,
            horizon: None,
            declared: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(FieldSpec::Zero)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(FieldSpec::Constant { value })
    }

    /// `min(x₊^alpha, 1)` along the first axis.
    pub fn capped_power(alpha: f64) -> Self {
        Self::new(FieldSpec::CappedPower {
            alpha,
            scale: 1.0,
            axis: 0,
        })
    }

    pub fn with_time(mut self, time: TimeFactor) -> Self {
        self.time = time;
        self
    }

    pub fn with_declared(mut self, meta: HolderMeta) -> Self {
        self.declared = Some(meta);
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.time.eval(t) * self.spec.eval(x)
    }

    pub fn spatial(&self, x: &[f64]) -> f64 {
        self.spec.eval(x)
    }

    pub fn is_zero(&self) -> bool {
        self.spec.is_zero() || self.time == (TimeFactor::Affine { a: 0.0, b: 0.0 })
    }

    pub fn check_horizon(&self, t: f64) -> Result<(), MildError> {
        match self.horizon {
            Some(h) if t > h => Err(MildError::FieldHorizon { field: h, requested: t }),
            _ => Ok(()),
        }
    }

    /// Declared metadata, or the analytic bounds of the profile on the box
    /// and time horizon when nothing was declared.
    pub fn meta(&self, grid: &GridSpec, horizon: f64) -> HolderMeta {
        self.declared.unwrap_or_else(|| {
            let exponent = self.spec.natural_exponent();
            let c = self.time.max_abs(horizon);
            HolderMeta {
                exponent,
                seminorm: c * self.spec.natural_seminorm(exponent, grid.dim(), grid.half_width()),
                sup_norm: c * self.spec.natural_sup_norm(grid.half_width()),
            }
        })
    }

    /// Measures the seminorm and sup-norm on grid nodes over
    /// [`CHECK_RANDOM_PAIRS`] random pairs and the dyadic neighbour pairs of
    /// every `stride`-th node, and compares them with [`Self::meta`].
    pub fn check_declared(&self, grid: &GridSpec, horizon: f64) -> DeclaredCheck {
        let declared = self.meta(grid, horizon);
        let c = self.time.max_abs(horizon);
        let n = grid.len();
        let values: Vec<f64> = (0..n).map(|i| self.spec.eval(&grid.point(i)[..grid.dim()])).collect();
        let empirical_sup = c * values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        let mut pairs = 0;
        let mut consider = |i: usize, j: usize| {
            if i == j {
                return;
            }
            let (p, q) = (grid.point(i), grid.point(j));
            let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            worst = worst.max((values[i] - values[j]).abs() / r.powf(declared.exponent));
            pairs += 1;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f40_1de5);
        for _ in 0..CHECK_RANDOM_PAIRS {
            consider(rng.random_range(0..n), rng.random_range(0..n));
        }
        let per_axis = grid.nodes_per_axis();
        let stride = (per_axis / 64).max(1);
        for i in (0..per_axis).step_by(stride) {
            let mut hop = 1;
            while i + hop < per_axis {
                let (a, b) = if grid.dim() == 1 {
                    (i, i + hop)
                } else {
                    let row = grid.center_index() / per_axis;
                    (row * per_axis + i, row * per_axis + i + hop)
                };
                consider(a, b);
                hop *= 2;
            }
        }
        let empirical_seminorm = c * worst;
        let slack = 1.0 + 1e-9;
        DeclaredCheck {
            pairs,
            empirical_seminorm,
            empirical_sup,
            declared,
            pass: empirical_seminorm <= declared.seminorm * slack && empirical_sup <= declared.sup_norm * slack,
        }
    }
}

/// Mark factor `ψ(v)` of a separable jump coefficient `φ(t,x)·ψ(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkFactor {
    Constant {
        value: f64,
    },
    /// `scale · v^exponent`.
    Power {
        scale: f64,
        exponent: f64,
    },
    /// Piecewise linear through `(v, ψ)` points, constant beyond the ends.
    Table {
        points: Vec<[f64; 2]>,
    },
}

impl MarkFactor {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            MarkFactor::Constant { value } => *value,
            MarkFactor::Power { scale, exponent } => scale * v.abs().powf(*exponent),
            MarkFactor::Table { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                let k = points.partition_point(|p| p[0] <= v);
                if k == 0 {
                    return points[0][1];
                }
                if k == points.len() {
                    return points[k - 1][1];
                }
                let ([a, fa], [b, fb]) = (points[k - 1], points[k]);
                fa + (fb - fa) * (v - a) / (b - a)
            }
        }
    }

    /// `∫ ψ^q dν` over the support of `ν`.
    pub fn moment(&self, q: i32, spec: &LevyMeasureSpec) -> f64 {
        spec.integrate(|v| self.eval(v).powi(q))
    }

    /// The same shape rescaled to unit `L²(ν)` norm.
    pub fn normalized(&self, spec: &LevyMeasureSpec) -> Result<Self, MildError> {
        let norm = self.moment(2, spec).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(MildError::InvalidCoefficient("mark factor has zero L²(ν) norm".into()));
        }
        Ok(match self {
            MarkFactor::Constant { value } => MarkFactor::Constant { value: value / norm },
            MarkFactor::Power { scale, exponent } => MarkFactor::Power {
                scale: scale / norm,
                exponent: *exponent,
            },
            MarkFactor::Table { points } => MarkFactor::Table {
                points: points.iter().map(|&[v, y]| [v, y / norm]).collect(),
            },
        })
    }
}

/// Separable jump coefficient `g(t,x,v) = φ(t,x)·ψ(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpCoefficient {
    pub phi: HolderField,
    pub psi: MarkFactor,
}

/// Random amplitude `h₂(ω)` of the forcing `h₁(t,x)·h₂(ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RandomFactor {
    #[default]
    One,
    Gaussian {
        mean: f64,
        std: f64,
    },
}

impl RandomFactor {
    pub fn second_moment(&self) -> f64 {
        match self {
            RandomFactor::One => 1.0,
            RandomFactor::Gaussian { mean, std } => mean * mean + std * std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Forcing {
    #[serde(default)]
    pub field: HolderField,
    #[serde(default)]
    pub factor: RandomFactor,
}

/// Data `h`, `f`, `g` of the equation without transport term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Coefficients {
    #[serde(default)]
    pub h: Forcing,
    #[serde(default)]
    pub f: HolderField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<JumpCoefficient>,
}

impl Coefficients {
    pub fn zero() -> Self {
        Self {
            h: Forcing {
                field: HolderField::zero(),
                factor: RandomFactor::One,
            },
            f: HolderField::zero(),
            g: None,
        }
    }

    pub fn with_h(mut self, field: HolderField) -> Self {
        self.h.field = field;
        self
    }

    pub fn with_h_factor(mut self, factor: RandomFactor) -> Self {
        self.h.factor = factor;
        self
    }

    pub fn with_f(mut self, field: HolderField) -> Self {
        self.f = field;
        self
    }

    pub fn with_g(mut self, phi: HolderField, psi: MarkFactor) -> Self {
        self.g = Some(JumpCoefficient { phi, psi });
        self
    }

    pub fn check_horizon(&self, t: f64) -> Result<(), MildError> {
        self.h.field.check_horizon(t)?;
        self.f.check_horizon(t)?;
        if let Some(g) = &self.g {
            g.phi.check_horizon(t)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_power_shape() {
        let f = FieldSpec::CappedPower {
            alpha: 0.5,
            scale: 1.0,
            axis: 0,
        };
        assert_eq!(f.eval(&[-1.0]), 0.0);
        assert_eq!(f.eval(&[0.25]), 0.5);
        assert_eq!(f.eval(&[4.0]), 1.0);
        let b = FieldSpec::CappedAbsPower { beta: 0.3, scale: 0.5 };
        assert_eq!(b.eval(&[-2.0]), 0.5);
        assert_eq!(b.eval(&[0.0]), 0.0);
    }

    #[test]
    fn declared_metadata_is_checked_on_grid() {
        let grid = GridSpec::covering(1, 3.0, 0.01).unwrap();
        let honest = HolderField::capped_power(0.5);
        let check = honest.check_declared(&grid, 1.0);
        assert!(check.pass, "{check:?}");
        assert!(check.pairs >= 1000);
        assert!(check.empirical_seminorm > 0.9);
        let lying = HolderField::new(FieldSpec::CappedAbsPower { beta: 0.3, scale: 50.0 }).with_declared(HolderMeta {
            exponent: 0.3,
            seminorm: 0.1,
            sup_norm: 50.0,
        });
        assert!(!lying.check_declared(&grid, 1.0).pass);
    }

    #[test]
    fn natural_bounds_cover_smooth_fields() {
        let grid = GridSpec::covering(2, 2.0, 0.05).unwrap();
        for spec in [
            FieldSpec::Sine {
                amplitude: 2.0,
                frequency: 3.0,
                phase: 0.1,
                axis: 1,
            },
            FieldSpec::GaussianBump {
                amplitude: -1.5,
                width: 0.3,
                center: vec![0.2, -0.1],
            },
            FieldSpec::Linear {
                slope: vec![1.0, -2.0],
                offset: 0.5,
            },
        ] {
            let field = HolderField::new(spec).with_time(TimeFactor::Affine { a: 1.0, b: -0.5 });
            assert!(field.check_declared(&grid, 1.0).pass);
        }
    }

    #[test]
    fn mark_factor_normalization() {
        let spec = LevyMeasureSpec::uniform(0.5, 1.0, 2.0).unwrap();
        let psi = MarkFactor::Power {
            scale: 3.0,
            exponent: 1.0,
        }
        .normalized(&spec)
        .unwrap();
        assert!((psi.moment(2, &spec) - 1.0).abs() < 1e-12);
        let table = MarkFactor::Table {
            points: vec![[0.5, 1.0], [1.0, 2.0]],
        };
        assert_eq!(table.eval(0.75), 1.5);
        assert_eq!(table.eval(2.0), 2.0);
    }

    #[test]
    fn horizon_is_enforced() {
        let f = HolderField::constant(1.0).with_horizon(0.5);
        assert!(f.check_horizon(0.4).is_ok());
        assert!(matches!(f.check_horizon(0.6), Err(MildError::FieldHorizon { .. })));
    }
}
