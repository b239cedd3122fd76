//! Experiment configuration in TOML.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heat_kernel::GridSpec;
use crate::levy_noise::{Grading, LevyDensity, LevyMeasureConfig, LevyMeasureSpec, TimeGrid};
use crate::mild_solution::{Coefficients, FieldSpec, HolderField, MarkFactor};
use crate::regularity::{gamma, Pathway, MC_TIME_STEPS};
use crate::stochastic_integrals::MomentKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("could not serialize configuration: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Isometry,
    Mild,
    GradientMoment,
    Picard,
    Exponent,
    Optimality,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Isometry,
        ExperimentKind::Mild,
        ExperimentKind::GradientMoment,
        ExperimentKind::Picard,
        ExperimentKind::Exponent,
        ExperimentKind::Optimality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Isometry => "isometry",
            ExperimentKind::Mild => "mild",
            ExperimentKind::GradientMoment => "gradient-moment",
            ExperimentKind::Picard => "picard",
            ExperimentKind::Exponent => "exponent",
            ExperimentKind::Optimality => "optimality",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dim: usize,
    pub half_width: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "uniform")]
    pub grading: Grading,
}

fn uniform() -> Grading {
    Grading::Uniform
}

/// One row of the isometry suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub kind: MomentKind,
    pub breakpoints: Vec<f64>,
    /// Wiener integrands: one value per time interval. Poisson integrands:
    /// one row per time interval, one value per mark cell.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mark_cells: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mark_values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IsometrySection {
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MildSection {
    /// Evaluation time; defaults to the time horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default)]
    pub path_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMomentSection {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
    #[serde(default = "default_points_per_sigma")]
    pub points_per_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub path_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSection {
    pub t: f64,
    pub anchor: Vec<f64>,
    #[serde(default)]
    pub axis: usize,
    pub k_min: u32,
    pub k_max: u32,
    #[serde(default = "default_fit_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub pathway: Pathway,
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
    #[serde(default = "default_points_per_sigma")]
    pub points_per_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalitySection {
    pub t: f64,
    pub deltas: Vec<f64>,
    #[serde(default = "default_opt_kmin")]
    pub k_min: u32,
    #[serde(default = "default_opt_kmax")]
    pub k_max: u32,
    #[serde(default = "default_fit_tolerance")]
    pub tolerance: f64,
    /// Mark shape of the jump variant; `None` skips it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_shape: Option<MarkFactor>,
    #[serde(default = "default_points_per_sigma")]
    pub points_per_sigma: f64,
}

fn default_time_steps() -> usize {
    MC_TIME_STEPS
}

fn default_points_per_sigma() -> f64 {
    32.0
}

fn default_tol() -> f64 {
    1e-4
}

fn default_max_iterations() -> usize {
    20
}

fn default_fit_tolerance() -> f64 {
    0.05
}

fn default_opt_kmin() -> u32 {
    1
}

fn default_opt_kmax() -> u32 {
    9
}

pub const DEFAULT_PATHS: usize = 100_000;

fn default_paths() -> usize {
    DEFAULT_PATHS
}

/// Everything needed to run one experiment. Sections left out are filled by
/// [`ExperimentConfig::resolved`] with the defaults of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy: Option<LevyMeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<HolderField>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry: Option<IsometrySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mild: Option<MildSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_moment: Option<GradientMomentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimality: Option<OptimalitySection>,
}

/// Spacing `2^-12`: dyadic offsets and field kinks then fall on lattice nodes.
const FINE_DX: f64 = 1.0 / 4096.0;

fn capped(alpha: f64) -> HolderField {
    HolderField::capped_power(alpha)
}

impl ExperimentConfig {
    /// A config with only the experiment name set.
    pub fn minimal(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            paths: DEFAULT_PATHS,
            out: None,
            p: None,
            alpha: None,
            beta: None,
            grid: None,
            time: None,
            levy: None,
            coefficients: None,
            drift: None,
            isometry: None,
            mild: None,
            gradient_moment: None,
            picard: None,
            exponent: None,
            optimality: None,
        }
    }

    /// Copy with every section the experiment uses filled in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let alpha = c.alpha.unwrap_or(match c.experiment {
            ExperimentKind::Picard => 0.6,
            _ => 0.5,
        });
        c.alpha.get_or_insert(alpha);
        c.p.get_or_insert(2.0);
        c.beta.get_or_insert(0.3);
        let fine = GridConfig {
            dim: 1,
            half_width: 3.0,
            dx: FINE_DX,
        };
        let coarse = GridConfig {
            dim: 1,
            half_width: 3.0,
            dx: 0.05,
        };
        let uniform_levy = LevyMeasureConfig {
            outer_radius: 1.0,
            inner_cutoff: 0.5,
            density: LevyDensity::Uniform { mass: 2.0 },
        };
        match c.experiment {
            ExperimentKind::Isometry => {
                c.time.get_or_insert(TimeConfig {
                    horizon: 1.0,
                    steps: 2,
                    grading: Grading::Uniform,
                });
                c.levy.get_or_insert(uniform_levy);
                let section = c.isometry.get_or_insert_with(IsometrySection::default);
                if section.checks.is_empty() {
                    section.checks = default_checks();
                }
            }
            ExperimentKind::Mild => {
                c.grid.get_or_insert(coarse);
                c.time.get_or_insert(TimeConfig {
                    horizon: 0.25,
                    steps: 64,
                    grading: Grading::Uniform,
                });
                c.coefficients
                    .get_or_insert_with(|| Coefficients::zero().with_f(capped(alpha)));
                c.mild.get_or_insert_with(MildSection::default);
            }
            ExperimentKind::GradientMoment => {
                c.grid.get_or_insert(fine);
                c.coefficients
                    .get_or_insert_with(|| Coefficients::zero().with_f(capped(alpha)));
                c.gradient_moment.get_or_insert(GradientMomentSection {
                    t: 0.25,
                    x: vec![1.0 / 16.0],
                    y: vec![0.0],
                    time_steps: default_time_steps(),
                    points_per_sigma: default_points_per_sigma(),
                });
            }
            ExperimentKind::Picard => {
                c.grid.get_or_insert(coarse);
                c.time.get_or_insert(TimeConfig {
                    horizon: 0.2,
                    steps: 64,
                    grading: Grading::Uniform,
                });
                c.coefficients
                    .get_or_insert_with(|| Coefficients::zero().with_f(capped(alpha)));
                let beta = c.beta.unwrap_or(0.3);
                c.drift
                    .get_or_insert_with(|| vec![HolderField::new(FieldSpec::CappedAbsPower { beta, scale: 0.5 })]);
                c.picard.get_or_insert(PicardSection {
                    tol: default_tol(),
                    max_iterations: default_max_iterations(),
                    path_index: 0,
                });
            }
            ExperimentKind::Exponent => {
                c.grid.get_or_insert(fine);
                c.coefficients
                    .get_or_insert_with(|| Coefficients::zero().with_f(capped(alpha)));
                c.exponent.get_or_insert(ExponentSection {
                    t: 0.25,
                    anchor: vec![0.0],
                    axis: 0,
                    k_min: 3,
                    k_max: 10,
                    tolerance: default_fit_tolerance(),
                    pathway: Pathway::Exact,
                    time_steps: default_time_steps(),
                    points_per_sigma: default_points_per_sigma(),
                });
            }
            ExperimentKind::Optimality => {
                c.grid.get_or_insert(fine);
                c.levy.get_or_insert(uniform_levy);
                c.optimality.get_or_insert(OptimalitySection {
                    t: 0.25,
                    deltas: vec![alpha, 0.7],
                    k_min: default_opt_kmin(),
                    k_max: default_opt_kmax(),
                    tolerance: default_fit_tolerance(),
                    jump_shape: Some(MarkFactor::Power {
                        scale: 1.0,
                        exponent: 1.0,
                    }),
                    points_per_sigma: default_points_per_sigma(),
                });
            }
        }
        c
    }

    pub fn grid_spec(&self) -> Option<Result<GridSpec, String>> {
        self.grid
            .map(|g| GridSpec::covering(g.dim, g.half_width, g.dx).map_err(|e| e.to_string()))
    }

    pub fn time_grid(&self) -> Option<Result<TimeGrid, String>> {
        self.time
            .map(|t| TimeGrid::new(t.horizon, t.steps, t.grading).map_err(|e| e.to_string()))
    }

    pub fn levy_spec(&self) -> Option<Result<LevyMeasureSpec, String>> {
        self.levy
            .clone()
            .map(|l| LevyMeasureSpec::new(l).map_err(|e| e.to_string()))
    }

    /// Largest time the experiment evaluates at.
    pub fn max_time(&self) -> Option<f64> {
        match self.experiment {
            ExperimentKind::GradientMoment => self.gradient_moment.as_ref().map(|s| s.t),
            ExperimentKind::Exponent => self.exponent.as_ref().map(|s| s.t),
            ExperimentKind::Optimality => self.optimality.as_ref().map(|s| s.t),
            _ => self.time.map(|t| t.horizon),
        }
    }

    /// Every invariant violation of the resolved config.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let grid = match self.grid_spec() {
            Some(Ok(g)) => Some(g),
            Some(Err(e)) => {
                v.push(format!("grid: {e}"));
                None
            }
            None => None,
        };
        if let Some(Err(e)) = self.time_grid() {
            v.push(format!("time: {e}"));
        }
        if let Some(Err(e)) = self.levy_spec() {
            v.push(format!("levy: {e}"));
        }
        if let (Some(g), Some(t)) = (grid, self.max_time()) {
            if let Err(e) = g.check_horizon(t) {
                v.push(format!("grid: {e}"));
            }
        }
        if self.paths == 0 {
            v.push("paths must be positive".into());
        }
        let (p, alpha, beta) = (
            self.p.unwrap_or(2.0),
            self.alpha.unwrap_or(0.5),
            self.beta.unwrap_or(0.3),
        );
        let g = gamma(alpha, p);
        if matches!(
            self.experiment,
            ExperimentKind::Exponent | ExperimentKind::Picard | ExperimentKind::Optimality
        ) {
            if !(p >= 2.0) {
                v.push(format!("p = {p} must be at least 2"));
            }
            if !(g > 0.0) {
                v.push(format!(
                    "gamma = alpha + 2/p − 1 must be positive (alpha = {alpha}, p = {p}, gamma = {g})"
                ));
            }
        }
        if self.experiment == ExperimentKind::Picard && !(beta > 0.0 && beta < g) {
            v.push(format!("beta = {beta} must lie in (0, gamma = {g})"));
        }
        if self.experiment == ExperimentKind::Picard {
            if let (Some(d), Some(g)) = (&self.drift, grid) {
                if d.len() != g.dim() {
                    v.push(format!("drift has {} components for dimension {}", d.len(), g.dim()));
                }
            }
        }
        if let Some(c) = &self.coefficients {
            if c.g.is_some() && self.levy.is_none() {
                v.push("coefficients.g needs a [levy] section".into());
            }
        }
        if self.experiment == ExperimentKind::Optimality {
            if let Some(o) = &self.optimality {
                if let Some(&d) = o.deltas.iter().find(|&&d| d < alpha) {
                    v.push(format!("optimality delta = {d} is below alpha = {alpha}"));
                }
                if o.jump_shape.is_some() && self.levy.is_none() {
                    v.push("optimality jump variant needs a [levy] section".into());
                }
            }
        }
        if self.experiment == ExperimentKind::Exponent {
            if let Some(e) = &self.exponent {
                if e.pathway == Pathway::Exact && p != 2.0 {
                    v.push(format!("exact pathway needs p = 2, got p = {p}"));
                }
                if e.k_min > e.k_max {
                    v.push("exponent.k_min must not exceed exponent.k_max".into());
                }
            }
        }
        v
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }
}

fn default_checks() -> Vec<CheckSpec> {
    let wiener = |kind, breakpoints: Vec<f64>, values: Vec<f64>| CheckSpec {
        kind,
        breakpoints,
        values,
        mark_cells: Vec::new(),
        mark_values: Vec::new(),
    };
    let poisson = |kind, breakpoints: Vec<f64>, mark_cells: Vec<[f64; 2]>, mark_values: Vec<Vec<f64>>| CheckSpec {
        kind,
        breakpoints,
        values: Vec::new(),
        mark_cells,
        mark_values,
    };
    vec![
        wiener(MomentKind::ItoIsometry, vec![0.0, 1.0], vec![1.0]),
        wiener(MomentKind::ItoIsometry, vec![0.0, 0.5, 1.0], vec![1.0, 2.0]),
        wiener(MomentKind::ItoP4Bound, vec![0.0, 1.0], vec![1.0]),
        poisson(
            MomentKind::PoissonIsometry,
            vec![0.0, 1.0],
            vec![[0.5, 1.0]],
            vec![vec![1.0]],
        ),
        poisson(
            MomentKind::PoissonIsometry,
            vec![0.0, 0.5, 1.0],
            vec![[0.5, 0.75], [0.75, 1.0]],
            vec![vec![1.0, -1.0], vec![0.5, 2.0]],
        ),
        poisson(
            MomentKind::PoissonP4Bound,
            vec![0.0, 1.0],
            vec![[0.5, 1.0]],
            vec![vec![1.0]],
        ),
    ]
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses, fills defaults and validates.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let violations = raw.resolved().violations();
    if violations.is_empty() {
        Ok(raw)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}
