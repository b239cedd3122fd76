use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::{stream, PathSeed, Purpose};
use super::{LevyMeasureSpec, NoiseError, TimeGrid};

/// One jump of the Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// Independent Gaussian increments `ΔW_j ~ N(0, t_{j+1} - t_j)`.
pub fn sample_wiener(grid: &TimeGrid, seed: PathSeed) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Wiener);
    (0..grid.steps())
        .map(|j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            grid.step_length(j).sqrt() * z
        })
        .collect()
}

/// Jumps on `(0, T]`: Poisson(ΛT) many, uniform times, marks from `ν/Λ`,
/// sorted by time.
pub fn sample_jumps(horizon: f64, spec: &LevyMeasureSpec, seed: PathSeed) -> Vec<JumpEvent> {
    let intensity = spec.mass() * horizon;
    if !(intensity > 0.0) {
        return Vec::new();
    }
    let mut count_rng = stream(seed, Purpose::JumpCount);
    let count = Poisson::new(intensity)
        .map(|p| p.sample(&mut count_rng) as usize)
        .unwrap_or(0);
    let mut time_rng = stream(seed, Purpose::JumpTimes);
    let mut times: Vec<f64> = (0..count).map(|_| horizon * (1.0 - time_rng.random::<f64>())).collect();
    times.sort_by(f64::total_cmp);
    let mut mark_rng = stream(seed, Purpose::Marks);
    times
        .into_iter()
        .map(|time| JumpEvent {
            time,
            mark: spec.inverse_cdf(mark_rng.random::<f64>()),
        })
        .collect()
}

/// Wiener increments and jump events of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: Arc<TimeGrid>,
    increments: Vec<f64>,
    jumps: Vec<JumpEvent>,
    seed: PathSeed,
}

impl NoisePath {
    pub fn sample(grid: Arc<TimeGrid>, levy: Option<&LevyMeasureSpec>, seed: PathSeed) -> Self {
        let increments = sample_wiener(&grid, seed);
        let jumps = levy
            .map(|spec| sample_jumps(grid.horizon(), spec, seed))
            .unwrap_or_default();
        Self {
            grid,
            increments,
            jumps,
            seed,
        }
    }

    pub fn from_parts(
        grid: Arc<TimeGrid>,
        increments: Vec<f64>,
        jumps: Vec<JumpEvent>,
        seed: PathSeed,
    ) -> Result<Self, NoiseError> {
        if increments.len() != grid.steps() {
            return Err(NoiseError::InvalidPath(format!(
                "{} increments for {} steps",
                increments.len(),
                grid.steps()
            )));
        }
        if jumps.windows(2).any(|w| !(w[1].time > w[0].time))
            || jumps.iter().any(|j| !(j.time > 0.0 && j.time <= grid.horizon()))
        {
            return Err(NoiseError::InvalidPath(
                "jump times must be increasing in (0, T]".into(),
            ));
        }
        Ok(Self {
            grid,
            increments,
            jumps,
            seed,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<TimeGrid> {
        Arc::clone(&self.grid)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn jumps(&self) -> &[JumpEvent] {
        &self.jumps
    }

    pub fn seed(&self) -> PathSeed {
        self.seed
    }

    /// `W_{t_b} - W_{t_a}` for node indices `a ≤ b`.
    pub fn wiener_between(&self, a: usize, b: usize) -> f64 {
        self.increments[a..b].iter().sum()
    }

    /// Number of jumps with time in `(s, t]`.
    pub fn jump_count(&self, s: f64, t: f64) -> usize {
        self.jumps.iter().filter(|j| j.time > s && j.time <= t).count()
    }

    /// Per-cell compensated jump sums `Σ_{τ_k ∈ cell j} ψ(v_k) - Δ_j ∫ψ dν`.
    pub fn compensated_increments<F: Fn(f64) -> f64>(&self, psi: F, spec: &LevyMeasureSpec) -> Vec<f64> {
        let compensator_rate = spec.integrate(&psi);
        let mut out: Vec<f64> = (0..self.grid.steps())
            .map(|j| -self.grid.step_length(j) * compensator_rate)
            .collect();
        let mut raw = vec![0.0; out.len()];
        for jump in &self.jumps {
            if let Some(j) = self.grid.cell_of(jump.time) {
                raw[j] += psi(jump.mark);
            }
        }
        for (o, r) in out.iter_mut().zip(raw) {
            *o += r;
        }
        out
    }
}

/// Draws [`NoisePath`]s sharing a time grid and a master seed.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    grid: Arc<TimeGrid>,
    levy: Option<LevyMeasureSpec>,
    master: u64,
}

impl NoiseSampler {
    pub fn new(grid: TimeGrid, levy: Option<LevyMeasureSpec>, master: u64) -> Self {
        Self {
            grid: Arc::new(grid),
            levy,
            master,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn levy(&self) -> Option<&LevyMeasureSpec> {
        self.levy.as_ref()
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn path(&self, index: u64) -> NoisePath {
        NoisePath::sample(
            Arc::clone(&self.grid),
            self.levy.as_ref(),
            PathSeed::new(self.master, index),
        )
    }
}

/// Per-path random factor `h₂(ω)` of a forcing `h₁(t,x)·h₂(ω)`, standard normal
/// scaled by `std` and shifted by `mean`.
pub fn forcing_factor(seed: PathSeed, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let z: f64 = StandardNormal.sample(&mut stream(seed, Purpose::ForcingFactor));
    mean + std * z
}
