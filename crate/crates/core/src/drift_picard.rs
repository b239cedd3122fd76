//! Transport term `b·∇u` by fixed-point iteration of the mild-solution map
//! on short time windows.
//!
//! The solution is split as `u = U₀ + D`, where `U₀` is the mild solution
//! without transport term (computed directly from time zero) and `D` collects
//! the transport forcing. On a window `[t_a, t_b]` the map `S` sends an
//! iterate `u₁` to `U₀ + D` with
//!
//! `D(t_i) = P_{t_i-t_a} D(t_a) + Σ_{j=a+1}^{i} P_{t_i-t_{j-1}} [b(t_j)·∇u₁(t_j)] Δ_j`.
//!
//! The forcing is taken at the right end of each cell, so `S` is implicit on
//! the window and its contraction constant grows with the window length.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heat_kernel::{apply_semigroup_with_gradient, GridField, GridSpec, KernelError};
use crate::levy_noise::{LevyMeasureSpec, NoisePath};
use crate::mild_solution::{
    grid_points, Coefficients, HolderField, MildError, MildPlan, PlanOptions, PointTerms, SolutionSample, TermField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error(transparent)]
    Mild(#[from] MildError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("drift has {got} components, grid dimension is {expected}")]
    DriftDimension { expected: usize, got: usize },
    #[error("transport iteration needs a uniform path time grid")]
    NonUniformGrid,
    #[error("iterate for the window is missing gradient data or nodes")]
    MissingGradient,
    #[error(
        "no contraction on the window starting at t = {start}: shrank to {cells} cell(s), \
         minimum is {min_cells}"
    )]
    NonConvergence {
        start: f64,
        cells: usize,
        min_cells: usize,
        log: Vec<ConvergenceRecord>,
    },
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub window: usize,
    pub cells: usize,
    pub iterate: usize,
    pub distance: f64,
    pub ratio: Option<f64>,
    pub probe: bool,
}

/// Summary of one accepted window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub cells: usize,
    pub iterations: usize,
    pub residual: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Sup-distance below which an iterate is accepted.
    pub tol: f64,
    /// Iterates per window before the window is halved.
    pub max_iterations: usize,
    /// Smallest window as a fraction of the horizon; never below one cell.
    pub min_window_fraction: f64,
    /// Contraction ratio the window probe must reach.
    pub probe_ratio: f64,
    pub plan: PlanOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iterations: 20,
            min_window_fraction: 2f64.powi(-16),
            probe_ratio: 0.5,
            plan: PlanOptions::default(),
        }
    }
}

/// Iterates of one window, indexed from the window start node.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardState {
    pub start: usize,
    pub cells: usize,
    pub iterate: usize,
    pub current: Vec<TermField>,
    /// Transport part `D` of the current iterate.
    pub transport: Vec<TermField>,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Time-indexed solution on every path node.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSolution {
    pub times: Vec<f64>,
    pub u: Vec<TermField>,
    pub drift_part: Vec<TermField>,
    pub windows: Vec<WindowRecord>,
    pub log: Vec<ConvergenceRecord>,
    pub initial_window: WindowEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub candidate_cells: usize,
    pub cells: usize,
    pub length: f64,
    pub ratio: f64,
    /// `(cells, d₃, d₃/d₂)` for every probe run.
    pub probes: Vec<(usize, f64, f64)>,
}

impl WindowEstimate {
    /// Probe runs as convergence records of window 0, iterate 3.
    pub fn probe_log(&self) -> Vec<ConvergenceRecord> {
        self.probes
            .iter()
            .map(|&(cells, distance, ratio)| ConvergenceRecord {
                window: 0,
                cells,
                iterate: 3,
                distance,
                ratio: Some(ratio),
                probe: true,
            })
            .collect()
    }
}

fn max_abs_diff(a: &TermField, b: &TermField) -> f64 {
    let fields = std::iter::once((&a.value, &b.value)).chain(a.gradient.iter().zip(&b.gradient));
    fields
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn distance(a: &[TermField], b: &[TermField]) -> f64 {
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

fn is_zero(field: &TermField) -> bool {
    field.value.values().iter().all(|&v| v == 0.0)
        && field.gradient.iter().all(|g| g.values().iter().all(|&v| v == 0.0))
}

fn add(a: &TermField, b: &TermField) -> TermField {
    let sum = |x: &GridField, y: &GridField| {
        let values = x.values().iter().zip(y.values()).map(|(p, q)| p + q).collect();
        GridField::from_values(*x.grid(), values).expect("same grid")
    };
    TermField {
        value: sum(&a.value, &b.value),
        gradient: a.gradient.iter().zip(&b.gradient).map(|(x, y)| sum(x, y)).collect(),
    }
}

fn axpy(acc: &mut TermField, s: f64, value: &GridField, gradient: &[GridField]) {
    for (o, v) in acc.value.values_mut().iter_mut().zip(value.values()) {
        *o += s * v;
    }
    for (og, g) in acc.gradient.iter_mut().zip(gradient) {
        for (o, v) in og.values_mut().iter_mut().zip(g.values()) {
            *o += s * v;
        }
    }
}

fn semigroup(tau: f64, field: &TermField) -> Result<TermField, KernelError> {
    if is_zero(field) {
        return Ok(field.clone());
    }
    let (value, gradient) = apply_semigroup_with_gradient(tau, &field.value)?;
    Ok(TermField {
        value,
        gradient: gradient.unwrap_or_else(|| field.gradient.clone()),
    })
}

/// Noise path, data and the precomputed solution `U₀` without transport term.
#[derive(Debug, Clone)]
pub struct DriftContext {
    coeffs: Coefficients,
    drift: Vec<HolderField>,
    grid: GridSpec,
    times: Vec<f64>,
    base_terms: Vec<Vec<PointTerms>>,
    base: Vec<TermField>,
    seed: crate::levy_noise::PathSeed,
    options: PicardOptions,
}

impl DriftContext {
    pub fn new(
        coeffs: &Coefficients,
        drift: &[HolderField],
        grid: GridSpec,
        path: &NoisePath,
        spec: Option<&LevyMeasureSpec>,
        options: PicardOptions,
    ) -> Result<Self, DriftError> {
        if drift.len() != grid.dim() {
            return Err(DriftError::DriftDimension {
                expected: grid.dim(),
                got: drift.len(),
            });
        }
        let pg = path.grid();
        let h0 = pg.step_length(0);
        if (0..pg.steps()).any(|j| (pg.step_length(j) - h0).abs() > 1e-12 * pg.horizon()) {
            return Err(DriftError::NonUniformGrid);
        }
        let times = pg.nodes().to_vec();
        let points = grid_points(&grid);
        let mut base_terms = Vec::with_capacity(times.len());
        let mut base = Vec::with_capacity(times.len());
        for &t in &times {
            let terms = if t == 0.0 {
                vec![PointTerms::default(); points.len()]
            } else {
                MildPlan::new(t, coeffs, &points, &grid, pg, spec, options.plan)?.apply(path)?
            };
            let totals: Vec<[f64; 3]> = terms.iter().map(PointTerms::total).collect();
            base.push(term_from(&grid, &totals));
            base_terms.push(terms);
        }
        Ok(Self {
            coeffs: coeffs.clone(),
            drift: drift.to_vec(),
            grid,
            times,
            base_terms,
            base,
            seed: path.seed(),
            options,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn cells(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `U₀` at node `i`.
    pub fn base(&self, i: usize) -> &TermField {
        &self.base[i]
    }

    pub fn drift_is_zero(&self) -> bool {
        self.drift.iter().all(HolderField::is_zero)
    }

    /// `Σ_k (sup|b_k| + [b_k])` from the declared (or natural) metadata.
    pub fn drift_norm(&self) -> f64 {
        self.drift
            .iter()
            .map(|b| {
                let m = b.meta(&self.grid, self.horizon());
                m.sup_norm + m.seminorm
            })
            .sum()
    }

    pub fn min_cells(&self) -> usize {
        let by_fraction = (self.options.min_window_fraction * self.cells() as f64).ceil() as usize;
        by_fraction.max(1)
    }

    fn zero_state(&self) -> TermField {
        TermField::zeros(self.grid)
    }

    /// `b(t)·∇u` on the grid, or `None` when identically zero.
    fn forcing(&self, t: f64, u: &TermField) -> Option<GridField> {
        let dim = self.grid.dim();
        let mut values = vec![0.0; self.grid.len()];
        for (k, b) in self.drift.iter().enumerate().take(dim) {
            if b.is_zero() {
                continue;
            }
            for (idx, v) in values.iter_mut().enumerate() {
                let p = self.grid.point(idx);
                *v += b.eval(t, &p[..dim]) * u.gradient[k].values()[idx];
            }
        }
        if values.iter().all(|&v| v == 0.0) {
            None
        } else {
            Some(GridField::from_values(self.grid, values).expect("one value per node"))
        }
    }

    /// `S(u₁)` on the window `[t_start, t_{start+cells}]`, given the transport
    /// part `D(t_start)` and its semigroup transports `carried[i] = P_{t_i-t_a} D(t_a)`.
    fn map(&self, start: usize, carried: &[TermField], prev: &[TermField]) -> Result<Vec<TermField>, DriftError> {
        let cells = carried.len() - 1;
        let forcing: Vec<Option<GridField>> = (1..=cells)
            .map(|j| self.forcing(self.times[start + j], &prev[j]))
            .collect();
        let parts: Vec<Result<TermField, DriftError>> = (1..=cells)
            .into_par_iter()
            .map(|i| {
                let ti = self.times[start + i];
                let mut d = carried[i].clone();
                for j in 1..=i {
                    if let Some(fj) = &forcing[j - 1] {
                        let left = self.times[start + j - 1];
                        let (v, g) = apply_semigroup_with_gradient(ti - left, fj)?;
                        let step = self.times[start + j] - left;
                        axpy(&mut d, step, &v, g.as_deref().unwrap_or(&[]));
                    }
                }
                Ok(d)
            })
            .collect();
        let mut out = Vec::with_capacity(cells + 1);
        out.push(carried[0].clone());
        for p in parts {
            out.push(p?);
        }
        Ok(out)
    }

    fn carry(&self, start: usize, cells: usize, initial: &TermField) -> Result<Vec<TermField>, DriftError> {
        (0..=cells)
            .map(|i| Ok(semigroup(self.times[start + i] - self.times[start], initial)?))
            .collect()
    }

    fn totals(&self, start: usize, drift_part: &[TermField]) -> Vec<TermField> {
        drift_part
            .iter()
            .enumerate()
            .map(|(i, d)| add(&self.base[start + i], d))
            .collect()
    }

    /// One application of `S`: the full iterate `u` on the window nodes.
    pub fn picard_step(
        &self,
        start: usize,
        initial: &TermField,
        prev: &[TermField],
    ) -> Result<Vec<TermField>, DriftError> {
        let cells = prev.len().checked_sub(1).ok_or(DriftError::MissingGradient)?;
        if start + cells >= self.times.len() || prev.iter().any(|u| u.gradient.len() != self.grid.dim()) {
            return Err(DriftError::MissingGradient);
        }
        let carried = self.carry(start, cells, initial)?;
        Ok(self.totals(start, &self.map(start, &carried, prev)?))
    }

    fn zero_iterate(&self, cells: usize) -> Vec<TermField> {
        vec![self.zero_state(); cells + 1]
    }

    /// Runs `u₁ = S(0), u₂ = S(u₁), u₃ = S(u₂)` and returns `(d₃, d₃/d₂)`.
    fn probe(&self, start: usize, initial: &TermField, cells: usize) -> Result<(f64, f64), DriftError> {
        let carried = self.carry(start, cells, initial)?;
        let u1 = self.totals(start, &self.map(start, &carried, &self.zero_iterate(cells))?);
        let u2 = self.totals(start, &self.map(start, &carried, &u1)?);
        let u3 = self.totals(start, &self.map(start, &carried, &u2)?);
        let (d2, d3) = (distance(&u2, &u1), distance(&u3, &u2));
        let ratio = if d2 == 0.0 {
            if d3 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d3 / d2
        };
        Ok((d3, ratio))
    }

    /// Window length from `π / (32 ‖b‖² d)`, rounded down to a power-of-two
    /// cell count and capped at the remaining horizon, then halved until two
    /// probe iterations contract by the configured ratio.
    pub fn estimate_window(&self, start: usize, initial: &TermField) -> Result<WindowEstimate, DriftError> {
        let remaining = self.cells() - start;
        let step = self.times[1] - self.times[0];
        let norm = self.drift_norm();
        let candidate_len = if self.drift_is_zero() || norm == 0.0 {
            f64::INFINITY
        } else {
            PI / (32.0 * norm * norm * self.grid.dim() as f64)
        };
        let fit = ((candidate_len / step) * (1.0 + 1e-12))
            .floor()
            .min(remaining as f64)
            .max(1.0) as usize;
        let candidate_cells = 1usize << (usize::BITS - 1 - fit.leading_zeros());
        let mut estimate = WindowEstimate {
            candidate_cells,
            cells: candidate_cells,
            length: candidate_cells as f64 * step,
            ratio: 0.0,
            probes: Vec::new(),
        };
        if self.drift_is_zero() {
            return Ok(estimate);
        }
        let min_cells = self.min_cells();
        let mut cells = candidate_cells.max(min_cells.min(remaining));
        loop {
            let (d3, ratio) = self.probe(start, initial, cells)?;
            estimate.probes.push((cells, d3, ratio));
            if ratio < self.options.probe_ratio {
                estimate.cells = cells;
                estimate.length = cells as f64 * step;
                estimate.ratio = ratio;
                return Ok(estimate);
            }
            if cells / 2 < min_cells {
                return Err(DriftError::NonConvergence {
                    start: self.times[start],
                    cells,
                    min_cells,
                    log: estimate.probe_log(),
                });
            }
            cells /= 2;
        }
    }

    /// Fixed-point iteration on one window from `u = 0`.
    pub fn iterate_window(
        &self,
        start: usize,
        cells: usize,
        initial: &TermField,
        window: usize,
        log: &mut Vec<ConvergenceRecord>,
    ) -> Result<(PicardState, Option<f64>), DriftError> {
        let carried = self.carry(start, cells, initial)?;
        let mut state = PicardState {
            start,
            cells,
            iterate: 0,
            current: self.zero_iterate(cells),
            transport: self.zero_iterate(cells),
            distances: Vec::new(),
            ratios: Vec::new(),
        };
        while state.iterate < self.options.max_iterations {
            let d = self.map(start, &carried, &state.current)?;
            let next = self.totals(start, &d);
            let dist = distance(&next, &state.current);
            state.iterate += 1;
            let ratio = state
                .distances
                .last()
                .map(|&prev| if prev == 0.0 { 0.0 } else { dist / prev });
            log.push(ConvergenceRecord {
                window,
                cells,
                iterate: state.iterate,
                distance: dist,
                ratio,
                probe: false,
            });
            state.distances.push(dist);
            if let Some(r) = ratio {
                state.ratios.push(r);
            }
            state.current = next;
            state.transport = d;
            if dist < self.options.tol && state.iterate >= 2 {
                let residual = distance(
                    &self.totals(start, &self.map(start, &carried, &state.current)?),
                    &state.current,
                );
                return Ok((state, Some(residual)));
            }
            // Ratio of d_{n+1}/d_n with n ≥ 2: past the warm-up iterate.
            if state.iterate >= 3 && ratio.is_some_and(|r| r >= 1.0) {
                break;
            }
        }
        Ok((state, None))
    }

    /// Marches windows over `[0, T₀]`, halving a window whenever its
    /// iteration stops contracting or exhausts the iteration budget.
    pub fn solve(&self) -> Result<DriftSolution, DriftError> {
        let zero = self.zero_state();
        let initial_window = self.estimate_window(0, &zero)?;
        let min_cells = self.min_cells();
        let mut drift_part = vec![zero];
        let mut windows = Vec::new();
        let mut log = initial_window.probe_log();
        let mut start = 0;
        let mut cells = initial_window.cells;
        while start < self.cells() {
            let mut halvings = 0;
            loop {
                let w = cells.min(self.cells() - start);
                let initial = drift_part[start].clone();
                let (state, residual) = self.iterate_window(start, w, &initial, windows.len(), &mut log)?;
                match residual {
                    Some(res) if res < self.options.tol => {
                        windows.push(WindowRecord {
                            index: windows.len(),
                            start: self.times[start],
                            end: self.times[start + w],
                            cells: w,
                            iterations: state.iterate,
                            residual: res,
                            halvings,
                        });
                        drift_part.extend(state.transport.into_iter().skip(1));
                        start += w;
                        break;
                    }
                    _ => {
                        if w / 2 < min_cells {
                            return Err(DriftError::NonConvergence {
                                start: self.times[start],
                                cells: w,
                                min_cells,
                                log,
                            });
                        }
                        cells = w / 2;
                        halvings += 1;
                    }
                }
            }
        }
        let u = self.totals(0, &drift_part);
        Ok(DriftSolution {
            times: self.times.clone(),
            u,
            drift_part,
            windows,
            log,
            initial_window,
        })
    }

    /// The solution at node `i` with its transport, `h`, `f` and `g` terms.
    pub fn sample(&self, solution: &DriftSolution, i: usize) -> SolutionSample {
        let pick = |sel: fn(&PointTerms) -> [f64; 3]| {
            let triples: Vec<[f64; 3]> = self.base_terms[i].iter().map(sel).collect();
            term_from(&self.grid, &triples)
        };
        SolutionSample::from_terms(
            self.times[i],
            self.seed,
            solution.drift_part[i].clone(),
            pick(|p| p.h),
            pick(|p| p.f),
            pick(|p| p.g),
        )
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }
}

fn term_from(grid: &GridSpec, triples: &[[f64; 3]]) -> TermField {
    let collect =
        |k: usize| GridField::from_values(*grid, triples.iter().map(|t| t[k]).collect()).expect("one per node");
    TermField {
        value: collect(0),
        gradient: (1..=grid.dim()).map(collect).collect(),
    }
}

/// Convenience wrapper: build the context and solve.
pub fn solve_with_drift(
    coeffs: &Coefficients,
    drift: &[HolderField],
    grid: GridSpec,
    path: &NoisePath,
    spec: Option<&LevyMeasureSpec>,
    options: PicardOptions,
) -> Result<DriftSolution, DriftError> {
    DriftContext::new(coeffs, drift, grid, path, spec, options)?.solve()
}
