//! Experiment orchestration.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{CheckSpec, ConfigError, ExperimentConfig, ExperimentKind};
use super::output::{flag, float, write_csv, write_json, write_text};
use super::RunError;
use crate::drift_picard::{DriftContext, DriftError, PicardOptions};
use crate::heat_kernel::GridSpec;
use crate::levy_noise::{LevyMeasureSpec, NoiseSampler, TimeGrid};
use crate::mild_solution::{evaluate_mild, second_moment_p2, Coefficients, MomentOptions, PlanOptions, SolutionSample};
use crate::regularity::{
    estimate_seminorm, gradient_increments, monte_carlo_time_grid, optimality_experiment, OptimalityNoise,
    OptimalityTable, RegularityConfig,
};
use crate::stochastic_integrals::{
    check_moment_identity, Integrand, MomentKind, MonteCarloEstimate, StepIntegrandN, StepIntegrandW,
};

/// Relative agreement required between the jump and Wiener optimality tables.
const JUMP_TABLE_TOLERANCE: f64 = 1e-10;

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub paths: usize,
    pub pass: bool,
    pub error: Option<String>,
    pub files: Vec<String>,
    pub details: Value,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        write_csv(&self.dir.join(name), header, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn solution(&mut self, name: &str, sample: &SolutionSample) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| RunError::output(&path, e))?;
        sample
            .write_csv(BufWriter::new(file))
            .map_err(|e| RunError::output(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Result of one experiment body: a verdict with details, or a failure
/// message. Partial files are written before returning either.
type Body = Result<Result<(bool, Value), String>, RunError>;

/// Runs the experiment, writes its CSVs, `summary.json` and on failure
/// `error.txt` into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let c = config.resolved();
    let violations = c.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| RunError::output(out_dir, e))?;
    let mut w = Writer {
        dir: out_dir,
        files: Vec::new(),
    };
    let body = match c.experiment {
        ExperimentKind::Isometry => isometry(&c, &mut w),
        ExperimentKind::Mild => mild(&c, &mut w),
        ExperimentKind::GradientMoment => gradient_moment(&c, &mut w),
        ExperimentKind::Picard => picard(&c, &mut w),
        ExperimentKind::Exponent => exponent(&c, &mut w),
        ExperimentKind::Optimality => optimality(&c, &mut w),
    }?;
    let (pass, error, details) = match body {
        Ok((pass, details)) => (pass, None, details),
        Err(message) => {
            write_text(&out_dir.join("error.txt"), &format!("{message}\n"))?;
            w.files.push("error.txt".into());
            (false, Some(message), Value::Null)
        }
    };
    w.files.push("summary.json".into());
    w.files.sort();
    let outcome = RunOutcome {
        experiment: c.experiment,
        seed: c.seed,
        paths: c.paths,
        pass,
        error,
        files: w.files,
        details,
    };
    write_json(&out_dir.join("summary.json"), &outcome)?;
    Ok(outcome)
}

struct Setup {
    grid: Option<GridSpec>,
    time: Option<TimeGrid>,
    levy: Option<LevyMeasureSpec>,
    coeffs: Coefficients,
}

fn setup(c: &ExperimentConfig) -> Result<Setup, String> {
    Ok(Setup {
        grid: c.grid_spec().transpose()?,
        time: c.time_grid().transpose()?,
        levy: c.levy_spec().transpose()?,
        coeffs: c.coefficients.clone().unwrap_or_default(),
    })
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, String> {
    v.ok_or_else(|| format!("missing [{what}] section"))
}

fn integrand(check: &CheckSpec) -> Result<Integrand, String> {
    let out = match check.kind {
        MomentKind::ItoIsometry | MomentKind::ItoP4Bound => {
            StepIntegrandW::new(check.breakpoints.clone(), check.values.clone()).map(Integrand::Wiener)
        }
        MomentKind::PoissonIsometry | MomentKind::PoissonP4Bound => StepIntegrandN::new(
            check.breakpoints.clone(),
            check.mark_cells.iter().map(|c| (c[0], c[1])).collect(),
            check.mark_values.clone(),
        )
        .map(Integrand::Poisson),
    };
    out.map_err(|e| e.to_string())
}

fn isometry(c: &ExperimentConfig, w: &mut Writer) -> Body {
    let checks = c.isometry.clone().unwrap_or_default().checks;
    let levy = match c.levy_spec().transpose() {
        Ok(l) => l,
        Err(e) => return Ok(Err(e)),
    };
    let mut rows = Vec::new();
    let mut all = true;
    let mut failure = None;
    for check in &checks {
        let report = integrand(check).and_then(|i| {
            check_moment_identity(check.kind, &i, levy.as_ref(), c.paths, c.seed).map_err(|e| e.to_string())
        });
        match report {
            Ok(r) => {
                all &= r.pass;
                rows.push(vec![
                    r.kind.to_string(),
                    float(r.target),
                    float(r.estimate),
                    float(r.std_error),
                    r.paths.to_string(),
                    r.seed.to_string(),
                    flag(r.pass),
                ]);
            }
            Err(e) => {
                failure = Some(format!("check {} ({}): {e}", rows.len(), check.kind));
                break;
            }
        }
    }
    w.csv(
        "isometry.csv",
        &["kind", "target", "estimate", "std_error", "paths", "seed", "pass"],
        &rows,
    )?;
    Ok(match failure {
        Some(e) => Err(e),
        None => Ok((all && !rows.is_empty(), json!({ "checks": rows.len() }))),
    })
}

fn mild(c: &ExperimentConfig, w: &mut Writer) -> Body {
    let inner = || -> Result<(SolutionSample, u64), String> {
        let s = setup(c)?;
        let grid = need(s.grid, "grid")?;
        let time = need(s.time, "time")?;
        let section = c.mild.clone().unwrap_or_default();
        let t = section.t.unwrap_or(time.horizon());
        let path = NoiseSampler::new(time, s.levy.clone(), c.seed).path(section.path_index);
        let sample = evaluate_mild(t, &s.coeffs, &path, &grid, s.levy.as_ref()).map_err(|e| e.to_string())?;
        Ok((sample, section.path_index))
    };
    let (sample, path_index) = match inner() {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    w.solution("solution.csv", &sample)?;
    let finite = sample.all_finite();
    let consistent = sample.terms_consistent();
    Ok(Ok((
        finite && consistent,
        json!({
            "t": sample.t,
            "path_index": path_index,
            "u_sup": sample.u.sup_norm(),
            "gradient_sup": sample.gradient.iter().map(|g| g.sup_norm()).fold(0.0, f64::max),
            "finite": finite,
            "terms_consistent": consistent,
        }),
    )))
}

fn gradient_moment(c: &ExperimentConfig, w: &mut Writer) -> Body {
    let inner = || -> Result<(f64, MonteCarloEstimate, f64), String> {
        let s = setup(c)?;
        let grid = need(s.grid, "grid")?;
        let g = need(c.gradient_moment.clone(), "gradient_moment")?;
        let quadrature = second_moment_p2(
            g.t,
            &g.x,
            Some(&g.y),
            &s.coeffs,
            &grid,
            s.levy.as_ref(),
            MomentOptions {
                points_per_sigma: g.points_per_sigma,
                ..MomentOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let per_path = gradient_increments(
            g.t,
            &[(g.x.clone(), g.y.clone())],
            &s.coeffs,
            &grid,
            s.levy.as_ref(),
            monte_carlo_time_grid(g.t, g.time_steps).map_err(|e| e.to_string())?,
            PlanOptions {
                points_per_sigma: g.points_per_sigma,
                ..PlanOptions::default()
            },
            c.paths,
            c.seed,
        )
        .map_err(|e| e.to_string())?;
        let squares: Vec<f64> = per_path.iter().map(|r| r[0] * r[0]).collect();
        Ok((quadrature, MonteCarloEstimate::from_samples(&squares), g.t))
    };
    let (quadrature, est, t) = match inner() {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let z = if est.std_error > 0.0 {
        (est.mean - quadrature) / est.std_error
    } else if est.mean == quadrature {
        0.0
    } else {
        f64::INFINITY
    };
    let pass = z.abs() <= 3.0;
    w.csv(
        "gradient_moment.csv",
        &[
            "t",
            "quadrature",
            "estimate",
            "std_error",
            "z_score",
            "paths",
            "seed",
            "pass",
        ],
        &[vec![
            float(t),
            float(quadrature),
            float(est.mean),
            float(est.std_error),
            float(z),
            c.paths.to_string(),
            c.seed.to_string(),
            flag(pass),
        ]],
    )?;
    Ok(Ok((
        pass,
        json!({ "quadrature": quadrature, "estimate": est.mean, "std_error": est.std_error, "z_score": z }),
    )))
}

fn picard(c: &ExperimentConfig, w: &mut Writer) -> Body {
    let s = match setup(c) {
        Ok(s) => s,
        Err(e) => return Ok(Err(e)),
    };
    let (grid, time, section, drift) = match (
        need(s.grid, "grid"),
        need(s.time, "time"),
        need(c.picard.clone(), "picard"),
        need(c.drift.clone(), "drift"),
    ) {
        (Ok(a), Ok(b), Ok(p), Ok(d)) => (a, b, p, d),
        (a, b, p, d) => {
            let e = [a.err(), b.err(), p.err(), d.err()]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>();
            return Ok(Err(e.join("; ")));
        }
    };
    let horizon = time.horizon();
    let declared: Vec<_> = drift.iter().map(|b| b.check_declared(&grid, horizon)).collect();
    let declared_ok = declared.iter().all(|d| d.pass);
    let rows: Vec<Vec<String>> = declared
        .iter()
        .enumerate()
        .map(|(k, d)| {
            vec![
                k.to_string(),
                float(d.declared.exponent),
                float(d.declared.seminorm),
                float(d.declared.sup_norm),
                float(d.empirical_seminorm),
                float(d.empirical_sup),
                d.pairs.to_string(),
                flag(d.pass),
            ]
        })
        .collect();
    w.csv(
        "declared_checks.csv",
        &[
            "component",
            "exponent",
            "declared_seminorm",
            "declared_sup",
            "empirical_seminorm",
            "empirical_sup",
            "pairs",
            "pass",
        ],
        &rows,
    )?;
    let options = PicardOptions {
        tol: section.tol,
        max_iterations: section.max_iterations,
        ..PicardOptions::default()
    };
    let path = NoiseSampler::new(time, s.levy.clone(), c.seed).path(section.path_index);
    let solved = DriftContext::new(&s.coeffs, &drift, grid, &path, s.levy.as_ref(), options)
        .and_then(|ctx| ctx.solve().map(|sol| (ctx, sol)));
    let convergence_header = ["window", "cells", "iterate", "distance", "ratio", "probe"];
    let log_rows = |log: &[crate::drift_picard::ConvergenceRecord]| -> Vec<Vec<String>> {
        log.iter()
            .map(|r| {
                vec![
                    r.window.to_string(),
                    r.cells.to_string(),
                    r.iterate.to_string(),
                    float(r.distance),
                    r.ratio.map(float).unwrap_or_default(),
                    flag(r.probe),
                ]
            })
            .collect()
    };
    let (ctx, sol) = match solved {
        Ok(v) => v,
        Err(e) => {
            if let DriftError::NonConvergence { log, .. } = &e {
                w.csv("convergence.csv", &convergence_header, &log_rows(log))?;
            }
            let note = if declared_ok {
                String::new()
            } else {
                " (declared drift Hölder data is inconsistent with the field)".into()
            };
            return Ok(Err(format!("{e}{note}")));
        }
    };
    w.csv("convergence.csv", &convergence_header, &log_rows(&sol.log))?;
    let window_rows: Vec<Vec<String>> = sol
        .windows
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                float(r.start),
                float(r.end),
                r.cells.to_string(),
                r.iterations.to_string(),
                float(r.residual),
                r.halvings.to_string(),
            ]
        })
        .collect();
    w.csv(
        "windows.csv",
        &["index", "start", "end", "cells", "iterations", "residual", "halvings"],
        &window_rows,
    )?;
    w.solution("solution.csv", &ctx.sample(&sol, sol.times.len() - 1))?;
    let accepted = |r: &&crate::drift_picard::ConvergenceRecord| {
        !r.probe && sol.windows.iter().any(|w| w.index == r.window && w.cells == r.cells)
    };
    let max_late_ratio = sol
        .log
        .iter()
        .filter(accepted)
        .filter(|r| r.iterate > 2)
        .filter_map(|r| r.ratio)
        .fold(0.0, f64::max);
    let max_residual = sol.windows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let max_iterations = sol.windows.iter().map(|r| r.iterations).max().unwrap_or(0);
    let pass = declared_ok && max_late_ratio < 0.5 && max_residual < section.tol;
    Ok(Ok((
        pass,
        json!({
            "windows": sol.windows.len(),
            "initial_window": sol.initial_window,
            "max_ratio_after_iterate_2": max_late_ratio,
            "max_residual": max_residual,
            "max_iterations": max_iterations,
            "declared_checks_pass": declared_ok,
        }),
    )))
}

fn exponent(c: &ExperimentConfig, w: &mut Writer) -> Body {
    let s = match setup(c) {
        Ok(s) => s,
        Err(e) => return Ok(Err(e)),
    };
    let (grid, e) = match (need(s.grid, "grid"), need(c.exponent.clone(), "exponent")) {
        (Ok(g), Ok(e)) => (g, e),
        (g, e) => {
            return Ok(Err([g.err(), e.err()]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join("; ")))
        }
    };
    let rc = RegularityConfig {
        p: c.p.unwrap_or(2.0),
        alpha: c.alpha.unwrap_or(0.5),
        beta: c.beta.unwrap_or(0.3),
        t: e.t,
        anchor: e.anchor,
        axis: e.axis,
        k_min: e.k_min,
        k_max: e.k_max,
        paths: c.paths,
        seed: c.seed,
        tolerance: e.tolerance,
        pathway: e.pathway,
        time_steps: e.time_steps,
        points_per_sigma: e.points_per_sigma,
    };
    let report = match estimate_seminorm(&rc, &s.coeffs, &grid, s.levy.as_ref()) {
        Ok(r) => r,
        Err(err) => return Ok(Err(err.to_string())),
    };
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                float(r.delta),
                float(r.moment),
                float(r.std_error),
                flag(r.in_fit),
            ]
        })
        .collect();
    w.csv(
        "regularity.csv",
        &["k", "delta", "moment", "std_error", "in_fit"],
        &rows,
    )?;
    let details = serde_json::to_value(&report).map_err(|e| RunError::output(w.dir, e))?;
    Ok(Ok((report.pass(), details)))
}

fn optimality(c: &ExperimentConfig, w: &mut Writer) -> Body {
    let s = match setup(c) {
        Ok(s) => s,
        Err(e) => return Ok(Err(e)),
    };
    let (grid, o) = match (need(s.grid, "grid"), need(c.optimality.clone(), "optimality")) {
        (Ok(g), Ok(o)) => (g, o),
        (g, o) => {
            return Ok(Err([g.err(), o.err()]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join("; ")))
        }
    };
    let alpha = c.alpha.unwrap_or(0.5);
    let options = MomentOptions {
        points_per_sigma: o.points_per_sigma,
        ..MomentOptions::default()
    };
    let mut noises = vec![("wiener", OptimalityNoise::Wiener)];
    if let (Some(shape), Some(spec)) = (o.jump_shape.clone(), s.levy.clone()) {
        noises.push(("jump", OptimalityNoise::Jump { spec, shape }));
    }
    let mut tables: Vec<(&str, OptimalityTable)> = Vec::new();
    let mut failure = None;
    'outer: for &delta in &o.deltas {
        for (name, noise) in &noises {
            match optimality_experiment(alpha, delta, o.t, &grid, noise, o.k_min..=o.k_max, o.tolerance, options) {
                Ok(t) => tables.push((name, t)),
                Err(e) => {
                    failure = Some(format!("{name} noise, delta = {delta}: {e}"));
                    break 'outer;
                }
            }
        }
    }
    let rows: Vec<Vec<String>> = tables
        .iter()
        .flat_map(|(name, t)| {
            t.rows.iter().map(move |r| {
                vec![
                    name.to_string(),
                    float(t.alpha),
                    float(t.delta),
                    r.k.to_string(),
                    float(r.x),
                    float(r.moment),
                    float(r.ratio),
                ]
            })
        })
        .collect();
    w.csv(
        "optimality.csv",
        &["noise", "alpha", "delta", "k", "x", "moment", "ratio"],
        &rows,
    )?;
    if let Some(e) = failure {
        return Ok(Err(e));
    }
    let wiener: Vec<&OptimalityTable> = tables.iter().filter(|(n, _)| *n == "wiener").map(|(_, t)| t).collect();
    let jump: Vec<&OptimalityTable> = tables.iter().filter(|(n, _)| *n == "jump").map(|(_, t)| t).collect();
    let jump_difference = wiener
        .iter()
        .zip(&jump)
        .flat_map(|(a, b)| a.rows.iter().zip(&b.rows))
        .map(|(a, b)| (a.moment - b.moment).abs() / a.moment.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let jump_match = jump_difference <= JUMP_TABLE_TOLERANCE;
    let summaries: Vec<Value> = tables
        .iter()
        .map(|(name, t)| {
            json!({
                "noise": name,
                "delta": t.delta,
                "slope": t.slope,
                "predicted_slope": t.predicted_slope,
                "band": t.band,
                "pass": t.pass,
            })
        })
        .collect();
    let pass = tables.iter().all(|(_, t)| t.pass) && jump_match;
    Ok(Ok((
        pass,
        json!({
            "tables": summaries,
            "jump_max_relative_difference": jump_difference,
            "jump_matches_wiener": jump_match,
        }),
    )))
}
