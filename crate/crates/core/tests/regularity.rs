use schauder_lab::heat_kernel::GridSpec;
use schauder_lab::levy_noise::LevyMeasureSpec;
use schauder_lab::mild_solution::{Coefficients, HolderField, MarkFactor, MomentOptions};
use schauder_lab::regularity::{
    estimate_seminorm, optimality_experiment, OptimalityNoise, Pathway, RegularityConfig, RegularityError, Verdict,
};

fn fine_grid() -> GridSpec {
    GridSpec::covering(1, 3.0, 1.0 / 4096.0).unwrap()
}

fn config(pathway: Pathway, p: f64, k_min: u32, k_max: u32, paths: usize) -> RegularityConfig {
    RegularityConfig {
        p,
        alpha: 0.5,
        beta: 0.0,
        t: 0.25,
        anchor: vec![0.0],
        axis: 0,
        k_min,
        k_max,
        paths,
        seed: 11,
        tolerance: 0.05,
        pathway,
        time_steps: schauder_lab::regularity::MC_TIME_STEPS,
        points_per_sigma: 32.0,
    }
}

fn capped() -> Coefficients {
    Coefficients::zero().with_f(HolderField::capped_power(0.5))
}

#[test]
fn exact_pathway_recovers_twice_the_exponent() {
    let report = estimate_seminorm(&config(Pathway::Exact, 2.0, 3, 10, 1), &capped(), &fine_grid(), None).unwrap();
    let fit = report.fit.unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.05, "{fit:?}");
    assert!(fit.r_squared > 0.99);
    assert_eq!(fit.rows, 8);
    assert_eq!(report.verdict, Verdict::Pass);
    assert!(report.epsilon_checks.iter().all(|c| c.pass));
}

#[test]
fn exact_moments_shrink_with_the_offset() {
    let report = estimate_seminorm(&config(Pathway::Exact, 2.0, 3, 10, 1), &capped(), &fine_grid(), None).unwrap();
    for w in report.rows.windows(2) {
        assert!(w[1].delta < w[0].delta);
        assert!(w[1].moment <= w[0].moment, "{w:?}");
    }
}

#[test]
fn constant_coefficients_are_degenerate() {
    let coeffs = Coefficients::zero().with_f(HolderField::constant(2.0));
    let report = estimate_seminorm(&config(Pathway::Exact, 2.0, 3, 10, 1), &coeffs, &fine_grid(), None).unwrap();
    assert_eq!(report.verdict, Verdict::Degenerate);
    assert!(report.rows.iter().all(|r| r.moment == 0.0));
    assert!(report.fit.is_none());
}

#[test]
fn monte_carlo_second_moments_agree_with_quadrature() {
    let grid = fine_grid();
    let exact = estimate_seminorm(&config(Pathway::Exact, 2.0, 3, 7, 1), &capped(), &grid, None).unwrap();
    let mc = estimate_seminorm(&config(Pathway::MonteCarlo, 2.0, 3, 7, 5000), &capped(), &grid, None).unwrap();
    for (e, m) in exact.rows.iter().zip(&mc.rows) {
        let z = (m.moment - e.moment) / m.std_error;
        assert!(z.abs() < 3.0, "k {}: {} vs {} (z {z})", e.k, m.moment, e.moment);
    }
}

#[test]
fn gaussian_fourth_moments_are_three_squared_second_moments() {
    let grid = fine_grid();
    let coeffs = Coefficients::zero().with_f(HolderField::capped_power(0.75));
    let with_alpha = |c: RegularityConfig| RegularityConfig { alpha: 0.75, ..c };
    let exact = estimate_seminorm(&with_alpha(config(Pathway::Exact, 2.0, 3, 6, 1)), &coeffs, &grid, None).unwrap();
    let mc = estimate_seminorm(
        &with_alpha(config(Pathway::MonteCarlo, 4.0, 3, 6, 5000)),
        &coeffs,
        &grid,
        None,
    )
    .unwrap();
    for (e, m) in exact.rows.iter().zip(&mc.rows) {
        let target = 3.0 * e.moment * e.moment;
        let z = (m.moment - target) / m.std_error;
        assert!(z.abs() < 3.0, "k {}: {} vs {target} (z {z})", e.k, m.moment);
    }
}

#[test]
fn exact_pathway_rejects_higher_moments() {
    let err = estimate_seminorm(&config(Pathway::Exact, 4.0, 3, 10, 1), &capped(), &fine_grid(), None).unwrap_err();
    assert!(matches!(
        err,
        RegularityError::NonPositiveGamma { .. } | RegularityError::ExactNeedsP2(_)
    ));
    let mut c = config(Pathway::Exact, 3.0, 3, 10, 1);
    c.alpha = 0.9;
    assert_eq!(
        estimate_seminorm(&c, &capped(), &fine_grid(), None).unwrap_err(),
        RegularityError::ExactNeedsP2(3.0)
    );
}

#[test]
fn offsets_below_the_grid_are_rejected() {
    let grid = GridSpec::covering(1, 3.0, 0.01).unwrap();
    let err = estimate_seminorm(&config(Pathway::Exact, 2.0, 3, 10, 1), &capped(), &grid, None).unwrap_err();
    assert!(matches!(err, RegularityError::Resolution { .. }));
}

fn options() -> MomentOptions {
    MomentOptions {
        points_per_sigma: 32.0,
        ..MomentOptions::default()
    }
}

#[test]
fn optimality_ratio_slopes_shift_by_the_probe_exponent() {
    let grid = fine_grid();
    let at_alpha =
        optimality_experiment(0.5, 0.5, 0.25, &grid, &OptimalityNoise::Wiener, 1..=9, 0.05, options()).unwrap();
    let above = optimality_experiment(0.5, 0.7, 0.25, &grid, &OptimalityNoise::Wiener, 1..=9, 0.05, options()).unwrap();
    assert!((above.slope - (at_alpha.slope - 0.2)).abs() < 1e-9);
    for (a, b) in at_alpha.rows.iter().zip(&above.rows) {
        assert_eq!(a.moment, b.moment);
        assert!((b.ratio / a.ratio - b.x.powf(-0.2)).abs() < 1e-12 * b.x.powf(-0.2));
    }
    assert!(at_alpha.band <= 4.0);
    assert!(at_alpha.pass);
}

#[test]
fn unit_norm_jump_noise_reproduces_the_wiener_table() {
    let grid = fine_grid();
    let spec = LevyMeasureSpec::uniform(0.5, 1.0, 2.0).unwrap();
    let jump = OptimalityNoise::Jump {
        spec,
        shape: MarkFactor::Power {
            scale: 3.0,
            exponent: 1.5,
        },
    };
    let w = optimality_experiment(0.5, 0.5, 0.25, &grid, &OptimalityNoise::Wiener, 1..=9, 0.05, options()).unwrap();
    let j = optimality_experiment(0.5, 0.5, 0.25, &grid, &jump, 1..=9, 0.05, options()).unwrap();
    for (a, b) in w.rows.iter().zip(&j.rows) {
        assert!((a.moment / b.moment - 1.0).abs() < 1e-10, "{a:?} {b:?}");
    }
}

#[test]
fn probes_below_the_exponent_are_rejected() {
    let err = optimality_experiment(
        0.5,
        0.4,
        0.25,
        &fine_grid(),
        &OptimalityNoise::Wiener,
        1..=9,
        0.05,
        options(),
    )
    .unwrap_err();
    assert_eq!(err, RegularityError::ProbeBelowAlpha { alpha: 0.5, delta: 0.4 });
}
