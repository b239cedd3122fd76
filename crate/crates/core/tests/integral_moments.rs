mod common;

use schauder_lab::levy_noise::LevyMeasureSpec;
use schauder_lab::stochastic_integrals::{
    check_moment_identity, poisson_p4_constant, sample_integrals, Integrand, MomentKind, StepIntegrandN, StepIntegrandW,
};

const PATHS: usize = 100_000;

fn spec() -> LevyMeasureSpec {
    LevyMeasureSpec::uniform(0.5, 1.0, 2.0).unwrap()
}

fn wiener_suite() -> Vec<StepIntegrandW> {
    vec![
        StepIntegrandW::constant(1.0, 1.0).unwrap(),
        StepIntegrandW::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap(),
        StepIntegrandW::new(vec![0.0, 0.25, 0.5, 1.0], vec![-1.0, 0.5, 3.0]).unwrap(),
        StepIntegrandW::constant(2.0, 0.3).unwrap(),
        StepIntegrandW::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![1.0, -1.0, 1.0, -1.0]).unwrap(),
    ]
}

fn poisson_suite(spec: &LevyMeasureSpec) -> Vec<StepIntegrandN> {
    vec![
        StepIntegrandN::constant(1.0, spec, 1.0).unwrap(),
        StepIntegrandN::new(vec![0.0, 1.0], vec![(0.5, 0.7), (0.7, 1.0)], vec![vec![2.0, -1.0]]).unwrap(),
        StepIntegrandN::new(vec![0.0, 0.5, 1.0], vec![(0.5, 1.0)], vec![vec![1.0], vec![3.0]]).unwrap(),
        StepIntegrandN::new(
            vec![0.0, 0.3, 0.6, 1.5],
            vec![(0.5, 0.75), (0.75, 1.0)],
            vec![vec![0.5, 0.0], vec![-1.0, 1.0], vec![0.2, 0.4]],
        )
        .unwrap(),
        StepIntegrandN::new(vec![0.0, 2.0], vec![(0.6, 0.9)], vec![vec![-0.7]]).unwrap(),
    ]
}

#[test]
fn unit_integrand_moments() {
    let f = Integrand::Wiener(StepIntegrandW::constant(1.0, 1.0).unwrap());
    let second = check_moment_identity(MomentKind::ItoIsometry, &f, None, PATHS, 1).unwrap();
    assert_eq!(second.target, 1.0);
    assert!((second.estimate - 1.0).abs() < 0.015 && second.pass, "{second:?}");
    let fourth = check_moment_identity(MomentKind::ItoP4Bound, &f, None, PATHS, 1).unwrap();
    assert!((fourth.estimate - 3.0).abs() < 0.15, "{fourth:?}");
    assert!(fourth.estimate <= 6.0 && fourth.pass, "{fourth:?}");
}

#[test]
fn piecewise_integrand_isometry() {
    let f = Integrand::Wiener(StepIntegrandW::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap());
    let r = check_moment_identity(MomentKind::ItoIsometry, &f, None, PATHS, 2).unwrap();
    assert_eq!(r.target, 2.5);
    assert!(r.pass, "{r:?}");
}

#[test]
fn ito_suite_satisfies_isometry_and_fourth_moment_bound() {
    for (i, f) in wiener_suite().into_iter().enumerate() {
        let f = Integrand::Wiener(f);
        for kind in [MomentKind::ItoIsometry, MomentKind::ItoP4Bound] {
            let r = check_moment_identity(kind, &f, None, PATHS, 10 + i as u64).unwrap();
            assert!(r.pass, "integrand {i}: {r:?}");
        }
    }
}

#[test]
fn poisson_suite_is_centred_and_satisfies_isometry() {
    let spec = spec();
    for (i, h) in poisson_suite(&spec).into_iter().enumerate() {
        let h = Integrand::Poisson(h);
        let values = sample_integrals(&h, Some(&spec), PATHS, 20 + i as u64).unwrap();
        let (m, se) = common::mean_se(&values);
        assert!(m.abs() < 3.0 * se, "integrand {i}: mean {m} ± {se}");
        for kind in [MomentKind::PoissonIsometry, MomentKind::PoissonP4Bound] {
            let r = check_moment_identity(kind, &h, Some(&spec), PATHS, 20 + i as u64).unwrap();
            assert!(r.pass, "integrand {i}: {r:?}");
        }
    }
}

#[test]
fn unit_poisson_integrand() {
    let spec = spec();
    let h = StepIntegrandN::constant(1.0, &spec, 1.0).unwrap();
    let values = sample_integrals(&Integrand::Poisson(h.clone()), Some(&spec), PATHS, 3).unwrap();
    let (m, _) = common::mean_se(&values);
    assert!(m.abs() < 0.014, "{m}");
    let r = check_moment_identity(
        MomentKind::PoissonIsometry,
        &Integrand::Poisson(h.clone()),
        Some(&spec),
        PATHS,
        3,
    )
    .unwrap();
    assert!((r.estimate - 2.0).abs() < 0.06 && r.pass, "{r:?}");
    // For H ≡ 1 the compensated count has E I⁴ = Λt + 3(Λt)² = 14, and the
    // bound constant 1 + 3tν(supp H) = 7 times ∫∫H⁴ν = 2 equals it.
    assert_eq!(poisson_p4_constant(&h, &spec), 7.0);
    let r = check_moment_identity(
        MomentKind::PoissonP4Bound,
        &Integrand::Poisson(h),
        Some(&spec),
        PATHS,
        3,
    )
    .unwrap();
    assert_eq!(r.target, 14.0);
    assert!(r.pass, "{r:?}");
}

#[test]
fn exact_poisson_fourth_moment_never_exceeds_bound() {
    // E I⁴ = ∫∫H⁴ν + 3(∫∫H²ν)² for a compensated Poisson integral.
    let spec = spec();
    for h in poisson_suite(&spec) {
        let exact = h.power_integral(4, &spec) + 3.0 * h.power_integral(2, &spec).powi(2);
        let bound = poisson_p4_constant(&h, &spec) * h.power_integral(4, &spec);
        assert!(exact <= bound * (1.0 + 1e-12), "{exact} > {bound}");
    }
}
