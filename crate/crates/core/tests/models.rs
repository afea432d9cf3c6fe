use proptest::prelude::*;
use sis_core::amalgam::{GeneratorComponent, GeneratorVector};
use sis_core::measure::{MeasureComponent, VecMeasure};
use sis_core::perturbation::{
    epsilon0_combined, epsilon0_generator, epsilon0_measure, generator_perturbed_bounds,
    measure_perturbed_bounds, BudgetInputs,
};
use sis_core::reconstruction::{reconstruct, FrameSystem, Method};
use sis_core::sampling_op::{sample_signal, stability_check, SamplingModel, StabilityVerdict};
use sis_core::scenario::parse_scenario_str;
use sis_core::shift_space::{riesz_bounds, CoeffWindow};
use sis_core::{Error, PNorm};

#[test]
fn tensor_hat_on_square_lattice_is_a_permutation() {
    let phi = GeneratorVector::single(GeneratorComponent::bspline_nd(1, 2).unwrap());
    let mu = VecMeasure::single(MeasureComponent::dirac(&[0.0, 0.0]));
    let model = SamplingModel::lattice(phi, mu, 0.0).unwrap();
    let w = model.window(5, 4.0).unwrap();
    let op = model.operator(&w).unwrap();
    for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
        assert!((op.lower_bound(p).unwrap() - 1.0).abs() < 1e-10, "{p:?}");
        assert!((op.op_norm(p).value - 1.0).abs() < 1e-10, "{p:?}");
    }
}

#[test]
fn two_generators_two_measures_reconstruct() {
    // hat and box, sampled by a point and a local average
    let phi = GeneratorVector::new(vec![
        GeneratorComponent::bspline(1),
        GeneratorComponent::bspline(0),
    ])
    .unwrap();
    let mu = VecMeasure::new(vec![
        MeasureComponent::dirac(&[0.0]),
        MeasureComponent::atomic(1, &[(vec![0.0], 0.5), (vec![0.5], 0.5)]).unwrap(),
    ])
    .unwrap();
    let model = SamplingModel::lattice(phi, mu, 0.25).unwrap();
    let w = model.window(12, 4.0).unwrap();
    let op = model.operator(&w).unwrap();
    assert_eq!(op.ncols(), 2 * 25);
    let sys = FrameSystem::new(&op).unwrap();
    let flat: Vec<_> = (0..sys.interior_columns().len())
        .map(|i| sis_core::amalgam::Complex64::new((i as f64 * 0.37).sin(), 0.0))
        .collect();
    let c = sys
        .extend(&sis_core::linalg::CVector::from_vec(flat))
        .unwrap();
    let b = sample_signal(&c, &model.phi, &model.mu, op.positions()).unwrap();
    let r = reconstruct(&sys, &b, Method::Cg, 1e-13, 5000).unwrap();
    let err = r
        .coefficients
        .sub(&c)
        .unwrap()
        .flat()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn colinear_generators_are_reported_degenerate() {
    let phi = GeneratorVector::new(vec![
        GeneratorComponent::bspline(1),
        GeneratorComponent::bspline(1).scaled(0.5),
    ])
    .unwrap();
    let mu = VecMeasure::new(vec![
        MeasureComponent::dirac(&[0.0]),
        MeasureComponent::dirac(&[0.0]),
    ])
    .unwrap();
    let model = SamplingModel::lattice(phi, mu, 0.0).unwrap();
    let op = model.operator(&model.window(8, 4.0).unwrap()).unwrap();
    assert!(matches!(
        FrameSystem::new(&op),
        Err(Error::DegenerateOperator { .. })
    ));
}

#[test]
fn density_measure_keeps_lattice_stable() {
    let s = parse_scenario_str(
        r#"{
            "id": "density",
            "pipeline": "bounds",
            "model": {
                "generators": [{"kind": "bspline", "order": 1}],
                "measures": [{"atoms": [[0.0, 0.5]], "density": {"h": 0.125, "origin": 0.0, "values": [2.0, 2.0, 2.0, 2.0]}}],
                "sampling": {"pattern": {"kind": "lattice", "step": 1.0, "offset": [0.0]}},
                "window": {"half_width": 16, "doublings": 2}
            }
        }"#,
    )
    .unwrap();
    let model = s.model.build(0).unwrap();
    assert!((model.mu.total_variation() - 1.5).abs() < 1e-12);
    let report = stability_check(&model, PNorm::Two, 16, 2, 4.0).unwrap();
    assert_eq!(report.verdict, StabilityVerdict::Stable);
}

#[test]
fn riesz_bounds_of_quadratic_spline() {
    // symbol (66 + 52 cos θ + 2 cos 2θ) / 120 ranges over [2/15, 1]
    let phi = GeneratorVector::single(GeneratorComponent::bspline(2));
    let r = riesz_bounds(&phi, CoeffWindow::new(1, 64).unwrap(), PNorm::Two).unwrap();
    assert!((r.lower * r.lower - 2.0 / 15.0).abs() < 1e-3, "{}", r.lower);
    assert!((r.upper * r.upper - 1.0).abs() < 1e-3, "{}", r.upper);
}

fn inputs(a_p: f64, m_p: f64, phi_w1: f64, mu_tv: f64) -> BudgetInputs {
    BudgetInputs {
        p: PNorm::Two,
        d: 1,
        a_p,
        b_p: 2.0,
        m_p,
        n_mesh: 2f64.sqrt(),
        mu_tv,
        phi_w1,
    }
}

proptest! {
    #[test]
    fn generator_bounds_shrink_with_epsilon(
        a in 0.1f64..2.0, m in 0.1f64..1.0, w1 in 0.5f64..4.0, tv in 0.2f64..3.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
    ) {
        let inp = inputs(a, m, w1, tv);
        let e0 = epsilon0_generator(&inp).unwrap().epsilon0;
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let b_lo = generator_perturbed_bounds(lo * e0 * 0.999, &inp, None).unwrap();
        let b_hi = generator_perturbed_bounds(hi * e0 * 0.999, &inp, None).unwrap();
        prop_assert!(b_hi.a <= b_lo.a + 1e-12);
        prop_assert!(b_hi.b >= b_lo.b - 1e-12);
        prop_assert!(b_lo.a > -1e-12);
        prop_assert!(generator_perturbed_bounds(e0, &inp, None).is_err());
    }

    #[test]
    fn measure_floor_vanishes_at_budget(a in 0.1f64..2.0, m in 0.1f64..1.0, w1 in 0.5f64..4.0, t in 0.0f64..0.999) {
        let inp = inputs(a, m, w1, 1.0);
        let e0 = epsilon0_measure(&inp).unwrap();
        let b = measure_perturbed_bounds(t * e0, &inp).unwrap();
        prop_assert!((b.a - a * (1.0 - t)).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn combined_budget_is_positive_inside_generator_budget(
        a in 0.1f64..2.0, m_frac in 0.05f64..1.0, w1 in 0.5f64..4.0, tv in 0.2f64..3.0, share in 0.0f64..0.99,
    ) {
        // a lower Riesz bound never exceeds the W¹ norm
        let inp = inputs(a, m_frac * w1, w1, tv);
        let e0 = epsilon0_generator(&inp).unwrap().epsilon0;
        let c = epsilon0_combined(&inp, share * e0).unwrap();
        prop_assert!(c.epsilon2 >= 0.0);
        prop_assert!(c.epsilon2 <= epsilon0_measure(&inp).unwrap() + 1e-12);
    }
}
