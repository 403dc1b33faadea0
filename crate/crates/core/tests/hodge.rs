use std::sync::Arc;

use symindex::hodge::*;
use symindex::hypersurfaces::{extrinsic_data, Derivatives, ParametricImmersion};
use symindex::space_models::SymmetricSpaceModel;

fn s3() -> Arc<SymmetricSpaceModel> {
    Arc::new(SymmetricSpaceModel::sphere(3, 1.0))
}

#[test]
fn clifford_harmonic_forms_are_constant() {
    let imm = ParametricImmersion::clifford(s3(), 32, 32).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, b1) = harmonic_basis(&data).unwrap();
    assert_eq!(b1, 2);
    let c = 1.0 / std::f64::consts::TAU;
    for i in 0..imm.grid.len() {
        assert!((forms[0].comps[0][i] - c).abs() < 1e-12 && forms[0].comps[1][i].abs() < 1e-12);
        assert!((forms[1].comps[1][i] - c).abs() < 1e-12 && forms[1].comps[0][i].abs() < 1e-12);
    }
}

#[test]
fn sphere_has_no_harmonic_forms() {
    let imm = ParametricImmersion::equator(s3(), 16, 8).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, b1) = harmonic_basis(&data).unwrap();
    assert!(forms.is_empty() && b1 == 0);
    let w = symindex::hodge::DiscreteOneForm::zero(imm.grid);
    assert!(matches!(bochner_check(&imm, &data, &w, 0), Err(symindex::Error::NotApplicable(_))));
}

#[test]
fn perturbed_torus_forms_are_harmonic_with_unit_periods() {
    let imm = ParametricImmersion::perturbed_clifford(s3(), 48, 48, 0.15, Derivatives::Exact).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, _) = harmonic_basis(&data).unwrap();
    let expected = [[1.0, 0.0], [0.0, 1.0]];
    for (f, e) in forms.iter().zip(expected) {
        let p = f.periods();
        assert!((p[0] - e[0]).abs() < 1e-8 && (p[1] - e[1]).abs() < 1e-8, "{p:?}");
        assert!(f.period_spread() < 1e-10);
        let lap = f.hodge_laplacian(&data);
        let worst = lap.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-6, "|Δ₁ω| = {worst}");
        assert!(f.codifferential(&data).iter().all(|v| v.abs() < 1e-6));
        assert!(f.star_d(&data).iter().all(|v| v.abs() < 1e-10));
        // non-trivial: not the constant form
        assert!(f.comps[0].iter().chain(&f.comps[1]).any(|v| (v - e[0] / std::f64::consts::TAU).abs() > 1e-4 && (v - e[1] / std::f64::consts::TAU).abs() > 1e-4));
    }
    let on = orthonormalize(&forms, &data);
    for a in 0..2 {
        for b in 0..2 {
            let ip = on[a].l2_inner(&on[b], &data);
            assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn closed_form_has_symmetric_covariant_derivative() {
    let imm = ParametricImmersion::perturbed_clifford(s3(), 48, 48, 0.15, Derivatives::Exact).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, _) = harmonic_basis(&data).unwrap();
    let d = forms[0].derivatives();
    for node in [0, 100, 777, 2000] {
        let g = &data.nodes[node];
        let m = forms[0].nabla_sharp(&data, node, &d);
        // ⟨∇_X ω♯, Y⟩ symmetric in X, Y
        let s = g.h * m;
        assert!((s[(0, 1)] - s[(1, 0)]).abs() < 1e-10);
    }
}

#[test]
fn bochner_on_clifford_harmonic_form() {
    let imm = ParametricImmersion::clifford(s3(), 32, 32).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, _) = harmonic_basis(&data).unwrap();
    for node in [0, 37, 500] {
        let r = bochner_check(&imm, &data, &forms[0], node).unwrap();
        assert!(r.residual <= 1e-6, "{r:?}");
    }
}

#[test]
fn bochner_residual_refines_at_fourth_order() {
    // a non-harmonic form on a non-flat torus exercises every term
    let res = |n: usize| {
        let imm = ParametricImmersion::perturbed_clifford(s3(), n, n, 0.15, Derivatives::Exact).unwrap();
        let data = extrinsic_data(&imm).unwrap();
        let w = DiscreteOneForm::from_fn(imm.grid, |u| [1.0 + 0.3 * u[1].sin(), 0.2 * (u[0] + u[1]).cos()]);
        let node = imm.grid.index(n / 4, n / 3);
        bochner_check(&imm, &data, &w, node).unwrap()
    };
    let a = res(32);
    let b = res(64);
    assert!(a.lhs.abs() > 1e-2);
    assert!(a.residual / b.residual >= 3.5, "{a:?} {b:?}");
    // perturbed harmonic forms satisfy it as well
    let imm = ParametricImmersion::perturbed_clifford(s3(), 64, 64, 0.15, Derivatives::Exact).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, _) = harmonic_basis(&data).unwrap();
    let r = bochner_check(&imm, &data, &forms[1], 123).unwrap();
    assert!(r.residual < 1e-4 * r.lhs.abs().max(1.0), "{r:?}");
}
