use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symindex::hodge::{harmonic_basis, DiscreteOneForm};
use symindex::hypersurfaces::{extrinsic_data, ParametricImmersion};
use symindex::lie_core::cartan_decompose;
use symindex::space_models::SymmetricSpaceModel;
use symindex::spectral::{counting_lemma_check, jacobi_operator, spectrum, Stencil};
use symindex::trace_lab::*;

fn s3(r: f64) -> Arc<SymmetricSpaceModel> {
    Arc::new(SymmetricSpaceModel::sphere(3, r))
}

/// `dθ_i` as the harmonic form with unit period `2π` on cycle `i`.
fn dtheta(imm: &ParametricImmersion) -> Vec<DiscreteOneForm> {
    let data = extrinsic_data(imm).unwrap();
    let (forms, b1) = harmonic_basis(&data).unwrap();
    assert_eq!(b1, 2);
    forms.into_iter().map(|f| f.scaled(2.0 * std::f64::consts::PI)).collect()
}

fn identity_ctx(n: usize, stencil: Stencil) -> (TraceContext, Vec<DiscreteOneForm>) {
    let amb = s3(1.0);
    let imm = ParametricImmersion::clifford(amb.clone(), n, n).unwrap();
    let ctx = TraceContext::new(&imm, Embedding::identity(amb).unwrap(), stencil).unwrap();
    let w = dtheta(&imm);
    (ctx, w)
}

#[test]
fn zero_trace_converges_on_clifford_torus() {
    let mut errs = Vec::new();
    for n in [32, 48, 64] {
        let (ctx, forms) = identity_ctx(n, Stencil::Fourth);
        let mut worst: f64 = 0.0;
        for (k, w) in forms.iter().enumerate() {
            let rep = ctx.assemble(Family::PhiWedge, w, k).unwrap();
            assert_eq!(rep.gram_q.len(), 15);
            assert!(rep.max_asymmetry() < 1e-9 * rep.diag_abs);
            assert!(rep.rhs_value.abs() < 1e-12, "B = 0 gives a vanishing integral");
            worst = worst.max(rep.trace_q.abs() / rep.diag_abs);
        }
        println!("grid {n}: relative trace {worst:e}");
        errs.push(worst);
    }
    assert!(errs[2] <= 1e-3);
    let p = (errs[0] / errs[2]).ln() / 2.0f64.ln();
    assert!(p >= 1.8, "order {p} from {errs:?}");
}

#[test]
fn second_identity_on_latitude_sphere() {
    // S³(sin ρ) ⊂ S⁴ has B ≠ 0 and the trace is −2cot²ρ ∫|ω|²
    let rho = 1.0f64;
    let amb = s3(rho.sin());
    let imm = ParametricImmersion::clifford(amb.clone(), 64, 64).unwrap();
    let ctx = TraceContext::new(&imm, Embedding::latitude(amb, rho).unwrap(), Stencil::Fourth).unwrap();
    for (k, w) in dtheta(&imm).iter().enumerate() {
        let rep = ctx.assemble(Family::PhiWedge, w, k).unwrap();
        let ints = ctx.integrals(w).unwrap();
        let oracle = -2.0 / rho.tan().powi(2) * ints.norm2;
        println!("latitude q: trace {} rhs {} oracle {oracle}", rep.trace_q, rep.rhs_value);
        assert_eq!(rep.gram_q.len(), 45);
        assert!((ints.second_b_only - oracle).abs() <= 1e-8 * oracle.abs());
        assert!((ints.second_curvature - ints.second_b_only).abs() <= 1e-6 * oracle.abs());
        assert!(rep.relative_residual() <= 0.01);
        // first identity, ψ over so(5)
        let rep = ctx.assemble(Family::PsiG, w, k).unwrap();
        let oracle = -2.0 / rho.sin().powi(2) * ints.norm2;
        println!("latitude r: trace {} rhs {} oracle {oracle}", rep.trace_q, rep.rhs_value);
        assert!((ints.first_gauss - oracle).abs() <= 1e-8 * oracle.abs());
        assert!((ints.first_scalar - ints.first_gauss).abs() <= 1e-6 * oracle.abs());
        assert!((ints.first_general - ints.first_gauss).abs() <= 1e-6 * oracle.abs());
        assert!(rep.relative_residual() <= 0.01);
    }
}

#[test]
fn first_and_second_identities_with_trivial_embedding() {
    let (ctx, forms) = identity_ctx(64, Stencil::Fourth);
    for (k, w) in forms.iter().enumerate() {
        let ints = ctx.integrals(w).unwrap();
        assert!(ints.second_curvature.abs() <= 1e-6);
        assert!(ints.second_b_only.abs() <= 1e-12);
        let rep = ctx.assemble(Family::PsiG, w, k).unwrap();
        let oracle = -2.0 * ints.norm2;
        assert!((rep.rhs_value - oracle).abs() <= 1e-10 * oracle.abs());
        assert!((ints.first_scalar - ints.first_gauss).abs() <= 1e-6);
        println!("psi trace {} vs {}", rep.trace_q, oracle);
        assert!(rep.relative_residual() <= 0.01);
        // L Gram is positive semi-definite
        let l = SymmetricEigen::new(rep.gram_l_matrix()).eigenvalues;
        assert!(l.min() >= -1e-12 * l.max());
        // quadratic homogeneity
        let scaled = ctx.integrals(&w.scaled(3.0)).unwrap();
        assert!((scaled.first_gauss - 9.0 * ints.first_gauss).abs() <= 1e-10 * ints.first_gauss.abs());
    }
}

#[test]
fn euclidean_comparison_recovers_sphere_constant() {
    for r in [1.0, 2.0] {
        let amb = s3(r);
        let imm = ParametricImmersion::clifford(amb.clone(), 64, 64).unwrap();
        let id = TraceContext::new(&imm, Embedding::identity(amb.clone()).unwrap(), Stencil::Fourth).unwrap();
        let eu = TraceContext::new(&imm, Embedding::euclidean(amb).unwrap(), Stencil::Fourth).unwrap();
        for (k, w) in dtheta(&imm).iter().enumerate() {
            let hat = eu.assemble(Family::EuclidWedge, w, k).unwrap();
            assert_eq!(hat.gram_q.len(), 6);
            let tr = id.assemble(Family::PhiWedge, w, k).unwrap();
            let ints = eu.integrals(w).unwrap();
            let beta = (hat.trace_q - tr.trace_q) / ints.norm2;
            println!("r = {r}: beta from Gram {beta}, expected {}", -2.0 / (r * r));
            assert!((beta + 2.0 / (r * r)).abs() <= 0.01 * 2.0 / (r * r));
            let rhs = tr.trace_q + ints.second_b_only;
            assert!((hat.trace_q - rhs).abs() <= 0.01 * rhs.abs());
            for node in [0, 777, 2000] {
                let b = eu.beta_n(node, &Vector2::new(0.3, -1.1));
                assert!((b + 2.0 / (r * r)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn trace_independent_of_family_basis() {
    let (ctx, forms) = identity_ctx(24, Stencil::Fourth);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let raw = DMatrix::from_fn(15, 15, |_, _| rng.gen::<f64>() - 0.5);
    let q = raw.qr().q();
    let t = ctx.assemble(Family::PhiWedge, &forms[0], 0).unwrap();
    let rot = ctx.rotated_trace(Family::PhiWedge, &forms[0], &q).unwrap();
    assert!((t.trace_q - rot).abs() <= 1e-10 * t.diag_abs.max(1.0), "{} vs {rot}", t.trace_q);
}

#[test]
fn phi_family_pointwise_identities() {
    let (ctx, forms) = identity_ctx(16, Stencil::Fourth);
    let model = ctx.imm.ambient.clone();
    let wedge = ctx.wedge.clone().unwrap();
    let t = ctx.tangent_field(&forms[0]);
    let funcs = ctx.family_functions(Family::PhiWedge, &t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for node in [0, 37, 200] {
        let g = &ctx.data.nodes[node];
        let tm = g.push(&t[node]);
        // Σ φ² = |T|²
        let s: f64 = funcs.iter().map(|f| f[node] * f[node]).sum();
        assert!((s - g.ip(&tm, &tm)).abs() < 1e-12);
        // contraction against Z∧W through fundamental fields of the wedge basis
        let p = ctx.target_point(node).to_vec();
        let cartan = cartan_decompose(&model, &p).unwrap();
        let fields: Vec<DVector<f64>> = (0..6).map(|i| ctx.killing_field(node, &wedge.ortho.column(i).into_owned())).collect();
        for _ in 0..10 {
            let z = DVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5);
            let w = DVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5);
            let mut lhs = 0.0;
            for (a, &(i, j)) in wedge.pairs.iter().enumerate() {
                let c = g.ip(&z, &fields[i]) * g.ip(&w, &fields[j]) - g.ip(&z, &fields[j]) * g.ip(&w, &fields[i]);
                lhs += c * funcs[a][node];
            }
            let rhs = g.ip(&z, &g.nu) * g.ip(&w, &tm) - g.ip(&z, &tm) * g.ip(&w, &g.nu);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        // functions built from k_p elements vanish at p
        for x in &cartan.k_basis {
            assert!(ctx.killing_field(node, x).amax() < 1e-12);
            let psi = ctx.psi_function(&t, x);
            assert!(psi[node].abs() < 1e-12);
            for y in cartan.k_basis.iter().chain(&cartan.n_basis) {
                assert!(ctx.phi_function(&t, x, y)[node].abs() < 1e-12);
            }
        }
        // X ∧ X
        let x = cartan.n_basis[0].clone();
        assert!(ctx.phi_function(&t, &x, &x).iter().all(|v| v.abs() < 1e-15));
    }
    // T = 0
    let zero = vec![Vector2::zeros(); ctx.len()];
    let x = DVector::from_element(6, 1.0);
    assert!(ctx.psi_function(&zero, &x).iter().all(|v| *v == 0.0));
}

#[test]
fn psi_constant_for_hopf_rotation_of_first_circle() {
    // the first torus circle is rotation in the (x0, x1) plane, generator E01
    let (ctx, forms) = identity_ctx(16, Stencil::Fourth);
    let t: Vec<Vector2<f64>> = (0..ctx.len()).map(|_| Vector2::new(1.0, 0.0)).collect();
    let mut x = DVector::zeros(6);
    x[0] = 1.0;
    let psi = ctx.psi_function(&t, &x);
    let spread = psi.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - psi.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    assert!(psi[0].abs() > 0.1 && spread < 1e-12, "psi {} spread {spread}", psi[0]);
    drop(forms);
}

#[test]
fn index_form_matches_operator() {
    let (ctx, _) = identity_ctx(32, Stencil::Fourth);
    let one = vec![1.0; ctx.len()];
    let area = ctx.data.area();
    assert!((area - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-10);
    assert!((ctx.index_form(&one, &one) + 4.0 * area).abs() < 1e-9);
    let grid = ctx.data.grid.clone();
    let f: Vec<f64> = (0..ctx.len()).map(|i| { let u = grid.node(i); (u[0]).sin() * (2.0 * u[1]).cos() + 0.3 }).collect();
    let h: Vec<f64> = (0..ctx.len()).map(|i| { let u = grid.node(i); (u[0] + u[1]).cos() }).collect();
    assert!((ctx.index_form(&f, &h) - ctx.index_form(&h, &f)).abs() < 1e-10);
    let jf = ctx.op.apply(&f);
    let weak = -ctx.op.mass_inner(&jf, &h);
    assert!((ctx.index_form(&f, &h) - weak).abs() < 1e-9);
}

#[test]
fn jacobi_of_phi_identity_and_negative_control() {
    let (ctx, forms) = identity_ctx(64, Stencil::Fourth);
    let model = ctx.imm.ambient.clone();
    let bad = DiscreteOneForm::from_fn(ctx.data.grid.clone(), |u| [(u[0]).sin(), 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let (mut good_worst, mut bad_worst) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let node = rng.gen_range(0..ctx.len());
        let cartan = cartan_decompose(&model, ctx.target_point(node)).unwrap();
        let nb = &cartan.n_basis;
        for i in 0..nb.len() {
            for j in (i + 1)..nb.len() {
                for w in &forms {
                    good_worst = good_worst.max(ctx.jacobi_of_phi(w, &nb[i], &nb[j], node).unwrap().residual);
                }
                bad_worst = bad_worst.max(ctx.jacobi_of_phi(&bad, &nb[i], &nb[j], node).unwrap().residual);
            }
            let same = ctx.jacobi_of_phi(&forms[0], &nb[i], &nb[i], node).unwrap();
            assert!(same.lhs.abs() < 1e-12 && same.rhs.abs() < 1e-12);
        }
    }
    println!("pointwise Jacobi residual {good_worst:e}, control {bad_worst:e}");
    assert!(good_worst <= 1e-4);
    assert!(bad_worst > 10.0 * good_worst.max(1e-12));
}

#[test]
fn commutator_membership_on_clifford_torus() {
    let imm = ParametricImmersion::clifford(s3(1.0), 32, 32).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (forms, _) = harmonic_basis(&data).unwrap();
    for f in &forms {
        assert!(h1_membership(&data, f, 1e-8).is_member);
    }
    assert!(h1_membership(&data, &DiscreteOneForm::zero(data.grid.clone()), 0.0).is_member);
    let rep = h1_dimension(&data, &forms, 1e-8);
    assert_eq!(rep.dim, 2);
    assert!(rep.dim <= 2 * 3 - 3);
    // closed but not harmonic, with ∇ω♯ mixing the principal directions
    let bad = DiscreteOneForm::from_fn(data.grid.clone(), |u| [(u[0] + u[1]).sin(), (u[0] + u[1]).sin()]);
    assert!(!h1_membership(&data, &bad, 1e-8).is_member);
}

#[test]
fn counting_argument_on_clifford_torus() {
    let (ctx, forms) = identity_ctx(32, Stencil::Fourth);
    let spec = spectrum(&jacobi_operator(&ctx.imm).unwrap(), 10, None).unwrap();
    // wedge family: vanishing trace, hypothesis fails
    let (tq, tl) = ctx.test_space_matrices(Family::PhiWedge, &forms).unwrap();
    let kernel = ctx.kernel_dimension(Family::PhiWedge, &forms, 1e-8).unwrap();
    // members built from k_p vanish at p but their Jacobi values do not
    assert_eq!(kernel.dim, 0, "{kernel:?}");
    // strictness must clear the discretization error of the vanishing trace
    let r = counting_lemma_check(&tq, &tl, &spec, 0.0, 15, kernel.dim, 1e-3);
    assert!(!r.hypothesis_holds && r.part_i.is_none(), "{r:?}");
    assert!(r.part_ii);
    // ψ family: negative trace, hypothesis holds
    let (tq, tl) = ctx.test_space_matrices(Family::PsiG, &forms).unwrap();
    let r = counting_lemma_check(&tq, &tl, &spec, 0.0, 6, 0, 1e-3);
    assert!(r.hypothesis_holds, "{r:?}");
    assert_eq!(r.part_i, Some(true));
    assert_eq!(r.count_below_c, 5);
}

#[test]
fn clifford_bounds_hold() {
    let imm = ParametricImmersion::clifford(s3(1.0), 32, 32).unwrap();
    let spec = spectrum(&jacobi_operator(&imm).unwrap(), 12, None).unwrap();
    let data = extrinsic_data(&imm).unwrap();
    let (_, b1) = harmonic_basis(&data).unwrap();
    let c = index_bound_constant(6, 3).unwrap();
    assert!(bound_check(spec.index, b1, c));
    assert!(bound_check(spec.index + spec.nullity, b1, index_nullity_constant(6).unwrap()));
}

#[test]
fn berger_threshold_and_bound() {
    let th = berger_threshold(1000, 7).unwrap();
    let paper = (1.0 + 3.0f64.sqrt()).sqrt();
    assert!((th.bound_root_tan - paper).abs() < 1e-9);
    assert!((th.exact_root_tan - ((5.0 + 33.0f64.sqrt()) / 2.0).sqrt()).abs() < 1e-9);
    println!("{th:?}");
    let radii: Vec<f64> = (1..=40).map(|i| (0.04 * i as f64).atan()).collect();
    let rows = berger_scan(&radii, 1000, 7).unwrap();
    for row in &rows {
        assert!(row.max_beta <= row.sup_exact + 1e-12);
        if row.tan_r <= 1.6 {
            assert!(row.max_beta < 0.0);
        }
        // the published bound holds where tan²r ≥ 2
        if row.tan_r.powi(2) >= 2.0 {
            assert_eq!(row.bound_violations, 0, "{row:?}");
        }
    }
    // below tan²r = 2 the vertex η(T) = 0, |η(ν)| = 1 exceeds the bound
    let r = 1.0f64.atan();
    let b = beta_berger(r, 0.0, 1.0).unwrap();
    assert!(b > berger_sup_bound(r));
    assert!(rows.iter().any(|row| row.bound_violations > 0));
    let sampled = th.sampled_root_tan.unwrap();
    assert!(sampled >= th.exact_root_tan - 1e-9 && sampled < th.exact_root_tan + 0.05);
    // η(T) = 0 gives β ≤ −2a²
    assert!(beta_berger(0.7, 0.0, 0.4).unwrap() <= -2.0 / 0.7f64.tan().powi(2));
    assert!((berger_sup_bound(std::f64::consts::FRAC_PI_4) + 3.0).abs() < 1e-12);
}
