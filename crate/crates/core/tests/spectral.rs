use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symindex::hypersurfaces::ParametricImmersion;
use symindex::space_models::SymmetricSpaceModel;
use symindex::spectral::*;

fn s3() -> Arc<SymmetricSpaceModel> {
    Arc::new(SymmetricSpaceModel::sphere(3, 1.0))
}

/// Sorted `2(m² + k²) + shift` over a box of Fourier modes.
fn torus_oracle(count: usize, shift: f64) -> Vec<f64> {
    let mut v = Vec::new();
    for m in -8i32..=8 {
        for k in -8i32..=8 {
            v.push(2.0 * (m * m + k * k) as f64 + shift);
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.truncate(count);
    v
}

/// Sorted `l(l+1) + shift` with multiplicity `2l+1`.
fn sphere_oracle(count: usize, shift: f64) -> Vec<f64> {
    let mut v = Vec::new();
    for l in 0..20usize {
        for _ in 0..(2 * l + 1) {
            v.push((l * (l + 1)) as f64 + shift);
        }
    }
    v.truncate(count);
    v
}

#[test]
fn flat_torus_laplacian_matches_fourier_modes() {
    let imm = ParametricImmersion::clifford(s3(), 64, 64).unwrap();
    let op = laplace_beltrami_with(&imm, Stencil::Fourth).unwrap();
    let rep = spectrum(&op, 20, Some(1e-9)).unwrap();
    for (c, e) in rep.eigenvalues.iter().zip(torus_oracle(20, 0.0)) {
        assert!((c - e).abs() <= 1e-3 * e.max(1.0), "{c} vs {e}");
    }
    assert!(rep.eigenvalues[0].abs() < 1e-10);
}

#[test]
fn laplacian_kills_constants_and_is_mass_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for imm in [
        ParametricImmersion::clifford(s3(), 16, 20).unwrap(),
        ParametricImmersion::equator(s3(), 24, 12).unwrap(),
        ParametricImmersion::perturbed_clifford(s3(), 16, 16, 0.2, symindex::hypersurfaces::Derivatives::Exact).unwrap(),
    ] {
        for stencil in [Stencil::Second, Stencil::Fourth, Stencil::Spectral] {
            let Ok(op) = laplace_beltrami_with(&imm, stencil) else {
                assert!(!imm.grid.is_torus());
                continue;
            };
            let one = vec![1.0; op.size()];
            assert!(op.apply(&one).iter().all(|v| v.abs() < 1e-10));
            for _ in 0..5 {
                let u: Vec<f64> = (0..op.size()).map(|_| rng.gen::<f64>() - 0.5).collect();
                let v: Vec<f64> = (0..op.size()).map(|_| rng.gen::<f64>() - 0.5).collect();
                let lu = op.apply(&u);
                let lv = op.apply(&v);
                let d = op.mass_inner(&lu, &v) - op.mass_inner(&u, &lv);
                assert!(d.abs() < 1e-10, "{stencil:?}: asymmetry {d}");
            }
        }
    }
}

#[test]
fn round_sphere_laplacian_harmonics() {
    let imm = ParametricImmersion::equator(s3(), 64, 32).unwrap();
    let op = laplace_beltrami(&imm).unwrap();
    let rep = spectrum(&op, 9, Some(1e-9)).unwrap();
    for (c, e) in rep.eigenvalues.iter().zip(sphere_oracle(9, 0.0)) {
        assert!((c - e).abs() <= 0.01 * e.max(1.0), "{c} vs {e}");
    }
}

#[test]
fn clifford_jacobi_index_and_potential() {
    let imm = ParametricImmersion::clifford(s3(), 32, 32).unwrap();
    let op = jacobi_operator(&imm).unwrap();
    assert!(op.potential.iter().all(|v| (v - 4.0).abs() < 1e-10));
    let expected = torus_oracle(10, -4.0);
    for n in [32, 48, 64] {
        let imm = ParametricImmersion::clifford(s3(), n, n).unwrap();
        let op = jacobi_operator(&imm).unwrap();
        let rep = spectrum(&op, 10, None).unwrap();
        assert_eq!(rep.index, 5, "grid {n}");
        assert_eq!(rep.nullity, 4, "grid {n}");
        assert!((rep.eigenvalues[0] + 4.0).abs() < 1e-9);
        for (c, e) in rep.eigenvalues.iter().zip(&expected).take(5) {
            assert!((c - e).abs() <= 0.02 * e.abs());
        }
    }
}

#[test]
fn clifford_index_with_measured_zero_tolerance() {
    let expected = torus_oracle(12, -4.0);
    for n in [32, 48, 64] {
        let imm = ParametricImmersion::clifford(s3(), n, n).unwrap();
        let op = jacobi_operator(&imm).unwrap();
        let raw = spectrum(&op, 12, Some(1.0)).unwrap();
        let err = raw.eigenvalues.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let rep = spectrum(&op, 12, Some(10.0 * err)).unwrap();
        assert_eq!((rep.index, rep.nullity), (5, 4), "grid {n}, tol {}", 10.0 * err);
    }
}

#[test]
fn clifford_eigenvalues_converge_at_second_order() {
    let expected = torus_oracle(10, -4.0);
    let errs: Vec<f64> = [32usize, 48, 64]
        .iter()
        .map(|&n| {
            let imm = ParametricImmersion::clifford(s3(), n, n).unwrap();
            let rep = spectrum(&jacobi_operator(&imm).unwrap(), 10, None).unwrap();
            rep.eigenvalues.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    let p1 = (errs[0] / errs[1]).ln() / (48.0f64 / 32.0).ln();
    let p2 = (errs[1] / errs[2]).ln() / (64.0f64 / 48.0).ln();
    assert!(p1 >= 1.8 && p2 >= 1.8, "orders {p1} {p2} from {errs:?}");
}

#[test]
fn equator_index_one_nullity_three() {
    let imm = ParametricImmersion::equator(s3(), 64, 32).unwrap();
    let op = jacobi_operator(&imm).unwrap();
    assert!(op.potential.iter().all(|v| (v - 2.0).abs() < 1e-10));
    let rep = spectrum(&op, 9, None).unwrap();
    assert_eq!(rep.index, 1);
    assert_eq!(rep.nullity, 3);
    for (c, e) in rep.eigenvalues.iter().zip(sphere_oracle(9, -2.0)) {
        let scale = if e == 0.0 { 1.0 } else { e.abs() };
        assert!((c - e).abs() <= 0.02 * scale, "{c} vs {e}");
    }
}

#[test]
fn iterative_solver_above_dense_limit() {
    let imm = ParametricImmersion::equator(s3(), 96, 48).unwrap();
    let rep = spectrum(&jacobi_operator(&imm).unwrap(), 9, None).unwrap();
    assert_eq!(rep.solver, "shift-invert-lanczos");
    assert_eq!((rep.index, rep.nullity), (1, 3));
}

#[test]
fn shift_moves_every_eigenvalue() {
    let imm = ParametricImmersion::clifford(s3(), 16, 16).unwrap();
    let op = jacobi_operator(&imm).unwrap();
    let a = spectrum(&op, 12, None).unwrap();
    let b = spectrum(&op.shifted(0.75), 12, None).unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((y - x - 0.75).abs() < 1e-10);
    }
}

#[test]
fn rayleigh_quotients_match_eigenvalues() {
    let imm = ParametricImmersion::perturbed_clifford(s3(), 24, 24, 0.1, symindex::hypersurfaces::Derivatives::Exact).unwrap();
    let op = jacobi_operator(&imm).unwrap();
    let rep = spectrum_with_vectors(&op, 8, None).unwrap();
    for (l, phi) in rep.eigenvalues.iter().zip(&rep.eigenvectors) {
        let rq = op.quadratic_form(phi, phi) / op.mass_inner(phi, phi);
        assert!((rq - l).abs() <= 1e-8, "{rq} vs {l}");
    }
}

#[test]
fn counting_lemma_edge_cases() {
    let imm = ParametricImmersion::clifford(s3(), 16, 16).unwrap();
    let rep = spectrum(&jacobi_operator(&imm).unwrap(), 10, None).unwrap();
    let empty = DMatrix::<f64>::zeros(0, 0);
    let r = counting_lemma_check(&empty, &empty, &rep, 0.0, 6, 0, 1e-6);
    assert!(r.hypothesis_holds && r.part_i == Some(true) && r.bound_i == 0.0);
    // vanishing trace fails the strict hypothesis
    let zero = DMatrix::<f64>::zeros(2, 2);
    let l = DMatrix::<f64>::identity(2, 2);
    let r = counting_lemma_check(&zero, &l, &rep, 0.0, 15, 0, 1e-6);
    assert!(!r.hypothesis_holds && r.part_i.is_none());
    let neg = DMatrix::<f64>::identity(2, 2) * -1.0;
    let r = counting_lemma_check(&neg, &l, &rep, 0.0, 6, 0, 1e-6);
    assert_eq!(r.part_i, Some(true));
    assert_eq!(r.count_below_c, 5);
}
