use nalgebra::DMatrix;
use symindex::simdiag::{
    crossing_pair, degenerate_block_pair, diagnostics, labelled_jump, nodewise_joint_frames, oracle_mismatch, random_polynomial_pair,
    simultaneous_diagonalize, smoothness_score, sorted_eigenvalue_fields, sample_metric, CommutingPair, Patch,
};
use symindex::Error;

#[test]
fn random_polynomial_pairs_match_oracle_and_stay_smooth() {
    for seed in 0..20 {
        let coarse = random_polynomial_pair(16, 3, seed).unwrap();
        let fine = random_polynomial_pair(32, 3, seed).unwrap();
        let mut scores = Vec::new();
        for pair in [&coarse, &fine] {
            let res = simultaneous_diagonalize(pair).unwrap();
            let d = diagnostics(pair, &res);
            assert!(d.orthonormality < 1e-10, "seed {seed}: {d:?}");
            assert!(d.eigen_a < 1e-9 && d.eigen_b < 1e-9, "seed {seed}: {d:?}");
            assert!(d.trace < 1e-9, "seed {seed}: {d:?}");
            assert_eq!(d.orientation_flips, 0, "seed {seed}");
            let mismatch = oracle_mismatch(pair, &res, &nodewise_joint_frames(pair));
            assert!(mismatch < 1e-8, "seed {seed}: {mismatch}");
            scores.push(res.smoothness / pair.patch.h());
        }
        // deviation per unit spacing stays bounded under refinement
        assert!(scores[1] < 1.2 * scores[0] && scores[0] < 10.0, "seed {seed}: {scores:?}");
    }
}

#[test]
fn eigenvalue_crossing_is_followed_smoothly() {
    for n in [16, 32] {
        let pair = crossing_pair(n).unwrap();
        let h = pair.patch.h();
        let res = simultaneous_diagonalize(&pair).unwrap();
        assert!(res.smoothness < 3.0 * h, "n = {n}: {} vs h = {h}", res.smoothness);
        // sorted nodewise labels swap across the crossing
        assert!(labelled_jump(&pair, &nodewise_joint_frames(&pair)) > 0.5);
        assert!(labelled_jump(&pair, &res.frame) < 3.0 * h);
        // each frame vector follows one smooth branch, so κ changes sign across the crossing
        let k = &res.kappa_a;
        let edge_jump = pair
            .patch
            .edges()
            .iter()
            .map(|&(a, b)| (k[a][0] - k[b][0]).abs().max((k[a][1] - k[b][1]).abs()))
            .fold(0.0, f64::max);
        assert!(edge_jump < 2.0 * h, "{edge_jump}");
        let sorted = sorted_eigenvalue_fields(&pair);
        assert!(sorted.max_adjacent_jump < 2.0 * h);
        assert!(oracle_mismatch(&pair, &res, &nodewise_joint_frames(&pair)) < 1e-8);
    }
}

#[test]
fn degenerate_joint_eigenspace_is_aligned() {
    let pair = degenerate_block_pair(24).unwrap();
    let res = simultaneous_diagonalize(&pair).unwrap();
    assert_eq!(res.multiplicities, vec![2, 1]);
    let d = diagnostics(&pair, &res);
    assert!(d.orthonormality < 1e-10 && d.eigen_a < 1e-10 && d.eigen_b < 1e-10, "{d:?}");
    assert!(res.smoothness < 3.0 * pair.patch.h(), "{}", res.smoothness);
    assert_eq!(d.orientation_flips, 0);
    assert_eq!(smoothness_score(&pair, &res.frame), res.smoothness);
    assert!(oracle_mismatch(&pair, &res, &nodewise_joint_frames(&pair)) < 1e-8);
}

#[test]
fn multiplicity_change_reports_patch_split() {
    // A = diag(u₀², 0) is doubly degenerate only on the column u₀ = 0
    let patch = Patch::new([5, 5], [-1.0, -1.0], [0.5, 0.5]).unwrap();
    let pair = CommutingPair::from_orthonormal(
        patch,
        sample_metric(2),
        |u| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![u[0] * u[0], 0.0])),
        |_| DMatrix::identity(2, 2),
    )
    .unwrap();
    match simultaneous_diagonalize(&pair) {
        Err(Error::PatchSplit(i, _)) => assert_ne!(i, 2),
        other => panic!("expected a patch split, got {other:?}"),
    }
}

#[test]
fn frames_are_deterministic() {
    let pair = random_polynomial_pair(12, 3, 99).unwrap();
    let a = serde_json::to_string(&simultaneous_diagonalize(&pair).unwrap()).unwrap();
    let b = serde_json::to_string(&simultaneous_diagonalize(&pair).unwrap()).unwrap();
    assert_eq!(a, b);
}
