//! Smooth simultaneous diagonalization of commuting symmetric tensor fields
//! on a rectangular grid patch.
//!
//! Each node is handled in metric-orthonormal coordinates `Â = L⁻¹αL⁻ᵀ`
//! with `g = LLᵀ`. `Â` is split into eigenvalue blocks of constant
//! multiplicity, `B̂` is diagonalized inside each block by block-local
//! rotations `Q_i`, and the composed frame is propagated breadth-first from
//! the patch centre, each node aligned to its parent by sign, permutation and
//! (inside jointly degenerate clusters) projection.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative eigenvalue gap below which two eigenvalues share a block.
pub const MULTIPLICITY_GAP: f64 = 1e-6;

/// A rectangular grid patch, row-major with index `i·n1 + j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Patch {
    pub shape: [usize; 2],
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
}

impl Patch {
    pub fn new(shape: [usize; 2], origin: [f64; 2], spacing: [f64; 2]) -> Result<Self> {
        if shape[0] == 0 || shape[1] == 0 || !(spacing[0] > 0.0 && spacing[1] > 0.0) {
            return Err(Error::Input(format!("invalid patch {shape:?} with spacing {spacing:?}")));
        }
        Ok(Patch { shape, origin, spacing })
    }

    /// Cell-centred `n × n` grid on `[a, b]²`.
    pub fn square(n: usize, a: f64, b: f64) -> Result<Self> {
        let h = (b - a) / n as f64;
        Self::new([n, n], [a + 0.5 * h, a + 0.5 * h], [h, h])
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.shape[1] + j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.shape[1], idx % self.shape[1])
    }

    pub fn node(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        [self.origin[0] + i as f64 * self.spacing[0], self.origin[1] + j as f64 * self.spacing[1]]
    }

    pub fn center(&self) -> usize {
        self.index(self.shape[0] / 2, self.shape[1] / 2)
    }

    pub fn neighbours(&self, idx: usize) -> Vec<usize> {
        let (i, j) = self.coords(idx);
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push(self.index(i - 1, j));
        }
        if i + 1 < self.shape[0] {
            out.push(self.index(i + 1, j));
        }
        if j > 0 {
            out.push(self.index(i, j - 1));
        }
        if j + 1 < self.shape[1] {
            out.push(self.index(i, j + 1));
        }
        out
    }

    /// Forward edges `(a, b)` along both axes.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.shape[0] {
            for j in 0..self.shape[1] {
                let a = self.index(i, j);
                if i + 1 < self.shape[0] {
                    out.push((a, self.index(i + 1, j)));
                }
                if j + 1 < self.shape[1] {
                    out.push((a, self.index(i, j + 1)));
                }
            }
        }
        out
    }

    pub fn h(&self) -> f64 {
        self.spacing[0].max(self.spacing[1])
    }
}

/// Two symmetric bilinear fields whose metric duals commute.
#[derive(Clone, Debug)]
pub struct CommutingPair {
    pub patch: Patch,
    pub alpha: Vec<DMatrix<f64>>,
    pub beta: Vec<DMatrix<f64>>,
    pub metric: Vec<DMatrix<f64>>,
    chol: Vec<DMatrix<f64>>,
}

/// Sorted eigenpairs of a symmetric matrix, ascending.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Groups sorted values into runs separated by gaps above the threshold.
/// `scale` is the magnitude of the whole spectrum the values come from.
fn blocks(vals: &[f64], scale: f64) -> Vec<std::ops::Range<usize>> {
    let diam = vals.last().copied().unwrap_or(0.0) - vals.first().copied().unwrap_or(0.0);
    // rounding floor keeps numerically equal eigenvalues together when the diameter is itself rounding
    let thr = MULTIPLICITY_GAP * diam + 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=vals.len() {
        if k == vals.len() || vals[k] - vals[k - 1] > thr {
            out.push(start..k);
            start = k;
        }
    }
    out
}

impl CommutingPair {
    pub fn new(patch: Patch, alpha: Vec<DMatrix<f64>>, beta: Vec<DMatrix<f64>>, metric: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = patch.len();
        if alpha.len() != n || beta.len() != n || metric.len() != n {
            return Err(Error::Input(format!("expected {n} nodes per field")));
        }
        let m = metric[0].nrows();
        let mut chol = Vec::with_capacity(n);
        for k in 0..n {
            for f in [&alpha[k], &beta[k], &metric[k]] {
                if f.nrows() != m || f.ncols() != m {
                    return Err(Error::Input(format!("field at node {k} is not {m}×{m}")));
                }
                if (f - f.transpose()).amax() > 1e-12 * f.amax().max(1.0) {
                    return Err(Error::Input(format!("field at node {k} is not symmetric")));
                }
            }
            let l = metric[k]
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Geometry(format!("metric not positive definite at node {k}")))?
                .l();
            chol.push(l);
        }
        let pair = CommutingPair { patch, alpha, beta, metric, chol };
        let worst = pair.max_commutator();
        let (i, j) = pair.patch.coords(worst.1);
        if worst.0 > 1e-10 {
            return Err(Error::Input(format!("fields do not commute: |[A,B]| = {:e} at node ({i}, {j})", worst.0)));
        }
        Ok(pair)
    }

    /// Builds `α = LÂLᵀ`, `β = LB̂Lᵀ` from fields given in metric-orthonormal
    /// coordinates.
    pub fn from_orthonormal(
        patch: Patch,
        metric: impl Fn(&[f64; 2]) -> DMatrix<f64>,
        a_hat: impl Fn(&[f64; 2]) -> DMatrix<f64>,
        b_hat: impl Fn(&[f64; 2]) -> DMatrix<f64>,
    ) -> Result<Self> {
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut g = Vec::new();
        for k in 0..patch.len() {
            let u = patch.node(k);
            let gk = metric(&u);
            let l = gk.clone().cholesky().ok_or_else(|| Error::Geometry("metric not positive definite".into()))?.l();
            let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
            alpha.push(sym(&l * a_hat(&u) * l.transpose()));
            beta.push(sym(&l * b_hat(&u) * l.transpose()));
            g.push(gk);
        }
        Self::new(patch, alpha, beta, g)
    }

    pub fn dim(&self) -> usize {
        self.metric[0].nrows()
    }

    fn hat(&self, k: usize, f: &DMatrix<f64>) -> DMatrix<f64> {
        let li = self.chol[k].clone().try_inverse().expect("Cholesky factor invertible");
        let m = &li * f * li.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// `A = g⁻¹α` at a node.
    pub fn a_at(&self, k: usize) -> DMatrix<f64> {
        self.metric[k].clone().try_inverse().expect("positive definite") * &self.alpha[k]
    }

    pub fn b_at(&self, k: usize) -> DMatrix<f64> {
        self.metric[k].clone().try_inverse().expect("positive definite") * &self.beta[k]
    }

    /// Largest `|[A, B]|` and the node attaining it.
    pub fn max_commutator(&self) -> (f64, usize) {
        (0..self.patch.len())
            .map(|k| {
                let (a, b) = (self.hat(k, &self.alpha[k]), self.hat(k, &self.beta[k]));
                let c = &a * &b - &b * &a;
                (c.amax() / (a.amax() * b.amax()).max(1.0), k)
            })
            .fold((0.0, 0), |m, x| if x.0 > m.0 { x } else { m })
    }

    /// Frame vectors `W` in node-`k` orthonormal coordinates from coordinate
    /// components `E`: `W = LᵀE`.
    fn to_orthonormal(&self, k: usize, e: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol[k].transpose() * e
    }

    fn from_orthonormal_coords(&self, k: usize, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol[k].transpose().try_inverse().expect("invertible") * w
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenvalueFields {
    /// Ascending eigenvalues of `A` at every node.
    pub values: Vec<Vec<f64>>,
    pub max_adjacent_jump: f64,
}

pub fn sorted_eigenvalue_fields(pair: &CommutingPair) -> EigenvalueFields {
    let values: Vec<Vec<f64>> = (0..pair.patch.len()).map(|k| sorted_eigen(&pair.hat(k, &pair.alpha[k])).0).collect();
    let jump = pair
        .patch
        .edges()
        .iter()
        .map(|&(a, b)| values[a].iter().zip(&values[b]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    EigenvalueFields { values, max_adjacent_jump: jump }
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothFrameResult {
    /// Frame vectors as columns in coordinate components.
    #[serde(serialize_with = "ser_mats")]
    pub frame: Vec<DMatrix<f64>>,
    /// `κ^A_μ` per node, following the frame vectors.
    pub kappa_a: Vec<Vec<f64>>,
    pub kappa_b: Vec<Vec<f64>>,
    /// Block sizes of `A`, ascending by eigenvalue.
    pub multiplicities: Vec<usize>,
    pub smoothness: f64,
}

fn ser_mats<S: serde::Serializer>(v: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for m in v {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        seq.serialize_element(&rows)?;
    }
    seq.end()
}

/// Block-local rotations at one node: `A`-eigenvectors `V`, the composed
/// product `R = Q₁⋯Q_r`, and the block ranges.
struct NodeDecomposition {
    frame: DMatrix<f64>,
    a_vals: Vec<f64>,
    b_vals: Vec<f64>,
    blocks: Vec<std::ops::Range<usize>>,
}

fn spectral_scale(vals: &[f64]) -> f64 {
    vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn decompose(a: &DMatrix<f64>, b: &DMatrix<f64>) -> NodeDecomposition {
    let m = a.nrows();
    let (a_vals, v) = sorted_eigen(a);
    let blk = blocks(&a_vals, spectral_scale(&a_vals));
    let bv = v.transpose() * b * &v;
    let mut r = DMatrix::identity(m, m);
    let mut b_vals = vec![0.0; m];
    for range in &blk {
        // Q_i acts as the eigenbasis of the block of B and as the identity elsewhere
        let k = range.len();
        let sub = bv.view((range.start, range.start), (k, k)).into_owned();
        let (vals, q) = sorted_eigen(&sub);
        let mut qi = DMatrix::identity(m, m);
        qi.view_mut((range.start, range.start), (k, k)).copy_from(&q);
        r *= qi;
        b_vals[range.clone()].copy_from_slice(&vals);
    }
    NodeDecomposition { frame: v * r, a_vals, b_vals, blocks: blk }
}

/// Columns that are jointly degenerate for both fields.
fn joint_clusters(d: &NodeDecomposition) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let scale = spectral_scale(&d.b_vals);
    for range in &d.blocks {
        let vals = &d.b_vals[range.clone()];
        for sub in blocks(vals, scale) {
            out.push((range.start + sub.start..range.start + sub.end).collect());
        }
    }
    out
}

/// Gram–Schmidt on columns.
fn orthonormalize(m: &mut DMatrix<f64>) {
    for c in 0..m.ncols() {
        for p in 0..c {
            let d = m.column(c).dot(&m.column(p));
            let pc = m.column(p).into_owned();
            m.column_mut(c).axpy(-d, &pc, 1.0);
        }
        let n = m.column(c).norm();
        m.column_mut(c).scale_mut(1.0 / n);
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// `min over permutation and signs of max_μ |w_μ − s·w'_{π(μ)}|`.
fn frame_deviation(w: &DMatrix<f64>, wp: &DMatrix<f64>, perms: &[Vec<usize>]) -> f64 {
    perms
        .iter()
        .map(|p| {
            (0..w.ncols())
                .map(|mu| {
                    let a = w.column(mu);
                    let b = wp.column(p[mu]);
                    (a - b).norm().min((a + b).norm())
                })
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Aligns a fresh decomposition to the parent frame `wp` (both in the
/// current node's orthonormal coordinates). Jointly degenerate clusters are
/// spanned by the projection of the fixed `reference` frame, which depends
/// smoothly on position; projecting the parent frame instead would
/// accumulate holonomy along the search tree.
fn align(d: &NodeDecomposition, wp: &DMatrix<f64>, reference: &DMatrix<f64>, perms: &[Vec<usize>]) -> DMatrix<f64> {
    let m = d.frame.ncols();
    let mut w = d.frame.clone();
    for cl in joint_clusters(d) {
        if cl.len() < 2 {
            continue;
        }
        let basis = DMatrix::from_fn(m, cl.len(), |r, c| d.frame[(r, cl[c])]);
        let proj = &basis * basis.transpose();
        // reference columns carrying most weight in this cluster, in reference order
        let mut weight: Vec<(usize, f64)> = (0..m).map(|c| (c, (&proj * reference.column(c)).norm())).collect();
        weight.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut chosen: Vec<usize> = weight[..cl.len()].iter().map(|x| x.0).collect();
        chosen.sort_unstable();
        let mut sub = DMatrix::zeros(m, cl.len());
        for (c, &pc) in chosen.iter().enumerate() {
            sub.set_column(c, &(&proj * reference.column(pc)));
        }
        orthonormalize(&mut sub);
        for (c, &col) in cl.iter().enumerate() {
            w.set_column(col, &sub.column(c));
        }
    }
    let best = perms
        .iter()
        .max_by(|p, q| {
            let score = |p: &Vec<usize>| (0..m).map(|mu| w.column(mu).dot(&wp.column(p[mu])).abs()).sum::<f64>();
            score(p).partial_cmp(&score(q)).unwrap()
        })
        .expect("at least one permutation");
    let mut out = DMatrix::zeros(m, m);
    for mu in 0..m {
        let target = best[mu];
        let s = if w.column(mu).dot(&wp.column(target)) < 0.0 { -1.0 } else { 1.0 };
        out.set_column(target, &(w.column(mu) * s));
    }
    out
}

/// Smooth joint eigenframe by block-wise diagonalization and breadth-first
/// alignment from the patch centre.
pub fn simultaneous_diagonalize(pair: &CommutingPair) -> Result<SmoothFrameResult> {
    let n = pair.patch.len();
    let m = pair.dim();
    if m > 6 {
        return Err(Error::Input(format!("frame alignment supports dimension up to 6, got {m}")));
    }
    let perms = permutations(m);
    let mut decs = Vec::with_capacity(n);
    for k in 0..n {
        decs.push(decompose(&pair.hat(k, &pair.alpha[k]), &pair.hat(k, &pair.beta[k])));
    }
    let seed = pair.patch.center();
    let pattern: Vec<usize> = decs[seed].blocks.iter().map(|r| r.len()).collect();
    let mut frames: Vec<Option<DMatrix<f64>>> = vec![None; n];
    let mut kappa_a = vec![Vec::new(); n];
    let mut kappa_b = vec![Vec::new(); n];
    let mut w0 = decs[seed].frame.clone();
    if w0.determinant() < 0.0 {
        let last = -w0.column(m - 1).into_owned();
        w0.set_column(m - 1, &last);
    }
    kappa_a[seed] = decs[seed].a_vals.clone();
    kappa_b[seed] = decs[seed].b_vals.clone();
    frames[seed] = Some(pair.from_orthonormal_coords(seed, &w0));
    let mut queue = VecDeque::from([seed]);
    while let Some(parent) = queue.pop_front() {
        for k in pair.patch.neighbours(parent) {
            if frames[k].is_some() {
                continue;
            }
            let here: Vec<usize> = decs[k].blocks.iter().map(|r| r.len()).collect();
            if here != pattern {
                let (i, j) = pair.patch.coords(k);
                return Err(Error::PatchSplit(i, j));
            }
            let wp = pair.to_orthonormal(k, frames[parent].as_ref().expect("parent placed"));
            let reference = pair.to_orthonormal(k, frames[seed].as_ref().expect("seed placed"));
            let w = align(&decs[k], &wp, &reference, &perms);
            let (ah, bh) = (pair.hat(k, &pair.alpha[k]), pair.hat(k, &pair.beta[k]));
            kappa_a[k] = (0..m).map(|c| (w.column(c).transpose() * &ah * w.column(c))[(0, 0)]).collect();
            kappa_b[k] = (0..m).map(|c| (w.column(c).transpose() * &bh * w.column(c))[(0, 0)]).collect();
            frames[k] = Some(pair.from_orthonormal_coords(k, &w));
            queue.push_back(k);
        }
    }
    let frame: Vec<DMatrix<f64>> = frames.into_iter().map(|f| f.expect("patch is connected")).collect();
    let smoothness = smoothness_score(pair, &frame);
    Ok(SmoothFrameResult { frame, kappa_a, kappa_b, multiplicities: pattern, smoothness })
}

/// Largest adjacent frame deviation after optimal sign and permutation.
pub fn smoothness_score(pair: &CommutingPair, frames: &[DMatrix<f64>]) -> f64 {
    let perms = permutations(pair.dim());
    pair.patch
        .edges()
        .iter()
        .map(|&(a, b)| frame_deviation(&pair.to_orthonormal(a, &frames[a]), &pair.to_orthonormal(a, &frames[b]), &perms))
        .fold(0.0, f64::max)
}

/// Largest adjacent change of each frame vector up to sign, keeping labels
/// fixed. Unlike [`smoothness_score`] this sees label swaps.
pub fn labelled_jump(pair: &CommutingPair, frames: &[DMatrix<f64>]) -> f64 {
    pair.patch
        .edges()
        .iter()
        .map(|&(a, b)| {
            let (wa, wb) = (pair.to_orthonormal(a, &frames[a]), pair.to_orthonormal(a, &frames[b]));
            (0..wa.ncols())
                .map(|mu| {
                    let (x, y) = (wa.column(mu), wb.column(mu));
                    (x - y).norm().min((x + y).norm())
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Per-node joint eigenvectors of `Â + cB̂` for a fixed generic `c`,
/// sorted, with no alignment. The brute-force oracle.
pub fn nodewise_joint_frames(pair: &CommutingPair) -> Vec<DMatrix<f64>> {
    let c = 0.618_033_988_749_894_8;
    (0..pair.patch.len())
        .map(|k| {
            let s = pair.hat(k, &pair.alpha[k]) + pair.hat(k, &pair.beta[k]) * c;
            pair.from_orthonormal_coords(k, &sorted_eigen(&s).1)
        })
        .collect()
}

/// Invariant residuals of a frame result.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrameDiagnostics {
    /// `max |EᵀgE − I|`.
    pub orthonormality: f64,
    /// `max |A E_μ − κ^A_μ E_μ|` and likewise for `B`.
    pub eigen_a: f64,
    pub eigen_b: f64,
    /// `|Σκ − tr A|` and likewise for `B`.
    pub trace: f64,
    /// Adjacent node pairs where `det E` changes sign.
    pub orientation_flips: usize,
}

pub fn diagnostics(pair: &CommutingPair, res: &SmoothFrameResult) -> FrameDiagnostics {
    let m = pair.dim();
    let mut d = FrameDiagnostics { orthonormality: 0.0, eigen_a: 0.0, eigen_b: 0.0, trace: 0.0, orientation_flips: 0 };
    for k in 0..pair.patch.len() {
        let e = &res.frame[k];
        let gram = e.transpose() * &pair.metric[k] * e;
        d.orthonormality = d.orthonormality.max((gram - DMatrix::identity(m, m)).amax());
        let (a, b) = (pair.a_at(k), pair.b_at(k));
        for mu in 0..m {
            let v = e.column(mu);
            d.eigen_a = d.eigen_a.max((&a * v - v * res.kappa_a[k][mu]).amax());
            d.eigen_b = d.eigen_b.max((&b * v - v * res.kappa_b[k][mu]).amax());
        }
        d.trace = d.trace.max((res.kappa_a[k].iter().sum::<f64>() - a.trace()).abs());
        d.trace = d.trace.max((res.kappa_b[k].iter().sum::<f64>() - b.trace()).abs());
    }
    for (a, b) in pair.patch.edges() {
        if res.frame[a].determinant().signum() != res.frame[b].determinant().signum() {
            d.orientation_flips += 1;
        }
    }
    d
}

/// Largest departure from a per-node match with `oracle` frames: each
/// produced vector must lie in the span of the oracle vectors sharing its
/// joint eigenvalues.
pub fn oracle_mismatch(pair: &CommutingPair, res: &SmoothFrameResult, oracle: &[DMatrix<f64>]) -> f64 {
    let m = pair.dim();
    let mut worst: f64 = 0.0;
    for k in 0..pair.patch.len() {
        let w = pair.to_orthonormal(k, &res.frame[k]);
        let o = pair.to_orthonormal(k, &oracle[k]);
        let (ah, bh) = (pair.hat(k, &pair.alpha[k]), pair.hat(k, &pair.beta[k]));
        let ray = |v: DVector<f64>, f: &DMatrix<f64>| (v.transpose() * f * &v)[(0, 0)];
        let ok: Vec<(f64, f64)> = (0..m).map(|c| (ray(o.column(c).into_owned(), &ah), ray(o.column(c).into_owned(), &bh))).collect();
        let scale = ah.amax().max(bh.amax()).max(1.0);
        for mu in 0..m {
            let (ka, kb) = (res.kappa_a[k][mu], res.kappa_b[k][mu]);
            let mut proj = DVector::zeros(m);
            for (c, &(oa, ob)) in ok.iter().enumerate() {
                if (oa - ka).abs() <= 1e-6 * scale && (ob - kb).abs() <= 1e-6 * scale {
                    proj += o.column(c) * o.column(c).dot(&w.column(mu));
                }
            }
            worst = worst.max((w.column(mu) - proj).norm());
        }
    }
    worst
}

fn rotation(m: usize, gens: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(m, m);
    for &(i, j, t) in gens {
        s[(i, j)] += t;
        s[(j, i)] -= t;
    }
    s.exp()
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// A smooth non-flat metric on the plane.
pub fn sample_metric(m: usize) -> impl Fn(&[f64; 2]) -> DMatrix<f64> {
    move |u: &[f64; 2]| {
        let mut g = DMatrix::identity(m, m);
        for i in 0..m {
            g[(i, i)] += 0.3 * (u[0] + i as f64).sin().powi(2);
            if i + 1 < m {
                let c = 0.2 * (u[1] - 0.5 * i as f64).cos();
                g[(i, i + 1)] = c;
                g[(i + 1, i)] = c;
            }
        }
        g
    }
}

/// Rotating frame with eigenvalues `u₀` and `−u₀` crossing along `u₀ = 0`,
/// and `B = A² + A`.
pub fn crossing_pair(n: usize) -> Result<CommutingPair> {
    let patch = Patch::square(n, -1.0, 1.0)?;
    let a = |u: &[f64; 2]| {
        let r = rotation(2, &[(0, 1, 0.7 * u[0] + 0.4 * u[1])]);
        &r * diag(&[u[0], -u[0]]) * r.transpose()
    };
    CommutingPair::from_orthonormal(patch, sample_metric(2), a, move |u| {
        let x = a(u);
        &x * &x + &x
    })
}

/// Three-dimensional fields where `A` has a constant two-dimensional
/// eigenspace and `B = A² + A` is degenerate on it too.
pub fn degenerate_block_pair(n: usize) -> Result<CommutingPair> {
    let patch = Patch::square(n, -1.0, 1.0)?;
    let a = |u: &[f64; 2]| {
        let r = rotation(3, &[(0, 1, 0.8 * u[0]), (1, 2, 0.5 * u[1]), (0, 2, 0.3 * u[0] * u[1])]);
        &r * diag(&[1.0 + 0.2 * u[0], -1.0, -1.0]) * r.transpose()
    };
    CommutingPair::from_orthonormal(patch, sample_metric(3), a, move |u| {
        let x = a(u);
        &x * &x + &x
    })
}

/// Random smooth fields with separated spectrum and `B` a random quadratic
/// polynomial in `A`.
pub fn random_polynomial_pair(n: usize, m: usize, seed: u64) -> Result<CommutingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patch = Patch::square(n, -1.0, 1.0)?;
    let gens: Vec<(usize, usize, f64, f64)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let phases: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 6.0).collect();
    let coeffs = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() + 0.5, rng.gen::<f64>() - 0.5];
    let a = move |u: &[f64; 2]| {
        let g: Vec<(usize, usize, f64)> = gens.iter().map(|&(i, j, p, q)| (i, j, 1.5 * p * u[0] + 1.5 * q * u[1])).collect();
        let r = rotation(m, &g);
        let vals: Vec<f64> = (0..m).map(|k| 1.5 * k as f64 + 0.3 * (u[0] + u[1] + phases[k]).sin()).collect();
        &r * diag(&vals) * r.transpose()
    };
    let a2 = a.clone();
    CommutingPair::from_orthonormal(patch, sample_metric(m), a, move |u| {
        let x = a2(u);
        &x * &x * coeffs[2] + &x * coeffs[1] + DMatrix::identity(m, m) * coeffs[0]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_grouping() {
        assert_eq!(blocks(&[1.0, 1.0, 1.0], 1.0), vec![0..3]);
        assert_eq!(blocks(&[-1.0, 1.0], 1.0), vec![0..1, 1..2]);
        assert_eq!(blocks(&[0.0, 1.0, 1.0 + 1e-9], 1.0), vec![0..1, 1..3]);
        assert_eq!(blocks(&[-1e-16, 1e-16], 2.0), vec![0..2]);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn identity_a_gives_eigenframe_of_b() {
        let patch = Patch::square(8, -1.0, 1.0).unwrap();
        let b = |u: &[f64; 2]| DMatrix::from_row_slice(2, 2, &[2.0 + u[0], 0.3, 0.3, -1.0]);
        let pair = CommutingPair::from_orthonormal(patch, sample_metric(2), |_| DMatrix::identity(2, 2), b).unwrap();
        let res = simultaneous_diagonalize(&pair).unwrap();
        assert_eq!(res.multiplicities, vec![2]);
        let d = diagnostics(&pair, &res);
        assert!(d.eigen_b < 1e-10 && d.orthonormality < 1e-10);
        assert!(res.kappa_a.iter().flatten().all(|k| (k - 1.0).abs() < 1e-12));
    }

    #[test]
    fn non_commuting_fields_rejected() {
        let patch = Patch::square(4, 0.0, 1.0).unwrap();
        let r = CommutingPair::from_orthonormal(
            patch,
            |_| DMatrix::identity(2, 2),
            |_| diag(&[1.0, 2.0]),
            |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        );
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
