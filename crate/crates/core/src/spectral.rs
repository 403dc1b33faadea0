//! Discrete Laplace–Beltrami and Jacobi operators, spectra, index counting.
//!
//! Operators are stored as a stiffness matrix `K` (the Dirichlet form), a
//! diagonal mass `M` and a nodal potential `V`. The quadratic form is
//! `Q(φ,ψ) = φᵀKψ − Σ M V φψ` and the reported eigenvalues `λ` solve
//! `(K − MV)φ = λMφ`, so `𝒥φ = −λφ` and the index counts negative `λ`.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypersurfaces::{extrinsic_data, ExtrinsicData, Grid, ParametricImmersion};

/// Largest size handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 4096;

/// Spatial discretization of the Dirichlet form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stencil {
    /// Compact face-flux differences, second order, any grid.
    Second,
    /// Fourth-order staggered face fluxes, periodic grids.
    Fourth,
    /// Periodic Fourier differentiation, applied matrix-free.
    Spectral,
}

#[derive(Clone, Debug)]
enum Stiffness {
    Sparse(SparseColMat<usize, f64>),
    Spectral { diff: [DMatrix<f64>; 2], weights: [[Vec<f64>; 2]; 2] },
}

#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub stencil: Stencil,
    stiffness: Stiffness,
    /// Nodal area weights.
    pub mass: Vec<f64>,
    pub potential: Vec<f64>,
    /// Largest geodesic grid spacing.
    pub h_arc: f64,
}

/// `√h h^{μξ} ΔuΔv` at a parameter point.
fn flux_weights(imm: &ParametricImmersion, u: &[f64; 2]) -> Result<([[f64; 2]; 2], f64, [f64; 2])> {
    let (h, hinv, sq) = imm.induced_metric(u)?;
    let [d0, d1] = imm.grid.spacing();
    let mut w = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            w[a][b] = sq * hinv[(a, b)] * d0 * d1;
        }
    }
    Ok((w, sq * d0 * d1, [h[(0, 0)].sqrt() * d0, h[(1, 1)].sqrt() * d1]))
}

fn first_derivative_stencil(stencil: Stencil, h: f64) -> Vec<(isize, f64)> {
    match stencil {
        Stencil::Fourth => vec![(-2, 1.0 / (12.0 * h)), (-1, -8.0 / (12.0 * h)), (1, 8.0 / (12.0 * h)), (2, -1.0 / (12.0 * h))],
        _ => vec![(-1, -0.5 / h), (1, 0.5 / h)],
    }
}

/// Periodic Fourier differentiation matrix on `n` (even) equispaced nodes.
pub fn fourier_diff_matrix(n: usize) -> DMatrix<f64> {
    let h = std::f64::consts::TAU / n as f64;
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            let d = j as f64 - k as f64;
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * d * h).tan()
        }
    })
}

impl DiscreteOperator {
    fn assemble(imm: &ParametricImmersion, stencil: Stencil, potential: Vec<f64>) -> Result<Self> {
        let grid = imm.grid;
        let n = grid.len();
        if potential.len() != n {
            return Err(Error::Input("potential length differs from grid size".into()));
        }
        if stencil != Stencil::Second && !grid.is_torus() {
            return Err(Error::Input(format!("{stencil:?} stencil needs a doubly periodic grid")));
        }
        let sp = grid.spacing();
        let mut mass = vec![0.0; n];
        let mut node_w = vec![[[0.0; 2]; 2]; n];
        let mut h_arc: f64 = 0.0;
        for idx in 0..n {
            let (w, m, arc) = flux_weights(imm, &grid.node(idx))?;
            node_w[idx] = w;
            mass[idx] = m;
            h_arc = h_arc.max(arc[0]).max(arc[1]);
        }
        let stiffness = match stencil {
            Stencil::Spectral => {
                let [n0, n1] = grid.shape();
                if n0 % 2 == 1 || n1 % 2 == 1 {
                    return Err(Error::Input("spectral stencil needs even resolutions".into()));
                }
                let weights = [
                    [node_w.iter().map(|w| w[0][0]).collect(), node_w.iter().map(|w| w[0][1]).collect()],
                    [node_w.iter().map(|w| w[1][0]).collect(), node_w.iter().map(|w| w[1][1]).collect()],
                ];
                Stiffness::Spectral { diff: [fourier_diff_matrix(n0), fourier_diff_matrix(n1)], weights }
            }
            _ => {
                let mut trip: Vec<Triplet<usize, usize, f64>> = Vec::new();
                let scale = node_w.iter().flat_map(|w| [w[0][0].abs(), w[1][1].abs()]).fold(0.0, f64::max);
                // Fluxes through faces with the midpoint metric evaluated exactly.
                // Second order uses the two-point face difference; fourth order the
                // staggered difference (u₋₁ − 27u₀ + 27u₁ − u₂)/24, whose kernel is
                // only the constants.
                let face: &[(isize, f64)] = match stencil {
                    Stencil::Second => &[(0, -1.0), (1, 1.0)],
                    _ => &[(-1, 1.0 / 24.0), (0, -27.0 / 24.0), (1, 27.0 / 24.0), (2, -1.0 / 24.0)],
                };
                for idx in 0..n {
                    for mu in 0..2 {
                        if grid.shift(idx, mu, 1).is_none() {
                            continue;
                        }
                        let mut u = grid.node(idx);
                        u[mu] += 0.5 * sp[mu];
                        let (w, _, _) = flux_weights(imm, &u)?;
                        let c = w[mu][mu] / (sp[mu] * sp[mu]);
                        for &(oa, ca) in face {
                            let a = grid.shift(idx, mu, oa).expect("periodic or interior");
                            for &(ob, cb) in face {
                                let b = grid.shift(idx, mu, ob).expect("periodic or interior");
                                trip.push(Triplet::new(a, b, c * ca * cb));
                            }
                        }
                    }
                }
                let pairs = [(0usize, 1usize), (1, 0)];
                let d = [first_derivative_stencil(stencil, sp[0]), first_derivative_stencil(stencil, sp[1])];
                for idx in 0..n {
                    for (mu, nu) in pairs {
                        let w = node_w[idx][mu][nu];
                        if w.abs() <= 1e-14 * scale {
                            continue;
                        }
                        for &(oa, ca) in &d[mu] {
                            // Neumann mirror past interval ends
                            let a = grid.shift(idx, mu, oa).unwrap_or(idx);
                            for &(ob, cb) in &d[nu] {
                                let b = grid.shift(idx, nu, ob).unwrap_or(idx);
                                trip.push(Triplet::new(a, b, ca * w * cb));
                            }
                        }
                    }
                }
                let k = SparseColMat::try_new_from_triplets(n, n, &trip)
                    .map_err(|e| Error::Numeric(format!("sparse assembly failed: {e:?}")))?;
                Stiffness::Sparse(k)
            }
        };
        Ok(DiscreteOperator { grid, stencil, stiffness, mass, potential, h_arc })
    }

    pub fn size(&self) -> usize {
        self.mass.len()
    }

    /// `K u`.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        match &self.stiffness {
            Stiffness::Sparse(k) => {
                let mut out = vec![0.0; u.len()];
                for j in 0..k.ncols() {
                    let uj = u[j];
                    if uj == 0.0 {
                        continue;
                    }
                    for (i, v) in k.row_idx_of_col(j).zip(k.val_of_col(j)) {
                        out[i] += v * uj;
                    }
                }
                out
            }
            Stiffness::Spectral { diff, weights } => {
                let g0 = self.line_apply(&diff[0], 0, u, false);
                let g1 = self.line_apply(&diff[1], 1, u, false);
                let n = u.len();
                let f0: Vec<f64> = (0..n).map(|i| weights[0][0][i] * g0[i] + weights[0][1][i] * g1[i]).collect();
                let f1: Vec<f64> = (0..n).map(|i| weights[1][0][i] * g0[i] + weights[1][1][i] * g1[i]).collect();
                let a = self.line_apply(&diff[0], 0, &f0, true);
                let b = self.line_apply(&diff[1], 1, &f1, true);
                a.iter().zip(&b).map(|(x, y)| x + y).collect()
            }
        }
    }

    /// Applies a dense 1-D matrix (or its transpose) along one grid axis.
    fn line_apply(&self, d: &DMatrix<f64>, axis: usize, u: &[f64], transpose: bool) -> Vec<f64> {
        let [n0, n1] = self.grid.shape();
        let mut out = vec![0.0; u.len()];
        let (len, lines) = if axis == 0 { (n0, n1) } else { (n1, n0) };
        let at = |line: usize, k: usize| if axis == 0 { k * n1 + line } else { line * n1 + k };
        for line in 0..lines {
            for r in 0..len {
                let mut s = 0.0;
                for c in 0..len {
                    let m = if transpose { d[(c, r)] } else { d[(r, c)] };
                    s += m * u[at(line, c)];
                }
                out[at(line, r)] = s;
            }
        }
        out
    }

    /// `−M⁻¹K u + V u`: the Jacobi operator (or Laplacian when `V = 0`).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.stiffness_apply(u);
        (0..u.len()).map(|i| -ku[i] / self.mass[i] + self.potential[i] * u[i]).collect()
    }

    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..u.len()).map(|i| self.mass[i] * u[i] * v[i]).sum()
    }

    /// `φᵀKψ − Σ M V φψ`.
    pub fn quadratic_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let kv = self.stiffness_apply(v);
        let mut s = 0.0;
        for i in 0..u.len() {
            s += u[i] * kv[i] - self.mass[i] * self.potential[i] * u[i] * v[i];
        }
        s
    }

    /// Same stiffness with `λ ↦ λ + s`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.potential.iter_mut().for_each(|v| *v -= s);
        out
    }

    /// `M^{-1/2}(K − MV)M^{-1/2}` as a dense matrix.
    pub fn dense_symmetric(&self) -> Result<Mat<f64>> {
        let n = self.size();
        let Stiffness::Sparse(k) = &self.stiffness else {
            return Err(Error::NotApplicable("dense form of the matrix-free spectral stencil".into()));
        };
        let mut a = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for (i, v) in k.row_idx_of_col(j).zip(k.val_of_col(j)) {
                a[(i, j)] += v / (self.mass[i] * self.mass[j]).sqrt();
            }
        }
        for i in 0..n {
            a[(i, i)] -= self.potential[i];
        }
        Ok(a)
    }

    /// Default zero tolerance `5·h_arc²·max(1, max|V|)`.
    pub fn default_tol_zero(&self) -> f64 {
        let vmax = self.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        5.0 * self.h_arc * self.h_arc * vmax.max(1.0)
    }
}

pub fn laplace_beltrami(imm: &ParametricImmersion) -> Result<DiscreteOperator> {
    laplace_beltrami_with(imm, Stencil::Second)
}

pub fn laplace_beltrami_with(imm: &ParametricImmersion, stencil: Stencil) -> Result<DiscreteOperator> {
    DiscreteOperator::assemble(imm, stencil, vec![0.0; imm.grid.len()])
}

/// Jacobi operator `Δ + Ric(ν,ν) + |A|²`.
pub fn jacobi_operator(imm: &ParametricImmersion) -> Result<DiscreteOperator> {
    let data = extrinsic_data(imm)?;
    jacobi_operator_from(imm, &data, Stencil::Second)
}

pub fn jacobi_operator_from(imm: &ParametricImmersion, data: &ExtrinsicData, stencil: Stencil) -> Result<DiscreteOperator> {
    let v = data.nodes.iter().map(|g| g.ric_nu + g.a_norm2).collect();
    DiscreteOperator::assemble(imm, stencil, v)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub grid: [usize; 2],
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub nullity: usize,
    pub tol_zero: f64,
    pub runtime_ms: f64,
    pub solver: &'static str,
    /// All computed eigenvalues lie below `tol_zero`: the index may be larger.
    pub saturated: bool,
    /// Mass-orthonormal eigenfunctions, when requested.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectrumReport {
    pub fn count_below(&self, c: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < c - self.tol_zero).count()
    }
}

/// `k` smallest eigenvalues, without eigenvectors.
pub fn spectrum(op: &DiscreteOperator, k: usize, tol_zero: Option<f64>) -> Result<SpectrumReport> {
    spectrum_impl(op, k, tol_zero, false)
}

/// `k` smallest eigenpairs with mass-orthonormal eigenfunctions.
pub fn spectrum_with_vectors(op: &DiscreteOperator, k: usize, tol_zero: Option<f64>) -> Result<SpectrumReport> {
    spectrum_impl(op, k, tol_zero, true)
}

fn spectrum_impl(op: &DiscreteOperator, k: usize, tol_zero: Option<f64>, vectors: bool) -> Result<SpectrumReport> {
    let n = op.size();
    if k == 0 || k > n {
        return Err(Error::Input(format!("requested {k} eigenvalues of a size-{n} operator")));
    }
    let tol = tol_zero.unwrap_or_else(|| op.default_tol_zero());
    if !(tol > 0.0) {
        return Err(Error::Input("tol_zero must be positive".into()));
    }
    let start = Instant::now();
    let dense = n <= DENSE_LIMIT && matches!(op.stiffness, Stiffness::Sparse(_));
    let (vals, vecs) = if dense { dense_eigen(op, k, vectors)? } else { lanczos_eigen(op, k)? };
    let eigenvectors = if vectors {
        vecs.into_iter()
            .map(|y| y.iter().zip(&op.mass).map(|(v, m)| v / m.sqrt()).collect())
            .collect()
    } else {
        Vec::new()
    };
    let index = vals.iter().filter(|&&l| l < -tol).count();
    let nullity = vals.iter().filter(|&&l| l.abs() <= tol).count();
    Ok(SpectrumReport {
        grid: op.grid.shape(),
        saturated: vals.last().is_some_and(|&l| l <= tol),
        eigenvalues: vals,
        index,
        nullity,
        tol_zero: tol,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        solver: if dense { "dense" } else { "shift-invert-lanczos" },
        eigenvectors,
    })
}

fn dense_eigen(op: &DiscreteOperator, k: usize, vectors: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let a = op.dense_symmetric()?;
    if vectors {
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numeric(format!("dense eigensolver: {e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let vals = (0..k).map(|i| s[i]).collect();
        let vecs = (0..k).map(|j| (0..a.nrows()).map(|i| u[(i, j)]).collect()).collect();
        Ok((vals, vecs))
    } else {
        let mut all = a
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numeric(format!("dense eigensolver: {e:?}")))?;
        all.truncate(k);
        Ok((all, Vec::new()))
    }
}

/// Shift-invert Lanczos with full reorthogonalization. The shift sits below
/// the spectrum so `K − M(V + σ)` is positive definite and factors by
/// sparse Cholesky.
fn lanczos_eigen(op: &DiscreteOperator, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = op.size();
    let Stiffness::Sparse(kmat) = &op.stiffness else {
        return Err(Error::NotApplicable("iterative eigensolve of the matrix-free spectral stencil".into()));
    };
    let vmax = op.potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sigma = -vmax - 1.0;
    let mut trip = Vec::new();
    for j in 0..n {
        for (i, v) in kmat.row_idx_of_col(j).zip(kmat.val_of_col(j)) {
            trip.push(Triplet::new(i, j, *v));
        }
        trip.push(Triplet::new(j, j, -op.mass[j] * (op.potential[j] + sigma)));
    }
    let shifted = SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| Error::Numeric(format!("{e:?}")))?;
    let llt = shifted
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Numeric(format!("sparse Cholesky of shifted operator failed: {e:?}")))?;
    let msq: Vec<f64> = op.mass.iter().map(|m| m.sqrt()).collect();
    // x ↦ (A − σ)⁻¹x with A = M^{-1/2}(K − MV)M^{-1/2}
    let inv = |x: &DVector<f64>| -> DVector<f64> {
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| x[i] * msq[i]);
        llt.solve_in_place(rhs.as_mut());
        DVector::from_fn(n, |i, _| rhs[(i, 0)] * msq[i])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let v0 = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let mut m = (3 * k + 40).min(n);
    loop {
        let mut basis: Vec<DVector<f64>> = vec![v0.normalize()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..m {
            let mut w = inv(&basis[j]);
            let a = w.dot(&basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = w.dot(b);
                    w.axpy(-c, b, 1.0);
                }
            }
            let bnorm = w.norm();
            if j + 1 == m || bnorm < 1e-14 {
                beta.push(bnorm);
                break;
            }
            beta.push(bnorm);
            basis.push(w / bnorm);
        }
        let steps = alpha.len();
        let t = DMatrix::from_fn(steps, steps, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let want = k.min(steps);
        let last_beta = *beta.last().unwrap_or(&0.0);
        let mut worst: f64 = 0.0;
        for &i in order.iter().take(want) {
            let theta = eig.eigenvalues[i];
            let resid = (last_beta * eig.eigenvectors[(steps - 1, i)]).abs();
            // residual on λ = σ + 1/θ
            worst = worst.max(resid / (theta * theta));
        }
        let exhausted = steps < m || m == n;
        if worst <= 1e-10 || exhausted {
            if want < k {
                return Err(Error::Numeric(format!("Lanczos found only {want} of {k} eigenvalues")));
            }
            let mut pairs: Vec<(f64, Vec<f64>)> = order
                .iter()
                .take(k)
                .map(|&i| {
                    let mut x = DVector::zeros(n);
                    for (j, b) in basis.iter().enumerate().take(steps) {
                        x.axpy(eig.eigenvectors[(j, i)], b, 1.0);
                    }
                    (sigma + 1.0 / eig.eigenvalues[i], x.normalize().data.into())
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            return Ok(pairs.into_iter().unzip());
        }
        if m == n {
            return Err(Error::Numeric(format!("Lanczos did not converge: residual {worst:e} after {m} steps")));
        }
        m = (2 * m).min(n);
    }
}

/// Outcome of the eigenvalue-counting argument for a family of test fields.
#[derive(Clone, Debug, Serialize)]
pub struct CountingLemmaReport {
    pub c: f64,
    pub dim_s: usize,
    pub dim_g: usize,
    pub dim_s0: usize,
    /// `Tr q_T < c Tr L_T` for every nonzero `T ∈ S`.
    pub hypothesis_holds: bool,
    /// Largest eigenvalue of `Tq − c TL` divided by `scale`.
    pub hypothesis_margin: f64,
    pub scale: f64,
    pub count_below_c: usize,
    pub bound_i: f64,
    /// `None` when the hypothesis fails.
    pub part_i: Option<bool>,
    pub bound_ii: f64,
    pub part_ii: bool,
}

/// `tq[a][b] = Σ_v Q(φ_{T_a,v}, φ_{T_b,v})` and likewise `tl` with the L²
/// product, for a basis `T_a` of `S`. The hypothesis for all `T ∈ S` is
/// negative definiteness of `tq − c·tl`, tested with relative tolerance `rel_tol`.
pub fn counting_lemma_check(
    tq: &DMatrix<f64>,
    tl: &DMatrix<f64>,
    spec: &SpectrumReport,
    c: f64,
    dim_g: usize,
    dim_s0: usize,
    rel_tol: f64,
) -> CountingLemmaReport {
    let s = tq.nrows();
    let count = spec.count_below(c);
    let (holds, margin, scale) = if s == 0 {
        (true, f64::NEG_INFINITY, 0.0)
    } else {
        let m = tq - tl * c;
        let m = (&m + m.transpose()) * 0.5;
        let top = SymmetricEigen::new(m).eigenvalues.max();
        // |Q(φ,φ)| ≤ max(|c|, |λ₁|)·L(φ,φ) bounds each term from the lowest eigenvalue
        let w = c.abs().max(spec.eigenvalues.first().map_or(0.0, |l| l.abs()));
        let scale = (0..s).map(|i| tq[(i, i)].abs() + w * tl[(i, i)]).sum::<f64>().max(f64::MIN_POSITIVE);
        (top < -rel_tol * scale, top / scale, scale)
    };
    let bound_i = s as f64 / dim_g as f64;
    let bound_ii = s.saturating_sub(dim_s0) as f64 / dim_g as f64;
    CountingLemmaReport {
        c,
        dim_s: s,
        dim_g,
        dim_s0,
        hypothesis_holds: holds,
        hypothesis_margin: margin,
        scale,
        count_below_c: count,
        bound_i,
        part_i: holds.then_some(count as f64 >= bound_i),
        bound_ii,
        part_ii: spec.index as f64 >= bound_ii,
    }
}
