//! Harmonic 1-forms on parametrized tori and the Bochner identity.
//!
//! Forms are stored by their parameter components `ω_μ` at grid nodes.
//! Derivatives use periodic fourth-order centred differences `D₄`. A harmonic
//! representative with prescribed periods is `ω = c + D₄f` where `f` makes
//! `ω` co-closed; such `ω` is discretely closed because the `D₄` along the
//! two axes commute, and its periods are exactly `2πc`.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};
use serde_json::json;

use crate::error::{Error, Result};
use crate::hypersurfaces::{ExtrinsicData, Grid, ParametricImmersion, PointGeometry};

/// Periodic fourth-order derivative along `axis`.
pub fn d4(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing()[axis];
    (0..f.len())
        .map(|i| {
            let at = |d: isize| f[grid.shift(i, axis, d).expect("periodic axis")];
            (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOneForm {
    pub grid: Grid,
    /// `ω_μ` at every node.
    pub comps: [Vec<f64>; 2],
}

impl DiscreteOneForm {
    pub fn zero(grid: Grid) -> Self {
        DiscreteOneForm { grid, comps: [vec![0.0; grid.len()], vec![0.0; grid.len()]] }
    }

    /// Samples `u ↦ (ω_0, ω_1)` at the nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64; 2]) -> [f64; 2]) -> Self {
        let vals: Vec<[f64; 2]> = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
        DiscreteOneForm { grid, comps: [vals.iter().map(|v| v[0]).collect(), vals.iter().map(|v| v[1]).collect()] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        DiscreteOneForm { grid: self.grid, comps: [self.comps[0].iter().map(|v| v * s).collect(), self.comps[1].iter().map(|v| v * s).collect()] }
    }

    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        let mut out = self.clone();
        for mu in 0..2 {
            for (a, b) in out.comps[mu].iter_mut().zip(&other.comps[mu]) {
                *a += s * b;
            }
        }
        out
    }

    pub fn at(&self, node: usize) -> Vector2<f64> {
        Vector2::new(self.comps[0][node], self.comps[1][node])
    }

    /// `ω♯` in parameter components.
    pub fn sharp(&self, g: &PointGeometry, node: usize) -> Vector2<f64> {
        g.h_inv * self.at(node)
    }

    /// `∂_μ ω_ν` at every node, indexed `[μ][ν]`.
    pub fn derivatives(&self) -> [[Vec<f64>; 2]; 2] {
        let g = &self.grid;
        [
            [d4(g, &self.comps[0], 0), d4(g, &self.comps[1], 0)],
            [d4(g, &self.comps[0], 1), d4(g, &self.comps[1], 1)],
        ]
    }

    /// `∇ω♯` at a node as the matrix `X ↦ ∇_X ω♯` in parameter components.
    pub fn nabla_sharp(&self, data: &ExtrinsicData, node: usize, derivs: &[[Vec<f64>; 2]; 2]) -> Matrix2<f64> {
        let g = &data.nodes[node];
        let w = self.at(node);
        // ∇_μ ω_ν = ∂_μ ω_ν − Γ^k_{μν} ω_k
        let mut low = Matrix2::zeros();
        for mu in 0..2 {
            for nu in 0..2 {
                let mut s = derivs[mu][nu][node];
                for k in 0..2 {
                    s -= g.induced_gamma[k][mu][nu] * w[k];
                }
                low[(nu, mu)] = s;
            }
        }
        g.h_inv * low
    }

    /// `⋆dω = (∂_0 ω_1 − ∂_1 ω_0)/√h` at every node.
    pub fn star_d(&self, data: &ExtrinsicData) -> Vec<f64> {
        let d = self.derivatives();
        (0..self.grid.len()).map(|i| (d[0][1][i] - d[1][0][i]) / data.nodes[i].sqrt_det).collect()
    }

    /// `δω = −(1/√h) ∂_μ(√h h^{μν} ω_ν)` at every node.
    pub fn codifferential(&self, data: &ExtrinsicData) -> Vec<f64> {
        let n = self.grid.len();
        let mut flux = [vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let g = &data.nodes[i];
            let v = g.h_inv * self.at(i) * g.sqrt_det;
            flux[0][i] = v[0];
            flux[1][i] = v[1];
        }
        let a = d4(&self.grid, &flux[0], 0);
        let b = d4(&self.grid, &flux[1], 1);
        (0..n).map(|i| -(a[i] + b[i]) / data.nodes[i].sqrt_det).collect()
    }

    /// Hodge Laplacian `Δ₁ω = dδω + δdω`.
    pub fn hodge_laplacian(&self, data: &ExtrinsicData) -> DiscreteOneForm {
        let n = self.grid.len();
        let delta = self.codifferential(data);
        let s = self.star_d(data);
        let dd = [d4(&self.grid, &delta, 0), d4(&self.grid, &delta, 1)];
        let ds = [d4(&self.grid, &s, 0), d4(&self.grid, &s, 1)];
        let mut out = DiscreteOneForm::zero(self.grid);
        for i in 0..n {
            let g = &data.nodes[i];
            // δ(s dA)_κ = −(1/√h) h_{κν} ε^{μν} ∂_μ s, with ε^{01} = 1
            let eps_ds = Vector2::new(-ds[1][i], ds[0][i]);
            let dd_part = g.h * eps_ds / g.sqrt_det;
            out.comps[0][i] = dd[0][i] - dd_part[0];
            out.comps[1][i] = dd[1][i] - dd_part[1];
        }
        out
    }

    /// Periods along the two coordinate cycles, averaged over the transverse index.
    pub fn periods(&self) -> [f64; 2] {
        let [n0, n1] = self.grid.shape();
        let [d0, d1] = self.grid.spacing();
        let mut p = [0.0; 2];
        for j in 0..n1 {
            p[0] += (0..n0).map(|i| self.comps[0][self.grid.index(i, j)]).sum::<f64>() * d0 / n1 as f64;
        }
        for i in 0..n0 {
            p[1] += (0..n1).map(|j| self.comps[1][self.grid.index(i, j)]).sum::<f64>() * d1 / n0 as f64;
        }
        p
    }

    /// Largest spread of the period over parallel cycles; zero for closed forms.
    pub fn period_spread(&self) -> f64 {
        let [n0, n1] = self.grid.shape();
        let [d0, d1] = self.grid.spacing();
        let rows: Vec<f64> = (0..n1).map(|j| (0..n0).map(|i| self.comps[0][self.grid.index(i, j)]).sum::<f64>() * d0).collect();
        let cols: Vec<f64> = (0..n0).map(|i| (0..n1).map(|j| self.comps[1][self.grid.index(i, j)]).sum::<f64>() * d1).collect();
        let spread = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        spread(&rows).max(spread(&cols))
    }

    /// `|ω|²` at every node.
    pub fn norm2(&self, data: &ExtrinsicData) -> Vec<f64> {
        (0..self.grid.len()).map(|i| {
            let w = self.at(i);
            (w.transpose() * data.nodes[i].h_inv * w)[(0, 0)]
        }).collect()
    }

    /// `∫⟨ω, η⟩ dμ`.
    pub fn l2_inner(&self, other: &Self, data: &ExtrinsicData) -> f64 {
        let w = data.weights();
        (0..self.grid.len())
            .map(|i| (self.at(i).transpose() * data.nodes[i].h_inv * other.at(i))[(0, 0)] * w[i])
            .sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "grid": self.grid.shape(),
            "spacing": self.grid.spacing(),
            "omega_0": self.comps[0],
            "omega_1": self.comps[1],
        })
    }
}

/// Conjugate gradients for the consistent singular system
/// `Σ D₄ᵀ W D₄ f = b` on periodic grids.
fn solve_divergence(grid: &Grid, w: &[[[f64; 2]; 2]], b: &[f64], scale: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let apply = |f: &[f64]| -> Vec<f64> {
        let g = [d4(grid, f, 0), d4(grid, f, 1)];
        let flux: [Vec<f64>; 2] = [
            (0..n).map(|i| w[i][0][0] * g[0][i] + w[i][0][1] * g[1][i]).collect(),
            (0..n).map(|i| w[i][1][0] * g[0][i] + w[i][1][1] * g[1][i]).collect(),
        ];
        // D₄ᵀ = −D₄ on periodic grids
        let a = d4(grid, &flux[0], 0);
        let c = d4(grid, &flux[1], 1);
        (0..n).map(|i| -(a[i] + c[i])).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let target = 1e-13 * bnorm.max(scale);
    let mut x = vec![0.0; n];
    if bnorm <= target {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 20 * n;
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Numeric(format!(
        "co-closedness solve stalled at relative residual {:e}",
        rr.sqrt() / bnorm
    )))
}

/// Harmonic representative with the given periods along the two cycles.
pub fn harmonic_with_periods(data: &ExtrinsicData, periods: [f64; 2]) -> Result<DiscreteOneForm> {
    let grid = data.grid;
    if !grid.is_torus() {
        return Err(Error::NotApplicable("harmonic forms with periods need a torus grid".into()));
    }
    let n = grid.len();
    let c = Vector2::new(periods[0] / TAU, periods[1] / TAU);
    let w: Vec<[[f64; 2]; 2]> = data
        .nodes
        .iter()
        .map(|g| {
            let m = g.h_inv * g.sqrt_det;
            [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
        })
        .collect();
    // b = −Σ D₄ᵀ W c = Σ D₄ (W c)
    let wc: [Vec<f64>; 2] = [
        (0..n).map(|i| w[i][0][0] * c[0] + w[i][0][1] * c[1]).collect(),
        (0..n).map(|i| w[i][1][0] * c[0] + w[i][1][1] * c[1]).collect(),
    ];
    let a = d4(&grid, &wc[0], 0);
    let bb = d4(&grid, &wc[1], 1);
    let b: Vec<f64> = (0..n).map(|i| a[i] + bb[i]).collect();
    // roundoff reference: size of the flux divided by the spacing
    let wc_norm = wc.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let hmin = grid.spacing()[0].min(grid.spacing()[1]);
    let f = solve_divergence(&grid, &w, &b, wc_norm / hmin)?;
    let df = [d4(&grid, &f, 0), d4(&grid, &f, 1)];
    Ok(DiscreteOneForm {
        grid,
        comps: [df[0].iter().map(|v| v + c[0]).collect(), df[1].iter().map(|v| v + c[1]).collect()],
    })
}

/// Basis of harmonic forms with periods `(1,0)` and `(0,1)`, and `b₁`.
/// Non-torus (sphere) grids have `b₁ = 0`.
pub fn harmonic_basis(data: &ExtrinsicData) -> Result<(Vec<DiscreteOneForm>, usize)> {
    if !data.grid.is_torus() {
        return Ok((Vec::new(), 0));
    }
    let a = harmonic_with_periods(data, [1.0, 0.0])?;
    let b = harmonic_with_periods(data, [0.0, 1.0])?;
    Ok((vec![a, b], 2))
}

/// L²-orthonormal basis spanning the same forms.
pub fn orthonormalize(forms: &[DiscreteOneForm], data: &ExtrinsicData) -> Vec<DiscreteOneForm> {
    let mut out: Vec<DiscreteOneForm> = Vec::new();
    for f in forms {
        let mut v = f.clone();
        for e in &out {
            let c = v.l2_inner(e, data);
            v = v.add_scaled(e, -c);
        }
        let nrm = v.l2_inner(&v, data).sqrt();
        if nrm > 1e-12 {
            out.push(v.scaled(1.0 / nrm));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct BochnerResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of `½Δ|T|² − |∇T|² = −(Δ₁ω)(T) + Ric_Σ(T,T)` at a node,
/// `T = ω♯`, with `Ric_Σ` from the Gauss equation:
/// `Σ⟨R^M(T,e)e,T⟩ − Σ|A(e,T)|² + H·A(T,T)`.
pub fn bochner_check(imm: &ParametricImmersion, data: &ExtrinsicData, omega: &DiscreteOneForm, node: usize) -> Result<BochnerResidual> {
    if !imm.grid.is_torus() {
        return Err(Error::NotApplicable("surface has no harmonic 1-forms".into()));
    }
    let grid = data.grid;
    let n = grid.len();
    let t2 = omega.norm2(data);
    // ½Δ|T|², divergence form with D₄ twice
    let g0 = d4(&grid, &t2, 0);
    let g1 = d4(&grid, &t2, 1);
    let mut flux = [vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let g = &data.nodes[i];
        let v = g.h_inv * Vector2::new(g0[i], g1[i]) * g.sqrt_det;
        flux[0][i] = v[0];
        flux[1][i] = v[1];
    }
    let a = d4(&grid, &flux[0], 0);
    let b = d4(&grid, &flux[1], 1);
    let g = &data.nodes[node];
    let lap = (a[node] + b[node]) / g.sqrt_det;
    let derivs = omega.derivatives();
    let nab = omega.nabla_sharp(data, node, &derivs);
    // |∇T|² = h_{νκ} h^{μλ} (∇_μ T)^ν (∇_λ T)^κ
    let grad2 = (nab.transpose() * g.h * nab * g.h_inv).trace();
    let lhs = 0.5 * lap - grad2;

    let t = omega.sharp(g, node);
    let lap1 = omega.hodge_laplacian(data);
    let term_hodge = -lap1.at(node).dot(&t);
    let tv = g.push(&t);
    let mut curv = 0.0;
    let mut a_sq = 0.0;
    for e in g.orthonormal_frame() {
        let ev = g.push(&e);
        let r = g.riemann.apply(tv.as_slice(), ev.as_slice(), ev.as_slice());
        curv += g.ip(&nalgebra::DVector::from_vec(r), &tv);
        a_sq += (e.transpose() * g.a * t)[(0, 0)].powi(2);
    }
    let att = (t.transpose() * g.a * t)[(0, 0)];
    let rhs = term_hodge + curv - a_sq + g.mean * att;
    Ok(BochnerResidual { lhs, rhs, residual: (lhs - rhs).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypersurfaces::extrinsic_data;
    use crate::space_models::SymmetricSpaceModel;
    use std::sync::Arc;

    #[test]
    fn hodge_laplacian_of_sine_form_on_flat_torus() {
        // Clifford torus metric is δ/2, so Δ₁(sin v du) = 2 sin v du.
        let s3 = Arc::new(SymmetricSpaceModel::sphere(3, 1.0));
        let imm = ParametricImmersion::clifford(s3, 32, 32).unwrap();
        let data = extrinsic_data(&imm).unwrap();
        let w = DiscreteOneForm::from_fn(imm.grid, |u| [u[1].sin(), 0.0]);
        let l = w.hodge_laplacian(&data);
        for i in 0..imm.grid.len() {
            let v = imm.grid.node(i)[1];
            assert!((l.comps[0][i] - 2.0 * v.sin()).abs() < 1e-3, "{} vs {}", l.comps[0][i], 2.0 * v.sin());
            assert!(l.comps[1][i].abs() < 1e-12);
        }
    }
}
