//! Compact matrix Lie algebras so(m) and su(m).
//!
//! Matrices are stored complex internally; everything crossing the module
//! boundary is a real coefficient vector in the algebra's fixed basis. The
//! basis is orthonormal for the trace form `-1/2 Re tr(XY)`, which makes
//! re-expansion of a matrix a plain projection.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::space_models::SymmetricSpaceModel;

pub type CMat = DMatrix<Complex<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgebraKind {
    So(usize),
    Su(usize),
}

/// An element of a Lie algebra as coefficients in that algebra's basis.
#[derive(Clone, Debug, PartialEq)]
pub struct LieElement {
    pub algebra: Arc<str>,
    pub coeffs: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct LieAlgebraBasis {
    pub name: Arc<str>,
    pub kind: AlgebraKind,
    pub dim: usize,
    pub basis: Vec<CMat>,
    structure: Vec<f64>,
    /// Gram matrix of `-B`, the negative Killing form.
    pub gram: DMatrix<f64>,
}

/// `-1/2 Re tr(XY)`; positive definite on skew-Hermitian matrices.
pub fn trace_form(x: &CMat, y: &CMat) -> f64 {
    let n = x.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += (x[(i, k)] * y[(k, i)]).re;
        }
    }
    -0.5 * s
}

fn commutator(x: &CMat, y: &CMat) -> CMat {
    x * y - y * x
}

impl LieAlgebraBasis {
    /// so(m) with generators `E_ij - E_ji`, `i < j`, in lexicographic order.
    pub fn so(m: usize) -> Self {
        assert!(m >= 2, "so(m) needs m >= 2");
        let mut basis = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let mut e = CMat::zeros(m, m);
                e[(i, j)] = Complex::new(1.0, 0.0);
                e[(j, i)] = Complex::new(-1.0, 0.0);
                basis.push(e);
            }
        }
        Self::from_basis(format!("so({m})"), AlgebraKind::So(m), basis)
    }

    /// su(m) with `i` times the generalized Gell-Mann matrices: symmetric and
    /// antisymmetric off-diagonal pairs for each `j < k`, then the diagonal ones.
    pub fn su(m: usize) -> Self {
        assert!(m >= 2, "su(m) needs m >= 2");
        let i1 = Complex::new(0.0, 1.0);
        let mut basis = Vec::new();
        for j in 0..m {
            for k in (j + 1)..m {
                let mut s = CMat::zeros(m, m);
                s[(j, k)] = i1;
                s[(k, j)] = i1;
                basis.push(s);
                // i * (-i)(E_jk - E_kj) = E_jk - E_kj
                let mut a = CMat::zeros(m, m);
                a[(j, k)] = Complex::new(1.0, 0.0);
                a[(k, j)] = Complex::new(-1.0, 0.0);
                basis.push(a);
            }
        }
        for l in 1..m {
            let c = (2.0 / (l * (l + 1)) as f64).sqrt();
            let mut d = CMat::zeros(m, m);
            for j in 0..l {
                d[(j, j)] = i1 * c;
            }
            d[(l, l)] = i1 * (-(l as f64) * c);
            basis.push(d);
        }
        Self::from_basis(format!("su({m})"), AlgebraKind::Su(m), basis)
    }

    fn from_basis(name: String, kind: AlgebraKind, basis: Vec<CMat>) -> Self {
        let d = basis.len();
        let mut structure = vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..d {
                let c = commutator(&basis[i], &basis[j]);
                for k in 0..d {
                    structure[(i * d + j) * d + k] = trace_form(&c, &basis[k]);
                }
            }
        }
        let mut out = LieAlgebraBasis {
            name: name.into(),
            kind,
            dim: d,
            basis,
            structure,
            gram: DMatrix::zeros(d, d),
        };
        let mut killing = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += out.c(i, l, k) * out.c(j, k, l);
                    }
                }
                killing[(i, j)] = s;
            }
        }
        out.gram = -killing;
        out
    }

    /// Structure constant: `[θ_i, θ_j] = Σ_k c(i,j,k) θ_k`.
    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[(i * self.dim + j) * self.dim + k]
    }

    /// Matrix size of the defining representation.
    pub fn matrix_size(&self) -> usize {
        match self.kind {
            AlgebraKind::So(m) | AlgebraKind::Su(m) => m,
        }
    }

    pub fn element(&self, coeffs: DVector<f64>) -> Result<LieElement> {
        if coeffs.len() != self.dim {
            return Err(Error::Input(format!(
                "{} expects {} coefficients, got {}",
                self.name,
                self.dim,
                coeffs.len()
            )));
        }
        Ok(LieElement { algebra: self.name.clone(), coeffs })
    }

    pub fn basis_element(&self, i: usize) -> LieElement {
        let mut c = DVector::zeros(self.dim);
        c[i] = 1.0;
        LieElement { algebra: self.name.clone(), coeffs: c }
    }

    pub fn zero(&self) -> LieElement {
        LieElement { algebra: self.name.clone(), coeffs: DVector::zeros(self.dim) }
    }

    fn check(&self, x: &LieElement) -> Result<()> {
        if x.algebra != self.name {
            return Err(Error::Input(format!(
                "element of {} used with algebra {}",
                x.algebra, self.name
            )));
        }
        if x.coeffs.len() != self.dim {
            return Err(Error::Input("coefficient length mismatch".into()));
        }
        Ok(())
    }

    pub fn matrix(&self, x: &LieElement) -> Result<CMat> {
        self.check(x)?;
        Ok(self.matrix_of(&x.coeffs))
    }

    pub(crate) fn matrix_of(&self, coeffs: &DVector<f64>) -> CMat {
        let m = self.matrix_size();
        let mut out = CMat::zeros(m, m);
        for (k, b) in self.basis.iter().enumerate() {
            if coeffs[k] != 0.0 {
                out += b * Complex::new(coeffs[k], 0.0);
            }
        }
        out
    }

    /// Projects a matrix onto the basis; returns coefficients and the
    /// Frobenius norm of what the basis does not capture.
    pub fn expand(&self, m: &CMat) -> (DVector<f64>, f64) {
        let coeffs = DVector::from_iterator(self.dim, self.basis.iter().map(|b| trace_form(m, b)));
        let back = self.matrix_of(&coeffs);
        let residual = (m - back).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (coeffs, residual)
    }

    /// Matrix commutator re-expanded in the basis.
    pub fn bracket(&self, x: &LieElement, y: &LieElement) -> Result<LieElement> {
        self.check(x)?;
        self.check(y)?;
        let c = commutator(&self.matrix_of(&x.coeffs), &self.matrix_of(&y.coeffs));
        let (coeffs, residual) = self.expand(&c);
        let scale = 1.0 + c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if residual > 1e-12 * scale {
            return Err(Error::Numeric(format!("bracket left the algebra, residual {residual:e}")));
        }
        Ok(LieElement { algebra: self.name.clone(), coeffs })
    }

    /// Bracket computed from structure constants alone.
    pub fn bracket_coeffs(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..d {
                    out[k] += xy * self.c(i, j, k);
                }
            }
        }
        out
    }

    /// Matrix of `ad X` acting on coefficient vectors.
    pub fn ad(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let mut a = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for i in 0..d {
                    s += x[i] * self.c(i, j, k);
                }
                a[(k, j)] = s;
            }
        }
        a
    }

    /// Killing form `B(X,Y) = tr(ad X ∘ ad Y)`.
    pub fn killing_form(&self, x: &LieElement, y: &LieElement) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(-(x.coeffs.transpose() * &self.gram * &y.coeffs)[(0, 0)])
    }

    /// Largest violation of the Jacobi identity over all basis triples.
    pub fn jacobi_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += self.c(i, j, m) * self.c(m, k, l)
                                + self.c(j, k, m) * self.c(m, i, l)
                                + self.c(k, i, m) * self.c(m, j, l);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest antisymmetry violation of the structure constants.
    pub fn antisymmetry_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    worst = worst.max((self.c(i, j, k) + self.c(j, i, k)).abs());
                }
            }
        }
        worst
    }

    /// Largest `|<[Z,X],Y> + <X,[Z,Y]>|` over basis triples for the Gram
    /// matrix `g`.
    pub fn ad_invariance_residual(&self, g: &DMatrix<f64>) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for z in 0..d {
            let adz = self.ad(&self.basis_element(z).coeffs);
            let m = adz.transpose() * g + g * &adz;
            worst = worst.max(m.amax());
        }
        worst
    }

    /// JSON dump of basis matrices, structure constants and Gram matrix.
    pub fn to_json(&self) -> serde_json::Value {
        let basis: Vec<serde_json::Value> = self
            .basis
            .iter()
            .map(|b| {
                let re: Vec<Vec<f64>> =
                    (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| b[(i, j)].re).collect()).collect();
                let im: Vec<Vec<f64>> =
                    (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| b[(i, j)].im).collect()).collect();
                json!({ "re": re, "im": im })
            })
            .collect();
        let gram: Vec<Vec<f64>> =
            (0..self.dim).map(|i| (0..self.dim).map(|j| self.gram[(i, j)]).collect()).collect();
        json!({
            "name": &*self.name,
            "dim": self.dim,
            "basis": basis,
            "structure_constants": self.structure,
            "gram": gram,
        })
    }
}

/// Modified Gram–Schmidt with pivoting in the inner product `g`.
///
/// Repeatedly takes the candidate with the largest remaining norm; stops once
/// that norm falls below `tol` times the largest initial norm.
pub fn pivoted_gram_schmidt(candidates: &[DVector<f64>], g: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let norm2 = |v: &DVector<f64>| (v.transpose() * g * v)[(0, 0)];
    let mut work: Vec<DVector<f64>> = candidates.to_vec();
    let scale = work.iter().map(|v| norm2(v).max(0.0).sqrt()).fold(0.0, f64::max);
    let mut out = Vec::new();
    if scale == 0.0 {
        return out;
    }
    while !work.is_empty() {
        let (best, nrm) = work
            .iter()
            .enumerate()
            .map(|(i, v)| (i, norm2(v).max(0.0).sqrt()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if nrm <= tol * scale {
            break;
        }
        let q = work.swap_remove(best) / nrm;
        let gq = g * &q;
        for v in work.iter_mut() {
            let c = v.dot(&gq);
            *v -= &q * c;
        }
        out.push(q);
    }
    out
}

/// Adapted orthonormal basis `g = k_p ⊕ n_p` at a point.
#[derive(Clone, Debug)]
pub struct CartanDecomposition {
    pub base_point: Vec<f64>,
    /// Involution matrix on coefficient vectors.
    pub sigma: DMatrix<f64>,
    pub k_basis: Vec<DVector<f64>>,
    pub n_basis: Vec<DVector<f64>>,
    pub k_projector: DMatrix<f64>,
    pub n_projector: DMatrix<f64>,
}

impl CartanDecomposition {
    /// Largest residual of the three bracket inclusions.
    pub fn bracket_residual(&self, alg: &LieAlgebraBasis) -> f64 {
        let mut worst: f64 = 0.0;
        let mut check = |a: &DVector<f64>, b: &DVector<f64>, proj_out: &DMatrix<f64>| {
            let c = alg.bracket_coeffs(a, b);
            worst = worst.max((proj_out * c).amax());
        };
        for a in &self.k_basis {
            for b in &self.k_basis {
                check(a, b, &self.n_projector);
            }
            for b in &self.n_basis {
                check(a, b, &self.k_projector);
            }
        }
        for a in &self.n_basis {
            for b in &self.n_basis {
                check(a, b, &self.n_projector);
            }
        }
        worst
    }

    /// Largest `|<X,Y>|` between the two factors in the inner product `g`.
    pub fn orthogonality_residual(&self, g: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.k_basis {
            for b in &self.n_basis {
                worst = worst.max((a.transpose() * g * b)[(0, 0)].abs());
            }
        }
        worst
    }
}

/// Splits `g` into the ±1 eigenspaces of the geodesic symmetry at `p`.
pub fn cartan_decompose(model: &SymmetricSpaceModel, p: &[f64]) -> Result<CartanDecomposition> {
    let alg = model.group().ok_or_else(|| Error::NotApplicable(format!("{} has no isometry algebra", model.label())))?;
    let s = model.involution(p)?;
    let d = alg.dim;
    let mut sigma = DMatrix::zeros(d, d);
    for j in 0..d {
        let img = &s * &alg.basis[j] * &s;
        let (c, _) = alg.expand(&img);
        sigma.set_column(j, &c);
    }
    let id = DMatrix::<f64>::identity(d, d);
    let pk = (&id + &sigma) * 0.5;
    let pn = (&id - &sigma) * 0.5;
    let inner = model.algebra_inner().expect("group present");
    let cols = |m: &DMatrix<f64>| (0..d).map(|j| m.column(j).into_owned()).collect::<Vec<_>>();
    let k_basis = pivoted_gram_schmidt(&cols(&pk), &inner, 1e-12);
    let n_basis = pivoted_gram_schmidt(&cols(&pn), &inner, 1e-12);
    if k_basis.len() + n_basis.len() != d {
        return Err(Error::Numeric(format!(
            "adapted bases have dimensions {} + {} != {d}",
            k_basis.len(),
            n_basis.len()
        )));
    }
    Ok(CartanDecomposition { base_point: p.to_vec(), sigma, k_basis, n_basis, k_projector: pk, n_projector: pn })
}

/// Chart components of `X†(q) = d/dt exp(tX)·q` at `t = 0`.
pub fn fundamental_field(model: &SymmetricSpaceModel, x: &LieElement, q: &[f64]) -> Result<DVector<f64>> {
    let alg = model.group().ok_or_else(|| Error::NotApplicable(format!("{} has no isometry algebra", model.label())))?;
    let xm = alg.matrix(x)?;
    fundamental_field_of_matrix(model, &xm, q)
}

pub(crate) fn fundamental_field_of_matrix(model: &SymmetricSpaceModel, xm: &CMat, q: &[f64]) -> Result<DVector<f64>> {
    model.check_point(q)?;
    let t = Jet::variable(0.0, 0);
    let y: Vec<Jet> = q.iter().map(|&v| Jet::constant(v)).collect();
    let out = model.flow_chart(xm, t, &y);
    Ok(DVector::from_iterator(q.len(), out.iter().map(|j| j.g[0])))
}

/// Value and chart Jacobian `∂_j X†^k` of a fundamental field.
pub(crate) fn fundamental_field_jet(model: &SymmetricSpaceModel, xm: &CMat, q: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = q.len();
    let t = Jet::variable(0.0, 0);
    let y = Jet::seed(q, 1);
    let out = model.flow_chart(xm, t, &y);
    let val = DVector::from_iterator(n, out.iter().map(|j| j.g[0]));
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            jac[(k, j)] = out[k].h[0][1 + j];
        }
    }
    (val, jac)
}

/// Covariant derivative `∇_V X†` at `p` from the exact group-action Jacobian
/// plus the Christoffel correction.
pub fn fundamental_field_derivative(
    model: &SymmetricSpaceModel,
    x: &LieElement,
    p: &[f64],
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let alg = model.group().ok_or_else(|| Error::NotApplicable(format!("{} has no isometry algebra", model.label())))?;
    model.check_point(p)?;
    let xm = alg.matrix(x)?;
    let (val, jac) = fundamental_field_jet(model, &xm, p);
    let gamma = model.christoffel_at(p)?;
    let mut out = &jac * v;
    let corr = gamma.contract(v.as_slice(), val.as_slice());
    for k in 0..p.len() {
        out[k] += corr[k];
    }
    Ok(out)
}

/// Residuals of the two pointwise Killing-field facts at `p` over an
/// adapted basis: the largest `|X†(p)|` for `X ∈ k_p` and the largest
/// `|∇_v Y†(p)|` for `Y ∈ n_p` over the chart basis directions `v`, both in
/// the model metric.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct KillingLemmaResidual {
    pub max_isotropy_value: f64,
    pub max_transvection_derivative: f64,
    /// Largest deviation of `⟨Y_i†, Y_j†⟩` from `δ_ij` on `n_p`.
    pub isometry_defect: f64,
}

pub fn killing_lemma_residual(model: &SymmetricSpaceModel, p: &[f64]) -> Result<KillingLemmaResidual> {
    let cd = cartan_decompose(model, p)?;
    let alg = model.group().expect("decomposition implies a group");
    let g = model.metric_at(p)?;
    let norm = |v: &DVector<f64>| v.dot(&(&g * v)).max(0.0).sqrt();
    let mut kv: f64 = 0.0;
    for x in &cd.k_basis {
        kv = kv.max(norm(&fundamental_field(model, &alg.element(x.clone())?, p)?));
    }
    let mut nd: f64 = 0.0;
    let mut fields = Vec::new();
    for y in &cd.n_basis {
        let e = alg.element(y.clone())?;
        for c in 0..p.len() {
            let mut v = DVector::zeros(p.len());
            v[c] = 1.0;
            // unit chart direction scaled to unit length
            let v = &v / norm(&v);
            nd = nd.max(norm(&fundamental_field_derivative(model, &e, p, &v)?));
        }
        fields.push(fundamental_field(model, &e, p)?);
    }
    let mut iso: f64 = 0.0;
    for (i, a) in fields.iter().enumerate() {
        for (j, b) in fields.iter().enumerate() {
            let d = if i == j { 1.0 } else { 0.0 };
            iso = iso.max((a.dot(&(&g * b)) - d).abs());
        }
    }
    Ok(KillingLemmaResidual { max_isotropy_value: kv, max_transvection_derivative: nd, isometry_defect: iso })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(x: &CMat, y: &CMat) -> f64 {
        (x * y).trace().re
    }

    #[test]
    fn so3_bracket_of_rotation_generators() {
        // basis order: E01-E10, E02-E20, E12-E21
        let a = LieAlgebraBasis::so(3);
        let l = |i: usize| a.basis_element(i);
        let c = a.bracket(&l(0), &l(1)).unwrap();
        // direct commutator oracle
        let direct = &a.basis[0] * &a.basis[1] - &a.basis[1] * &a.basis[0];
        let (coeffs, res) = a.expand(&direct);
        assert!(res < 1e-14);
        assert!((&c.coeffs - coeffs).amax() < 1e-14);
        // [E01-E10, E02-E20] = -(E12-E21)
        assert!((c.coeffs[2] + 1.0).abs() < 1e-14 && c.coeffs[0].abs() < 1e-14);
    }

    #[test]
    fn killing_closed_forms_all_pairs() {
        for (alg, factor) in [
            (LieAlgebraBasis::so(3), 1.0),
            (LieAlgebraBasis::so(4), 2.0),
            (LieAlgebraBasis::so(5), 3.0),
            (LieAlgebraBasis::su(2), 4.0),
            (LieAlgebraBasis::su(3), 6.0),
        ] {
            for i in 0..alg.dim {
                for j in 0..alg.dim {
                    let b = alg.killing_form(&alg.basis_element(i), &alg.basis_element(j)).unwrap();
                    let closed = factor * tr(&alg.basis[i], &alg.basis[j]);
                    assert!((b - closed).abs() < 1e-10, "{} ({i},{j}): {b} vs {closed}", alg.name);
                }
            }
        }
    }

    #[test]
    fn structure_constant_identities() {
        for alg in [LieAlgebraBasis::so(4), LieAlgebraBasis::su(3)] {
            assert!(alg.antisymmetry_residual() == 0.0);
            assert!(alg.jacobi_residual() < 1e-12, "{}", alg.name);
            assert!(alg.ad_invariance_residual(&alg.gram) < 1e-10);
            let eig = nalgebra::SymmetricEigen::new(alg.gram.clone());
            assert!(eig.eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn mismatched_algebras_rejected() {
        let a = LieAlgebraBasis::so(4);
        let b = LieAlgebraBasis::su(3);
        assert!(matches!(a.bracket(&a.basis_element(0), &b.basis_element(0)), Err(Error::Input(_))));
        assert!(a.element(DVector::zeros(3)).is_err());
    }

    #[test]
    fn pivoted_gram_schmidt_drops_dependent_vectors() {
        let g = DMatrix::<f64>::identity(3, 3);
        let v = vec![
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
        ];
        let q = pivoted_gram_schmidt(&v, &g, 1e-12);
        assert_eq!(q.len(), 2);
        assert!(q[0].dot(&q[1]).abs() < 1e-15);
    }
}
