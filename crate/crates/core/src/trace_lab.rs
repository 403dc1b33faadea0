//! Test-variation families built from Killing fields, their quadratic
//! forms, and the closed-form trace integrals they are compared against.
//!
//! A [`TraceContext`] fixes a surface `Σ → M`, an isometric immersion
//! `F: M → N` ([`Embedding`]) and a discrete Jacobi operator. Families of
//! grid functions are evaluated through `F`, Gram matrices of the index form
//! are assembled over a globally fixed orthonormal basis, and the pointwise
//! curvature integrands are integrated with the same area weights.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hodge::DiscreteOneForm;
use crate::hypersurfaces::{extrinsic_data, ExtrinsicData, ParametricImmersion, PointGeometry};
use crate::jet::{Jet, Scalar};
use crate::lie_core::{fundamental_field_of_matrix, LieAlgebraBasis};
use crate::space_models::{sphere_lift, sphere_project, Christoffel, ModelKind, Riemann, SymmetricSpaceModel};
use crate::spectral::{jacobi_operator_from, DiscreteOperator, Stencil};

/// Coefficient columns of a basis of `g` orthonormal for `−B/κ`.
pub fn orthonormal_algebra_basis(model: &SymmetricSpaceModel) -> Result<DMatrix<f64>> {
    let g = model
        .algebra_inner()
        .ok_or_else(|| Error::NotApplicable(format!("{} has no normalized algebra product", model.label())))?;
    let eig = SymmetricEigen::new(g);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Numeric("algebra inner product is not positive definite".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose())
}

/// `∧²g` with the basis `θ_i ∧ θ_j`, `i < j`, of an orthonormal basis `θ`.
#[derive(Clone, Debug)]
pub struct WedgeBasis {
    pub algebra: Arc<LieAlgebraBasis>,
    pub pairs: Vec<(usize, usize)>,
    /// Gram matrix of the normalized product on `g` in the raw basis.
    pub gram: DMatrix<f64>,
    /// Columns are the orthonormal `θ_i` in raw coefficients.
    pub ortho: DMatrix<f64>,
    to_ortho: DMatrix<f64>,
}

impl WedgeBasis {
    pub fn new(model: &SymmetricSpaceModel) -> Result<Self> {
        let algebra = model
            .group_arc()
            .ok_or_else(|| Error::NotApplicable(format!("{} has no isometry algebra", model.label())))?;
        let gram = model.algebra_inner().expect("group present");
        let ortho = orthonormal_algebra_basis(model)?;
        let to_ortho = ortho.clone().try_inverse().ok_or_else(|| Error::Numeric("singular basis change".into()))?;
        Ok(WedgeBasis { pairs: pairs(algebra.dim), algebra, gram, ortho, to_ortho })
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    /// Coordinates of `x ∧ y` in the orthonormal pair basis.
    pub fn wedge(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let (a, b) = (&self.to_ortho * x, &self.to_ortho * y);
        DVector::from_iterator(self.dim(), self.pairs.iter().map(|&(i, j)| a[i] * b[j] - a[j] * b[i]))
    }

    /// `⟨x∧y, z∧w⟩` through the pair coordinates.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.wedge(x, y).dot(&self.wedge(z, w))
    }
}

fn pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect()
}

/// Target of the isometric immersion `F: M → N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `N = M`, `F` the identity.
    Identity,
    /// `S³(sin ρ) ⊂ S⁴(1)` at polar angle `ρ`; totally umbilic with
    /// second fundamental form of norm `cot ρ` per unit vector.
    Latitude { rho: f64 },
    /// The standard embedding `S^n(r) ⊂ R^{n+1}`.
    Euclidean,
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub target: Target,
    pub source: Arc<SymmetricSpaceModel>,
    /// `None` for a flat Euclidean target.
    pub space: Option<Arc<SymmetricSpaceModel>>,
    pub dim: usize,
}

/// Value and first two derivatives of `F` at a point, with the target geometry there.
#[derive(Clone, Debug)]
pub struct EmbeddingJet {
    pub point: Vec<f64>,
    /// `∂_i F^K` at `(K, i)`.
    pub d: DMatrix<f64>,
    /// `∂_i∂_j F^K` at `[K][(i, j)]`.
    pub dd: Vec<DMatrix<f64>>,
    pub g: DMatrix<f64>,
    pub gamma: Option<Christoffel>,
    pub riemann: Option<Riemann>,
}

impl EmbeddingJet {
    pub fn push(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.d * x
    }

    pub fn ip(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.g * y))
    }

    /// `B(x, y) = ∇^N_x dF(y) − dF(∇^M_x y)` for source chart vectors.
    pub fn second_fundamental(&self, source_gamma: &Christoffel, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dd.len();
        let mut out = DVector::from_fn(n, |k, _| (x.transpose() * &self.dd[k] * y)[(0, 0)]);
        let (fx, fy) = (self.push(x), self.push(y));
        if let Some(gam) = &self.gamma {
            let c = gam.contract(fx.as_slice(), fy.as_slice());
            for k in 0..n {
                out[k] += c[k];
            }
        }
        let m = DVector::from_vec(source_gamma.contract(x.as_slice(), y.as_slice()));
        out - &self.d * m
    }

    /// `⟨R̄(x, y)y, x⟩` for target chart vectors; zero on a flat target.
    pub fn curvature(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match &self.riemann {
            Some(r) => self.ip(&DVector::from_vec(r.apply(x.as_slice(), y.as_slice(), y.as_slice())), x),
            None => 0.0,
        }
    }
}

impl Embedding {
    pub fn identity(source: Arc<SymmetricSpaceModel>) -> Result<Self> {
        if source.group().is_none() {
            return Err(Error::NotApplicable(format!("{} is not a semi-simple model", source.label())));
        }
        let dim = source.dim();
        Ok(Embedding { target: Target::Identity, space: Some(source.clone()), source, dim })
    }

    /// Requires `source = S³(sin ρ)` with `0 < ρ ≤ π/2`.
    pub fn latitude(source: Arc<SymmetricSpaceModel>, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::Input(format!("latitude angle {rho} outside (0, π/2]")));
        }
        match source.kind {
            ModelKind::Sphere { n: 3, radius } if (radius - rho.sin()).abs() <= 1e-12 => {}
            _ => return Err(Error::Input(format!("latitude embedding needs S3 of radius sin {rho}"))),
        }
        Ok(Embedding {
            target: Target::Latitude { rho },
            source,
            space: Some(Arc::new(SymmetricSpaceModel::sphere(4, 1.0))),
            dim: 4,
        })
    }

    pub fn euclidean(source: Arc<SymmetricSpaceModel>) -> Result<Self> {
        let ModelKind::Sphere { n, .. } = source.kind else {
            return Err(Error::NotApplicable(format!("no Euclidean embedding for {}", source.label())));
        };
        Ok(Embedding { target: Target::Euclidean, source, space: None, dim: n + 1 })
    }

    fn map<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        match self.target {
            Target::Identity => p.to_vec(),
            Target::Latitude { rho } => {
                let mut x = sphere_lift(rho.sin(), p);
                x.push(S::cst(rho.cos()));
                sphere_project(1.0, &x)
            }
            Target::Euclidean => self.source.ambient_position(p).expect("sphere source"),
        }
    }

    pub fn jet_at(&self, p: &[f64]) -> Result<EmbeddingJet> {
        self.source.check_point(p)?;
        let m = p.len();
        let out = self.map(&Jet::seed(p, 0));
        let point: Vec<f64> = out.iter().map(|j| j.v).collect();
        let d = DMatrix::from_fn(self.dim, m, |k, i| out[k].g[i]);
        let dd = out.iter().map(|j| DMatrix::from_fn(m, m, |a, b| j.h[a][b])).collect();
        let (g, gamma, riemann) = match &self.space {
            Some(n) => (n.metric_at(&point)?, Some(n.christoffel_at(&point)?), Some(n.riemann_at(&point)?)),
            None => (DMatrix::identity(self.dim, self.dim), None, None),
        };
        Ok(EmbeddingJet { point, d, dd, g, gamma, riemann })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `ψ_{T,X} = ⟨T, X†⟩` over an orthonormal basis of `g`.
    PsiG,
    /// `φ_{T,v} = ⟨ν∧T, Π(v)⟩` over the orthonormal basis of `∧²g`.
    PhiWedge,
    /// `φ̂_{T,v}` over `∧²R^m` for a Euclidean target.
    EuclidWedge,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "psi_g" => Ok(Family::PsiG),
            "phi_wedge" => Ok(Family::PhiWedge),
            "euclid_wedge" => Ok(Family::EuclidWedge),
            _ => Err(Error::Input(format!("unknown family '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
struct NodeFrame {
    jet: EmbeddingJet,
    /// `dF(∂_μ f)` in target components.
    tan: [DVector<f64>; 2],
    nu: DVector<f64>,
    /// Killing fields of the raw algebra basis, as columns.
    killing_raw: DMatrix<f64>,
    /// Killing fields of the orthonormal basis, as columns.
    killing: DMatrix<f64>,
    scalar: f64,
}

/// Surface, immersion `F` and discrete operators shared by every family.
pub struct TraceContext {
    pub imm: ParametricImmersion,
    pub data: ExtrinsicData,
    pub embedding: Embedding,
    /// Operator used for Gram assembly.
    pub op: DiscreteOperator,
    /// Spectral operator for pointwise Jacobi values on tori.
    pub pointwise: Option<DiscreteOperator>,
    pub wedge: Option<WedgeBasis>,
    frames: Vec<NodeFrame>,
}

/// `Σ_{a<b}` pair functions `x_a y_b − x_b y_a` over columns of `kx`, `ky`.
fn pair_values(x: &DVector<f64>, y: &DVector<f64>, out: &mut [f64]) {
    let d = x.len();
    let mut c = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            out[c] = x[i] * y[j] - x[j] * y[i];
            c += 1;
        }
    }
}

/// Closed-form trace integrals of one tangent field, named after the
/// identity each one enters.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct TraceIntegrals {
    /// `∫|ω|²`.
    pub norm2: f64,
    /// General form of the first identity, including the `A` terms.
    pub first_general: f64,
    /// First identity for surfaces, via the Gauss equation of `F`.
    pub first_gauss: f64,
    /// First identity for surfaces, via scalar curvature of `M`.
    pub first_scalar: f64,
    /// Second identity with curvature terms of `M` and `N`.
    pub second_curvature: f64,
    /// Second identity in terms of `B` only.
    pub second_b_only: f64,
}

impl TraceIntegrals {
    pub fn scaled(&self, s: f64) -> Self {
        TraceIntegrals {
            norm2: self.norm2 * s,
            first_general: self.first_general * s,
            first_gauss: self.first_gauss * s,
            first_scalar: self.first_scalar * s,
            second_curvature: self.second_curvature * s,
            second_b_only: self.second_b_only * s,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadraticFormReport {
    pub family: Family,
    pub omega_index: usize,
    pub gram_q: Vec<Vec<f64>>,
    pub gram_l: Vec<Vec<f64>>,
    pub trace_q: f64,
    pub trace_l: f64,
    /// `Σ|q_aa|`, the scale for relative trace residuals.
    pub diag_abs: f64,
    pub rhs_value: f64,
    pub residual: f64,
}

impl QuadraticFormReport {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.rhs_value.abs().max(f64::MIN_POSITIVE)
    }
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.gram_q.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.gram_q[i][j] - self.gram_q[j][i]).abs());
                worst = worst.max((self.gram_l[i][j] - self.gram_l[j][i]).abs());
            }
        }
        worst
    }
    pub fn gram_l_matrix(&self) -> DMatrix<f64> {
        let n = self.gram_l.len();
        DMatrix::from_fn(n, n, |i, j| self.gram_l[i][j])
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TraceContext {
    /// Builds the context; `stencil` selects the Gram operator.
    pub fn new(imm: &ParametricImmersion, embedding: Embedding, stencil: Stencil) -> Result<Self> {
        if imm.ambient.label() != embedding.source.label() {
            return Err(Error::Input("embedding source differs from the surface ambient".into()));
        }
        let data = extrinsic_data(imm)?;
        let op = jacobi_operator_from(imm, &data, stencil)?;
        let pointwise = if imm.grid.is_torus() { Some(jacobi_operator_from(imm, &data, Stencil::Spectral)?) } else { None };
        let (raw, ortho) = match &embedding.space {
            Some(n) => {
                let alg = n.group().expect("semi-simple target");
                (Some(alg.basis.clone()), Some(orthonormal_algebra_basis(n)?))
            }
            None => (None, None),
        };
        let wedge = match &embedding.space {
            Some(n) => Some(WedgeBasis::new(n)?),
            None => None,
        };
        let mut frames = Vec::with_capacity(data.nodes.len());
        for g in &data.nodes {
            let jet = embedding.jet_at(&g.local.p)?;
            let tan = [0, 1].map(|mu| jet.push(&DVector::from_column_slice(&g.local.fu[mu])));
            let nu = jet.push(&g.nu);
            let (killing_raw, killing) = match (&embedding.space, &raw, &ortho) {
                (Some(n), Some(raw), Some(ortho)) => {
                    let mut k = DMatrix::zeros(embedding.dim, raw.len());
                    for (c, xm) in raw.iter().enumerate() {
                        k.set_column(c, &fundamental_field_of_matrix(n, xm, &jet.point)?);
                    }
                    let ko = &k * ortho;
                    (k, ko)
                }
                _ => (DMatrix::zeros(embedding.dim, 0), DMatrix::zeros(embedding.dim, 0)),
            };
            let scalar = imm.ambient.scalar_at(&g.local.p)?;
            frames.push(NodeFrame { jet, tan, nu, killing_raw, killing, scalar });
        }
        Ok(TraceContext { imm: imm.clone(), data, embedding, op, pointwise, wedge, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `ω♯` in parameter components at every node.
    pub fn tangent_field(&self, omega: &DiscreteOneForm) -> Vec<Vector2<f64>> {
        (0..self.len()).map(|i| omega.sharp(&self.data.nodes[i], i)).collect()
    }

    fn target_vector(&self, node: usize, t: &Vector2<f64>) -> DVector<f64> {
        let f = &self.frames[node];
        &f.tan[0] * t[0] + &f.tan[1] * t[1]
    }

    /// Chart components of `X†` at the node's image, for raw coefficients `x`.
    pub fn killing_field(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.frames[node].killing_raw * x
    }

    /// Position of the node in the target chart.
    pub fn target_point(&self, node: usize) -> &[f64] {
        &self.frames[node].jet.point
    }

    /// `⟨T, X†⟩` at every node.
    pub fn psi_function(&self, t: &[Vector2<f64>], x: &DVector<f64>) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let tv = self.target_vector(i, &t[i]);
                self.frames[i].jet.ip(&tv, &self.killing_field(i, x))
            })
            .collect()
    }

    /// `⟨ν∧T, X†∧Y†⟩` at every node.
    pub fn phi_function(&self, t: &[Vector2<f64>], x: &DVector<f64>, y: &DVector<f64>) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let f = &self.frames[i];
                let tv = self.target_vector(i, &t[i]);
                let (xd, yd) = (self.killing_field(i, x), self.killing_field(i, y));
                f.jet.ip(&f.nu, &xd) * f.jet.ip(&tv, &yd) - f.jet.ip(&f.nu, &yd) * f.jet.ip(&tv, &xd)
            })
            .collect()
    }

    /// All family members for the tangent field `t`, as grid functions.
    pub fn family_functions(&self, family: Family, t: &[Vector2<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let count = match family {
            Family::PsiG | Family::PhiWedge => {
                let w = self
                    .wedge
                    .as_ref()
                    .ok_or_else(|| Error::NotApplicable("family needs a semi-simple target".into()))?;
                if family == Family::PsiG {
                    w.algebra.dim
                } else {
                    w.dim()
                }
            }
            Family::EuclidWedge => {
                if self.embedding.space.is_some() {
                    return Err(Error::NotApplicable("Euclidean family needs a Euclidean target".into()));
                }
                self.embedding.dim * (self.embedding.dim - 1) / 2
            }
        };
        let mut out = vec![vec![0.0; n]; count];
        let mut buf = vec![0.0; count];
        for i in 0..n {
            let f = &self.frames[i];
            let tv = self.target_vector(i, &t[i]);
            match family {
                Family::PsiG => {
                    let gt = &f.jet.g * &tv;
                    let vals = f.killing.transpose() * gt;
                    for a in 0..count {
                        out[a][i] = vals[a];
                    }
                }
                Family::PhiWedge => {
                    let nk = f.killing.transpose() * (&f.jet.g * &f.nu);
                    let tk = f.killing.transpose() * (&f.jet.g * &tv);
                    pair_values(&nk, &tk, &mut buf);
                    for a in 0..count {
                        out[a][i] = buf[a];
                    }
                }
                Family::EuclidWedge => {
                    pair_values(&f.nu, &tv, &mut buf);
                    for a in 0..count {
                        out[a][i] = buf[a];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gram matrices `Q(f_a, f_b)` and `⟨f_a, f_b⟩_{L²}`.
    pub fn gram(&self, funcs: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
        self.cross_gram(funcs, funcs)
    }

    fn cross_gram(&self, left: &[Vec<f64>], right: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
        let k: Vec<Vec<f64>> = left.iter().map(|f| self.op.stiffness_apply(f)).collect();
        let (p, q) = (left.len(), right.len());
        let mut gq = DMatrix::zeros(p, q);
        let mut gl = DMatrix::zeros(p, q);
        for a in 0..p {
            for b in 0..q {
                let mut s = 0.0;
                let mut l = 0.0;
                for i in 0..self.len() {
                    let mv = self.op.mass[i] * left[a][i] * right[b][i];
                    s += k[a][i] * right[b][i] - self.op.potential[i] * mv;
                    l += mv;
                }
                gq[(a, b)] = s;
                gl[(a, b)] = l;
            }
        }
        (gq, gl)
    }

    /// Index form of two grid functions.
    pub fn index_form(&self, v: &[f64], w: &[f64]) -> f64 {
        self.op.quadratic_form(v, w)
    }

    /// Assembles the Gram matrices and compares the trace with the matching
    /// closed-form integral: the first identity for `ψ`, the second for the
    /// wedge families.
    pub fn assemble(&self, family: Family, omega: &DiscreteOneForm, omega_index: usize) -> Result<QuadraticFormReport> {
        let t = self.tangent_field(omega);
        let funcs = self.family_functions(family, &t)?;
        let (gq, gl) = self.gram(&funcs);
        let rhs = self.integrals(omega)?;
        let rhs_value = match family {
            Family::PsiG => rhs.first_gauss,
            Family::PhiWedge | Family::EuclidWedge => rhs.second_b_only,
        };
        let trace_q = gq.trace();
        Ok(QuadraticFormReport {
            family,
            omega_index,
            gram_q: to_rows(&gq),
            gram_l: to_rows(&gl),
            trace_q,
            trace_l: gl.trace(),
            diag_abs: gq.diagonal().iter().map(|v| v.abs()).sum(),
            rhs_value,
            residual: (trace_q - rhs_value).abs(),
        })
    }

    /// Trace of `q` after an orthogonal change of the family basis.
    pub fn rotated_trace(&self, family: Family, omega: &DiscreteOneForm, rotation: &DMatrix<f64>) -> Result<f64> {
        let t = self.tangent_field(omega);
        let funcs = self.family_functions(family, &t)?;
        if rotation.nrows() != funcs.len() || rotation.ncols() != funcs.len() {
            return Err(Error::Input("rotation size does not match the family".into()));
        }
        let n = self.len();
        let rotated: Vec<Vec<f64>> = (0..funcs.len())
            .map(|b| (0..n).map(|i| (0..funcs.len()).map(|a| rotation[(a, b)] * funcs[a][i]).sum()).collect())
            .collect();
        Ok(self.gram(&rotated).0.trace())
    }

    /// `B(x, y)` at a node for source chart vectors.
    pub fn second_fundamental(&self, node: usize, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.frames[node].jet.second_fundamental(&self.data.nodes[node].gamma, x, y)
    }

    /// Integrands of every closed-form identity at one node, for a tangent
    /// vector in parameter components.
    pub fn integrands(&self, node: usize, t: &Vector2<f64>) -> TraceIntegrals {
        let g: &PointGeometry = &self.data.nodes[node];
        let f = &self.frames[node];
        let jet = &f.jet;
        let tm = g.push(t);
        let t2 = g.ip(&tm, &tm);
        let frame = g.orthonormal_frame();
        let nu = &g.nu;
        let b = |x: &DVector<f64>, y: &DVector<f64>| jet.second_fundamental(&g.gamma, x, y);
        let bn2 = |v: &DVector<f64>| jet.ip(v, v);
        let btt = b(&tm, &tm);
        let bnn = b(nu, nu);
        let (tn, nn) = (jet.push(&tm), jet.push(nu));
        let mut s = TraceIntegrals { norm2: t2, ..Default::default() };
        let mut a_et = 0.0;
        let mut b_et = 0.0;
        let mut b_en = 0.0;
        let mut bee_btt = 0.0;
        let mut bee_bnn = 0.0;
        let mut rm = 0.0;
        let mut rbar_t = 0.0;
        let mut rbar_n = 0.0;
        for e in &frame {
            let em = g.push(e);
            a_et += (e.transpose() * g.a * t)[(0, 0)].powi(2);
            let bee = b(&em, &em);
            b_et += bn2(&b(&em, &tm));
            b_en += bn2(&b(&em, nu));
            bee_btt += jet.ip(&bee, &btt);
            bee_bnn += jet.ip(&bee, &bnn);
            let r = g.riemann.apply(tm.as_slice(), em.as_slice(), em.as_slice());
            rm += g.ip(&DVector::from_vec(r), &tm);
            let en = jet.push(&em);
            rbar_t += jet.curvature(&tn, &en);
            rbar_n += jet.curvature(&nn, &en);
        }
        let ric = g.ric_nu;
        s.first_general = 2.0 * a_et - g.a_norm2 * t2 - ric * t2 + b_et - rm + rbar_t;
        s.first_gauss = -ric * t2 + 2.0 * b_et - bee_btt;
        s.first_scalar = b_et - 0.5 * f.scalar * t2 + rbar_t;
        s.second_curvature = b_et + b_en * t2 - (rm + ric * t2) + rbar_t + rbar_n * t2;
        s.second_b_only = 2.0 * (b_et + b_en * t2) - (bee_btt + bee_bnn * t2);
        s
    }

    /// Area-weighted integrals of [`Self::integrands`] for `ω♯`.
    pub fn integrals(&self, omega: &DiscreteOneForm) -> Result<TraceIntegrals> {
        if omega.grid != self.data.grid {
            return Err(Error::Input("form lives on a different grid".into()));
        }
        let w = self.data.weights();
        let t = self.tangent_field(omega);
        let mut acc = TraceIntegrals::default();
        for i in 0..self.len() {
            let s = self.integrands(i, &t[i]).scaled(w[i]);
            acc.norm2 += s.norm2;
            acc.first_general += s.first_general;
            acc.first_gauss += s.first_gauss;
            acc.first_scalar += s.first_scalar;
            acc.second_curvature += s.second_curvature;
            acc.second_b_only += s.second_b_only;
        }
        Ok(acc)
    }

    /// `β_N(x, ν)` for a unit parameter vector, with `F` playing the role of
    /// the Euclidean embedding `G` of `N = M`.
    pub fn beta_n(&self, node: usize, x: &Vector2<f64>) -> f64 {
        let g = &self.data.nodes[node];
        let n2 = (x.transpose() * g.h * x)[(0, 0)];
        self.integrands(node, &(x / n2.sqrt())).second_b_only
    }

    /// `Σ_{a<b}(T_a, T_b)` blocks of `Σ_v Q(φ_{T_a,v}, φ_{T_b,v})` and the
    /// matching `L²` sums, for the counting argument.
    pub fn test_space_matrices(&self, family: Family, forms: &[DiscreteOneForm]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let fams: Vec<Vec<Vec<f64>>> =
            forms.iter().map(|w| self.family_functions(family, &self.tangent_field(w))).collect::<Result<_>>()?;
        let s = forms.len();
        let mut tq = DMatrix::zeros(s, s);
        let mut tl = DMatrix::zeros(s, s);
        for a in 0..s {
            for b in a..s {
                let mut q = 0.0;
                let mut l = 0.0;
                for v in 0..fams[a].len() {
                    let (gq, gl) = self.cross_gram(&fams[a][v..v + 1], &fams[b][v..v + 1]);
                    q += gq[(0, 0)];
                    l += gl[(0, 0)];
                }
                tq[(a, b)] = q;
                tq[(b, a)] = q;
                tl[(a, b)] = l;
                tl[(b, a)] = l;
            }
        }
        Ok((tq, tl))
    }

    /// Numerical dimension of the subspace of `forms` whose family members
    /// are all Jacobi fields. The pointwise spectral operator is used, and a
    /// singular value counts as zero below `rel_tol` times the scale of the
    /// un-differentiated map.
    pub fn kernel_dimension(&self, family: Family, forms: &[DiscreteOneForm], rel_tol: f64) -> Result<KernelReport> {
        let op = self
            .pointwise
            .as_ref()
            .ok_or_else(|| Error::NotApplicable("pointwise Jacobi values need a torus grid".into()))?;
        let s = forms.len();
        let mut jac = Vec::with_capacity(s);
        let mut raw = Vec::with_capacity(s);
        for w in forms {
            let funcs = self.family_functions(family, &self.tangent_field(w))?;
            jac.push(funcs.iter().map(|f| op.apply(f)).collect::<Vec<_>>());
            raw.push(funcs);
        }
        let normal = |x: &[Vec<Vec<f64>>]| {
            DMatrix::from_fn(s, s, |a, b| (0..x[a].len()).map(|v| op.mass_inner(&x[a][v], &x[b][v])).sum::<f64>())
        };
        let sv = |m: DMatrix<f64>| {
            let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
            e.sort_by(|a, b| b.partial_cmp(a).unwrap());
            e
        };
        let singular_values = sv(normal(&jac));
        let scale = sv(normal(&raw)).first().copied().unwrap_or(0.0) * op.potential.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tolerance = rel_tol * scale;
        let dim = singular_values.iter().filter(|&&v| v <= tolerance).count();
        Ok(KernelReport { dim, singular_values, tolerance })
    }

    /// Pointwise identity for `𝒥φ_{ω♯, X∧Y}` at `node`, with `X`, `Y` given
    /// in raw algebra coefficients. Needs `F` the identity.
    pub fn jacobi_of_phi(&self, omega: &DiscreteOneForm, x: &DVector<f64>, y: &DVector<f64>, node: usize) -> Result<JacobiPhiResidual> {
        if self.embedding.target != Target::Identity {
            return Err(Error::NotApplicable("pointwise Jacobi identity needs M = N".into()));
        }
        let op = self
            .pointwise
            .as_ref()
            .ok_or_else(|| Error::NotApplicable("pointwise Jacobi values need a torus grid".into()))?;
        let t = self.tangent_field(omega);
        let phi = self.phi_function(&t, x, y);
        let lhs = op.apply(&phi)[node];
        let g = &self.data.nodes[node];
        let nabla = omega.nabla_sharp(&self.data, node, &omega.derivatives());
        let xt = g.tangential(&self.killing_field(node, x));
        let yt = g.tangential(&self.killing_field(node, y));
        let a = |u: &Vector2<f64>, v: &Vector2<f64>| (u.transpose() * g.a * v)[(0, 0)];
        let rhs = -2.0 * a(&(nabla * yt), &xt) + 2.0 * a(&(nabla * xt), &yt);
        Ok(JacobiPhiResidual { lhs, rhs, residual: (lhs - rhs).abs() })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub dim: usize,
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct JacobiPhiResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `[S_ν, ∇ω♯]` at a node, in an orthonormal frame.
pub fn commutator_at(data: &ExtrinsicData, omega: &DiscreteOneForm, node: usize, derivs: &[[Vec<f64>; 2]; 2]) -> Matrix2<f64> {
    let g = &data.nodes[node];
    let [e0, e1] = g.orthonormal_frame();
    let e = Matrix2::from_columns(&[e0, e1]);
    let e_inv = e.try_inverse().expect("frame is a basis");
    let s = e_inv * g.shape * e;
    let n = e_inv * omega.nabla_sharp(data, node, derivs) * e;
    s * n - n * s
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct H1Report {
    pub is_member: bool,
    pub max_commutator_norm: f64,
    pub tolerance: f64,
}

/// Commutator criterion for the subset of harmonic forms whose dual field
/// commutes with the shape operator. It over-approximates the Jacobi-kernel
/// set, which it contains.
pub fn h1_membership(data: &ExtrinsicData, omega: &DiscreteOneForm, tol: f64) -> H1Report {
    let d = omega.derivatives();
    let worst = (0..data.nodes.len()).map(|i| commutator_at(data, omega, i, &d).norm()).fold(0.0, f64::max);
    H1Report { is_member: worst <= tol, max_commutator_norm: worst, tolerance: tol }
}

/// Dimension of the span of `forms` satisfying the commutator condition,
/// from singular values of the `L²`-weighted commutator map.
pub fn h1_dimension(data: &ExtrinsicData, forms: &[DiscreteOneForm], tol: f64) -> KernelReport {
    let w = data.weights();
    let cols: Vec<Vec<f64>> = forms
        .iter()
        .map(|f| {
            let d = f.derivatives();
            (0..data.nodes.len())
                .flat_map(|i| {
                    let c = commutator_at(data, f, i, &d) * w[i].sqrt();
                    [c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]]
                })
                .collect()
        })
        .collect();
    let s = forms.len();
    let gram = DMatrix::from_fn(s, s, |a, b| cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum::<f64>());
    let mut sv: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let tolerance = tol * data.area().sqrt();
    KernelReport { dim: sv.iter().filter(|&&v| v <= tolerance).count(), singular_values: sv, tolerance }
}

/// `2/(d(d−1) + 2(2n−3))`.
pub fn index_bound_constant(d: u64, n: u64) -> Result<Ratio<i64>> {
    if d < 1 || n < 2 {
        return Err(Error::Input(format!("need d >= 1 and n >= 2, got d = {d}, n = {n}")));
    }
    let den = (d * (d - 1) + 2 * (2 * n - 3)) as i64;
    Ok(Ratio::new(2, den))
}

/// `2/(d(d−1))`, the constant bounding index plus nullity.
pub fn index_nullity_constant(d: u64) -> Result<Ratio<i64>> {
    if d < 2 {
        return Err(Error::Input(format!("need d >= 2, got {d}")));
    }
    Ok(Ratio::new(2, (d * (d - 1)) as i64))
}

/// `count ≥ c·b1` in exact arithmetic.
pub fn bound_check(count: usize, b1: usize, c: Ratio<i64>) -> bool {
    Ratio::from_integer(count as i64) >= c * Ratio::from_integer(b1 as i64)
}

/// Closed form of `β` on the Berger sphere of radius `r` in terms of
/// `η(T)` and `η(ν)`.
pub fn beta_berger(r: f64, eta_t: f64, eta_nu: f64) -> Result<f64> {
    let bd = crate::space_models::BergerData::new(r)?;
    let (x, y) = (eta_t * eta_t, eta_nu * eta_nu);
    if !(eta_t.abs() <= 1.0 && eta_nu.abs() <= 1.0 && x + y <= 1.0 + 1e-12) {
        return Err(Error::Input(format!("inconsistent η values ({eta_t}, {eta_nu}) for orthonormal T, ν")));
    }
    let (a2, b2) = (bd.a * bd.a, bd.b * bd.b);
    Ok(-2.0 * a2 - 3.0 * (1.0 - y) - b2 * x * y + (b2 - 2.0) * x)
}

/// `β` from its definition, for orthonormal `T`, `ν` in a frame where
/// `η(X) = X[0]`.
pub fn beta_berger_frame(r: f64, t: &[f64; 3], nu: &[f64; 3]) -> Result<f64> {
    let bd = crate::space_models::BergerData::new(r)?;
    let dot = |x: &[f64; 3], y: &[f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    if (dot(t, t) - 1.0).abs() > 1e-10 || (dot(nu, nu) - 1.0).abs() > 1e-10 || dot(t, nu).abs() > 1e-10 {
        return Err(Error::Input("T and ν must be orthonormal".into()));
    }
    let e2 = [nu[1] * t[2] - nu[2] * t[1], nu[2] * t[0] - nu[0] * t[2], nu[0] * t[1] - nu[1] * t[0]];
    let mut s = -bd.ricci(nu, nu);
    for e in [t, &e2] {
        s += 2.0 * bd.second_fundamental(e, t).powi(2) - bd.second_fundamental(e, e) * bd.second_fundamental(t, t);
    }
    Ok(s)
}

/// Upper bound `−2cot²r + tan²r − 2` for `β`.
pub fn berger_sup_bound(r: f64) -> f64 {
    let t2 = r.tan().powi(2);
    -2.0 / t2 + t2 - 2.0
}

/// Exact supremum of the closed form over admissible `η` values: the form
/// is bilinear in `(η(T)², η(ν)²)` on a triangle, so it peaks at a vertex.
pub fn berger_sup_exact(r: f64) -> f64 {
    let t2 = r.tan().powi(2);
    -2.0 / t2 + (t2 - 5.0).max(0.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BergerSample {
    pub t: [f64; 3],
    pub nu: [f64; 3],
    pub beta: f64,
}

fn unit_sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Uniformly random orthonormal pairs `(T, ν)`.
pub fn random_orthonormal_pairs(count: usize, seed: u64) -> Vec<([f64; 3], [f64; 3])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = unit_sphere_point(&mut rng);
            loop {
                let w = unit_sphere_point(&mut rng);
                let c = w[0] * t[0] + w[1] * t[1] + w[2] * t[2];
                let v = [w[0] - c * t[0], w[1] - c * t[1], w[2] - c * t[2]];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 1e-3 {
                    return (t, [v[0] / n, v[1] / n, v[2] / n]);
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BergerScanRow {
    pub r: f64,
    pub tan_r: f64,
    pub samples: usize,
    pub max_beta: f64,
    pub sup_exact: f64,
    pub sup_bound: f64,
    /// Samples with `β` above the bound.
    pub bound_violations: usize,
    pub max_excess_over_bound: f64,
}

/// Sampled `sup β` per radius, using the same direction samples at each `r`.
pub fn berger_scan(radii: &[f64], samples: usize, seed: u64) -> Result<Vec<BergerScanRow>> {
    let pairs = random_orthonormal_pairs(samples, seed);
    radii
        .iter()
        .map(|&r| {
            let bound = berger_sup_bound(r);
            let mut max_beta = f64::NEG_INFINITY;
            let mut violations = 0;
            let mut excess = f64::NEG_INFINITY;
            for (t, nu) in &pairs {
                let b = beta_berger(r, t[0], nu[0])?;
                max_beta = max_beta.max(b);
                excess = excess.max(b - bound);
                if b > bound + 1e-12 * bound.abs().max(1.0) {
                    violations += 1;
                }
            }
            Ok(BergerScanRow {
                r,
                tan_r: r.tan(),
                samples,
                max_beta,
                sup_exact: berger_sup_exact(r),
                sup_bound: bound,
                bound_violations: violations,
                max_excess_over_bound: excess,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BergerThreshold {
    /// Root of the published bound, `√(1+√3)`.
    pub bound_root_tan: f64,
    /// Root of the exact supremum.
    pub exact_root_tan: f64,
    /// Sign change of the sampled supremum, if bracketed.
    pub sampled_root_tan: Option<f64>,
    pub samples: usize,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Locates the sign changes of the bound, the exact supremum and the sampled
/// supremum as functions of `tan r` on `[0.5, 4]`.
pub fn berger_threshold(samples: usize, seed: u64) -> Result<BergerThreshold> {
    let pairs = random_orthonormal_pairs(samples, seed);
    let r_of = |t: f64| t.atan();
    let bound_root = bisect(0.5, 4.0, |t| berger_sup_bound(r_of(t))).expect("bound changes sign");
    let exact_root = bisect(0.5, 4.0, |t| berger_sup_exact(r_of(t))).expect("supremum changes sign");
    let sampled = |t: f64| {
        pairs.iter().map(|(a, b)| beta_berger(r_of(t), a[0], b[0]).unwrap_or(f64::NEG_INFINITY)).fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(BergerThreshold { bound_root_tan: bound_root, exact_root_tan: exact_root, sampled_root_tan: bisect(0.5, 4.0, sampled), samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_constants_are_exact() {
        assert_eq!(index_bound_constant(6, 3).unwrap(), Ratio::new(1, 18));
        assert_eq!(index_bound_constant(8, 4).unwrap(), Ratio::new(1, 33));
        assert_eq!(index_nullity_constant(6).unwrap(), Ratio::new(1, 15));
        assert!(index_bound_constant(6, 1).is_err());
        assert!(bound_check(5, 2, Ratio::new(1, 18)));
        assert!(!bound_check(0, 2, Ratio::new(1, 18)));
    }

    #[test]
    fn berger_closed_form_matches_definition() {
        for (i, (t, nu)) in random_orthonormal_pairs(200, 9).into_iter().enumerate() {
            let r = 0.2 + 1.3 * (i as f64) / 200.0;
            let a = beta_berger(r, t[0], nu[0]).unwrap();
            let b = beta_berger_frame(r, &t, &nu).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "r = {r}: {a} vs {b}");
        }
    }

    #[test]
    fn berger_inputs_validated() {
        assert!(beta_berger(0.5, 0.9, 0.9).is_err());
        assert!(beta_berger(0.5, 1.1, 0.0).is_err());
        assert!(beta_berger(2.0, 0.0, 0.0).is_err());
        assert!(beta_berger_frame(0.5, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn wedge_product_inner_is_a_determinant() {
        let model = SymmetricSpaceModel::sphere(3, 1.0);
        let w = WedgeBasis::new(&model).unwrap();
        assert_eq!(w.dim(), 15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rnd = || DVector::from_fn(6, |_, _| rng.gen::<f64>() - 0.5);
        for _ in 0..20 {
            let (x, y, z, u) = (rnd(), rnd(), rnd(), rnd());
            let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&w.gram * b));
            let det = ip(&x, &z) * ip(&y, &u) - ip(&x, &u) * ip(&y, &z);
            assert!((w.inner(&x, &y, &z, &u) - det).abs() < 1e-12);
            assert!(w.wedge(&x, &x).amax() < 1e-15);
        }
    }
}
