//! Closed-form ambient models.
//!
//! * `Sphere { n, radius }`: stereographic chart from the last coordinate
//!   axis, metric `4r²/(1+|y|²)² δ`.
//! * `FubiniStudy { m }`: affine chart `z ↦ [1 : z]` of CP^m with holomorphic
//!   sectional curvature 4; real coordinates `(Re z_1, Im z_1, …)`.
//! * `Berger { r }`: the geodesic sphere `|z| = tan r` in the affine chart of
//!   CP², parametrized by `(u1, u2, u3) ↦ tan r (cos u1 e^{iu2}, sin u1 e^{iu3})`.
//! * `Euclidean { m }`: identity chart.
//!
//! Curvature sign: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_{[X,Y]}Z`, so spheres
//! have positive sectional curvature `⟨R(X,Y)Y,X⟩`.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::lie_core::{CMat, LieAlgebraBasis};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    Sphere { n: usize, radius: f64 },
    FubiniStudy { m: usize },
    Berger { r: f64 },
    Euclidean { m: usize },
}

/// Christoffel symbols `Γ^k_{ij}` stored at `[k][i][j]`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    /// `Γ(u, v)^k = Γ^k_{ij} u^i v^j`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.get(k, i, j) * u[i] * v[j];
                    }
                }
                s
            })
            .collect()
    }
}

/// Riemann tensor: component `l` of `R(∂_i, ∂_j)∂_k` at `[i][j][k][l]`.
#[derive(Clone, Debug)]
pub struct Riemann {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Riemann {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.data[((i * n + j) * n + k) * n + l]
    }

    /// `R(x, y)z` as a vector.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let c = xy * z[k];
                    if c == 0.0 {
                        continue;
                    }
                    for (l, o) in out.iter_mut().enumerate() {
                        *o += c * self.get(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// `Ric_{jk} = R^i_{ijk}`.
    pub fn ricci(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |j, k| (0..n).map(|i| self.get(i, j, k, i)).sum())
    }

    /// Largest first-Bianchi violation over all index triples.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let s = self.get(i, j, k, l) + self.get(j, k, i, l) + self.get(k, i, j, l);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Riemann) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Extrinsic data of the Berger sphere `S_r ⊂ CP²(4)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BergerData {
    pub r: f64,
    pub a: f64,
    pub b: f64,
}

impl BergerData {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Input(format!("Berger radius {r} outside (0, π/2)")));
        }
        Ok(BergerData { r, a: 1.0 / r.tan(), b: -r.tan() })
    }

    /// Second fundamental form in an orthonormal frame whose first vector
    /// is `-Jν_S`, so that `η(X) = X[0]`.
    pub fn second_fundamental(&self, x: &[f64; 3], y: &[f64; 3]) -> f64 {
        let dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        self.a * dot + self.b * x[0] * y[0]
    }

    /// Ricci tensor in the same adapted frame.
    pub fn ricci(&self, x: &[f64; 3], y: &[f64; 3]) -> f64 {
        let dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        (2.0 * self.a * self.a + 4.0) * dot - 4.0 * x[0] * y[0]
    }
}

#[derive(Clone, Debug)]
pub struct SymmetricSpaceModel {
    pub kind: ModelKind,
    group: Option<Arc<LieAlgebraBasis>>,
}

/// Conformal-factor window outside which chart points are rejected.
const CHART_WINDOW: (f64, f64) = (1e-6, 1e6);

impl SymmetricSpaceModel {
    pub fn sphere(n: usize, radius: f64) -> Self {
        assert!(n >= 2 && n + 1 < crate::jet::JMAX + 1, "sphere dimension {n} unsupported");
        assert!(radius > 0.0);
        SymmetricSpaceModel { kind: ModelKind::Sphere { n, radius }, group: Some(Arc::new(LieAlgebraBasis::so(n + 1))) }
    }

    pub fn fubini_study(m: usize) -> Self {
        assert!(m >= 1 && 2 * m < crate::jet::JMAX, "CP^{m} unsupported");
        SymmetricSpaceModel { kind: ModelKind::FubiniStudy { m }, group: Some(Arc::new(LieAlgebraBasis::su(m + 1))) }
    }

    pub fn berger(r: f64) -> Result<Self> {
        BergerData::new(r)?;
        Ok(SymmetricSpaceModel { kind: ModelKind::Berger { r }, group: None })
    }

    pub fn euclidean(m: usize) -> Self {
        assert!(m >= 1);
        SymmetricSpaceModel { kind: ModelKind::Euclidean { m }, group: None }
    }

    /// Parses `s3`, `s4:r=2`, `cp2`, `berger:r=0.9`, `euclid:4`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Input(format!("unknown model '{spec}'"));
        let (head, tail) = match spec.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (spec, None),
        };
        let param = |key: &str| -> Result<Option<f64>> {
            match tail {
                None => Ok(None),
                Some(t) => {
                    let (k, v) = t.split_once('=').ok_or_else(bad)?;
                    if k.trim() != key {
                        return Err(bad());
                    }
                    v.trim().parse::<f64>().map(Some).map_err(|_| bad())
                }
            }
        };
        if let Some(n) = head.strip_prefix("cp") {
            let m: usize = n.parse().map_err(|_| bad())?;
            if tail.is_some() || m == 0 || 2 * m >= crate::jet::JMAX {
                return Err(bad());
            }
            return Ok(Self::fubini_study(m));
        }
        if head == "berger" {
            let r = param("r")?.ok_or_else(bad)?;
            return Self::berger(r);
        }
        if head == "euclid" {
            let m: usize = tail.ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if m == 0 {
                return Err(bad());
            }
            return Ok(Self::euclidean(m));
        }
        if let Some(n) = head.strip_prefix('s') {
            let n: usize = n.parse().map_err(|_| bad())?;
            if n < 2 || n + 1 > crate::jet::JMAX {
                return Err(bad());
            }
            let r = param("r")?.unwrap_or(1.0);
            if r <= 0.0 {
                return Err(bad());
            }
            return Ok(Self::sphere(n, r));
        }
        Err(bad())
    }

    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::Sphere { n, radius } if radius == 1.0 => format!("s{n}"),
            ModelKind::Sphere { n, radius } => format!("s{n}:r={radius}"),
            ModelKind::FubiniStudy { m } => format!("cp{m}"),
            ModelKind::Berger { r } => format!("berger:r={r}"),
            ModelKind::Euclidean { m } => format!("euclid:{m}"),
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Sphere { n, .. } => n,
            ModelKind::FubiniStudy { m } => 2 * m,
            ModelKind::Berger { .. } => 3,
            ModelKind::Euclidean { m } => m,
        }
    }

    pub fn group(&self) -> Option<&LieAlgebraBasis> {
        self.group.as_deref()
    }

    pub fn group_arc(&self) -> Option<Arc<LieAlgebraBasis>> {
        self.group.clone()
    }

    /// `κ` with `⟨X,Y⟩ = −B(X,Y)/κ` making `n_p ≅ T_pN` an isometry for
    /// this model's metric.
    pub fn killing_scale(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Sphere { n, radius } => Some(2.0 * (n as f64 - 1.0) / (radius * radius)),
            ModelKind::FubiniStudy { m } => Some(4.0 * (m as f64 + 1.0)),
            _ => None,
        }
    }

    /// Gram matrix of the normalized inner product `−B/κ` on the algebra.
    pub fn algebra_inner(&self) -> Option<DMatrix<f64>> {
        let g = self.group()?;
        Some(&g.gram / self.killing_scale()?)
    }

    /// Einstein constant `c` with `Ric = c·g`, for the semi-simple models.
    pub fn einstein_constant(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Sphere { n, radius } => Some((n as f64 - 1.0) / (radius * radius)),
            ModelKind::FubiniStudy { m } => Some(2.0 * (m as f64 + 1.0)),
            _ => None,
        }
    }

    pub fn berger_data(&self) -> Option<BergerData> {
        match self.kind {
            ModelKind::Berger { r } => BergerData::new(r).ok(),
            _ => None,
        }
    }

    /// Rejects points with the wrong dimension or outside the chart window.
    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Input(format!("{} expects {} coordinates, got {}", self.label(), self.dim(), p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        let r2: f64 = p.iter().map(|v| v * v).sum();
        let factor = match self.kind {
            ModelKind::Sphere { radius, .. } => 4.0 * radius * radius / ((1.0 + r2) * (1.0 + r2)),
            ModelKind::FubiniStudy { .. } => 1.0 / (1.0 + r2),
            ModelKind::Berger { .. } => {
                let s = (2.0 * p[0]).sin();
                if !(p[0] > 0.0 && p[0] < std::f64::consts::FRAC_PI_2) {
                    return Err(Error::Domain(format!("u1 = {} outside (0, π/2)", p[0])));
                }
                s * s
            }
            ModelKind::Euclidean { .. } => 1.0,
        };
        if factor < CHART_WINDOW.0 || factor > CHART_WINDOW.1 {
            return Err(Error::Domain(format!("conformal factor {factor:e} at {p:?}")));
        }
        Ok(())
    }

    /// Coordinate metric, row-major, generic over the scalar type.
    pub fn metric_generic<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        match self.kind {
            ModelKind::Sphere { n, radius } => {
                let mut r2 = S::zero();
                for &v in p {
                    r2 = r2 + v * v;
                }
                let lam = (r2 + 1.0).sq().recip_s() * (4.0 * radius * radius);
                let mut g = vec![S::zero(); n * n];
                for i in 0..n {
                    g[i * n + i] = lam;
                }
                g
            }
            ModelKind::FubiniStudy { m } => fs_metric(m, p),
            ModelKind::Berger { r } => berger_metric(r, p),
            ModelKind::Euclidean { m } => {
                let mut g = vec![S::zero(); m * m];
                for i in 0..m {
                    g[i * m + i] = S::cst(1.0);
                }
                g
            }
        }
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let n = self.dim();
        let g = self.metric_generic(p);
        Ok(DMatrix::from_row_slice(n, n, &g))
    }

    /// Metric jets seeded on the chart coordinates.
    fn metric_jets(&self, p: &[f64]) -> Vec<Jet> {
        self.metric_generic(&Jet::seed(p, 0))
    }

    /// Christoffel symbols and their first derivatives `∂_m Γ^k_{ij}`
    /// (stored `[m][k][i][j]`) from exact metric jets.
    pub fn christoffel_with_derivative(&self, p: &[f64]) -> Result<(Christoffel, Vec<f64>)> {
        self.check_point(p)?;
        let n = self.dim();
        let gj = self.metric_jets(p);
        let g = DMatrix::from_fn(n, n, |a, b| gj[a * n + b].v);
        let ginv = g.clone().try_inverse().ok_or_else(|| Error::Geometry("singular metric".into()))?;
        let dg = |c: usize, a: usize, b: usize| gj[a * n + b].g[c];
        let ddg = |c: usize, d: usize, a: usize, b: usize| gj[a * n + b].h[c][d];
        // first-kind symbols and their derivatives
        let mut first = vec![0.0; n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    first[(l * n + i) * n + j] = 0.5 * (dg(i, l, j) + dg(j, l, i) - dg(l, i, j));
                }
            }
        }
        let mut gamma = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    gamma[(k * n + i) * n + j] = (0..n).map(|l| ginv[(k, l)] * first[(l * n + i) * n + j]).sum();
                }
            }
        }
        let mut dgamma = vec![0.0; n * n * n * n];
        for m in 0..n {
            let dgm = DMatrix::from_fn(n, n, |a, b| dg(m, a, b));
            let dginv = -(&ginv * dgm * &ginv);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            let dfirst = 0.5 * (ddg(m, i, l, j) + ddg(m, j, l, i) - ddg(m, l, i, j));
                            s += dginv[(k, l)] * first[(l * n + i) * n + j] + ginv[(k, l)] * dfirst;
                        }
                        dgamma[((m * n + k) * n + i) * n + j] = s;
                    }
                }
            }
        }
        Ok((Christoffel { n, data: gamma }, dgamma))
    }

    pub fn christoffel_at(&self, p: &[f64]) -> Result<Christoffel> {
        Ok(self.christoffel_with_derivative(p)?.0)
    }

    pub fn riemann_at(&self, p: &[f64]) -> Result<Riemann> {
        let (g, dg) = self.christoffel_with_derivative(p)?;
        let n = self.dim();
        Ok(riemann_from(n, &g, |m, k, i, j| dg[((m * n + k) * n + i) * n + j]))
    }

    pub fn ricci_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.riemann_at(p)?.ricci())
    }

    pub fn scalar_at(&self, p: &[f64]) -> Result<f64> {
        let ric = self.ricci_at(p)?;
        let g = self.metric_at(p)?;
        let ginv = g.try_inverse().ok_or_else(|| Error::Geometry("singular metric".into()))?;
        Ok(ginv.component_mul(&ric).sum())
    }

    /// Sectional curvature of the plane spanned by `x, y`.
    pub fn sectional(&self, p: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        let g = self.metric_at(p)?;
        let r = self.riemann_at(p)?;
        let ryy = r.apply(x, y, y);
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        let ip = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &g * b)[(0, 0)];
        let num = ip(&DVector::from_vec(ryy), &xv);
        let den = ip(&xv, &xv) * ip(&yv, &yv) - ip(&xv, &yv).powi(2);
        if den.abs() < 1e-300 {
            return Err(Error::Input("degenerate 2-plane".into()));
        }
        Ok(num / den)
    }

    /// Christoffel symbols by centered differences of `metric_at`.
    pub fn christoffel_fd(&self, p: &[f64], h: f64) -> Result<Christoffel> {
        self.check_point(p)?;
        let n = self.dim();
        let g = self.metric_at(p)?;
        let ginv = g.try_inverse().ok_or_else(|| Error::Geometry("singular metric".into()))?;
        let mut dg = Vec::with_capacity(n);
        for c in 0..n {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[c] += h;
            pm[c] -= h;
            let gp = self.metric_at(&pp).map_err(|_| Error::Domain(format!("step {h:e} leaves the chart")))?;
            let gm = self.metric_at(&pm).map_err(|_| Error::Domain(format!("step {h:e} leaves the chart")))?;
            dg.push((gp - gm) / (2.0 * h));
        }
        let mut data = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    data[(k * n + i) * n + j] = (0..n)
                        .map(|l| 0.5 * ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]))
                        .sum();
                }
            }
        }
        Ok(Christoffel { n, data })
    }

    /// Riemann tensor by nested centered differences with step `h`.
    pub fn riemann_fd(&self, p: &[f64], h: f64) -> Result<Riemann> {
        if h < 1e-9 {
            return Err(Error::Numeric(format!("finite-difference step {h:e} underflows")));
        }
        let n = self.dim();
        let g0 = self.christoffel_fd(p, h)?;
        let mut dg = vec![0.0; n * n * n * n];
        for m in 0..n {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[m] += h;
            pm[m] -= h;
            let gp = self.christoffel_fd(&pp, h)?;
            let gm = self.christoffel_fd(&pm, h)?;
            for (idx, (a, b)) in gp.data.iter().zip(&gm.data).enumerate() {
                dg[m * n * n * n + idx] = (a - b) / (2.0 * h);
            }
        }
        Ok(riemann_from(n, &g0, |m, k, i, j| dg[((m * n + k) * n + i) * n + j]))
    }

    /// Richardson-extrapolated finite-difference Riemann tensor.
    pub fn riemann_fd_richardson(&self, p: &[f64], h: f64) -> Result<Riemann> {
        let coarse = self.riemann_fd(p, h)?;
        let fine = self.riemann_fd(p, h / 2.0)?;
        let data = fine.data.iter().zip(&coarse.data).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
        Ok(Riemann { n: fine.n, data })
    }

    /// Ambient matrix `s_p` of the geodesic symmetry at `p`.
    pub fn involution(&self, p: &[f64]) -> Result<CMat> {
        self.check_point(p)?;
        match self.kind {
            ModelKind::Sphere { radius, .. } => {
                let x = sphere_lift(radius, p);
                let n1 = x.len();
                Ok(CMat::from_fn(n1, n1, |i, j| {
                    let d = if i == j { 1.0 } else { 0.0 };
                    Complex::new(2.0 * x[i] * x[j] / (radius * radius) - d, 0.0)
                }))
            }
            ModelKind::FubiniStudy { m } => {
                let mut z = vec![Complex::new(1.0, 0.0)];
                for a in 0..m {
                    z.push(Complex::new(p[2 * a], p[2 * a + 1]));
                }
                let nrm2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
                Ok(CMat::from_fn(m + 1, m + 1, |i, j| {
                    let d = if i == j { 1.0 } else { 0.0 };
                    z[i] * z[j].conj() * (2.0 / nrm2) - Complex::new(d, 0.0)
                }))
            }
            _ => Err(Error::NotApplicable(format!("{} is not modelled as a symmetric space", self.label()))),
        }
    }

    /// Chart coordinates of `exp(tX)·y`, exact to second order in `t`.
    ///
    /// Used with jets in `(t, y)`: the `t`-gradient at `t = 0` is the
    /// fundamental field and the mixed second derivatives its chart Jacobian.
    pub fn flow_chart<S: Scalar>(&self, x: &CMat, t: S, y: &[S]) -> Vec<S> {
        match self.kind {
            ModelKind::Sphere { n, radius } => {
                let xa = sphere_lift(radius, y);
                let k = n + 1;
                let apply = |v: &[S]| -> Vec<S> {
                    (0..k)
                        .map(|i| {
                            let mut s = S::zero();
                            for j in 0..k {
                                let c = x[(i, j)].re;
                                if c != 0.0 {
                                    s = s + v[j] * c;
                                }
                            }
                            s
                        })
                        .collect()
                };
                let x1 = apply(&xa);
                let x2 = apply(&x1);
                let t2 = t * t * 0.5;
                let moved: Vec<S> = (0..k).map(|i| xa[i] + t * x1[i] + t2 * x2[i]).collect();
                let mut nrm = S::zero();
                for &v in &moved {
                    nrm = nrm + v * v;
                }
                let scale = nrm.sqrt().recip_s() * radius;
                let unit: Vec<S> = moved.iter().map(|&v| v * scale).collect();
                sphere_project(radius, &unit)
            }
            ModelKind::FubiniStudy { m } => {
                let mut zr = vec![S::cst(1.0)];
                let mut zi = vec![S::zero()];
                for a in 0..m {
                    zr.push(y[2 * a]);
                    zi.push(y[2 * a + 1]);
                }
                let apply = |vr: &[S], vi: &[S]| -> (Vec<S>, Vec<S>) {
                    let mut or = vec![S::zero(); m + 1];
                    let mut oi = vec![S::zero(); m + 1];
                    for i in 0..=m {
                        for j in 0..=m {
                            let c = x[(i, j)];
                            if c.re == 0.0 && c.im == 0.0 {
                                continue;
                            }
                            or[i] = or[i] + vr[j] * c.re - vi[j] * c.im;
                            oi[i] = oi[i] + vr[j] * c.im + vi[j] * c.re;
                        }
                    }
                    (or, oi)
                };
                let (r1, i1) = apply(&zr, &zi);
                let (r2, i2) = apply(&r1, &i1);
                let t2 = t * t * 0.5;
                let wr: Vec<S> = (0..=m).map(|i| zr[i] + t * r1[i] + t2 * r2[i]).collect();
                let wi: Vec<S> = (0..=m).map(|i| zi[i] + t * i1[i] + t2 * i2[i]).collect();
                let den = (wr[0] * wr[0] + wi[0] * wi[0]).recip_s();
                let mut out = Vec::with_capacity(2 * m);
                for a in 1..=m {
                    out.push((wr[a] * wr[0] + wi[a] * wi[0]) * den);
                    out.push((wi[a] * wr[0] - wr[a] * wi[0]) * den);
                }
                out
            }
            _ => panic!("flow_chart called on a model without an isometry group"),
        }
    }

    /// Position in the standard ambient Euclidean space: `R^{n+1}` for
    /// spheres. Only spheres carry this embedding here.
    pub fn ambient_position<S: Scalar>(&self, y: &[S]) -> Option<Vec<S>> {
        match self.kind {
            ModelKind::Sphere { radius, .. } => Some(sphere_lift(radius, y)),
            _ => None,
        }
    }

    /// Complex structure `J` acting on chart vectors (Fubini–Study only).
    pub fn complex_structure(&self) -> Option<DMatrix<f64>> {
        match self.kind {
            ModelKind::FubiniStudy { m } => {
                let mut j = DMatrix::zeros(2 * m, 2 * m);
                for a in 0..m {
                    j[(2 * a + 1, 2 * a)] = 1.0;
                    j[(2 * a, 2 * a + 1)] = -1.0;
                }
                Some(j)
            }
            _ => None,
        }
    }
}

/// Reciprocal helper available on every scalar type.
pub(crate) trait Recip {
    fn recip_s(self) -> Self;
}

impl<S: Scalar> Recip for S {
    fn recip_s(self) -> Self {
        S::cst(1.0) / self
    }
}

/// Inverse stereographic projection onto the sphere of radius `r`.
pub fn sphere_lift<S: Scalar>(r: f64, y: &[S]) -> Vec<S> {
    let mut r2 = S::zero();
    for &v in y {
        r2 = r2 + v * v;
    }
    let inv = (r2 + 1.0).recip_s();
    let mut x: Vec<S> = y.iter().map(|&v| v * inv * (2.0 * r)).collect();
    x.push((r2 - 1.0) * inv * r);
    x
}

/// Stereographic projection from `(0, …, 0, r)`.
pub fn sphere_project<S: Scalar>(r: f64, x: &[S]) -> Vec<S> {
    let k = x.len();
    let den = (S::cst(r) - x[k - 1]).recip_s();
    x[..k - 1].iter().map(|&v| v * den).collect()
}

fn fs_metric<S: Scalar>(m: usize, p: &[S]) -> Vec<S> {
    let n = 2 * m;
    let mut r2 = S::zero();
    for &v in p {
        r2 = r2 + v * v;
    }
    let s = r2 + 1.0;
    let inv_s = s.recip_s();
    let inv_s2 = inv_s * inv_s;
    let mut g = vec![S::zero(); n * n];
    for a in 0..m {
        let (xa, ya) = (p[2 * a], p[2 * a + 1]);
        for b in 0..m {
            let (xb, yb) = (p[2 * b], p[2 * b + 1]);
            // w = conj(z_a) z_b
            let wre = xa * xb + ya * yb;
            let wim = xa * yb - ya * xb;
            let delta = if a == b { inv_s } else { S::zero() };
            let diag = delta - wre * inv_s2;
            g[(2 * a) * n + 2 * b] = diag;
            g[(2 * a + 1) * n + 2 * b + 1] = diag;
            g[(2 * a) * n + 2 * b + 1] = -(wim * inv_s2);
            g[(2 * a + 1) * n + 2 * b] = wim * inv_s2;
        }
    }
    g
}

/// Parametrization of the Berger sphere in the CP² affine chart and its
/// closed-form partial derivatives.
pub fn berger_embedding<S: Scalar>(r: f64, u: &[S]) -> (Vec<S>, [Vec<S>; 3]) {
    let t = r.tan();
    let (c1, s1) = (u[0].cos(), u[0].sin());
    let (c2, s2) = (u[1].cos(), u[1].sin());
    let (c3, s3) = (u[2].cos(), u[2].sin());
    let f = vec![c1 * c2 * t, c1 * s2 * t, s1 * c3 * t, s1 * s3 * t];
    let d1 = vec![-(s1 * c2) * t, -(s1 * s2) * t, c1 * c3 * t, c1 * s3 * t];
    let d2 = vec![-(c1 * s2) * t, c1 * c2 * t, S::zero(), S::zero()];
    let d3 = vec![S::zero(), S::zero(), -(s1 * s3) * t, s1 * c3 * t];
    (f, [d1, d2, d3])
}

fn berger_metric<S: Scalar>(r: f64, u: &[S]) -> Vec<S> {
    let (f, d) = berger_embedding(r, u);
    let g = fs_metric(2, &f);
    let mut out = vec![S::zero(); 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = S::zero();
            for a in 0..4 {
                for b in 0..4 {
                    s = s + d[i][a] * g[a * 4 + b] * d[j][b];
                }
            }
            out[i * 3 + j] = s;
        }
    }
    out
}

fn riemann_from(n: usize, g: &Christoffel, dg: impl Fn(usize, usize, usize, usize) -> f64) -> Riemann {
    let mut data = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = dg(i, l, j, k) - dg(j, l, i, k);
                    for m in 0..n {
                        s += g.get(m, j, k) * g.get(l, i, m) - g.get(m, i, k) * g.get(l, j, m);
                    }
                    data[((i * n + j) * n + k) * n + l] = s;
                }
            }
        }
    }
    Riemann { n, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stereographic_round_trip() {
        for r in [0.5, 1.0, 2.0] {
            let y = [0.3, -0.7, 1.1];
            let x = sphere_lift(r, &y);
            let n2: f64 = x.iter().map(|v| v * v).sum();
            assert!((n2 - r * r).abs() < 1e-13);
            let back = sphere_project(r, &x);
            for k in 0..3 {
                assert!((back[k] - y[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_metric_at_origin() {
        let s2 = SymmetricSpaceModel::sphere(2, 1.0);
        let g = s2.metric_at(&[0.0, 0.0]).unwrap();
        assert!((g - DMatrix::identity(2, 2) * 4.0).amax() < 1e-15);
    }

    #[test]
    fn euclidean_flat() {
        let e = SymmetricSpaceModel::euclidean(3);
        let p = [0.3, -1.0, 2.0];
        assert_eq!(e.metric_at(&p).unwrap(), DMatrix::identity(3, 3));
        assert!(e.christoffel_at(&p).unwrap().data.iter().all(|&v| v == 0.0));
        assert!(e.riemann_at(&p).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn einstein_constants() {
        for (model, p) in [
            (SymmetricSpaceModel::sphere(3, 1.0), vec![0.2, -0.4, 0.7]),
            (SymmetricSpaceModel::sphere(4, 2.0), vec![0.2, -0.4, 0.7, 0.1]),
            (SymmetricSpaceModel::fubini_study(2), vec![0.3, -0.2, 0.5, 0.4]),
        ] {
            let c = model.einstein_constant().unwrap();
            let ric = model.ricci_at(&p).unwrap();
            let g = model.metric_at(&p).unwrap();
            assert!((ric - g * c).amax() < 1e-10, "{}", model.label());
        }
    }

    #[test]
    fn chart_window_rejects_far_points() {
        let s3 = SymmetricSpaceModel::sphere(3, 1.0);
        assert!(matches!(s3.metric_at(&[1e4, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(s3.metric_at(&[0.0, 0.0]), Err(Error::Input(_))));
        let b = SymmetricSpaceModel::berger(0.8).unwrap();
        assert!(b.metric_at(&[0.0, 0.1, 0.2]).is_err());
    }

    #[test]
    fn parse_models() {
        assert_eq!(SymmetricSpaceModel::parse("s3").unwrap().dim(), 3);
        assert_eq!(SymmetricSpaceModel::parse("cp2").unwrap().dim(), 4);
        assert_eq!(SymmetricSpaceModel::parse("euclid:4").unwrap().dim(), 4);
        assert_eq!(SymmetricSpaceModel::parse("berger:r=0.9").unwrap().kind, ModelKind::Berger { r: 0.9 });
        assert_eq!(SymmetricSpaceModel::parse("s3:r=2").unwrap().kind, ModelKind::Sphere { n: 3, radius: 2.0 });
        for bad in ["", "s", "cp", "berger", "berger:r=2", "euclid", "q3", "s3:x=1", "cp9"] {
            assert!(SymmetricSpaceModel::parse(bad).is_err(), "{bad}");
        }
    }
}
