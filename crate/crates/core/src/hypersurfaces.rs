//! Parametric surfaces `Σ² → M³` on rectangular parameter grids.
//!
//! Normal orientation: `ν` makes `(∂_0 f, ∂_1 f, ν)` a positively oriented
//! chart frame. With that choice the Clifford torus has principal
//! curvatures `±1` and the lat-long equator has `A ≡ 0`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::space_models::{sphere_project, Christoffel, ModelKind, Riemann, SymmetricSpaceModel};

/// One parameter axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Axis {
    /// `n` nodes `2πi/n` on a circle.
    Periodic { n: usize },
    /// `n` cell-centred nodes `a + (i+½)(b−a)/n` with no-flux ends.
    Interval { n: usize, a: f64, b: f64 },
}

impl Axis {
    pub fn len(&self) -> usize {
        match *self {
            Axis::Periodic { n } | Axis::Interval { n, .. } => n,
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn spacing(&self) -> f64 {
        match *self {
            Axis::Periodic { n } => TAU / n as f64,
            Axis::Interval { n, a, b } => (b - a) / n as f64,
        }
    }
    /// Coordinate of (possibly fractional) node index `t`.
    pub fn coord(&self, t: f64) -> f64 {
        match *self {
            Axis::Periodic { .. } => t * self.spacing(),
            Axis::Interval { a, .. } => a + (t + 0.5) * self.spacing(),
        }
    }
    pub fn is_periodic(&self) -> bool {
        matches!(self, Axis::Periodic { .. })
    }
    /// Total parameter length.
    pub fn length(&self) -> f64 {
        self.spacing() * self.len() as f64
    }
}

/// Tensor-product grid; node `(i, j)` is stored at `i * n1 + j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub axes: [Axis; 2],
}

impl Grid {
    pub fn periodic(n0: usize, n1: usize) -> Self {
        Grid { axes: [Axis::Periodic { n: n0 }, Axis::Periodic { n: n1 }] }
    }

    /// Longitude (periodic) by colatitude (cell-centred on `(0, π)`).
    pub fn lat_long(n_lon: usize, n_lat: usize) -> Self {
        Grid { axes: [Axis::Periodic { n: n_lon }, Axis::Interval { n: n_lat, a: 0.0, b: PI }] }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].len(), self.axes[1].len()]
    }
    pub fn len(&self) -> usize {
        self.axes[0].len() * self.axes[1].len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.axes[1].len() + j
    }
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        let n1 = self.axes[1].len();
        (idx / n1, idx % n1)
    }
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        [self.axes[0].coord(i as f64), self.axes[1].coord(j as f64)]
    }
    pub fn spacing(&self) -> [f64; 2] {
        [self.axes[0].spacing(), self.axes[1].spacing()]
    }
    pub fn is_torus(&self) -> bool {
        self.axes[0].is_periodic() && self.axes[1].is_periodic()
    }
    /// Neighbour index along `axis` with offset `d`; `None` past an interval end.
    pub fn shift(&self, idx: usize, axis: usize, d: isize) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let (k, n) = if axis == 0 { (i, self.axes[0].len()) } else { (j, self.axes[1].len()) };
        let t = k as isize + d;
        let k2 = if self.axes[axis].is_periodic() {
            t.rem_euclid(n as isize) as usize
        } else if t < 0 || t >= n as isize {
            return None;
        } else {
            t as usize
        };
        Some(if axis == 0 { self.index(k2, j) } else { self.index(i, k2) })
    }
}

/// Analytic classification of an immersion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyticTag {
    CliffordTorus,
    Equator(usize),
    Custom,
}

type ChartMap = Arc<dyn Fn(&[f64; 2]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `r/√2 (cos u, sin u, cos v, sin v)` in `S³(r)`.
    Clifford,
    /// `r (sin v cos u, sin v sin u, cos v, 0)` in `S³(r)`.
    Equator,
    /// Clifford torus pushed along its normal by `eps·exp(cos u + cos v − 2)`.
    Perturbed { eps: f64 },
    Custom(ChartMap),
}

/// How chart derivatives of the immersion are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Derivatives {
    Exact,
    /// Fourth-order centred differences with the given step.
    FiniteDifference(f64),
}

#[derive(Clone)]
pub struct ParametricImmersion {
    pub tag: AnalyticTag,
    shape: Shape,
    pub ambient: Arc<SymmetricSpaceModel>,
    pub grid: Grid,
    pub derivatives: Derivatives,
    /// Parameter-space offset added before evaluation.
    pub origin: [f64; 2],
}

impl std::fmt::Debug for ParametricImmersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricImmersion")
            .field("tag", &self.tag)
            .field("ambient", &self.ambient.label())
            .field("grid", &self.grid)
            .field("derivatives", &self.derivatives)
            .finish()
    }
}

/// Chart point of the immersion with first and second parameter derivatives.
#[derive(Clone, Debug)]
pub struct LocalMap {
    pub p: Vec<f64>,
    pub fu: [Vec<f64>; 2],
    pub fuu: [[Vec<f64>; 2]; 2],
}

fn sphere_radius(model: &SymmetricSpaceModel) -> Result<f64> {
    match model.kind {
        ModelKind::Sphere { n: 3, radius } => Ok(radius),
        _ => Err(Error::Input(format!("this surface lives in a 3-sphere, not {}", model.label()))),
    }
}

fn clifford_point<S: Scalar>(r: f64, u: &[S]) -> Vec<S> {
    let c = r / 2f64.sqrt();
    vec![u[0].cos() * c, u[0].sin() * c, u[1].cos() * c, u[1].sin() * c]
}

fn shape_chart<S: Scalar>(shape: &Shape, r: f64, u: &[S]) -> Vec<S> {
    match shape {
        Shape::Clifford => sphere_project(r, &clifford_point(r, u)),
        Shape::Equator => {
            let (sv, cv) = (u[1].sin(), u[1].cos());
            let x = vec![sv * u[0].cos() * r, sv * u[0].sin() * r, cv * r, S::zero()];
            sphere_project(r, &x)
        }
        Shape::Perturbed { eps } => {
            let x = clifford_point(r, u);
            let c = 1.0 / 2f64.sqrt();
            let nu = [u[0].cos() * c, u[0].sin() * c, -(u[1].cos() * c), -(u[1].sin() * c)];
            let bump = (u[0].cos() + u[1].cos() - 2.0).exp() * (*eps * r);
            let moved: Vec<S> = (0..4).map(|k| x[k] + bump * nu[k]).collect();
            let mut n2 = S::zero();
            for &v in &moved {
                n2 = n2 + v * v;
            }
            let s = S::cst(r) / n2.sqrt();
            let on: Vec<S> = moved.iter().map(|&v| v * s).collect();
            sphere_project(r, &on)
        }
        Shape::Custom(_) => unreachable!("custom shapes are evaluated on floats"),
    }
}

impl ParametricImmersion {
    fn build(tag: AnalyticTag, shape: Shape, ambient: Arc<SymmetricSpaceModel>, grid: Grid, derivatives: Derivatives) -> Result<Self> {
        if ambient.dim() != 3 {
            return Err(Error::Input("surfaces are supported in 3-dimensional ambients only".into()));
        }
        if grid.axes.iter().any(|a| a.len() < 8) {
            return Err(Error::Input("grid resolution must be at least 8 per axis".into()));
        }
        Ok(ParametricImmersion { tag, shape, ambient, grid, derivatives, origin: [0.0, 0.0] })
    }

    /// Clifford torus in `S³(r)` on an `n0 × n1` periodic grid.
    pub fn clifford(ambient: Arc<SymmetricSpaceModel>, n0: usize, n1: usize) -> Result<Self> {
        sphere_radius(&ambient)?;
        Self::build(AnalyticTag::CliffordTorus, Shape::Clifford, ambient, Grid::periodic(n0, n1), Derivatives::Exact)
    }

    /// Totally geodesic `S² ⊂ S³(r)` on a longitude × colatitude grid.
    pub fn equator(ambient: Arc<SymmetricSpaceModel>, n_lon: usize, n_lat: usize) -> Result<Self> {
        sphere_radius(&ambient)?;
        Self::build(AnalyticTag::Equator(3), Shape::Equator, ambient, Grid::lat_long(n_lon, n_lat), Derivatives::Exact)
    }

    /// Non-minimal bump deformation of the Clifford torus.
    pub fn perturbed_clifford(ambient: Arc<SymmetricSpaceModel>, n0: usize, n1: usize, eps: f64, derivatives: Derivatives) -> Result<Self> {
        sphere_radius(&ambient)?;
        Self::build(AnalyticTag::Custom, Shape::Perturbed { eps }, ambient, Grid::periodic(n0, n1), derivatives)
    }

    /// Arbitrary chart map; derivatives by fourth-order differences.
    pub fn custom(ambient: Arc<SymmetricSpaceModel>, grid: Grid, f: ChartMap, step: f64) -> Result<Self> {
        Self::build(AnalyticTag::Custom, Shape::Custom(f), ambient, grid, Derivatives::FiniteDifference(step))
    }

    /// Parses `clifford`, `equator:n=3`, `perturbed:eps=0.05`.
    pub fn parse(spec: &str, ambient: Arc<SymmetricSpaceModel>, n: usize) -> Result<Self> {
        match spec {
            "clifford" => Self::clifford(ambient, n, n),
            "equator" | "equator:n=3" => Self::equator(ambient, 2 * n, n),
            s if s.starts_with("equator:n=") => Err(Error::Input(format!(
                "'{s}': only the 2-sphere equator (n=3) is discretized"
            ))),
            s if s.starts_with("perturbed") => {
                let eps = match s.strip_prefix("perturbed:eps=") {
                    Some(v) => v.parse::<f64>().map_err(|_| Error::Input(format!("bad immersion '{s}'")))?,
                    None if s == "perturbed" => 0.05,
                    None => return Err(Error::Input(format!("bad immersion '{s}'"))),
                };
                Self::perturbed_clifford(ambient, n, n, eps, Derivatives::FiniteDifference(1e-3))
            }
            _ => Err(Error::Input(format!("unknown immersion '{spec}'"))),
        }
    }

    /// Same surface on another grid of the same kind.
    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        let mut out = self.clone();
        if grid.axes.iter().any(|a| a.len() < 8) {
            return Err(Error::Input("grid resolution must be at least 8 per axis".into()));
        }
        out.grid = grid;
        Ok(out)
    }

    /// Same surface with the parameter origin shifted.
    pub fn shifted(&self, origin: [f64; 2]) -> Self {
        let mut out = self.clone();
        out.origin = origin;
        out
    }

    /// Chart point at parameter `u` (origin applied).
    pub fn chart_point(&self, u: &[f64; 2]) -> Vec<f64> {
        let w = [u[0] + self.origin[0], u[1] + self.origin[1]];
        match &self.shape {
            Shape::Custom(f) => f(&w),
            s => shape_chart(s, self.radius(), &w),
        }
    }

    fn radius(&self) -> f64 {
        sphere_radius(&self.ambient).unwrap_or(1.0)
    }

    /// Generic evaluation for the closed-form shapes.
    pub fn chart_point_generic<S: Scalar>(&self, u: &[S; 2]) -> Option<Vec<S>> {
        let w = [u[0] + self.origin[0], u[1] + self.origin[1]];
        match &self.shape {
            Shape::Custom(_) => None,
            s => Some(shape_chart(s, self.radius(), &w)),
        }
    }

    /// Point, first and second parameter derivatives at `u`.
    pub fn local(&self, u: &[f64; 2]) -> LocalMap {
        match (&self.shape, self.derivatives) {
            (Shape::Custom(_), _) | (_, Derivatives::FiniteDifference(_)) => {
                let h = match self.derivatives {
                    Derivatives::FiniteDifference(h) => h,
                    Derivatives::Exact => 1e-3,
                };
                self.local_fd(u, h)
            }
            _ => {
                let uj = [Jet::variable(u[0], 0), Jet::variable(u[1], 1)];
                let f = self.chart_point_generic(&uj).expect("closed-form shape");
                let p = f.iter().map(|j| j.v).collect();
                let fu = [f.iter().map(|j| j.g[0]).collect(), f.iter().map(|j| j.g[1]).collect()];
                let fuu = [
                    [f.iter().map(|j| j.h[0][0]).collect(), f.iter().map(|j| j.h[0][1]).collect()],
                    [f.iter().map(|j| j.h[1][0]).collect(), f.iter().map(|j| j.h[1][1]).collect()],
                ];
                LocalMap { p, fu, fuu }
            }
        }
    }

    fn local_fd(&self, u: &[f64; 2], h: f64) -> LocalMap {
        let f = |a: f64, b: f64| self.chart_point(&[u[0] + a, u[1] + b]);
        let p = f(0.0, 0.0);
        let n = p.len();
        let w1 = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        let w2 = [(-2.0, -1.0), (-1.0, 16.0), (0.0, -30.0), (1.0, 16.0), (2.0, -1.0)];
        let mut fu = [vec![0.0; n], vec![0.0; n]];
        let mut fuu = [[vec![0.0; n], vec![0.0; n]], [vec![0.0; n], vec![0.0; n]]];
        for (s, w) in w1 {
            let a = f(s * h, 0.0);
            let b = f(0.0, s * h);
            for k in 0..n {
                fu[0][k] += w * a[k] / (12.0 * h);
                fu[1][k] += w * b[k] / (12.0 * h);
            }
        }
        for (s, w) in w2 {
            let a = if s == 0.0 { p.clone() } else { f(s * h, 0.0) };
            let b = if s == 0.0 { p.clone() } else { f(0.0, s * h) };
            for k in 0..n {
                fuu[0][0][k] += w * a[k] / (12.0 * h * h);
                fuu[1][1][k] += w * b[k] / (12.0 * h * h);
            }
        }
        for (s, ws) in w1 {
            for (t, wt) in w1 {
                let c = f(s * h, t * h);
                for k in 0..n {
                    fuu[0][1][k] += ws * wt * c[k] / (144.0 * h * h);
                }
            }
        }
        fuu[1][0] = fuu[0][1].clone();
        LocalMap { p, fu, fuu }
    }

    /// Induced metric, its inverse and `√det` at `u` (no curvature work).
    pub fn induced_metric(&self, u: &[f64; 2]) -> Result<(Matrix2<f64>, Matrix2<f64>, f64)> {
        let loc = self.local(u);
        let g = self.ambient.metric_at(&loc.p)?;
        let h = induced(&g, &loc.fu);
        let det = h.determinant();
        if !(det > 0.0) {
            return Err(Error::Geometry(format!("degenerate induced metric at {u:?}")));
        }
        Ok((h, h.try_inverse().expect("det > 0"), det.sqrt()))
    }

    /// Full pointwise geometry at parameter `u`.
    pub fn geometry_at(&self, u: &[f64; 2]) -> Result<PointGeometry> {
        let loc = self.local(u);
        PointGeometry::from_local(&self.ambient, *u, loc)
    }
}

fn induced(g: &DMatrix<f64>, fu: &[Vec<f64>; 2]) -> Matrix2<f64> {
    let a = DVector::from_column_slice(&fu[0]);
    let b = DVector::from_column_slice(&fu[1]);
    let ga = g * &a;
    let gb = g * &b;
    Matrix2::new(a.dot(&ga), a.dot(&gb), b.dot(&ga), b.dot(&gb))
}

/// Everything the discrete operators and trace formulas need at one node.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub u: [f64; 2],
    pub local: LocalMap,
    /// Ambient metric at the image point.
    pub g: DMatrix<f64>,
    pub gamma: Christoffel,
    pub riemann: Riemann,
    pub h: Matrix2<f64>,
    pub h_inv: Matrix2<f64>,
    pub sqrt_det: f64,
    /// `∂_μ h` for `μ = 0, 1`.
    pub dh: [Matrix2<f64>; 2],
    /// Induced Christoffel symbols `Γ^k_{ij}` at `[k][i][j]`.
    pub induced_gamma: [[[f64; 2]; 2]; 2],
    pub nu: DVector<f64>,
    pub a: Matrix2<f64>,
    pub shape: Matrix2<f64>,
    pub mean: f64,
    pub a_norm2: f64,
    /// `Ric^M(ν, ν)`.
    pub ric_nu: f64,
}

impl PointGeometry {
    pub fn from_local(model: &SymmetricSpaceModel, u: [f64; 2], local: LocalMap) -> Result<Self> {
        let n = model.dim();
        if n != 3 {
            return Err(Error::Input("surfaces need a 3-dimensional ambient".into()));
        }
        let pj = Jet::seed(&local.p, 0);
        model.check_point(&local.p)?;
        let gj = model.metric_generic(&pj);
        let g = DMatrix::from_fn(n, n, |a, b| gj[a * n + b].v);
        let dg: Vec<DMatrix<f64>> = (0..n).map(|c| DMatrix::from_fn(n, n, |a, b| gj[a * n + b].g[c])).collect();
        let gamma = model.christoffel_at(&local.p)?;
        let riemann = model.riemann_at(&local.p)?;
        let h = induced(&g, &local.fu);
        let det = h.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Geometry(format!("degenerate induced metric at u = {u:?}")));
        }
        let h_inv = h.try_inverse().expect("positive determinant");
        // unit normal from the covector annihilating both tangents
        let (a0, a1) = (&local.fu[0], &local.fu[1]);
        let cov = DVector::from_vec(vec![
            a0[1] * a1[2] - a0[2] * a1[1],
            a0[2] * a1[0] - a0[0] * a1[2],
            a0[0] * a1[1] - a0[1] * a1[0],
        ]);
        let ginv = g.clone().try_inverse().ok_or_else(|| Error::Geometry("singular ambient metric".into()))?;
        let raw = &ginv * &cov;
        let nrm = raw.dot(&cov).sqrt();
        let nu = raw / nrm;
        let gnu = &g * &nu;
        let mut a = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let corr = gamma.contract(&local.fu[i], &local.fu[j]);
                let mut s = 0.0;
                for k in 0..n {
                    s += (local.fuu[i][j][k] + corr[k]) * gnu[k];
                }
                a[(i, j)] = s;
            }
        }
        a = (a + a.transpose()) * 0.5;
        let shape = h_inv * a;
        let mean = shape.trace();
        let a_norm2 = (shape * shape).trace();
        // ∂_μ h_ab
        let mut dh = [Matrix2::zeros(); 2];
        for (mu, dhm) in dh.iter_mut().enumerate() {
            let mut dgm = DMatrix::zeros(n, n);
            for c in 0..n {
                dgm += &dg[c] * local.fu[mu][c];
            }
            for i in 0..2 {
                for j in 0..2 {
                    let fi = DVector::from_column_slice(&local.fu[i]);
                    let fj = DVector::from_column_slice(&local.fu[j]);
                    let fim = DVector::from_column_slice(&local.fuu[i][mu]);
                    let fjm = DVector::from_column_slice(&local.fuu[j][mu]);
                    dhm[(i, j)] = fim.dot(&(&g * &fj)) + fi.dot(&(&g * &fjm)) + fi.dot(&(&dgm * &fj));
                }
            }
        }
        let mut induced_gamma = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += 0.5 * h_inv[(k, l)] * (dh[i][(l, j)] + dh[j][(l, i)] - dh[l][(i, j)]);
                    }
                    induced_gamma[k][i][j] = s;
                }
            }
        }
        let ric = riemann.ricci();
        let ric_nu = nu.dot(&(&ric * &nu));
        Ok(PointGeometry {
            u,
            local,
            g,
            gamma,
            riemann,
            h,
            h_inv,
            sqrt_det: det.sqrt(),
            dh,
            induced_gamma,
            nu,
            a,
            shape,
            mean,
            a_norm2,
            ric_nu,
        })
    }

    /// Push-forward of a parameter vector to a chart vector.
    pub fn push(&self, v: &Vector2<f64>) -> DVector<f64> {
        let n = self.local.p.len();
        DVector::from_fn(n, |k, _| self.local.fu[0][k] * v[0] + self.local.fu[1][k] * v[1])
    }

    /// Ambient inner product of chart vectors.
    pub fn ip(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.g * y))
    }

    /// Orthogonal projection of a chart vector onto `T_pΣ`, in parameter components.
    pub fn tangential(&self, x: &DVector<f64>) -> Vector2<f64> {
        let gx = &self.g * x;
        let c = Vector2::new(
            DVector::from_column_slice(&self.local.fu[0]).dot(&gx),
            DVector::from_column_slice(&self.local.fu[1]).dot(&gx),
        );
        self.h_inv * c
    }

    /// Induced-metric orthonormal frame `e_0, e_1` in parameter components.
    pub fn orthonormal_frame(&self) -> [Vector2<f64>; 2] {
        let e0 = Vector2::new(1.0 / self.h[(0, 0)].sqrt(), 0.0);
        let mut e1 = Vector2::new(0.0, 1.0);
        let c = (e0.transpose() * self.h * e1)[(0, 0)];
        e1 -= e0 * c;
        let n1 = (e1.transpose() * self.h * e1)[(0, 0)].sqrt();
        [e0, e1 / n1]
    }

    /// Principal curvatures ascending.
    pub fn principal_curvatures(&self) -> [f64; 2] {
        let t = self.shape.trace();
        let d = self.shape.determinant();
        let disc = (t * t / 4.0 - d).max(0.0).sqrt();
        [t / 2.0 - disc, t / 2.0 + disc]
    }

    /// Largest `|S_ν − h⁻¹A|`; zero by construction up to rounding.
    pub fn shape_residual(&self) -> f64 {
        (self.shape - self.h_inv * self.a).amax()
    }

    /// `|ν| − 1` and `⟨ν, ∂_μ f⟩`, whichever is worse.
    pub fn normal_residual(&self) -> f64 {
        let mut worst = (self.ip(&self.nu, &self.nu) - 1.0).abs();
        for mu in 0..2 {
            let t = DVector::from_column_slice(&self.local.fu[mu]);
            worst = worst.max(self.ip(&self.nu, &t).abs());
        }
        worst
    }
}

/// Pointwise geometry over every grid node.
#[derive(Clone, Debug)]
pub struct ExtrinsicData {
    pub grid: Grid,
    pub nodes: Vec<PointGeometry>,
}

impl ExtrinsicData {
    pub fn normals(&self) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|n| n.nu.clone()).collect()
    }
    pub fn second_fundamental_forms(&self) -> Vec<Matrix2<f64>> {
        self.nodes.iter().map(|n| n.a).collect()
    }
    pub fn shape_operators(&self) -> Vec<Matrix2<f64>> {
        self.nodes.iter().map(|n| n.shape).collect()
    }
    pub fn a_norm2(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.a_norm2).collect()
    }
    /// Area weights `√det h ΔuΔv`.
    pub fn weights(&self) -> Vec<f64> {
        let [d0, d1] = self.grid.spacing();
        self.nodes.iter().map(|n| n.sqrt_det * d0 * d1).collect()
    }
    pub fn area(&self) -> f64 {
        self.weights().iter().sum()
    }
}

pub fn extrinsic_data(imm: &ParametricImmersion) -> Result<ExtrinsicData> {
    if imm.grid.axes.iter().any(|a| a.len() < 8) {
        return Err(Error::Input("grid resolution must be at least 8 per axis".into()));
    }
    let nodes = (0..imm.grid.len())
        .map(|idx| imm.geometry_at(&imm.grid.node(idx)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtrinsicData { grid: imm.grid, nodes })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimalityReport {
    pub max_abs_mean: f64,
    pub node: usize,
}

pub fn verify_minimal(data: &ExtrinsicData) -> MinimalityReport {
    let mut rep = MinimalityReport { max_abs_mean: 0.0, node: 0 };
    for (i, n) in data.nodes.iter().enumerate() {
        if n.mean.abs() > rep.max_abs_mean {
            rep = MinimalityReport { max_abs_mean: n.mean.abs(), node: i };
        }
    }
    rep
}

/// Codazzi discrepancy `⟨R(X,Y)Z, ν⟩ − [(∇_X A)(Y,Z) − (∇_Y A)(X,Z)]` at a
/// node, with `∂A` from second-order centred differences on the grid.
pub fn codazzi_residual(
    imm: &ParametricImmersion,
    data: &ExtrinsicData,
    node: usize,
    x: &Vector2<f64>,
    y: &Vector2<f64>,
    z: &Vector2<f64>,
) -> Result<f64> {
    if matches!(imm.ambient.kind, ModelKind::Euclidean { .. }) {
        return Err(Error::NotApplicable("Codazzi check is defined for curved ambient models".into()));
    }
    let grid = &data.grid;
    let g = &data.nodes[node];
    let sp = grid.spacing();
    let mut da = [Matrix2::zeros(); 2];
    for (k, dak) in da.iter_mut().enumerate() {
        let (Some(p), Some(m)) = (grid.shift(node, k, 1), grid.shift(node, k, -1)) else {
            return Err(Error::Input("node lacks an interior stencil".into()));
        };
        *dak = (data.nodes[p].a - data.nodes[m].a) / (2.0 * sp[k]);
    }
    let gam = &g.induced_gamma;
    // (∇_k A)_{ij}
    let nabla_a = |k: usize, i: usize, j: usize| -> f64 {
        let mut s = da[k][(i, j)];
        for l in 0..2 {
            s -= gam[l][k][i] * g.a[(l, j)] + gam[l][k][j] * g.a[(i, l)];
        }
        s
    };
    let mut rhs = 0.0;
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                rhs += nabla_a(k, i, j) * (x[k] * y[i] - y[k] * x[i]) * z[j];
            }
        }
    }
    let (fx, fy, fz) = (g.push(x), g.push(y), g.push(z));
    let r = g.riemann.apply(fx.as_slice(), fy.as_slice(), fz.as_slice());
    let lhs = g.ip(&DVector::from_vec(r), &g.nu);
    Ok((lhs - rhs).abs())
}

/// Gauss-equation residual `|K_Σ − K_M(∂_0,∂_1) − det A / det h|` at `u`.
///
/// `K_Σ` comes from the induced metric alone: Christoffel symbols at nearby
/// points, differentiated with a fourth-order stencil of step `step`.
pub fn gauss_residual(imm: &ParametricImmersion, u: &[f64; 2], step: f64) -> Result<f64> {
    let k_int = intrinsic_curvature(imm, u, step)?;
    let g = imm.geometry_at(u)?;
    let f0 = DVector::from_column_slice(&g.local.fu[0]);
    let f1 = DVector::from_column_slice(&g.local.fu[1]);
    let k_amb = imm.ambient.sectional(&g.local.p, f0.as_slice(), f1.as_slice())?;
    Ok((k_int - k_amb - g.a.determinant() / g.h.determinant()).abs())
}

/// Gaussian curvature of the induced metric.
pub fn intrinsic_curvature(imm: &ParametricImmersion, u: &[f64; 2], step: f64) -> Result<f64> {
    let gam_at = |a: f64, b: f64| -> Result<[[[f64; 2]; 2]; 2]> {
        Ok(imm.geometry_at(&[u[0] + a, u[1] + b])?.induced_gamma)
    };
    let w = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    let mut d0 = [[[0.0; 2]; 2]; 2];
    let mut d1 = [[[0.0; 2]; 2]; 2];
    for (s, c) in w {
        let ga = gam_at(s * step, 0.0)?;
        let gb = gam_at(0.0, s * step)?;
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    d0[k][i][j] += c * ga[k][i][j] / (12.0 * step);
                    d1[k][i][j] += c * gb[k][i][j] / (12.0 * step);
                }
            }
        }
    }
    let g = imm.geometry_at(u)?;
    let gam = g.induced_gamma;
    let dgam = [d0, d1];
    // R^l_{011} and R_{0110} = h_{0l} R^l_{011}
    let mut r = 0.0;
    for l in 0..2 {
        let mut rl = dgam[0][l][1][1] - dgam[1][l][0][1];
        for m in 0..2 {
            rl += gam[m][1][1] * gam[l][0][m] - gam[m][0][1] * gam[l][1][m];
        }
        r += g.h[(0, l)] * rl;
    }
    Ok(r / g.h.determinant())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_and_shifts() {
        let g = Grid::lat_long(16, 8);
        assert_eq!(g.len(), 128);
        let idx = g.index(0, 7);
        assert_eq!(g.coords(idx), (0, 7));
        assert_eq!(g.shift(idx, 1, 1), None);
        assert_eq!(g.shift(idx, 0, -1), Some(g.index(15, 7)));
        assert!((g.node(g.index(0, 0))[1] - PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn resolution_below_eight_rejected() {
        let s3 = Arc::new(SymmetricSpaceModel::sphere(3, 1.0));
        assert!(ParametricImmersion::clifford(s3.clone(), 4, 16).is_err());
        assert!(ParametricImmersion::clifford(Arc::new(SymmetricSpaceModel::sphere(4, 1.0)), 16, 16).is_err());
    }

    #[test]
    fn clifford_principal_curvatures() {
        for r in [1.0, 2.0] {
            let s3 = Arc::new(SymmetricSpaceModel::sphere(3, r));
            let imm = ParametricImmersion::clifford(s3, 16, 16).unwrap();
            let g = imm.geometry_at(&[0.4, 1.9]).unwrap();
            let k = g.principal_curvatures();
            assert!((k[0] + 1.0 / r).abs() < 1e-10 && (k[1] - 1.0 / r).abs() < 1e-10, "{k:?}");
            assert!(g.normal_residual() < 1e-12);
            assert!((g.ric_nu - 2.0 / (r * r)).abs() < 1e-10);
            assert!((g.sqrt_det - r * r / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equator_totally_geodesic() {
        let s3 = Arc::new(SymmetricSpaceModel::sphere(3, 1.0));
        let imm = ParametricImmersion::equator(s3, 16, 8).unwrap();
        let d = extrinsic_data(&imm).unwrap();
        assert!(d.nodes.iter().all(|n| n.a.amax() < 1e-12));
    }

    #[test]
    fn exact_and_difference_derivatives_agree() {
        let s3 = Arc::new(SymmetricSpaceModel::sphere(3, 1.0));
        let a = ParametricImmersion::perturbed_clifford(s3.clone(), 16, 16, 0.1, Derivatives::Exact).unwrap();
        let b = ParametricImmersion::perturbed_clifford(s3, 16, 16, 0.1, Derivatives::FiniteDifference(1e-3)).unwrap();
        let u = [0.3, -0.2];
        let (ga, gb) = (a.geometry_at(&u).unwrap(), b.geometry_at(&u).unwrap());
        assert!((ga.a - gb.a).amax() < 1e-8);
        assert!(ga.mean.abs() > 1e-3);
    }
}
