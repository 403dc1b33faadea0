//! Named experiment pipelines.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::Deserialize;
use serde_json::{json, Value};
use symindex::hodge::{harmonic_basis, DiscreteOneForm};
use symindex::hypersurfaces::{extrinsic_data, ParametricImmersion};
use symindex::simdiag::{self, CommutingPair, Patch};
use symindex::space_models::{ModelKind, SymmetricSpaceModel};
use symindex::spectral::{jacobi_operator, spectrum, SpectrumReport, Stencil};
use symindex::trace_lab::{
    berger_scan, berger_threshold, bound_check, index_bound_constant, index_nullity_constant, Embedding, Family, TraceContext,
};

use crate::config::{ExperimentConfig, Verb};
use crate::report::{Check, Report, Table};
use crate::CliError;

/// Verbs with a scalar error metric that `convergence` can refine.
pub const CONVERGENCE_VERBS: [Verb; 6] =
    [Verb::CliffordS3, Verb::EquatorSn, Verb::TraceZero, Verb::TraceFormula1, Verb::TraceFormula2, Verb::EuclidCompare];

const EIGEN_REL_TOL: f64 = 0.02;
const ZERO_TRACE_TOL: f64 = 1e-3;
const MIN_ORDER: f64 = 1.8;
const CROSS_IDENTITY_TOL: f64 = 1e-6;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    match cfg.experiment {
        Verb::CliffordS3 => clifford_s3(cfg),
        Verb::EquatorSn => equator_sn(cfg),
        Verb::TraceZero => trace_zero(cfg),
        Verb::TraceFormula1 => trace_formula(cfg, 1),
        Verb::TraceFormula2 => trace_formula(cfg, 2),
        Verb::BergerScan => berger_scan_verb(cfg),
        Verb::BergerThreshold => berger_threshold_verb(cfg),
        Verb::EuclidCompare => euclid_compare(cfg),
        Verb::Simdiag => simdiag_verb(cfg),
        Verb::BoundCheck => bound_check_verb(cfg),
        Verb::Convergence => convergence(cfg),
    }
}

/// The ambient 3-sphere and its radius.
fn three_sphere(cfg: &ExperimentConfig) -> Result<(Arc<SymmetricSpaceModel>, f64), CliError> {
    let model = SymmetricSpaceModel::parse(&cfg.model).map_err(|e| CliError::Usage(e.to_string()))?;
    match model.kind {
        ModelKind::Sphere { n: 3, radius } => Ok((Arc::new(model), radius)),
        _ => Err(CliError::Usage(format!("{} runs on a 3-sphere model, got '{}'", cfg.experiment.name(), cfg.model))),
    }
}

fn require_immersion(cfg: &ExperimentConfig, expected: &str) -> Result<(), CliError> {
    if cfg.immersion != expected {
        return Err(CliError::Usage(format!("{} needs immersion '{expected}', got '{}'", cfg.experiment.name(), cfg.immersion)));
    }
    Ok(())
}

/// Jacobi eigenvalues of the Clifford torus in `S³(r)`: `(2(m²+k²) − 4)/r²`.
pub fn torus_oracle(count: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (-8i64..=8)
        .flat_map(|m| (-8i64..=8).map(move |k| (2 * (m * m + k * k) - 4) as f64 / (r * r)))
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.truncate(count);
    v
}

/// Jacobi eigenvalues of the equatorial `S² ⊂ S³(r)`: `(l(l+1) − 2)/r²`
/// with multiplicity `2l + 1`.
pub fn sphere_oracle(count: usize, r: f64) -> Vec<f64> {
    (0..)
        .flat_map(|l: usize| std::iter::repeat(((l * (l + 1)) as f64 - 2.0) / (r * r)).take(2 * l + 1))
        .take(count)
        .collect()
}

fn max_rel_error(computed: &[f64], oracle: &[f64], zero_scale: f64) -> f64 {
    computed
        .iter()
        .zip(oracle)
        .map(|(c, e)| (c - e).abs() / if *e == 0.0 { zero_scale } else { e.abs() })
        .fold(0.0, f64::max)
}

fn spectrum_json(rep: &SpectrumReport, oracle: &[f64]) -> Value {
    json!({
        "grid": rep.grid,
        "eigenvalues": rep.eigenvalues,
        "oracle": oracle,
        "index": rep.index,
        "nullity": rep.nullity,
        "tol_zero": rep.tol_zero,
        "solver": rep.solver,
        "saturated": rep.saturated,
    })
}

/// `dθ_i`: harmonic forms with period `2π` on cycle `i`.
fn dtheta(imm: &ParametricImmersion) -> Result<Vec<DiscreteOneForm>, CliError> {
    let data = extrinsic_data(imm)?;
    let (forms, _) = harmonic_basis(&data)?;
    Ok(forms.into_iter().map(|f| f.scaled(2.0 * PI)).collect())
}

fn order(errs: &[f64], res: &[usize]) -> Option<f64> {
    let (e0, e1) = (errs.first()?, errs.last()?);
    let (n0, n1) = (*res.first()? as f64, *res.last()? as f64);
    (res.len() >= 2 && *e0 > 0.0 && *e1 > 0.0).then(|| (e0 / e1).ln() / (n1 / n0).ln())
}

fn clifford_spectrum(model: &Arc<SymmetricSpaceModel>, n: usize, tol: Option<f64>) -> Result<SpectrumReport, CliError> {
    let imm = ParametricImmersion::clifford(model.clone(), n, n)?;
    Ok(spectrum(&jacobi_operator(&imm)?, 12, tol)?)
}

fn relative_zero_trace(model: &Arc<SymmetricSpaceModel>, n: usize) -> Result<f64, CliError> {
    let imm = ParametricImmersion::clifford(model.clone(), n, n)?;
    let ctx = TraceContext::new(&imm, Embedding::identity(model.clone())?, Stencil::Fourth)?;
    let mut worst: f64 = 0.0;
    for (k, w) in dtheta(&imm)?.iter().enumerate() {
        let rep = ctx.assemble(Family::PhiWedge, w, k)?;
        worst = worst.max(rep.trace_q.abs() / rep.diag_abs);
    }
    Ok(worst)
}

fn clifford_s3(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    require_immersion(cfg, "clifford")?;
    let (model, r) = three_sphere(cfg)?;
    let oracle = torus_oracle(12, r);
    // zero modes: m² + k² = 2
    let analytic_nullity = oracle.iter().filter(|e| **e == 0.0).count();
    let mut checks = Vec::new();
    let mut grids = Vec::new();
    let mut table = Table::new(&["grid", "index", "nullity", "lambda_1", "lambda_2", "max_rel_error_5", "tol_zero"]);
    let mut last = None;
    for &n in &cfg.resolutions {
        let rep = clifford_spectrum(&model, n, cfg.tol_zero)?;
        let err = max_rel_error(&rep.eigenvalues[..5], &oracle[..5], 1.0);
        checks.push(Check::equal(format!("index@{n}"), rep.index as f64, 5.0));
        checks.push(Check::equal(format!("nullity@{n}"), rep.nullity as f64, analytic_nullity as f64));
        checks.push(Check::at_most(format!("eigen_rel_error@{n}"), err, EIGEN_REL_TOL));
        table.push(vec![
            json!(n),
            json!(rep.index),
            json!(rep.nullity),
            json!(rep.eigenvalues[0]),
            json!(rep.eigenvalues[1]),
            json!(err),
            json!(rep.tol_zero),
        ]);
        grids.push(spectrum_json(&rep, &oracle));
        last = Some(rep);
    }
    let finest = *cfg.resolutions.last().expect("validated non-empty");
    let zero = relative_zero_trace(&model, finest)?;
    checks.push(Check::at_most(format!("relative_zero_trace@{finest}"), zero, ZERO_TRACE_TOL));
    let rep = last.expect("at least one grid");
    let imm = ParametricImmersion::clifford(model.clone(), finest, finest)?;
    let (_, b1) = harmonic_basis(&extrinsic_data(&imm)?)?;
    let c = index_bound_constant(6, 3)?;
    let cn = index_nullity_constant(6)?;
    let pass_i = bound_check(rep.index, b1, c);
    let pass_n = bound_check(rep.index + rep.nullity, b1, cn);
    checks.push(Check::equal("index_bound", pass_i as u8 as f64, 1.0));
    checks.push(Check::equal("index_plus_nullity_bound", pass_n as u8 as f64, 1.0));
    let results = json!({
        "analytic_nullity": analytic_nullity,
        "grids": grids,
        "relative_zero_trace": zero,
        "first_betti": b1,
        "bound": {"constant": c.to_string(), "index": rep.index, "rhs": (*c.numer() as f64) / (*c.denom() as f64) * b1 as f64, "pass": pass_i},
        "index_nullity_bound": {"constant": cn.to_string(), "count": rep.index + rep.nullity, "pass": pass_n},
    });
    Ok(Report::new(cfg, checks, results, table))
}

fn equator_sn(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    if cfg.params.n != 3 {
        return Err(CliError::Usage(format!("equator-sn is discretized for n = 3 only, got n = {}", cfg.params.n)));
    }
    require_immersion(cfg, "equator")?;
    let (model, r) = three_sphere(cfg)?;
    let oracle = sphere_oracle(9, r);
    let mut checks = Vec::new();
    let mut grids = Vec::new();
    let mut table = Table::new(&["grid", "index", "nullity", "lambda_1", "max_rel_error_9", "tol_zero"]);
    for &n in &cfg.resolutions {
        let imm = ParametricImmersion::equator(model.clone(), 2 * n, n)?;
        let rep = spectrum(&jacobi_operator(&imm)?, 9, cfg.tol_zero)?;
        let err = max_rel_error(&rep.eigenvalues, &oracle, 1.0 / (r * r));
        checks.push(Check::equal(format!("index@{n}"), rep.index as f64, 1.0));
        checks.push(Check::equal(format!("nullity@{n}"), rep.nullity as f64, 3.0));
        checks.push(Check::at_most(format!("eigen_rel_error@{n}"), err, EIGEN_REL_TOL));
        table.push(vec![json!(format!("{}x{}", 2 * n, n)), json!(rep.index), json!(rep.nullity), json!(rep.eigenvalues[0]), json!(err), json!(rep.tol_zero)]);
        grids.push(spectrum_json(&rep, &oracle));
    }
    Ok(Report::new(cfg, checks, json!({ "n": 3, "grids": grids }), table))
}

fn trace_zero(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    require_immersion(cfg, "clifford")?;
    let (model, _) = three_sphere(cfg)?;
    let mut errs = Vec::new();
    let mut table = Table::new(&["grid", "relative_trace"]);
    for &n in &cfg.resolutions {
        let e = relative_zero_trace(&model, n)?;
        table.push(vec![json!(n), json!(e)]);
        errs.push(e);
    }
    let finest = *cfg.resolutions.last().expect("validated non-empty");
    let mut checks = vec![Check::at_most(format!("relative_zero_trace@{finest}"), *errs.last().expect("non-empty"), ZERO_TRACE_TOL)];
    let p = order(&errs, &cfg.resolutions);
    if let Some(p) = p {
        checks.push(Check::at_least("observed_order", p, MIN_ORDER));
    }
    let results = json!({ "family": "phi_wedge", "relative_trace": errs, "observed_order": p });
    Ok(Report::new(cfg, checks, results, table))
}

struct FormulaRow {
    omega: usize,
    trace: f64,
    rhs: f64,
    residual: f64,
    cross: f64,
    oracle_gap: f64,
}

fn trace_formula_rows(cfg: &ExperimentConfig, which: u8, n: usize) -> Result<Vec<FormulaRow>, CliError> {
    require_immersion(cfg, "clifford")?;
    let (model, embedding, oracle): (_, _, Box<dyn Fn(f64) -> f64>) = if which == 1 {
        let (m, _) = three_sphere(cfg)?;
        let e = Embedding::identity(m.clone())?;
        // Ric(ν,ν) = 2/r² on S³(r) and B ≡ 0
        let r = match m.kind {
            ModelKind::Sphere { radius, .. } => radius,
            _ => unreachable!("checked above"),
        };
        (m, e, Box::new(move |norm2| -2.0 / (r * r) * norm2))
    } else {
        let rho = cfg.params.rho;
        let m = Arc::new(SymmetricSpaceModel::sphere(3, rho.sin()));
        let e = Embedding::latitude(m.clone(), rho)?;
        (m, e, Box::new(move |norm2| -2.0 / rho.tan().powi(2) * norm2))
    };
    let imm = ParametricImmersion::clifford(model, n, n)?;
    let ctx = TraceContext::new(&imm, embedding, Stencil::Fourth)?;
    let family = if which == 1 { Family::PsiG } else { Family::PhiWedge };
    let mut rows = Vec::new();
    for (k, w) in dtheta(&imm)?.iter().enumerate() {
        let rep = ctx.assemble(family, w, k)?;
        let ints = ctx.integrals(w)?;
        let (a, b, closed) = if which == 1 {
            (ints.first_gauss, ints.first_scalar, oracle(ints.norm2))
        } else {
            (ints.second_curvature, ints.second_b_only, oracle(ints.norm2))
        };
        let scale = closed.abs().max(f64::MIN_POSITIVE);
        rows.push(FormulaRow {
            omega: k,
            trace: rep.trace_q,
            rhs: rep.rhs_value,
            residual: rep.relative_residual(),
            cross: (a - b).abs() / scale,
            oracle_gap: (rep.rhs_value - closed).abs() / scale,
        });
    }
    Ok(rows)
}

fn trace_formula(cfg: &ExperimentConfig, which: u8) -> Result<Report, CliError> {
    let mut checks = Vec::new();
    let mut out = Vec::new();
    let mut table = Table::new(&["grid", "omega", "trace", "rhs", "relative_residual", "cross_identity_gap", "closed_form_gap"]);
    let (cross_name, target) = if which == 1 { ("gauss_vs_scalar", "identity") } else { ("curvature_vs_b_only", "latitude") };
    for &n in &cfg.resolutions {
        for row in trace_formula_rows(cfg, which, n)? {
            checks.push(Check::at_most(format!("relative_residual@{n}/omega{}", row.omega), row.residual, cfg.quadrature));
            checks.push(Check::at_most(format!("{cross_name}@{n}/omega{}", row.omega), row.cross, CROSS_IDENTITY_TOL));
            checks.push(Check::at_most(format!("closed_form@{n}/omega{}", row.omega), row.oracle_gap, 1e-8));
            table.push(vec![json!(n), json!(row.omega), json!(row.trace), json!(row.rhs), json!(row.residual), json!(row.cross), json!(row.oracle_gap)]);
            out.push(json!({"grid": n, "omega": row.omega, "trace": row.trace, "rhs": row.rhs, "relative_residual": row.residual}));
        }
    }
    let family = if which == 1 { "psi_g" } else { "phi_wedge" };
    let results = json!({ "family": family, "target": target, "rho": (which == 2).then_some(cfg.params.rho), "rows": out });
    Ok(Report::new(cfg, checks, results, table))
}

fn euclid_rows(cfg: &ExperimentConfig, n: usize) -> Result<Vec<(f64, f64, f64)>, CliError> {
    require_immersion(cfg, "clifford")?;
    let (model, r) = three_sphere(cfg)?;
    let imm = ParametricImmersion::clifford(model.clone(), n, n)?;
    let id = TraceContext::new(&imm, Embedding::identity(model.clone())?, Stencil::Fourth)?;
    let eu = TraceContext::new(&imm, Embedding::euclidean(model)?, Stencil::Fourth)?;
    let exact = -2.0 / (r * r);
    let mut rows = Vec::new();
    for (k, w) in dtheta(&imm)?.iter().enumerate() {
        let hat = eu.assemble(Family::EuclidWedge, w, k)?;
        let tr = id.assemble(Family::PhiWedge, w, k)?;
        let ints = eu.integrals(w)?;
        let beta = (hat.trace_q - tr.trace_q) / ints.norm2;
        let rhs = tr.trace_q + ints.second_b_only;
        rows.push((beta, (beta - exact).abs() / exact.abs(), (hat.trace_q - rhs).abs() / rhs.abs()));
    }
    Ok(rows)
}

fn euclid_compare(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (_, r) = three_sphere(cfg)?;
    let mut checks = Vec::new();
    let mut out = Vec::new();
    let mut table = Table::new(&["grid", "omega", "beta", "beta_rel_error", "relation_rel_residual"]);
    for &n in &cfg.resolutions {
        for (k, (beta, e, rel)) in euclid_rows(cfg, n)?.into_iter().enumerate() {
            checks.push(Check::at_most(format!("beta_rel_error@{n}/omega{k}"), e, cfg.quadrature));
            checks.push(Check::at_most(format!("relation_residual@{n}/omega{k}"), rel, cfg.quadrature));
            table.push(vec![json!(n), json!(k), json!(beta), json!(e), json!(rel)]);
            out.push(json!({"grid": n, "omega": k, "beta": beta}));
        }
    }
    Ok(Report::new(cfg, checks, json!({ "beta_exact": -2.0 / (r * r), "rows": out }), table))
}

fn berger_scan_verb(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let p = &cfg.params;
    let radii: Vec<f64> = (0..p.points).map(|i| p.r_min + (p.r_max - p.r_min) * i as f64 / (p.points - 1) as f64).collect();
    let rows = berger_scan(&radii, p.samples, cfg.seed)?;
    let mut table = Table::new(&["r", "tan_r", "max_beta", "sup_exact", "sup_bound", "bound_violations"]);
    let mut over_exact: f64 = f64::NEG_INFINITY;
    let mut violations_valid = 0usize;
    let mut max_small: f64 = f64::NEG_INFINITY;
    for row in &rows {
        table.push(vec![json!(row.r), json!(row.tan_r), json!(row.max_beta), json!(row.sup_exact), json!(row.sup_bound), json!(row.bound_violations)]);
        over_exact = over_exact.max(row.max_beta - row.sup_exact);
        if row.tan_r.powi(2) >= 2.0 {
            violations_valid += row.bound_violations;
        }
        if row.tan_r <= 1.6 {
            max_small = max_small.max(row.max_beta);
        }
    }
    let mut checks = vec![
        Check::at_most("sampled_minus_exact_sup", over_exact, 1e-12),
        Check::equal("bound_violations_where_tan2_ge_2", violations_valid as f64, 0.0),
    ];
    if max_small > f64::NEG_INFINITY {
        checks.push(Check::below("max_sampled_beta_tan_le_1.6", max_small, 0.0));
    }
    Ok(Report::new(cfg, checks, json!({ "rows": rows }), table))
}

fn berger_threshold_verb(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let samples = cfg.params.samples;
    let th = berger_threshold(samples, cfg.seed)?;
    let radii: Vec<f64> = (1..=40).map(|i| (0.04 * i as f64).atan()).collect();
    let rows = berger_scan(&radii, samples, cfg.seed)?;
    let max_small = rows.iter().map(|r| r.max_beta).fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![
        Check::at_most("bound_root_distance_from_1.652", (th.bound_root_tan - 1.652).abs(), 0.01),
        Check::below("max_sampled_beta_tan_le_1.6", max_small, 0.0),
    ];
    if let Some(s) = th.sampled_root_tan {
        checks.push(Check::at_least("sampled_root_minus_exact_root", s - th.exact_root_tan, -1e-9));
        checks.push(Check::at_most("sampled_root_minus_exact_root", s - th.exact_root_tan, 0.05));
    } else {
        checks.push(Check::equal("sampled_root_found", 0.0, 1.0));
    }
    let mut table = Table::new(&["quantity", "tan_r"]);
    table.push(vec![json!("sign change of the published sup bound"), json!(th.bound_root_tan)]);
    table.push(vec![json!("sign change of the exact sup"), json!(th.exact_root_tan)]);
    table.push(vec![json!("sign change of the sampled sup"), th.sampled_root_tan.map_or(Value::Null, |v| json!(v))]);
    let results = json!({
        "bound_root_tan": th.bound_root_tan,
        "exact_root_tan": th.exact_root_tan,
        "sampled_root_tan": th.sampled_root_tan,
        "samples": th.samples,
        "max_sampled_beta_tan_le_1.6": max_small,
    });
    Ok(Report::new(cfg, checks, results, table))
}

fn simdiag_checks(pair: &CommutingPair, res: &simdiag::SmoothFrameResult, tag: &str, checks: &mut Vec<Check>) -> Value {
    let d = simdiag::diagnostics(pair, res);
    let oracle = simdiag::oracle_mismatch(pair, res, &simdiag::nodewise_joint_frames(pair));
    checks.push(Check::at_most(format!("orthonormality/{tag}"), d.orthonormality, 1e-10));
    checks.push(Check::at_most(format!("eigen_residual_a/{tag}"), d.eigen_a, 1e-8));
    checks.push(Check::at_most(format!("eigen_residual_b/{tag}"), d.eigen_b, 1e-8));
    checks.push(Check::at_most(format!("trace_residual/{tag}"), d.trace, 1e-10));
    checks.push(Check::equal(format!("orientation_flips/{tag}"), d.orientation_flips as f64, 0.0));
    checks.push(Check::at_most(format!("oracle_mismatch/{tag}"), oracle, 1e-8));
    json!({ "diagnostics": d, "oracle_mismatch": oracle, "smoothness": res.smoothness, "h": pair.patch.h(), "multiplicities": res.multiplicities })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomPair {
    shape: [usize; 2],
    origin: [f64; 2],
    spacing: [f64; 2],
    metric: Vec<Vec<Vec<f64>>>,
    alpha: Vec<Vec<Vec<f64>>>,
    beta: Vec<Vec<Vec<f64>>>,
}

fn matrices(rows: &[Vec<Vec<f64>>]) -> Result<Vec<DMatrix<f64>>, CliError> {
    rows.iter()
        .map(|m| {
            let n = m.len();
            if m.iter().any(|r| r.len() != n) {
                return Err(CliError::Usage("custom pair: matrices must be square".into()));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
        })
        .collect()
}

fn clifford_shape_pair(cfg: &ExperimentConfig, n: usize) -> Result<CommutingPair, CliError> {
    let (model, _) = three_sphere(cfg)?;
    let imm = ParametricImmersion::clifford(model, n, n)?;
    let data = extrinsic_data(&imm)?;
    let grid = &data.grid;
    let patch = Patch::new(grid.shape(), grid.node(0), grid.spacing())?;
    let to_d = |m: &nalgebra::Matrix2<f64>| DMatrix::from_column_slice(2, 2, m.as_slice());
    let alpha: Vec<DMatrix<f64>> = data.nodes.iter().map(|g| to_d(&g.a)).collect();
    let metric: Vec<DMatrix<f64>> = data.nodes.iter().map(|g| to_d(&g.h)).collect();
    Ok(CommutingPair::new(patch, alpha.clone(), alpha, metric)?)
}

fn simdiag_verb(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mut checks = Vec::new();
    let mut table = Table::new(&["example", "grid", "h", "smoothness", "smoothness_over_h"]);
    let mut runs = Vec::new();
    match cfg.params.example.as_str() {
        "clifford-shape" => {
            for &n in &cfg.resolutions {
                let pair = clifford_shape_pair(cfg, n)?;
                let res = simdiag::simultaneous_diagonalize(&pair)?;
                let sorted = simdiag::sorted_eigenvalue_fields(&pair);
                let kappa_err = sorted
                    .values
                    .iter()
                    .map(|k| (k[0] + 1.0).abs().max((k[1] - 1.0).abs()))
                    .fold(0.0, f64::max);
                checks.push(Check::at_most(format!("principal_curvatures_pm1@{n}"), kappa_err, 1e-10));
                let mut info = simdiag_checks(&pair, &res, &format!("clifford@{n}"), &mut checks);
                checks.push(Check::at_most(format!("smoothness_over_h/clifford@{n}"), res.smoothness / pair.patch.h(), 3.0));
                info["frame"] = serde_json::to_value(&res)?;
                table.push(vec![json!("clifford-shape"), json!(n), json!(pair.patch.h()), json!(res.smoothness), json!(res.smoothness / pair.patch.h())]);
                runs.push(info);
            }
        }
        "polynomial-pair" => {
            let mut ratio_by_seed: Vec<Vec<f64>> = vec![Vec::new(); 20];
            for &n in &cfg.resolutions {
                let pair = simdiag::crossing_pair(n)?;
                let res = simdiag::simultaneous_diagonalize(&pair)?;
                let h = pair.patch.h();
                let mut info = simdiag_checks(&pair, &res, &format!("crossing@{n}"), &mut checks);
                let naive = simdiag::labelled_jump(&pair, &simdiag::nodewise_joint_frames(&pair));
                let ours = simdiag::labelled_jump(&pair, &res.frame);
                checks.push(Check::at_most(format!("smoothness_over_h/crossing@{n}"), res.smoothness / h, 3.0));
                checks.push(Check::at_most(format!("labelled_jump_over_h/crossing@{n}"), ours / h, 3.0));
                checks.push(Check::at_least(format!("naive_labelled_jump/crossing@{n}"), naive, 0.5));
                info["naive_labelled_jump"] = json!(naive);
                info["frame"] = serde_json::to_value(&res)?;
                table.push(vec![json!("crossing"), json!(n), json!(h), json!(res.smoothness), json!(res.smoothness / h)]);
                runs.push(info);
                for (k, ratios) in ratio_by_seed.iter_mut().enumerate() {
                    let seed = cfg.seed.wrapping_add(k as u64);
                    let pair = simdiag::random_polynomial_pair(n, 3, seed)?;
                    let res = simdiag::simultaneous_diagonalize(&pair)?;
                    let mut scratch = Vec::new();
                    simdiag_checks(&pair, &res, &format!("random{seed}@{n}"), &mut scratch);
                    checks.extend(scratch.into_iter().filter(|c| !c.pass));
                    ratios.push(res.smoothness / pair.patch.h());
                }
            }
            let worst = ratio_by_seed.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).fold(0.0, f64::max);
            checks.push(Check::at_most("random_pairs_max_smoothness_over_h", worst, 10.0));
            if cfg.resolutions.len() >= 2 {
                let growth = ratio_by_seed.iter().map(|r| r[r.len() - 1] / r[0]).fold(0.0, f64::max);
                checks.push(Check::at_most("random_pairs_smoothness_over_h_growth", growth, 1.2));
            }
            runs.push(json!({ "random_pairs": ratio_by_seed.len(), "smoothness_over_h": ratio_by_seed }));
        }
        _ => {
            let path = cfg.params.input.as_ref().expect("validated");
            let text = std::fs::read_to_string(path)?;
            let c: CustomPair = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let patch = Patch::new(c.shape, c.origin, c.spacing)?;
            let pair = CommutingPair::new(patch, matrices(&c.alpha)?, matrices(&c.beta)?, matrices(&c.metric)?)?;
            let res = simdiag::simultaneous_diagonalize(&pair)?;
            let mut info = simdiag_checks(&pair, &res, "custom", &mut checks);
            info["frame"] = serde_json::to_value(&res)?;
            info["sorted_eigenvalues_max_jump"] = json!(simdiag::sorted_eigenvalue_fields(&pair).max_adjacent_jump);
            let h = pair.patch.h();
            table.push(vec![json!("custom"), json!(c.shape[0]), json!(h), json!(res.smoothness), json!(res.smoothness / h)]);
            runs.push(info);
        }
    }
    Ok(Report::new(cfg, checks, json!({ "example": cfg.params.example, "runs": runs }), table))
}

fn bound_check_verb(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    require_immersion(cfg, "clifford")?;
    let (model, _) = three_sphere(cfg)?;
    let c63 = index_bound_constant(6, 3)?;
    let c84 = index_bound_constant(8, 4)?;
    let cn = index_nullity_constant(6)?;
    let n = cfg.resolutions[0];
    let rep = clifford_spectrum(&model, n, cfg.tol_zero)?;
    let imm = ParametricImmersion::clifford(model, n, n)?;
    let (_, b1) = harmonic_basis(&extrinsic_data(&imm)?)?;
    let to_f = |r: Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    let checks = vec![
        Check::equal("C(6,3)_is_1/18", (c63 == Ratio::new(1, 18)) as u8 as f64, 1.0),
        Check::equal("C(8,4)_is_1/33", (c84 == Ratio::new(1, 33)) as u8 as f64, 1.0),
        Check::equal("index_bound", bound_check(rep.index, b1, c63) as u8 as f64, 1.0),
        Check::equal("index_plus_nullity_bound", bound_check(rep.index + rep.nullity, b1, cn) as u8 as f64, 1.0),
    ];
    let mut table = Table::new(&["quantity", "value"]);
    table.push(vec![json!("C(6,3)"), json!(c63.to_string())]);
    table.push(vec![json!("C(8,4)"), json!(c84.to_string())]);
    table.push(vec![json!("2/(d(d-1)), d = 6"), json!(cn.to_string())]);
    table.push(vec![json!("index"), json!(rep.index)]);
    table.push(vec![json!("nullity"), json!(rep.nullity)]);
    table.push(vec![json!("first Betti number"), json!(b1)]);
    let results = json!({
        "constants": {"C(6,3)": c63.to_string(), "C(8,4)": c84.to_string(), "index_nullity_d6": cn.to_string()},
        "grid": n,
        "index": rep.index,
        "nullity": rep.nullity,
        "first_betti": b1,
        "index_rhs": to_f(c63) * b1 as f64,
        "index_nullity_rhs": to_f(cn) * b1 as f64,
    });
    Ok(Report::new(cfg, checks, results, table))
}

/// Scalar error of `verb` at grid `n`.
fn error_metric(cfg: &ExperimentConfig, verb: Verb, n: usize) -> Result<f64, CliError> {
    match verb {
        Verb::CliffordS3 => {
            let (model, r) = three_sphere(cfg)?;
            let rep = clifford_spectrum(&model, n, cfg.tol_zero)?;
            let oracle = torus_oracle(10, r);
            Ok(rep.eigenvalues.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        }
        Verb::EquatorSn => {
            let (model, r) = three_sphere(cfg)?;
            let imm = ParametricImmersion::equator(model, 2 * n, n)?;
            let rep = spectrum(&jacobi_operator(&imm)?, 9, cfg.tol_zero)?;
            Ok(rep.eigenvalues.iter().zip(&sphere_oracle(9, r)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        }
        Verb::TraceZero => relative_zero_trace(&three_sphere(cfg)?.0, n),
        Verb::TraceFormula1 | Verb::TraceFormula2 => {
            let which = if verb == Verb::TraceFormula1 { 1 } else { 2 };
            Ok(trace_formula_rows(cfg, which, n)?.iter().map(|r| r.residual).fold(0.0, f64::max))
        }
        Verb::EuclidCompare => Ok(euclid_rows(cfg, n)?.iter().map(|r| r.1).fold(0.0, f64::max)),
        other => Err(CliError::Usage(format!("convergence is not defined for '{}'", other.name()))),
    }
}

fn convergence(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let verb = Verb::parse(cfg.params.verb.as_deref().expect("validated"))?;
    let immersion = if verb == Verb::EquatorSn { "equator" } else { "clifford" };
    let mut inner = cfg.clone();
    inner.experiment = verb;
    if cfg.immersion == "clifford" {
        inner.immersion = immersion.into();
    }
    let errs: Vec<f64> = cfg.resolutions.iter().map(|&n| error_metric(&inner, verb, n)).collect::<Result<_, _>>()?;
    let mut table = Table::new(&["grid", "error", "order_from_previous"]);
    let mut orders = Vec::new();
    for (i, (&n, &e)) in cfg.resolutions.iter().zip(&errs).enumerate() {
        let p = (i > 0).then(|| order(&errs[i - 1..=i], &cfg.resolutions[i - 1..=i])).flatten();
        orders.push(p);
        table.push(vec![json!(n), json!(e), p.map_or(Value::Null, |v| json!(v))]);
    }
    let overall = order(&errs, &cfg.resolutions);
    let mut checks = Vec::new();
    // the stated orders: second-order Jacobi stencil and the zero trace
    if matches!(verb, Verb::CliffordS3 | Verb::TraceZero) {
        checks.push(Check::at_least("observed_order", overall.unwrap_or(f64::NAN), MIN_ORDER));
    }
    let results = json!({ "verb": verb.name(), "errors": errs, "orders": orders, "observed_order": overall });
    Ok(Report::new(cfg, checks, results, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracles() {
        let t = torus_oracle(10, 1.0);
        assert_eq!(t[..5], [-4.0, -2.0, -2.0, -2.0, -2.0]);
        assert_eq!(t[5..9], [0.0; 4]);
        let s = sphere_oracle(9, 1.0);
        assert_eq!(s, vec![-2.0, 0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 4.0, 4.0]);
        assert_eq!(torus_oracle(1, 2.0), vec![-1.0]);
    }

    #[test]
    fn order_estimate() {
        assert!((order(&[4.0, 1.0], &[16, 32]).unwrap() - 2.0).abs() < 1e-12);
        assert!(order(&[1.0], &[16]).is_none());
    }
}
