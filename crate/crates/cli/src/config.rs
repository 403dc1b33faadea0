//! Experiment configuration: built-in defaults, then a TOML file with
//! `[experiment]`, `[tolerances]`, `[output]` and `[params]` sections, then
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SYMINDEX_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    CliffordS3,
    EquatorSn,
    TraceZero,
    #[serde(rename = "trace-formula-1")]
    TraceFormula1,
    #[serde(rename = "trace-formula-2")]
    TraceFormula2,
    BergerScan,
    BergerThreshold,
    EuclidCompare,
    Simdiag,
    BoundCheck,
    Convergence,
}

impl Verb {
    pub const ALL: [Verb; 11] = [
        Verb::CliffordS3,
        Verb::EquatorSn,
        Verb::TraceZero,
        Verb::TraceFormula1,
        Verb::TraceFormula2,
        Verb::BergerScan,
        Verb::BergerThreshold,
        Verb::EuclidCompare,
        Verb::Simdiag,
        Verb::BoundCheck,
        Verb::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verb::CliffordS3 => "clifford-s3",
            Verb::EquatorSn => "equator-sn",
            Verb::TraceZero => "trace-zero",
            Verb::TraceFormula1 => "trace-formula-1",
            Verb::TraceFormula2 => "trace-formula-2",
            Verb::BergerScan => "berger-scan",
            Verb::BergerThreshold => "berger-threshold",
            Verb::EuclidCompare => "euclid-compare",
            Verb::Simdiag => "simdiag",
            Verb::BoundCheck => "bound-check",
            Verb::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown experiment '{s}'")))
    }

    pub fn default_resolutions(self) -> Vec<usize> {
        match self {
            Verb::CliffordS3 | Verb::TraceZero | Verb::Convergence => vec![32, 48, 64],
            Verb::EquatorSn | Verb::BoundCheck => vec![32],
            Verb::TraceFormula1 | Verb::TraceFormula2 | Verb::EuclidCompare => vec![64],
            Verb::Simdiag => vec![16, 32],
            Verb::BergerScan | Verb::BergerThreshold => vec![],
        }
    }

    fn uses_grid(self) -> bool {
        !matches!(self, Verb::BergerScan | Verb::BergerThreshold)
    }
}

/// Verb-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Ambient dimension for `equator-sn`.
    pub n: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Random frames per radius.
    pub samples: usize,
    /// Radii in a scan.
    pub points: usize,
    /// `simdiag` example: `clifford-shape`, `polynomial-pair` or `custom`.
    pub example: String,
    /// Pair file for the `custom` example.
    pub input: Option<PathBuf>,
    /// Target verb of `convergence`.
    pub verb: Option<String>,
    /// Latitude of the umbilic target in `trace-formula-2`.
    pub rho: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 3,
            r_min: 0.05,
            r_max: 1.2,
            samples: 1000,
            points: 40,
            example: "polynomial-pair".into(),
            input: None,
            verb: None,
            rho: 1.0,
        }
    }
}

/// Fully resolved configuration, echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Verb,
    pub model: String,
    pub immersion: String,
    pub resolutions: Vec<usize>,
    /// `None` selects the solver's default zero tolerance.
    pub tol_zero: Option<f64>,
    /// Relative tolerance for quadrature-level identities.
    pub quadrature: f64,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
    pub params: Params,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileExperiment {
    name: Option<String>,
    model: Option<String>,
    immersion: Option<String>,
    resolutions: Option<Vec<usize>>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTolerances {
    tol_zero: Option<f64>,
    quadrature: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    experiment: FileExperiment,
    #[serde(default)]
    tolerances: FileTolerances,
    #[serde(default)]
    output: FileOutput,
    #[serde(default)]
    params: Option<Params>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn experiment_name(&self) -> Option<&str> {
        self.experiment.name.as_deref()
    }
}

/// Command-line values; `None` leaves the file or default value in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub immersion: Option<String>,
    pub resolutions: Option<Vec<usize>>,
    pub tol_zero: Option<f64>,
    pub quadrature: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub samples: Option<usize>,
    pub points: Option<usize>,
    pub example: Option<String>,
    pub input: Option<PathBuf>,
    pub verb: Option<String>,
    pub rho: Option<f64>,
}

pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{s}'"))),
        },
    }
}

impl ExperimentConfig {
    pub fn resolve(verb: Verb, file: Option<&ConfigFile>, o: &Overrides, threads: usize) -> Result<Self, CliError> {
        let empty = ConfigFile::default();
        let f = file.unwrap_or(&empty);
        if let Some(name) = f.experiment_name() {
            if Verb::parse(name)? != verb {
                return Err(CliError::Usage(format!("config names experiment '{name}' but '{}' was requested", verb.name())));
            }
        }
        let mut params = f.params.clone().unwrap_or_default();
        macro_rules! over {
            ($($field:ident),*) => { $( if let Some(v) = o.$field.clone() { params.$field = v; } )* };
        }
        over!(n, r_min, r_max, samples, points, example, rho);
        if o.input.is_some() {
            params.input = o.input.clone();
        }
        if o.verb.is_some() {
            params.verb = o.verb.clone();
        }
        // convergence inherits its grids from the target verb
        let grid_verb = match (verb, &params.verb) {
            (Verb::Convergence, Some(v)) => Verb::parse(v)?,
            _ => verb,
        };
        let cfg = ExperimentConfig {
            experiment: verb,
            model: o.model.clone().or_else(|| f.experiment.model.clone()).unwrap_or_else(|| "s3".into()),
            immersion: o.immersion.clone().or_else(|| f.experiment.immersion.clone()).unwrap_or_else(|| default_immersion(verb).into()),
            resolutions: o
                .resolutions
                .clone()
                .or_else(|| f.experiment.resolutions.clone())
                .unwrap_or_else(|| grid_verb.default_resolutions()),
            tol_zero: o.tol_zero.or(f.tolerances.tol_zero),
            quadrature: o.quadrature.or(f.tolerances.quadrature).unwrap_or(0.01),
            output_dir: o.output_dir.clone().or_else(|| f.output.dir.clone()),
            seed: o.seed.or(f.experiment.seed).unwrap_or(7),
            threads,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.experiment.uses_grid() {
            if self.resolutions.is_empty() {
                return usage("resolutions list is empty".into());
            }
            if let Some(r) = self.resolutions.iter().find(|&&r| r < 8) {
                return usage(format!("resolution {r} is below the minimum of 8"));
            }
        }
        if let Some(t) = self.tol_zero {
            if !(t > 0.0 && t.is_finite()) {
                return usage(format!("tol_zero must be positive, got {t}"));
            }
        }
        if !(self.quadrature > 0.0 && self.quadrature.is_finite()) {
            return usage(format!("quadrature tolerance must be positive, got {}", self.quadrature));
        }
        let p = &self.params;
        if self.experiment == Verb::BergerScan {
            let half_pi = std::f64::consts::FRAC_PI_2;
            if !(p.r_min > 0.0 && p.r_min < p.r_max && p.r_max < half_pi) {
                return usage(format!("need 0 < r_min < r_max < π/2, got [{}, {}]", p.r_min, p.r_max));
            }
            if p.points < 2 {
                return usage("a scan needs at least 2 radii".into());
            }
        }
        if matches!(self.experiment, Verb::BergerScan | Verb::BergerThreshold) && p.samples == 0 {
            return usage("samples must be positive".into());
        }
        if self.experiment == Verb::Convergence {
            match &p.verb {
                None => return usage("convergence needs --verb".into()),
                Some(v) => {
                    let target = Verb::parse(v)?;
                    if !crate::experiments::CONVERGENCE_VERBS.contains(&target) {
                        return usage(format!("convergence is not defined for '{v}'"));
                    }
                }
            }
            if self.resolutions.len() < 2 {
                return usage("convergence needs at least two resolutions".into());
            }
        }
        if self.experiment == Verb::Simdiag && !["clifford-shape", "polynomial-pair", "custom"].contains(&p.example.as_str()) {
            return usage(format!("unknown simdiag example '{}'", p.example));
        }
        if self.experiment == Verb::Simdiag && p.example == "custom" && p.input.is_none() {
            return usage("the custom example needs --input".into());
        }
        if self.experiment == Verb::TraceFormula2 && !(p.rho > 0.0 && p.rho < std::f64::consts::FRAC_PI_2) {
            return usage(format!("rho must lie in (0, π/2), got {}", p.rho));
        }
        Ok(())
    }
}

fn default_immersion(verb: Verb) -> &'static str {
    match verb {
        Verb::EquatorSn => "equator",
        _ => "clifford",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = ConfigFile::parse(
            "[experiment]\nname = \"trace-zero\"\nresolutions = [16, 24]\nseed = 3\n\n[tolerances]\nquadrature = 0.02\n\n[params]\nrho = 0.8\n",
        )
        .unwrap();
        let o = Overrides { seed: Some(11), ..Default::default() };
        let cfg = ExperimentConfig::resolve(Verb::TraceZero, Some(&file), &o, 1).unwrap();
        assert_eq!(cfg.resolutions, vec![16, 24]);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.quadrature, 0.02);
        assert_eq!(cfg.params.rho, 0.8);
        assert_eq!(cfg.params.samples, 1000);
    }

    #[test]
    fn invalid_configs_are_usage_errors() {
        let bad = [
            Overrides { resolutions: Some(vec![]), ..Default::default() },
            Overrides { resolutions: Some(vec![32, 4]), ..Default::default() },
            Overrides { tol_zero: Some(-1.0), ..Default::default() },
        ];
        for o in bad {
            assert!(matches!(ExperimentConfig::resolve(Verb::CliffordS3, None, &o, 1), Err(CliError::Usage(_))));
        }
        assert!(ConfigFile::parse("[experiment]\nbogus = 1\n").is_err());
        let file = ConfigFile::parse("[experiment]\nname = \"simdiag\"\n").unwrap();
        assert!(ExperimentConfig::resolve(Verb::TraceZero, Some(&file), &Overrides::default(), 1).is_err());
        let conv = Overrides { verb: Some("berger-scan".into()), ..Default::default() };
        assert!(ExperimentConfig::resolve(Verb::Convergence, None, &conv, 1).is_err());
    }

    #[test]
    fn convergence_takes_target_grids() {
        let o = Overrides { verb: Some("trace-zero".into()), ..Default::default() };
        let cfg = ExperimentConfig::resolve(Verb::Convergence, None, &o, 1).unwrap();
        assert_eq!(cfg.resolutions, vec![32, 48, 64]);
    }

    #[test]
    fn verb_names_round_trip() {
        for v in Verb::ALL {
            assert_eq!(Verb::parse(v.name()).unwrap(), v);
            assert_eq!(serde_json::to_value(v).unwrap(), serde_json::Value::String(v.name().into()));
        }
    }
}
