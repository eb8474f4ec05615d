//! Run configuration: TOML files, emitted manifests, and flag overrides.

use std::path::{Path, PathBuf};

use pmulap::eigen::DEFAULT_SEED;
use pmulap::{Domain, Point, Polygon, SolverParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Poisson,
    Eigen,
    MeasureReport,
    Analyze,
    Counterexample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    Lebesgue,
    Sierpinski {
        depth: usize,
    },
    Ifs {
        path: PathBuf,
        depth: usize,
    },
    LogCantor {
        q: f64,
        level: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Point>,
    },
}

impl MeasureConfig {
    /// `lebesgue`, `sierpinski:DEPTH`, `ifs:PATH:DEPTH` or `log-cantor:Q:LEVEL`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let bad = || CliError::Validation(format!("unrecognized measure '{spec}'"));
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["lebesgue"] => Ok(MeasureConfig::Lebesgue),
            ["sierpinski", d] => Ok(MeasureConfig::Sierpinski { depth: num(d)? }),
            ["ifs", path @ .., d] if !path.is_empty() => {
                Ok(MeasureConfig::Ifs { path: PathBuf::from(path.join(":")), depth: num(d)? })
            }
            ["log-cantor", q, level] => Ok(MeasureConfig::LogCantor {
                q: q.parse().map_err(|_| bad())?,
                level: num(level)?,
                r0: None,
                center: None,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Forcing {
    /// `f ≡ 1`.
    One,
    /// `f = 2π² sin(πx) sin(πy)`.
    Sine,
    Constant(f64),
}

impl Forcing {
    /// `one`, `sine` or `const:C`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        match spec.split_once(':') {
            None if spec == "one" => Ok(Forcing::One),
            None if spec == "sine" => Ok(Forcing::Sine),
            Some(("const", c)) => c
                .parse()
                .map(Forcing::Constant)
                .map_err(|_| CliError::Validation(format!("bad forcing constant '{c}'"))),
            _ => Err(CliError::Validation(format!("unrecognized forcing '{spec}'"))),
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        use std::f64::consts::PI;
        match self {
            Forcing::One => 1.0,
            Forcing::Sine => 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
            Forcing::Constant(c) => *c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub pair_budget: usize,
    /// Ball radius for the sup-bound check; defaults to a twelfth of the domain diameter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_radius: Option<f64>,
    pub balls: usize,
    pub sigmas: Vec<f64>,
    pub growth_centers: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { pair_budget: 20_000, sup_radius: None, balls: 5, sigmas: vec![0.25, 0.5, 0.75], growth_centers: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleSection {
    pub level: usize,
    pub resolutions: Vec<usize>,
    pub r0: f64,
    pub pair_budget: usize,
    pub mass_bound_samples: usize,
}

impl Default for CounterexampleSection {
    fn default() -> Self {
        let d = pmulap::analysis::CounterexampleConfig::default();
        CounterexampleSection {
            level: 10,
            resolutions: vec![32, 64, 128],
            r0: d.r0,
            pair_budget: d.pair_budget,
            mass_bound_samples: d.mass_bound_samples,
        }
    }
}

fn default_domain() -> Domain {
    Domain::UnitSquare
}

fn default_resolution() -> usize {
    32
}

fn default_measure() -> MeasureConfig {
    MeasureConfig::Lebesgue
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_forcing() -> Forcing {
    Forcing::One
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Mesh in the `vertices N triangles M` text format, used instead of `domain`/`resolution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<PathBuf>,
    #[serde(default)]
    pub params: SolverParams,
    #[serde(default = "default_measure")]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_forcing")]
    pub forcing: Forcing,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub counterexample: CounterexampleSection,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            domain: default_domain(),
            resolution: default_resolution(),
            mesh_file: None,
            params: SolverParams::default(),
            measure: default_measure(),
            seeds: Vec::new(),
            output_dir: default_output(),
            forcing: default_forcing(),
            analysis: AnalysisConfig::default(),
            counterexample: CounterexampleSection::default(),
        }
    }

    /// Reads a TOML config, or a `manifest.json` written by an earlier run.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let cfg = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(cfg).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![DEFAULT_SEED]
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        if self.mesh_file.is_none() && self.resolution == 0 {
            return Err(CliError::Validation("resolution must be positive".into()));
        }
        if let Domain::Polygon(p) = &self.domain {
            Polygon::new(p.vertices().to_vec())?;
        }
        match &self.measure {
            MeasureConfig::Sierpinski { depth } | MeasureConfig::Ifs { depth, .. } if *depth == 0 => {
                return Err(CliError::Validation("measure depth must be positive".into()));
            }
            _ => {}
        }
        if self.command == Command::Eigen && self.seeds.len() == 2 {
            return Err(CliError::Validation("give one seed, or at least three for the simplicity check".into()));
        }
        if self.command == Command::Counterexample {
            if self.params.p != 2.0 {
                return Err(CliError::Validation(format!("counterexample runs at p = 2, got p = {}", self.params.p)));
            }
            if self.counterexample.resolutions.is_empty() {
                return Err(CliError::Validation("counterexample needs at least one resolution".into()));
            }
        }
        let a = &self.analysis;
        if a.sigmas.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return Err(CliError::Validation("sigmas must lie in (0, 1)".into()));
        }
        if a.sup_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(CliError::Validation("sup_radius must be positive".into()));
        }
        Ok(())
    }
}

/// Resolved run record written next to the artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub wall_time_seconds: f64,
    pub converged: bool,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}
