//! Run configuration: a TOML document with the sections `problem`, `space`,
//! `mesh`, `stabilization`, `error_norm`, `output` and `quadrature`.
//!
//! ```toml
//! [problem]
//! name = "harmonic"
//! params = { omega = 10.0 }
//!
//! [space]
//! kind = "quasi_trefftz"          # or a list of kinds
//! degree = [1, 2, 3, 4]           # or a single degree
//!
//! [mesh]
//! sweep = [{ cells = 120, slabs = 20 }, { cells = [240], slabs = 40 }]
//!
//! [stabilization]
//! alpha = "reciprocal_hfx"
//! beta = "hfx"
//! mu = "max_squared"
//! ```
//!
//! Parsing never consults the environment. [`RunConfig::to_canonical`]
//! writes every field explicitly, with lists in place of scalars.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::assembly::{AssemblyOptions, MuRule, StabilizationConfig};
use crate::basis::{ExponentialMode, SpaceKind};
use crate::error::{Error, Result};
use crate::potential::PotentialModel;
use crate::problems::{make_problem, BenchmarkProblem, ProblemParams};
use crate::solver::SolverOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceName {
    FullPoly,
    QuasiTrefftz,
    TrefftzExpOrthogonal,
    TrefftzExpNonorthogonal,
}

impl SpaceName {
    pub fn kind(self) -> SpaceKind {
        match self {
            SpaceName::FullPoly => SpaceKind::FullPolynomial,
            SpaceName::QuasiTrefftz => SpaceKind::QuasiTrefftz,
            SpaceName::TrefftzExpOrthogonal => SpaceKind::ExponentialTrefftz(ExponentialMode::Orthogonal),
            SpaceName::TrefftzExpNonorthogonal => SpaceKind::ExponentialTrefftz(ExponentialMode::Nonorthogonal),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    #[serde(default)]
    pub params: ProblemParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(deserialize_with = "one_or_many")]
    pub kind: Vec<SpaceName>,
    #[serde(deserialize_with = "one_or_many")]
    pub degree: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshEntry {
    /// Spatial cells per axis; a single number applies to every axis.
    #[serde(deserialize_with = "one_or_many")]
    pub cells: Vec<usize>,
    pub slabs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub sweep: Vec<MeshEntry>,
}

/// Volume weight of the norm in which errors are reported; the facet
/// weights are those of the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorNormSection {
    #[serde(default = "default_error_mu")]
    pub mu: MuRule,
}

fn default_error_mu() -> MuRule {
    MuRule::MaxSquared
}

impl Default for ErrorNormSection {
    fn default() -> Self {
        ErrorNormSection { mu: default_error_mu() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// CSV destination; `--out` takes precedence, standard output otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Write the first slab matrix next to the CSV (`solve` only).
    #[serde(default)]
    pub dump_matrices: bool,
    /// Write the energy series next to the CSV (`solve` only).
    #[serde(default)]
    pub energy_series: bool,
    /// Leave `wall_ms` empty so that repeated runs give identical files.
    #[serde(default)]
    pub omit_timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    /// Gauss points per direction.
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub space: SpaceSection,
    pub mesh: MeshSection,
    #[serde(default)]
    pub stabilization: StabilizationConfig,
    #[serde(default)]
    pub error_norm: ErrorNormSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSection>,
}

/// 1-based line of the value at `path`, if present in `src`.
fn line_of(src: &str, path: &[&str]) -> Option<usize> {
    use toml::de::{DeTable, DeValue};
    let root = DeTable::parse(src).ok()?;
    let mut table = root.get_ref();
    let mut span = None;
    for key in path {
        let (_, v) = table.iter().find(|(k, _)| k.get_ref().as_ref() == *key)?;
        span = Some(v.span());
        match v.get_ref() {
            DeValue::Table(t) => table = t,
            _ => break,
        }
    }
    span.map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1)
}

fn bare(e: Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidArgument(m) => m,
        other => other.to_string(),
    }
}

fn located(src: &str, path: &[&str], msg: impl std::fmt::Display) -> Error {
    let key = path.join(".");
    match line_of(src, path) {
        Some(line) => Error::Config(format!("line {line}: {key}: {msg}")),
        None => Error::Config(format!("{key}: {msg}")),
    }
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn parse(src: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            let msg = e.message().trim().to_string();
            Error::Config(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        })?;
        if let Err((path, msg)) = cfg.check() {
            return Err(located(src, &path, msg));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&src)
    }

    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Semantic checks; returns the offending key path and a message.
    fn check(&self) -> std::result::Result<(), (Vec<&'static str>, String)> {
        let problem = make_problem(&self.problem.name, &self.problem.params).map_err(|e| {
            let key = if self.problem.params.is_empty() { "name" } else { "params" };
            (vec!["problem", key], bare(e))
        })?;
        if self.space.kind.is_empty() {
            return Err((vec!["space", "kind"], "at least one space kind is required".into()));
        }
        let exp = self.space.kind.iter().any(|k| matches!(k.kind(), SpaceKind::ExponentialTrefftz(_)));
        if exp && (self.problem.name != "free" || problem.dim() != 1) {
            return Err((vec!["space", "kind"], "exponential Trefftz spaces require the `free` problem in one space dimension".into()));
        }
        if self.space.degree.is_empty() {
            return Err((vec!["space", "degree"], "at least one degree is required".into()));
        }
        if self.space.degree.contains(&0) {
            return Err((vec!["space", "degree"], "degrees must be at least 1".into()));
        }
        if self.mesh.sweep.is_empty() {
            return Err((vec!["mesh", "sweep"], "the mesh sweep must contain at least one entry".into()));
        }
        let d = problem.dim();
        for (i, m) in self.mesh.sweep.iter().enumerate() {
            if m.cells.len() != 1 && m.cells.len() != d {
                return Err((vec!["mesh", "sweep"], format!("entry {i}: expected 1 or {d} cell counts, got {}", m.cells.len())));
            }
            if m.cells.contains(&0) || m.slabs == 0 {
                return Err((vec!["mesh", "sweep"], format!("entry {i}: cell and slab counts must be at least 1")));
            }
        }
        self.stabilization.validate().map_err(|e| (vec!["stabilization"], bare(e)))?;
        StabilizationConfig { mu: self.error_norm.mu, ..StabilizationConfig::default() }
            .validate()
            .map_err(|e| (vec!["error_norm", "mu"], bare(e)))?;
        if let Some(q) = self.quadrature {
            if q.points == 0 {
                return Err((vec!["quadrature", "points"], "at least one point is required".into()));
            }
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<BenchmarkProblem> {
        make_problem(&self.problem.name, &self.problem.params)
    }

    /// Cells per axis of sweep entry `i` for a problem in `d` space dimensions.
    pub fn cells(&self, i: usize, d: usize) -> Vec<usize> {
        let c = &self.mesh.sweep[i].cells;
        if c.len() == 1 {
            vec![c[0]; d]
        } else {
            c.clone()
        }
    }

    pub fn kinds(&self) -> Vec<SpaceKind> {
        self.space.kind.iter().map(|k| k.kind()).collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            assembly: AssemblyOptions {
                stabilization: self.stabilization,
                quadrature_points: self.quadrature.map(|q| q.points),
            },
            ..SolverOptions::default()
        }
    }

    /// Weights of the error norm.
    pub fn error_stabilization(&self) -> StabilizationConfig {
        StabilizationConfig { mu: self.error_norm.mu, ..self.stabilization }
    }

    pub fn potential_is_zero(problem: &BenchmarkProblem) -> bool {
        matches!(problem.potential, PotentialModel::Zero)
    }
}
