//! TOML study configuration.

use crate::error::{Error, Result};
use crate::fem::{Density, LoadSpec};
use crate::linalg::SolverKind;
use crate::mesh::{read_msh, segment_fitted_grid, structured_square, Point, TriMesh};
use crate::splitting::{FracProblem, Source, TimeProfile};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub alpha: f64,
    #[serde(default = "one")]
    pub t_final: f64,
    #[serde(default)]
    pub m: usize,
    #[serde(default = "two")]
    pub k: usize,
    pub initial: Option<DataSpec>,
    pub source: Option<SourceSpec>,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

/// Initial data or spatial source factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Dirac { point: Point },
    Line { from: Point, to: Point },
    Constant { value: f64 },
    Mode { k: usize, l: usize, amp: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64, value: f64 },
}

impl DataSpec {
    pub fn to_load(&self) -> LoadSpec {
        match *self {
            DataSpec::Dirac { point } => LoadSpec::Dirac(point),
            DataSpec::Line { from, to } => LoadSpec::Line(from, to),
            DataSpec::Constant { value } => LoadSpec::Density(Density::Constant(value)),
            DataSpec::Mode { k, l, amp } => LoadSpec::Density(Density::Mode { k, l, amp }),
            DataSpec::Rect { x0, x1, y0, y1, value } => {
                LoadSpec::Density(Density::Rect { x0, x1, y0, y1, value })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub g: ProfileSpec,
    pub f: DataSpec,
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Polynomial { coeffs: Vec<f64> },
    Exp { amp: f64, rate: f64 },
    Sin { amp: f64, freq: f64, #[serde(default)] phase: f64 },
}

impl ProfileSpec {
    pub fn to_profile(&self) -> TimeProfile {
        match self {
            ProfileSpec::Polynomial { coeffs } => TimeProfile::Polynomial(coeffs.clone()),
            ProfileSpec::Exp { amp, rate } => TimeProfile::Exp { amp: *amp, rate: *rate },
            ProfileSpec::Sin { amp, freq, phase } => TimeProfile::Sin { amp: *amp, freq: *freq, phase: *phase },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub r: usize,
    pub mesh: MeshSpec,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub strategy: StrategyKind,
    /// Grading exponent for graded_plain; defaults to 0.8 / r.
    pub grading_gamma: Option<f64>,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iter")]
    pub cg_max_iter: usize,
}

fn default_tau() -> f64 {
    1.0 / 64.0
}

fn default_cg_tol() -> f64 {
    1e-12
}

fn default_cg_max_iter() -> usize {
    20_000
}

impl DiscretizationSection {
    pub fn solver_kind(&self) -> SolverKind {
        match self.solver {
            SolverChoice::Direct => SolverKind::Direct,
            SolverChoice::Cg => SolverKind::Cg { tol: self.cg_tol, max_iter: self.cg_max_iter },
        }
    }

    /// Relative accuracy of the linear solves.
    pub fn solver_tolerance(&self) -> f64 {
        match self.solver {
            SolverChoice::Direct => 1e-14,
            SolverChoice::Cg => self.cg_tol,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.grading_gamma.unwrap_or(0.8 / self.r.max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Plain,
    DiracCorrected,
    GradedPlain,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Plain => "plain",
            StrategyKind::DiracCorrected => "dirac_corrected",
            StrategyKind::GradedPlain => "graded_plain",
        }
    }
}

/// Coarsest mesh; its nominal size is 1/n for squares and 1/ny for the
/// segment-fitted grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Square { n: usize },
    Segment { nx: usize, ny: usize, from: Point, to: Point },
    Msh { path: PathBuf, h: f64 },
}

impl MeshSpec {
    pub fn build(&self, base_dir: &Path) -> Result<(TriMesh, f64)> {
        match self {
            MeshSpec::Square { n } => {
                if *n == 0 {
                    return Err(Error::Config("mesh n must be positive".into()));
                }
                Ok((structured_square(*n), 1.0 / *n as f64))
            }
            MeshSpec::Segment { nx, ny, from, to } => {
                if *nx == 0 || *ny == 0 {
                    return Err(Error::Config("mesh nx, ny must be positive".into()));
                }
                Ok((segment_fitted_grid(*nx, *ny, *from, *to), 1.0 / *ny as f64))
            }
            MeshSpec::Msh { path, h } => {
                let p = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                Ok((read_msh(&p)?, *h))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    #[default]
    Space,
    Time,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default)]
    pub kind: StudyKind,
    /// Mesh sizes (space) or step sizes (time), halving from level to level.
    #[serde(default)]
    pub ladder: Vec<f64>,
    /// Fixed mesh size of a time study; defaults to the base mesh.
    pub h_ref: Option<f64>,
    /// Fixed step of a space study; defaults to discretization.tau.
    pub tau_ref: Option<f64>,
    /// Adds an error column against the eigenfunction series with P x P modes.
    pub oracle_truncation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub markdown: Option<PathBuf>,
    /// Final-state export of `solve`, by extension .csv or .vtk.
    pub field: Option<PathBuf>,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Problem with step tau.
    pub fn problem(&self, tau: f64) -> Result<FracProblem> {
        let p = &self.problem;
        let mut fp = FracProblem::new(p.alpha, p.t_final, p.m, p.k, tau)?
            .with_solver(self.discretization.solver_kind());
        if let Some(u0) = &p.initial {
            fp = fp.with_initial(u0.to_load());
        }
        if let Some(s) = &p.source {
            fp = fp.with_source(Source { g: s.g.to_profile(), f: s.f.to_load(), depth: s.depth });
        }
        if fp.initial.is_none() && fp.source.is_none() {
            return Err(Error::Config("problem needs initial data or a source".into()));
        }
        Ok(fp)
    }

    /// The ladder must halve strictly from level to level and have at least
    /// three levels.
    pub fn validate_ladder(&self) -> Result<()> {
        validate_ladder(&self.study.ladder)
    }
}

pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 3 {
        return Err(Error::Config(format!("ladder needs at least 3 levels, got {}", ladder.len())));
    }
    for w in ladder.windows(2) {
        if !(w[0] > 0.0) || ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::Config(format!("ladder must halve: {} -> {}", w[0], w[1])));
        }
    }
    Ok(())
}
