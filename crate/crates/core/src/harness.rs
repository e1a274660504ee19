//! Convergence studies by Cauchy differences between adjacent levels of a
//! mesh or step-size ladder, with optional errors against the series oracle.

use crate::config::{validate_ladder, StrategyKind, StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::fem::{build_space, difference_norms, error_norms, FeSpace, Field, LoadSpec};
use crate::mesh::{graded_refine, red_refine, GradingSpec, TriMesh};
use crate::spectral::reference_spectral;
use crate::splitting::{plain_parts, solve, DiracCorrection, FracProblem, SplitSolution, Strategy};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

/// One Cauchy difference between level j and j + 1, labelled by level j.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub level: usize,
    /// h_j or tau_j.
    pub size: f64,
    pub total: f64,
    pub total_order: Option<f64>,
    pub regular: Option<f64>,
    pub regular_order: Option<f64>,
    pub singular: Option<f64>,
    pub singular_order: Option<f64>,
    /// L2 error of level j against the series oracle.
    pub oracle: Option<f64>,
    pub oracle_order: Option<f64>,
    /// Solve time of level j; reported in markdown only.
    pub wall_seconds: f64,
    pub iterations: usize,
    /// E is below 100 times the linear-solver tolerance relative to the
    /// solution norm, so its order is not meaningful.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub kind: StudyKind,
    pub alpha: f64,
    pub m: usize,
    pub k: usize,
    pub r: usize,
    pub strategy: String,
    pub rows: Vec<ReportRow>,
    /// Predicted order of the total (m = 0) or regular part.
    pub theoretical: Option<f64>,
    pub theoretical_singular: Option<f64>,
    pub wall_seconds: f64,
}

/// -(log E_{j+1} - log E_j) / log 2; none for the first entry or when
/// either value is not positive.
pub fn observed_orders(e: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; e.len()];
    for j in 1..e.len() {
        if e[j] > 0.0 && e[j - 1] > 0.0 && e[j].is_finite() && e[j - 1].is_finite() {
            out[j] = Some(-(e[j].ln() - e[j - 1].ln()) / std::f64::consts::LN_2);
        }
    }
    out
}

struct LevelFields {
    size: f64,
    total: Field,
    regular: Field,
    singular: Field,
    oracle: Option<f64>,
    wall: f64,
    iterations: usize,
}

fn data_kind(problem: &FracProblem) -> Option<&LoadSpec> {
    problem.initial.as_ref().or(problem.source.as_ref().map(|s| &s.f))
}

fn theory(cfg: &StudyConfig, problem: &FracProblem, kind: StudyKind, strategy: StrategyKind) -> (Option<f64>, Option<f64>) {
    let r = cfg.discretization.r as f64;
    if kind == StudyKind::Time {
        return (Some(problem.k as f64), None);
    }
    let m = problem.m as f64;
    let cap = match data_kind(problem) {
        Some(LoadSpec::Dirac(_)) => 2.0 * m + 1.0,
        Some(_) => 2.0 * m + 2.0,
        None => return (None, None),
    };
    let main = if problem.alpha == 1.0 && problem.m == 0 { r + 1.0 } else { cap.min(r + 1.0) };
    let sing = match strategy {
        _ if problem.m == 0 => None,
        StrategyKind::DiracCorrected | StrategyKind::GradedPlain => Some(r + 1.0),
        StrategyKind::Plain => match data_kind(problem) {
            Some(LoadSpec::Density(_)) => Some(2.0f64.min(r + 1.0)),
            _ => None,
        },
    };
    (Some(main), sing)
}

fn ladder_from(base: TriMesh, h_base: f64, first: f64) -> Result<Arc<TriMesh>> {
    let ratio = h_base / first;
    let s = ratio.log2().round();
    if s < 0.0 || (2f64.powf(s) - ratio).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!(
            "mesh size {first} is not the base size {h_base} halved a whole number of times"
        )));
    }
    let mut mesh = base;
    for _ in 0..s as usize {
        mesh = red_refine(&mesh);
    }
    Ok(Arc::new(mesh))
}

fn grading_centers(problem: &FracProblem) -> Result<Vec<[f64; 2]>> {
    let mut centers = Vec::new();
    for load in [problem.initial.as_ref(), problem.source.as_ref().map(|s| &s.f)].into_iter().flatten() {
        match load {
            LoadSpec::Line(p, q) => {
                centers.push(*p);
                centers.push(*q);
            }
            _ => {
                return Err(Error::StrategyMismatch(
                    "graded_plain studies need line-mass data in every term".into(),
                ))
            }
        }
    }
    Ok(centers)
}

struct StrategyFactory {
    kind: StrategyKind,
    correction: Option<Arc<DiracCorrection>>,
    centers: Vec<[f64; 2]>,
    gamma: f64,
    r: usize,
    graded: Option<Arc<TriMesh>>,
}

impl StrategyFactory {
    fn new(cfg: &StudyConfig, problem: &FracProblem, base: &TriMesh) -> Result<Self> {
        let kind = cfg.discretization.strategy;
        let mut f = StrategyFactory {
            kind,
            correction: None,
            centers: Vec::new(),
            gamma: cfg.discretization.gamma(),
            r: cfg.discretization.r,
            graded: None,
        };
        match kind {
            StrategyKind::Plain => {}
            StrategyKind::DiracCorrected => match data_kind(problem) {
                Some(LoadSpec::Dirac(x0)) => {
                    f.correction = Some(Arc::new(DiracCorrection::for_mesh(base, *x0, problem.m.max(1))?));
                }
                _ => return Err(Error::StrategyMismatch("dirac_corrected needs point-mass data".into())),
            },
            StrategyKind::GradedPlain => f.centers = grading_centers(problem)?,
        }
        Ok(f)
    }

    /// Strategy for the next level; graded meshes refine the previous graded
    /// level so that the graded ladder stays nested.
    fn next(&mut self, working: &Arc<TriMesh>, h: f64) -> Result<Strategy> {
        Ok(match self.kind {
            StrategyKind::Plain => Strategy::Plain,
            StrategyKind::DiracCorrected => Strategy::DiracCorrected(self.correction.clone().unwrap()),
            StrategyKind::GradedPlain => {
                let start = match &self.graded {
                    None => (**working).clone(),
                    Some(g) => red_refine(g),
                };
                let spec = GradingSpec::new(self.centers.clone(), self.gamma, h);
                let g = Arc::new(graded_refine(&start, &spec)?);
                self.graded = Some(g.clone());
                Strategy::GradedPlain(build_space(g, self.r)?)
            }
        })
    }
}

fn level_fields(
    space: &Arc<FeSpace>,
    problem: &FracProblem,
    strategy: &Strategy,
    sol: &SplitSolution,
) -> Result<(Field, Field, Field)> {
    let n = sol.n_steps();
    let total = sol.recombine(n)?;
    let regular = Field::from(sol.regular[n].clone());
    let singular = match strategy {
        Strategy::GradedPlain(graded) => {
            let mut parts = Vec::new();
            for load in [problem.initial.as_ref(), problem.source.as_ref().map(|s| &s.f)].into_iter().flatten() {
                parts.extend(plain_parts(graded, load, problem.m)?);
            }
            let mut acc = Field::from(crate::fem::FeFunction::zero(graded.clone()));
            for (c, f) in sol.coefficients[n].iter().zip(parts) {
                acc.add_scaled(*c, &Field::from(f));
            }
            acc
        }
        _ => sol.singular_sum(n)?,
    };
    let _ = space;
    Ok((total, regular, singular))
}

fn run_level(
    cfg: &StudyConfig,
    space: &Arc<FeSpace>,
    problem: &FracProblem,
    strategy: &Strategy,
    size: f64,
    oracle: Option<&crate::spectral::SpectralSnapshot>,
) -> Result<LevelFields> {
    let start = Instant::now();
    let sol = solve(space, problem, strategy)?;
    let (total, regular, singular) = level_fields(space, problem, strategy, &sol)?;
    let wall = start.elapsed().as_secs_f64();
    let oracle = match oracle {
        Some(snap) => {
            let f = |p: [f64; 2]| snap.value(p).unwrap_or(f64::NAN);
            Some(error_norms(&total, &f, None).l2)
        }
        None => None,
    };
    let _ = cfg;
    Ok(LevelFields { size, total, regular, singular, oracle, wall, iterations: sol.iterations })
}

fn assemble_report(
    cfg: &StudyConfig,
    problem: &FracProblem,
    kind: StudyKind,
    levels: &[LevelFields],
    wall: f64,
) -> Result<ConvergenceReport> {
    let split = problem.m > 0;
    let mut total = Vec::new();
    let mut regular = Vec::new();
    let mut singular = Vec::new();
    for w in levels.windows(2) {
        total.push(difference_norms(&w[0].total, &w[1].total)?.l2);
        if split {
            regular.push(difference_norms(&w[0].regular, &w[1].regular)?.l2);
            singular.push(difference_norms(&w[0].singular, &w[1].singular)?.l2);
        }
    }
    let oracle: Vec<Option<f64>> = levels[..levels.len() - 1].iter().map(|l| l.oracle).collect();
    let oracle_orders = if oracle.iter().all(|o| o.is_some()) {
        observed_orders(&oracle.iter().map(|o| o.unwrap()).collect::<Vec<_>>())
    } else {
        vec![None; oracle.len()]
    };
    let to = observed_orders(&total);
    let ro = observed_orders(&regular);
    let so = observed_orders(&singular);
    let tol = cfg.discretization.solver_tolerance();
    let scale = levels.last().map(|l| crate::fem::error_norms(&l.total, &|_| 0.0, None).l2).unwrap_or(1.0);
    let floor = 100.0 * tol * scale.max(f64::MIN_POSITIVE);
    let rows = (0..total.len())
        .map(|j| {
            let unreliable = total[j] < floor || (split && regular[j] < floor);
            ReportRow {
                level: j,
                size: levels[j].size,
                total: total[j],
                total_order: if unreliable { None } else { to[j] },
                regular: regular.get(j).copied(),
                regular_order: ro.get(j).copied().flatten(),
                singular: singular.get(j).copied(),
                singular_order: so.get(j).copied().flatten(),
                oracle: oracle[j],
                oracle_order: oracle_orders[j],
                wall_seconds: levels[j].wall,
                iterations: levels[j].iterations,
                unreliable,
            }
        })
        .collect();
    let (theoretical, theoretical_singular) = theory(cfg, problem, kind, cfg.discretization.strategy);
    Ok(ConvergenceReport {
        kind,
        alpha: problem.alpha,
        m: problem.m,
        k: problem.k,
        r: cfg.discretization.r,
        strategy: cfg.discretization.strategy.name().to_string(),
        rows,
        theoretical,
        theoretical_singular,
        wall_seconds: wall,
    })
}

/// Mesh ladder h_j = h_0 / 2^j by red refinement at the fixed step tau_ref.
pub fn run_space_study(cfg: &StudyConfig, base_dir: &Path) -> Result<ConvergenceReport> {
    let start = Instant::now();
    cfg.validate_ladder()?;
    let ladder = &cfg.study.ladder;
    let (base, hb) = cfg.discretization.mesh.build(base_dir)?;
    let tau = cfg.study.tau_ref.unwrap_or(cfg.discretization.tau);
    let problem = cfg.problem(tau)?;
    let mut mesh = ladder_from(base, hb, ladder[0])?;
    let mut factory = StrategyFactory::new(cfg, &problem, &mesh)?;
    let oracle = match cfg.study.oracle_truncation {
        Some(p) => Some(reference_spectral(&mesh, &problem, p)?.snapshot(problem.t_final)?),
        None => None,
    };
    let mut levels = Vec::with_capacity(ladder.len());
    for (j, &h) in ladder.iter().enumerate() {
        if j > 0 {
            mesh = Arc::new(red_refine(&mesh));
        }
        let space = build_space(mesh.clone(), cfg.discretization.r)?;
        let strategy = factory.next(&mesh, h)?;
        levels.push(run_level(cfg, &space, &problem, &strategy, h, oracle.as_ref())?);
        log::info!("level {j}: h = {h}, {} free dofs, {:.2} s", space.n_free(), levels[j].wall);
    }
    assemble_report(cfg, &problem, StudyKind::Space, &levels, start.elapsed().as_secs_f64())
}

/// Step ladder tau_j = tau_0 / 2^j on the fixed mesh h_ref.
pub fn run_time_study(cfg: &StudyConfig, base_dir: &Path) -> Result<ConvergenceReport> {
    let start = Instant::now();
    cfg.validate_ladder()?;
    let ladder = &cfg.study.ladder;
    let (base, hb) = cfg.discretization.mesh.build(base_dir)?;
    let h = cfg.study.h_ref.unwrap_or(hb);
    let mesh = ladder_from(base, hb, h)?;
    let space = build_space(mesh.clone(), cfg.discretization.r)?;
    let first = cfg.problem(ladder[0])?;
    let mut factory = StrategyFactory::new(cfg, &first, &mesh)?;
    let strategy = factory.next(&mesh, h)?;
    let oracle = match cfg.study.oracle_truncation {
        Some(p) => Some(reference_spectral(&mesh, &first, p)?.snapshot(first.t_final)?),
        None => None,
    };
    let mut levels = Vec::with_capacity(ladder.len());
    for (j, &tau) in ladder.iter().enumerate() {
        let problem = cfg.problem(tau)?;
        levels.push(run_level(cfg, &space, &problem, &strategy, tau, oracle.as_ref())?);
        log::info!("level {j}: tau = {tau}, {:.2} s", levels[j].wall);
    }
    assemble_report(cfg, &first, StudyKind::Time, &levels, start.elapsed().as_secs_f64())
}

pub fn run_study(cfg: &StudyConfig, base_dir: &Path) -> Result<ConvergenceReport> {
    match cfg.study.kind {
        StudyKind::Space => run_space_study(cfg, base_dir),
        StudyKind::Time => run_time_study(cfg, base_dir),
    }
}

/// A single solve on the base mesh with step discretization.tau.
pub fn solve_config(cfg: &StudyConfig, base_dir: &Path) -> Result<(Arc<FeSpace>, SplitSolution)> {
    let (base, hb) = cfg.discretization.mesh.build(base_dir)?;
    let mesh = Arc::new(base);
    let problem = cfg.problem(cfg.discretization.tau)?;
    let space = build_space(mesh.clone(), cfg.discretization.r)?;
    let mut factory = StrategyFactory::new(cfg, &problem, &mesh)?;
    let strategy = factory.next(&mesh, hb)?;
    let sol = solve(&space, &problem, &strategy)?;
    Ok((space, sol))
}

const CSV_HEADER: &str =
    "level,size,E_total,order_total,E_regular,order_regular,E_singular,order_singular,E_oracle,order_oracle,iterations,unreliable";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Deterministic CSV: every value in shortest round-trip form, no timings.
pub fn to_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{},{},{},{},{},{},{},{},{}",
            r.level,
            r.size,
            r.total,
            opt(r.total_order),
            opt(r.regular),
            opt(r.regular_order),
            opt(r.singular),
            opt(r.singular_order),
            opt(r.oracle),
            opt(r.oracle_order),
            r.iterations,
            r.unreliable
        );
    }
    s
}

/// Parses rows written by `to_csv`.
pub fn read_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(Error::ParseError { line: 1, msg: "unexpected header".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::ParseError { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(err("expected 12 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        let maybe = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        rows.push(ReportRow {
            level: f[0].parse().map_err(|_| err("bad level"))?,
            size: num(f[1])?,
            total: num(f[2])?,
            total_order: maybe(f[3])?,
            regular: maybe(f[4])?,
            regular_order: maybe(f[5])?,
            singular: maybe(f[6])?,
            singular_order: maybe(f[7])?,
            oracle: maybe(f[8])?,
            oracle_order: maybe(f[9])?,
            wall_seconds: 0.0,
            iterations: f[10].parse().map_err(|_| err("bad iteration count"))?,
            unreliable: f[11].parse().map_err(|_| err("bad flag"))?,
        });
    }
    Ok(rows)
}

fn size_label(x: f64) -> String {
    let inv = 1.0 / x;
    if (inv - inv.round()).abs() < 1e-9 * inv {
        format!("1/{}", inv.round() as u64)
    } else {
        format!("{x:.3e}")
    }
}

fn e2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2e}")).unwrap_or_else(|| "-".into())
}

fn o2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

/// Markdown table with a theoretical-order footer row.
pub fn to_markdown(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    let axis = match report.kind {
        StudyKind::Space => "h",
        StudyKind::Time => "tau",
    };
    let _ = writeln!(
        s,
        "alpha = {}, m = {}, k = {}, r = {}, strategy = {}, wall = {:.1} s\n",
        report.alpha, report.m, report.k, report.r, report.strategy, report.wall_seconds
    );
    let split = report.m > 0;
    let oracle = report.rows.iter().any(|r| r.oracle.is_some());
    let mut head = format!("| {axis} | E total | conv. |");
    let mut rule = String::from("|---|---|---|");
    if split {
        head.push_str(" E regular | conv. | E singular | conv. |");
        rule.push_str("---|---|---|---|");
    }
    if oracle {
        head.push_str(" E oracle | conv. |");
        rule.push_str("---|---|");
    }
    head.push_str(" iterations | wall [s] |");
    rule.push_str("---|---|");
    let _ = writeln!(s, "{head}\n{rule}");
    for r in &report.rows {
        let flag = if r.unreliable { " (floor)" } else { "" };
        let mut line = format!("| {} | {:.2e}{flag} | {} |", size_label(r.size), r.total, o2(r.total_order));
        if split {
            let _ = write!(
                line,
                " {} | {} | {} | {} |",
                e2(r.regular),
                o2(r.regular_order),
                e2(r.singular),
                o2(r.singular_order)
            );
        }
        if oracle {
            let _ = write!(line, " {} | {} |", e2(r.oracle), o2(r.oracle_order));
        }
        let _ = write!(line, " {} | {:.2} |", r.iterations, r.wall_seconds);
        let _ = writeln!(s, "{line}");
    }
    let mut foot = format!("| theor. conv. | | {} |", o2(if split { None } else { report.theoretical }));
    if split {
        let _ = write!(foot, " | {} | | {} |", o2(report.theoretical), o2(report.theoretical_singular));
    }
    if oracle {
        foot.push_str(" | |");
    }
    foot.push_str(" | |");
    let _ = writeln!(s, "{foot}");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

pub fn emit(report: &ConvergenceReport, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(report),
        Format::Markdown => to_markdown(report),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Ladder check shared with the configuration.
pub fn check_ladder(ladder: &[f64]) -> Result<()> {
    validate_ladder(ladder)
}
