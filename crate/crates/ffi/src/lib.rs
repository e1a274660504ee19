//! C ABI over the fracsplit solver.
//!
//! Every fallible call returns an `FsStatus`; on failure the message is
//! available from `fs_last_error` on the same thread until the next failing
//! call. Handles are opaque and owned by the caller, who releases them with
//! the matching `*_free`. Panics never cross the boundary.

use fracsplit::config::StudyConfig;
use fracsplit::fem::{Field, FeSpace};
use fracsplit::harness::{run_study, solve_config, to_csv, ConvergenceReport};
use fracsplit::mesh::{red_refine, structured_square, write_msh, TriMesh};
use fracsplit::splitting::SplitSolution;
use fracsplit::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    /// A pointer argument was null or a string was not UTF-8.
    InvalidArgument = 1,
    /// Argument outside the mathematical domain of the operation.
    Domain = 2,
    /// Invalid or inconsistent configuration.
    Config = 3,
    /// File system failure or malformed input file.
    Io = 4,
    /// Mesh construction or refinement failed.
    Mesh = 5,
    /// A linear solve or quadrature failed.
    Numerical = 6,
    /// Index past the end of a collection.
    OutOfRange = 7,
    /// Internal error; the library state is unchanged.
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> FsStatus {
    match e {
        Error::PoleArgument(_)
        | Error::Overflow(_)
        | Error::DomainError(_)
        | Error::UnsupportedOrder(_)
        | Error::UnsupportedDegree(_)
        | Error::PointOutsideDomain(..)
        | Error::SegmentOutsideDomain
        | Error::SingularAtZero
        | Error::UnsupportedDomain => FsStatus::Domain,
        Error::Config(_) | Error::StrategyMismatch(_) => FsStatus::Config,
        Error::Io(_) | Error::ParseError { .. } => FsStatus::Io,
        Error::NonPlanar(_) | Error::NonConforming(_) | Error::BudgetExceeded(_) | Error::NonNestedMeshes => {
            FsStatus::Mesh
        }
        Error::BranchCutViolation
        | Error::NotConverged { .. }
        | Error::NotPositiveDefinite(_)
        | Error::QuadratureFailure(_) => FsStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (FsStatus, String)>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (FsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_arg(name: &str) -> (FsStatus, String) {
    (FsStatus::InvalidArgument, format!("{name} is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (FsStatus, String)> {
    p.as_mut().ok_or_else(|| null_arg(name))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (FsStatus, String)> {
    p.as_ref().ok_or_else(|| null_arg(name))
}

unsafe fn in_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (FsStatus, String)> {
    if p.is_null() {
        return Err(null_arg(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FsStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Gamma function at a real non-pole argument.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_gamma(x: f64, out: *mut f64) -> FsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = fracsplit::special::gamma(x).map_err(lib_err)?;
        Ok(())
    })
}

/// Two-parameter Mittag-Leffler function E_{alpha,beta}(x) for x <= 0.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_mittag_leffler(alpha: f64, beta: f64, x: f64, out: *mut f64) -> FsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = fracsplit::special::mittag_leffler(alpha, beta, x).map_err(lib_err)?;
        Ok(())
    })
}

/// Convolution weights omega_0..=omega_n of delta_k(zeta)^beta. `out` must
/// hold n + 1 values.
///
/// # Safety
/// `out` must be valid for `n + 1` writes.
#[no_mangle]
pub unsafe extern "C" fn fs_cq_weights(k: usize, beta: f64, n: usize, out: *mut f64) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let w = fracsplit::cq::cq_weights(k, beta, n).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, n + 1).copy_from_slice(&w);
        Ok(())
    })
}

/// Triangulation of the unit square.
pub struct FsMesh(TriMesh);

/// Uniform n x n square grid, each cell split by its main diagonal.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_mesh_square(n: usize, out: *mut *mut FsMesh) -> FsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if n == 0 {
            return Err((FsStatus::Domain, "n must be positive".into()));
        }
        *out = Box::into_raw(Box::new(FsMesh(structured_square(n))));
        Ok(())
    })
}

/// Red refinement: every triangle split into four congruent children.
///
/// # Safety
/// `mesh` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_mesh_refine(mesh: *const FsMesh, out: *mut *mut FsMesh) -> FsStatus {
    guard(|| {
        let mesh = in_ref(mesh, "mesh")?;
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(FsMesh(red_refine(&mesh.0))));
        Ok(())
    })
}

/// Number of vertices; 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_mesh_vertices(mesh: *const FsMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n_vertices())
}

/// Number of triangles; 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_mesh_triangles(mesh: *const FsMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n_triangles())
}

/// Writes the mesh as Gmsh MSH 2.2 ASCII.
///
/// # Safety
/// `mesh` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_mesh_write_msh(mesh: *const FsMesh, path: *const c_char) -> FsStatus {
    guard(|| {
        let mesh = in_ref(mesh, "mesh")?;
        let path = in_str(path, "path")?;
        write_msh(&mesh.0, Path::new(path)).map_err(lib_err)
    })
}

/// # Safety
/// `mesh` must be null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_mesh_free(mesh: *mut FsMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Parsed study configuration.
pub struct FsConfig(StudyConfig);

/// Parses a TOML study configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_config_parse(toml: *const c_char, out: *mut *mut FsConfig) -> FsStatus {
    guard(|| {
        let text = in_str(toml, "toml")?;
        let out = out_ref(out, "out")?;
        let cfg = StudyConfig::from_toml(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FsConfig(cfg)));
        Ok(())
    })
}

/// Reads a TOML study configuration from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_config_load(path: *const c_char, out: *mut *mut FsConfig) -> FsStatus {
    guard(|| {
        let path = in_str(path, "path")?;
        let out = out_ref(out, "out")?;
        let cfg = StudyConfig::load(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FsConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_config_free(cfg: *mut FsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Final state of a single solve.
pub struct FsSolution {
    space: Arc<FeSpace>,
    solution: SplitSolution,
    total: Field,
}

/// Solves on the base mesh with step `discretization.tau`. Relative paths
/// in the configuration resolve against `base_dir`, which may be null for
/// the working directory.
///
/// # Safety
/// `cfg` must be a live handle; `base_dir` null or a NUL-terminated string;
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_solve(
    cfg: *const FsConfig,
    base_dir: *const c_char,
    out: *mut *mut FsSolution,
) -> FsStatus {
    guard(|| {
        let cfg = in_ref(cfg, "cfg")?;
        let base = if base_dir.is_null() { "." } else { in_str(base_dir, "base_dir")? };
        let out = out_ref(out, "out")?;
        let (space, solution) = solve_config(&cfg.0, Path::new(base)).map_err(lib_err)?;
        let total = solution.final_state().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FsSolution { space, solution, total }));
        Ok(())
    })
}

/// Number of time steps of the solve.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_solution_steps(sol: *const FsSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.solution.n_steps())
}

/// Number of free degrees of freedom of the finite element space.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_solution_dofs(sol: *const FsSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.space.n_free())
}

/// Recombined solution at the final time, evaluated at (x, y).
///
/// # Safety
/// `sol` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_solution_value(sol: *const FsSolution, x: f64, y: f64, out: *mut f64) -> FsStatus {
    guard(|| {
        let sol = in_ref(sol, "sol")?;
        let out = out_ref(out, "out")?;
        *out = sol
            .total
            .value_at([x, y])
            .ok_or_else(|| lib_err(Error::PointOutsideDomain(x, y)))?;
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_solution_free(sol: *mut FsSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Result of a convergence study.
pub struct FsReport(ConvergenceReport);

/// One Cauchy difference of a study. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FsReportRow {
    pub level: usize,
    pub size: f64,
    pub total: f64,
    pub total_order: f64,
    pub regular: f64,
    pub regular_order: f64,
    pub singular: f64,
    pub singular_order: f64,
    /// Nonzero when the difference is below the linear-solver floor.
    pub unreliable: i32,
}

/// Runs the space or time study described by the configuration.
///
/// # Safety
/// `cfg` must be a live handle; `base_dir` null or a NUL-terminated string;
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_study_run(
    cfg: *const FsConfig,
    base_dir: *const c_char,
    out: *mut *mut FsReport,
) -> FsStatus {
    guard(|| {
        let cfg = in_ref(cfg, "cfg")?;
        let base = if base_dir.is_null() { "." } else { in_str(base_dir, "base_dir")? };
        let out = out_ref(out, "out")?;
        let rep = run_study(&cfg.0, Path::new(base)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FsReport(rep)));
        Ok(())
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `rep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_report_rows(rep: *const FsReport) -> usize {
    rep.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Copies row `i` into `out`.
///
/// # Safety
/// `rep` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_report_row(rep: *const FsReport, i: usize, out: *mut FsReportRow) -> FsStatus {
    guard(|| {
        let rep = in_ref(rep, "rep")?;
        let out = out_ref(out, "out")?;
        let row = rep
            .0
            .rows
            .get(i)
            .ok_or_else(|| (FsStatus::OutOfRange, format!("row {i} of {}", rep.0.rows.len())))?;
        let v = |x: Option<f64>| x.unwrap_or(f64::NAN);
        *out = FsReportRow {
            level: row.level,
            size: row.size,
            total: row.total,
            total_order: v(row.total_order),
            regular: v(row.regular),
            regular_order: v(row.regular_order),
            singular: v(row.singular),
            singular_order: v(row.singular_order),
            unreliable: row.unreliable as i32,
        };
        Ok(())
    })
}

/// The report as deterministic CSV; release with `fs_string_free`.
///
/// # Safety
/// `rep` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fs_report_csv(rep: *const FsReport, out: *mut *mut c_char) -> FsStatus {
    guard(|| {
        let rep = in_ref(rep, "rep")?;
        let out = out_ref(out, "out")?;
        *out = CString::new(to_csv(&rep.0)).expect("CSV has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `rep` must be null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_report_free(rep: *mut FsReport) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}
