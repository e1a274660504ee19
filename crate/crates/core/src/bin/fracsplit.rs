use clap::{Parser, Subcommand};
use fracsplit::config::StudyConfig;
use fracsplit::cq::cq_weights;
use fracsplit::fem::{export_csv, export_vtk};
use fracsplit::harness::{emit, run_space_study, run_time_study, solve_config, to_markdown, Format};
use fracsplit::special::mittag_leffler;
use fracsplit::Result;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fracsplit", version, about = "Splitting FEM solver for subdiffusion with nonsmooth data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve once on the base mesh and report the final state.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Spatial convergence study over the mesh ladder.
    ConvergeSpace {
        #[arg(long)]
        config: PathBuf,
    },
    /// Temporal convergence study over the step ladder.
    ConvergeTime {
        #[arg(long)]
        config: PathBuf,
    },
    /// BDF-k convolution quadrature weights of delta(zeta)^beta.
    Weights {
        #[arg(long)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Mittag-Leffler function E_{alpha,beta}(x) for real x.
    MlEval {
        #[arg(long)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn study(config: &Path, time: bool) -> Result<()> {
    let cfg = StudyConfig::load(config)?;
    let dir = base_dir(config);
    let report = if time { run_time_study(&cfg, &dir)? } else { run_space_study(&cfg, &dir)? };
    if let Some(p) = &cfg.output.csv {
        emit(&report, Format::Csv, &dir.join(p))?;
    }
    if let Some(p) = &cfg.output.markdown {
        emit(&report, Format::Markdown, &dir.join(p))?;
    }
    print!("{}", to_markdown(&report));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Solve { config } => {
            let cfg = StudyConfig::load(&config)?;
            let dir = base_dir(&config);
            let (space, sol) = solve_config(&cfg, &dir)?;
            let n = sol.n_steps();
            let u = sol.final_state()?;
            let norm = fracsplit::fem::error_norms(&u, &|_| 0.0, None).l2;
            println!("free dofs      {}", space.n_free());
            println!("steps          {n}");
            println!("t_final        {}", sol.time(n));
            println!("||u(T)||_L2    {norm:.15e}");
            println!("solver iters   {}", sol.iterations);
            if let Some(p) = &cfg.output.field {
                let p = dir.join(p);
                match p.extension().and_then(|e| e.to_str()) {
                    Some("vtk") => export_vtk(&u, &p)?,
                    _ => export_csv(&u, &p)?,
                }
            }
            Ok(())
        }
        Cmd::ConvergeSpace { config } => study(&config, false),
        Cmd::ConvergeTime { config } => study(&config, true),
        Cmd::Weights { k, beta, n, csv } => {
            let w = cq_weights(k, beta, n)?;
            let mut s = String::from("j,omega\n");
            for (j, v) in w.iter().enumerate() {
                let _ = writeln!(s, "{j},{v:e}");
            }
            match csv {
                Some(p) => std::fs::write(p, s)?,
                None => print!("{s}"),
            }
            Ok(())
        }
        Cmd::MlEval { alpha, beta, x } => {
            println!("{:.17e}", mittag_leffler(alpha, beta, x)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
