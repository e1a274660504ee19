use fracsplit::config::{DataSpec, MeshSpec, StrategyKind, StudyConfig, StudyKind};
use fracsplit::Error;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracsplit"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fracsplit-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

const CONFIG: &str = r#"
[problem]
alpha = 0.6
t_final = 1.0
m = 1
k = 2
initial = { kind = "dirac", point = [0.5001, 0.5001] }

[discretization]
r = 2
mesh = { kind = "square", n = 2 }
tau = 0.125
strategy = "dirac_corrected"

[study]
kind = "space"
ladder = [0.5, 0.25, 0.125]

[output]
csv = "out/study.csv"
markdown = "study.md"
field = "u.vtk"
"#;

#[test]
fn config_parses_and_round_trips() {
    let cfg = StudyConfig::from_toml(CONFIG).unwrap();
    assert_eq!(cfg.problem.initial, Some(DataSpec::Dirac { point: [0.5001, 0.5001] }));
    assert_eq!(cfg.discretization.mesh, MeshSpec::Square { n: 2 });
    assert_eq!(cfg.discretization.strategy, StrategyKind::DiracCorrected);
    assert_eq!(cfg.study.kind, StudyKind::Space);
    assert!((cfg.discretization.gamma() - 0.4).abs() < 1e-15);
    assert_eq!(StudyConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    cfg.validate_ladder().unwrap();
    let p = cfg.problem(0.125).unwrap();
    assert_eq!(p.n_steps(), 8);
}

#[test]
fn config_errors() {
    let unknown = CONFIG.replace("t_final = 1.0", "t_final = 1.0\nbogus = 3");
    assert!(matches!(StudyConfig::from_toml(&unknown), Err(Error::Config(_))));
    let no_data = CONFIG.replace("initial = { kind = \"dirac\", point = [0.5001, 0.5001] }\n", "");
    let cfg = StudyConfig::from_toml(&no_data).unwrap();
    assert!(matches!(cfg.problem(0.125), Err(Error::Config(_))));
    let bad_tau = StudyConfig::from_toml(CONFIG).unwrap();
    assert!(matches!(bad_tau.problem(0.3), Err(Error::DomainError(_))));
}

#[test]
fn ml_eval_and_weights_commands() {
    let out = bin().args(["ml-eval", "--alpha", "0.5", "--beta", "1", "--x", "-1"]).output().unwrap();
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 0.42758357615580700441).abs() < 1e-14);

    let out = bin().args(["ml-eval", "--alpha", "0.5", "--beta", "1", "--x", "1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));

    let out = bin().args(["weights", "--k", "1", "--beta", "-1", "--n", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let w: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // (1 - z)^{-1} has all weights one.
    assert_eq!(w, vec![1.0; 4]);
}

#[test]
fn study_and_solve_commands_write_outputs() {
    let dir = scratch_dir("study");
    std::fs::create_dir_all(dir.join("out")).unwrap();
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = bin().arg("converge-space").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("theor. conv."));
    let csv = std::fs::read_to_string(dir.join("out/study.csv")).unwrap();
    assert_eq!(fracsplit::harness::read_csv(&csv).unwrap().len(), 2);
    assert!(dir.join("study.md").exists());

    let out = bin().arg("solve").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let vtk = std::fs::read_to_string(dir.join("u.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile"));

    let out = bin().arg("converge-time").arg("--config").arg(dir.join("missing.toml")).output().unwrap();
    assert!(!out.status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}
