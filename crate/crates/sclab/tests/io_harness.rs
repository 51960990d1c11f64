use sclab::grid::{GridSpec, OperatorMatrix};
use sclab::harness::*;
use sclab::ineq::{grid_operator, InstanceGenerator};
use sclab::io;
use sclab::phase::PhaseSpaceField;
use sclab::Error;
use std::f64::consts::PI;
use std::process::Command;

const SMALL_HF: &str = r#"
experiment = "hf-evolve"
seed = 3
[grid]
n = 16
hbar = 0.25
[potential]
a = 0.5
kappa = 1.0
[init]
kind = "toeplitz_gaussian"
sigma_x = 0.6
sigma_xi = 0.5
[hf]
T = 0.02
dt = 0.01
"#;

fn config_error(text: &str) -> String {
    match ExperimentConfig::parse(text) {
        Err(Error::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn operator_dump_round_trip() {
    let g = GridSpec::line(16, 2.0 * PI, 0.125).unwrap();
    let mut rng = InstanceGenerator::rng(1);
    let op = grid_operator(&mut rng, &g, false);
    let mut buf = Vec::new();
    io::write_operator(&mut buf, &op).unwrap();
    assert_eq!(buf.len(), io::HEADER_LEN + 16 * 16 * 16);
    let back = io::read_operator(&mut buf.as_slice()).unwrap();
    assert_eq!(back.grid, op.grid);
    assert_eq!(back.matrix, op.matrix);
    // truncated payload and wrong magic are format errors
    assert!(matches!(io::read_operator(&mut &buf[..buf.len() - 8]), Err(Error::Format(_))));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(io::read_operator(&mut bad.as_slice()), Err(Error::Format(_))));
}

#[test]
fn field_dump_round_trip_via_files() {
    let g = GridSpec::line(16, 2.0 * PI, 0.125).unwrap();
    let f = PhaseSpaceField::from_fn(g, PhaseSpaceField::momentum_nodes(24, 0.1), |x, xi| (x - xi).cos()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.psf");
    io::save_field(&path, &f).unwrap();
    let back = io::load_field(&path).unwrap();
    assert_eq!(back.values, f.values);
    // nodes are rebuilt from (ξ_0, dξ)
    assert!(back.xi.iter().zip(&f.xi).all(|(a, b)| (a - b).abs() < 1e-15));
    let op = OperatorMatrix::identity(g);
    io::save_operator(&dir.path().join("i.op"), &op).unwrap();
    assert_eq!(io::load_operator(&dir.path().join("i.op")).unwrap().matrix, op.matrix);
}

#[test]
fn csv_helpers() {
    assert_eq!(io::csv(&["a", "b"], &[vec!["1".into(), "2".into()]]), "a,b\n1,2\n");
    assert_eq!(io::fmt_f64(0.1), "0.1");
    assert_eq!(io::fmt_f64(1e-300).parse::<f64>().unwrap(), 1e-300);
    let rows = [io::NormRow { name: "L2".into(), p: 2.0, weight_n: None, value: 1.5 }];
    assert_eq!(io::norm_table_csv(&rows), "name,p,weight_n,value\nL2,2,,1.5\n");
}

#[test]
fn config_errors_name_the_key() {
    assert!(config_error("experiment = \"nope\"").contains("experiment"));
    let exp = SMALL_HF.replace("dt = 0.01", "dt = -1.0");
    assert!(config_error(&exp).contains("hf.dt"));
    let exp = SMALL_HF.replace("kind = \"toeplitz_gaussian\"", "kind = \"blob\"");
    assert!(config_error(&exp).contains("init.kind"));
    let exp = SMALL_HF.replace("hbar = 0.25", "hbar = 0.25\nhbar_sweep = [0.1]");
    assert!(config_error(&exp).contains("grid.hbar"));
    assert!(config_error(&SMALL_HF.replace("[hf]\nT = 0.02\ndt = 0.01\n", "")).contains("hf"));
    // unknown keys are rejected rather than ignored
    assert!(config_error(&SMALL_HF.replace("a = 0.5", "a = 0.5\nalpha = 1")).contains("alpha"));
    let mf = "experiment = \"meanfield-compare\"\n[potential]\na = 0.5\nkappa = 1\n[meanfield]\nN = [9.0]\n";
    assert!(config_error(mf).contains("meanfield.N"));
}

#[test]
fn config_defaults() {
    let cfg = ExperimentConfig::parse(SMALL_HF).unwrap();
    let g = cfg.grid.as_ref().unwrap();
    assert_eq!((g.d, g.l), (1, 2.0 * PI));
    assert!(cfg.hf.as_ref().unwrap().exchange);
    assert_eq!(cfg.hbars().unwrap(), vec![0.25]);
}

#[test]
fn rate_fit_recovers_power_laws() {
    let x = [0.1, 0.05, 0.025, 0.0125];
    let e: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
    let f = RateFit::fit(&x, &e, 3).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-12);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    assert!((f.r2 - 1.0).abs() < 1e-12);
    assert!(f.slope_sigma < 1e-10);
    assert!(f.to_csv().starts_with("slope,slope_sigma,intercept,r2,points\n"));
    assert!(RateFit::fit(&x[..2], &e[..2], 0).is_err());
    assert!(RateFit::fit(&x, &[1.0, 0.0, 1.0, 1.0], 0).is_err());
    assert!(RateFit::fit(&[1.0; 3], &[1.0, 2.0, 3.0], 0).is_err());
}

#[test]
fn noisy_rate_fit_has_error_bar() {
    let x = [1.0, 0.5, 0.25, 0.125];
    let e = [1.0, 0.55, 0.24, 0.13];
    let f = RateFit::fit(&x, &e, 0).unwrap();
    assert!((f.slope - 1.0).abs() < 0.1);
    assert!(f.slope_sigma > 0.0 && f.r2 < 1.0);
}

#[test]
fn parallel_map_keeps_order() {
    let items: Vec<u32> = (0..17).collect();
    assert_eq!(parallel_map(&items, 4, |v| v * v), items.iter().map(|v| v * v).collect::<Vec<_>>());
}

#[test]
fn run_folder_and_determinism() {
    let cfg = ExperimentConfig::parse(SMALL_HF).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_config(&cfg, SMALL_HF, a.path()).unwrap();
    run_config(&cfg, SMALL_HF, b.path()).unwrap();
    assert!(ra.failed.is_none());
    assert_eq!(ra.outputs, vec!["diagnostics.csv".to_string()]);
    let read = |d: &std::path::Path| std::fs::read(d.join("diagnostics.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(std::fs::read_to_string(a.path().join("config.toml")).unwrap(), SMALL_HF);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"][0][1], sha256_file(&a.path().join("diagnostics.csv")).unwrap());
    assert_eq!(exit_code(&Ok(ra)), 0);
    assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
    assert_eq!(exit_code(&Err(Error::Abort("x".into()))), 3);
}

fn sclab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sclab"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, SMALL_HF).unwrap();
    let out = dir.path().join("run");
    let st = sclab().args(["hf-evolve", "--config"]).arg(&good).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("diagnostics.csv").exists());

    // subcommand and experiment disagree
    let st = sclab().args(["vlasov-evolve", "--config"]).arg(&good).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL_HF.replace("n = 16", "n = 12")).unwrap();
    let o = sclab().args(["hf-evolve", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));

    let missing = sclab().args(["hf-evolve", "--config", "/nonexistent.toml"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn cli_wigner_of_dump() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridSpec::line(16, 2.0 * PI, 0.25).unwrap();
    let op = OperatorMatrix::identity(g).scale(1.0 / 16.0);
    let input = dir.path().join("rho.op");
    io::save_operator(&input, &op).unwrap();
    let out = dir.path().join("w.psf");
    let st = sclab().arg("wigner").arg("--in").arg(&input).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let f = io::load_field(&out).unwrap();
    assert_eq!(f.values.len(), 16 * 16);
    let garbage = dir.path().join("junk.op");
    std::fs::write(&garbage, b"not an operator").unwrap();
    let st = sclab().arg("wigner").arg("--in").arg(&garbage).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn cli_ineq_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let st = sclab().args(["ineq-suite", "--seed", "2", "--trials", "3", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 13);
}
