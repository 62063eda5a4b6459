//! End-to-end runs of the `resolvent-probe` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coupled_damping::cli::{parse_config, read_sweep_csv};
use coupled_damping::resolvent_probe::{sweep, SweepParams};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_resolvent-probe");

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn config_text(mu: f64, theta: f64, beta: f64, modes: usize) -> String {
    format!(
        "# test system\nalpha = 1\nbeta = {beta}\ngamma = 1\nmu = {mu}\ntheta = {theta}\n\
         spectrum.kind = dirichlet_1d\nspectrum.length = 3.141592653589793\nspectrum.modes = {modes}\n"
    )
}

fn run(args: &[&str], config: &Path) -> Output {
    Command::new(BIN).args(args).arg("--config").arg(config).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn classify_kelvin_voigt_is_analytic_with_plot() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "kv.cfg", &config_text(1.0, 1.0, 0.5, 2000));
    let svg = dir.path().join("sweep.svg");
    let o = run(&["classify", "--plot", svg.to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.lines().any(|l| l == "verdict=Analytic"), "{report}");
    let keys: Vec<&str> = report.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(
        keys,
        ["verdict", "s", "delta", "fitted_slope", "intercept", "r_squared", "window_lo", "window_hi", "tolerance"]
    );
    assert!(report.contains("delta=none"));
    let plot = fs::read_to_string(svg).unwrap();
    assert!(plot.starts_with("<svg") && plot.matches("<polyline").count() == 3);
}

#[test]
fn sweep_two_points_and_csv_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "a.cfg", &config_text(0.25, 0.5, 0.5, 500));
    let o = run(&["sweep", "--points", "2"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "lambda,resolvent_norm,argmax_omega,sigma_min");

    let out = dir.path().join("sweep.csv");
    let o = run(&["sweep", "--points", "17", "--lambda-min", "5", "--lambda-max", "5000", "--out", out.to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let rows = read_sweep_csv(&out).unwrap();
    let rc = parse_config(&cfg).unwrap();
    let lib = sweep(&rc.system, &SweepParams { lambda_min: 5.0, lambda_max: 5000.0, n_points: 17, ..SweepParams::default() })
        .unwrap();
    assert_eq!(rows.len(), 17);
    for (row, s) in rows.iter().zip(&lib.samples) {
        for (got, want) in row.iter().zip([s.lambda, s.norm, s.argmax_omega, s.sigma_min]) {
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
        }
    }
    let again = run(&["sweep", "--points", "17", "--lambda-min", "5", "--lambda-max", "5000"], &cfg);
    assert_eq!(stdout(&again), fs::read_to_string(&out).unwrap());
}

#[test]
fn oracle_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "o.cfg", &config_text(0.3, 0.6, 0.5, 64));
    let o = run(&["oracle"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "result=pass"), "{text}");
    let dev: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max_deviation="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev < 1e-8);
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let zero_beta = write_config(&dir, "b.cfg", &config_text(0.25, 0.5, 0.0, 10));
    let o = run(&["hypotheses"], &zero_beta);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonzero"));

    let noncoercive = write_config(&dir, "c.cfg", &config_text(0.5, 0.5, 2.0, 10));
    let o = run(&["hypotheses"], &noncoercive);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("coercivity"));

    let missing = write_config(&dir, "m.cfg", "alpha = 1\n");
    let o = run(&["sweep"], &missing);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing required key"));

    let o = Command::new(BIN).arg("sweep").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(BIN).args(["explode"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn too_few_fit_points_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "f.cfg", &config_text(0.5, 0.5, 0.5, 100));
    let o = run(&["classify", "--points", "2"], &cfg);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn effective_config_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "e.cfg", &format!("{}symbol.a1 = 1,1\n", config_text(0.2, 0.7, -0.4, 50)));
    let o = run(&["hypotheses"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let echoed: String = stderr(&o).lines().filter_map(|l| l.strip_prefix("# ")).map(|l| format!("{l}\n")).collect();
    let echo_path = write_config(&dir, "echo.cfg", &echoed);
    assert_eq!(parse_config(&echo_path).unwrap(), parse_config(&cfg).unwrap());
    assert!(stdout(&o).contains("coercive=true"));
}

#[test]
fn witness_evolve_portrait_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "w.cfg", &config_text(0.25, 0.25, 0.5, 1000));

    let o = run(&["witness", "--points", "6"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "omega,lambda,abs_a,abs_c,residual_norm,scaled_value");
    assert_eq!(text.lines().count(), 7);
    let err = stderr(&o);
    assert!(err.contains("lower_bound_holds=6/6"), "{err}");
    assert!(err.contains("predicted_plateau="));

    let o = run(&["evolve", "--steps", "11", "--t-max", "2"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "t,energy_norm,generator_norm");
    let energy: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(energy.len(), 11);
    assert!((energy[0] - 1.0).abs() < 1e-14);
    assert!(energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));

    let o = run(&["portrait", "--mode-start", "3", "--mode-end", "4"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "omega,re,im");
    assert_eq!(text.lines().count(), 5);
    let o = run(&["portrait", "--mode-start", "4", "--mode-end", "4"], &cfg);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_cap_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "t.cfg", &config_text(0.5, 0.5, 0.5, 300));
    let one = Command::new(BIN)
        .env("RESOLVENT_PROBE_THREADS", "1")
        .args(["sweep", "--points", "9", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    let many = run(&["sweep", "--points", "9"], &cfg);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, many.stdout);
    let bad = Command::new(BIN)
        .env("RESOLVENT_PROBE_THREADS", "zero")
        .args(["sweep", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
