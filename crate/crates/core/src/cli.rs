//! The `resolvent-probe` command line: config parsing, analysis commands,
//! CSV/key-value reports and an optional SVG plot.
//!
//! Config files hold one `key = value` assignment per line; `#` starts a
//! comment.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dense_oracle::run_oracle;
use crate::error::{Error, Result};
use crate::evolution::{evolve, portrait_slope, spectral_portrait, ModalState};
use crate::linalg::{CVec4, C64};
use crate::optimality_witness::{crosscheck_elements, report_from_elements, witness_sequence};
use crate::resolvent_probe::{classify_sweep, sweep, ClassifyParams, ExponentFit, ScanPolicy, SweepParams, SweepResult};
use crate::spectral_model::{
    build_spectrum, verify_hypotheses, CoercivityPolicy, Coupling, PowerLaw, SpectralSymbols, SpectrumKind,
    SystemConfig,
};

pub const THREADS_ENV: &str = "RESOLVENT_PROBE_THREADS";

/// Exit code for a bad config, bad flags or an input the model rejects.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for a numerical failure.
pub const EXIT_NUMERICAL: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Singular { .. } | Error::EmptyScan(_) | Error::TooFewFitPoints(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Options supplied on the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub sweep: SweepParams,
    pub window: f64,
    pub tol: f64,
    pub r: Option<f64>,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub t_max: f64,
    pub steps: usize,
    pub init_modes: Option<usize>,
    pub mode_start: usize,
    pub mode_end: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            sweep: SweepParams::default(),
            window: 0.5,
            tol: 0.05,
            r: None,
            out: None,
            plot: None,
            t_max: 10.0,
            steps: 101,
            init_modes: None,
            mode_start: 0,
            mode_end: None,
        }
    }
}

/// A validated system together with the run options.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    /// `spectrum.modes` as written; a custom file may supply fewer.
    pub n_modes: usize,
    pub allow_noncoercive: bool,
    pub options: RunOptions,
}

const KNOWN_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "mu",
    "theta",
    "spectrum.kind",
    "spectrum.length",
    "spectrum.lx",
    "spectrum.ly",
    "spectrum.modes",
    "spectrum.path",
    "symbol.a1",
    "symbol.a2",
    "symbol.b1",
    "symbol.b2",
    "allow_noncoercive",
];

struct Entries<'a> {
    map: BTreeMap<String, (usize, String)>,
    source: &'a str,
}

impl Entries<'_> {
    fn raw(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Config(format!("{}: missing required key `{key}`", self.source)))
    }

    fn number(&self, key: &str) -> Result<f64> {
        let (line, v) = self
            .map
            .get(key)
            .ok_or_else(|| Error::Config(format!("{}: missing required key `{key}`", self.source)))?;
        v.parse::<f64>()
            .map_err(|_| Error::Config(format!("{}:{line}: `{key}` is not a number: `{v}`", self.source)))
    }

    fn symbol(&self, key: &str) -> Result<Option<PowerLaw>> {
        let Some((line, v)) = self.map.get(key) else {
            return Ok(None);
        };
        let bad = || Error::Config(format!("{}:{line}: `{key}` must be a `coef,exp` pair, got `{v}`", self.source));
        let (c, e) = v.split_once(',').ok_or_else(bad)?;
        let coef = c.trim().parse::<f64>().map_err(|_| bad())?;
        let exp = e.trim().parse::<f64>().map_err(|_| bad())?;
        Ok(Some(PowerLaw::new(coef, exp)))
    }
}

fn read_entries<'a>(text: &str, source: &'a str) -> Result<Entries<'a>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{source}:{line_no}: expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return Err(Error::Config(format!("{source}:{line_no}: unknown key `{k}`")));
        }
        if map.insert(k.to_string(), (line_no, v.to_string())).is_some() {
            return Err(Error::Config(format!("{source}:{line_no}: duplicate key `{k}`")));
        }
    }
    Ok(Entries { map, source })
}

/// Parses a config document. Relative `spectrum.path` values resolve
/// against `base_dir`.
pub fn parse_config_str(text: &str, source: &str, base_dir: &Path) -> Result<RunConfig> {
    let e = read_entries(text, source)?;
    let coupling = Coupling::new(e.number("alpha")?, e.number("beta")?, e.number("gamma")?, e.number("mu")?, e.number("theta")?);

    let modes_raw = e.raw("spectrum.modes")?;
    let n_modes = modes_raw
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{source}: `spectrum.modes` must be a positive integer, got `{modes_raw}`")))?;
    let kind = match e.raw("spectrum.kind")? {
        "dirichlet_1d" => SpectrumKind::Dirichlet1d { length: e.number("spectrum.length")? },
        "hinged_plate_1d" => SpectrumKind::HingedPlate1d { length: e.number("spectrum.length")? },
        "dirichlet_2d_rectangle" => {
            SpectrumKind::Dirichlet2dRectangle { lx: e.number("spectrum.lx")?, ly: e.number("spectrum.ly")? }
        }
        "hinged_plate_2d" => SpectrumKind::HingedPlate2d { lx: e.number("spectrum.lx")?, ly: e.number("spectrum.ly")? },
        "custom_file" => {
            let p = PathBuf::from(e.raw("spectrum.path")?);
            SpectrumKind::CustomFile { path: if p.is_relative() { base_dir.join(p) } else { p } }
        }
        other => {
            return Err(Error::Config(format!(
                "{source}: unknown spectrum.kind `{other}` (expected dirichlet_1d, dirichlet_2d_rectangle, \
                 hinged_plate_1d, hinged_plate_2d or custom_file)"
            )))
        }
    };

    let a1 = e.symbol("symbol.a1")?.unwrap_or(PowerLaw::new(1.0, 1.0));
    let a2 = e.symbol("symbol.a2")?.unwrap_or(PowerLaw::new(1.0, 1.0));
    let b1 = e.symbol("symbol.b1")?.unwrap_or(PowerLaw::new(1.0, coupling.mu * a1.exp));
    let b2 = e.symbol("symbol.b2")?.unwrap_or(PowerLaw::new(1.0, coupling.theta * a2.exp));

    let allow_noncoercive = match e.map.get("allow_noncoercive").map(|(_, v)| v.as_str()) {
        None | Some("false") => false,
        Some("true") => true,
        Some(v) => return Err(Error::Config(format!("{source}: allow_noncoercive must be true or false, got `{v}`"))),
    };
    let policy = if allow_noncoercive { CoercivityPolicy::Allow } else { CoercivityPolicy::Enforce };
    let spectrum = build_spectrum(kind, n_modes)?;
    let system = SystemConfig::new(coupling, SpectralSymbols { a1, a2, b1, b2 }, spectrum, policy)?;
    Ok(RunConfig { system, n_modes, allow_noncoercive, options: RunOptions::default() })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, &path.display().to_string(), base)
}

impl RunConfig {
    /// Every key with its effective value; parses back to the same config.
    pub fn effective_config(&self) -> String {
        let k = self.system.coupling();
        let s = self.system.symbols();
        let mut out = String::new();
        for (key, v) in [("alpha", k.alpha), ("beta", k.beta), ("gamma", k.gamma), ("mu", k.mu), ("theta", k.theta)] {
            writeln!(out, "{key} = {v}").unwrap();
        }
        let kind = self.system.spectrum().kind();
        writeln!(out, "spectrum.kind = {}", kind.name()).unwrap();
        match kind {
            SpectrumKind::Dirichlet1d { length } | SpectrumKind::HingedPlate1d { length } => {
                writeln!(out, "spectrum.length = {length}").unwrap()
            }
            SpectrumKind::Dirichlet2dRectangle { lx, ly } | SpectrumKind::HingedPlate2d { lx, ly } => {
                writeln!(out, "spectrum.lx = {lx}\nspectrum.ly = {ly}").unwrap()
            }
            SpectrumKind::CustomFile { path } => writeln!(out, "spectrum.path = {}", path.display()).unwrap(),
        }
        writeln!(out, "spectrum.modes = {}", self.n_modes).unwrap();
        for (key, p) in [("symbol.a1", s.a1), ("symbol.a2", s.a2), ("symbol.b1", s.b1), ("symbol.b2", s.b2)] {
            writeln!(out, "{key} = {},{}", p.coef, p.exp).unwrap();
        }
        writeln!(out, "allow_noncoercive = {}", self.allow_noncoercive).unwrap();
        out
    }
}

#[derive(Parser, Debug)]
#[command(name = "resolvent-probe", version, about = "Resolvent decay, regularity class and modal evolution of coupled damped systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Standing hypotheses and coercivity.
    Hypotheses,
    /// Resolvent norms on a log grid (CSV).
    Sweep,
    /// Decay exponent fit and analytic/Gevrey verdict.
    Classify,
    /// Unit-norm witness sequence and its trend (CSV).
    Witness,
    /// Energy trajectory from a fixed initial state (CSV).
    Evolve,
    /// Block eigenvalues over a mode range (CSV).
    Portrait,
    /// Dense versus per-mode cross-check.
    Oracle,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanArg {
    Adaptive,
    Full,
}

#[derive(Args, Debug, Clone)]
pub struct Flags {
    /// Config file (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_max: Option<f64>,
    /// Grid points (sweep/classify) or witness elements.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub scan: Option<ScanArg>,
    /// Fraction of the log-λ range used for the fit.
    #[arg(long, global = true)]
    pub window: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Exponent for the witness trend (default 2·mu).
    #[arg(long, global = true)]
    pub r: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// SVG of the log-log sweep with the fitted line (classify).
    #[arg(long, global = true)]
    pub plot: Option<PathBuf>,
    #[arg(long, global = true)]
    pub t_max: Option<f64>,
    /// Number of time samples, including t = 0.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Modes excited by the evolve initial state (default min(N, 16)).
    #[arg(long, global = true)]
    pub init_modes: Option<usize>,
    /// First mode of the portrait range (0-based).
    #[arg(long, global = true)]
    pub mode_start: Option<usize>,
    /// End of the portrait range (exclusive).
    #[arg(long, global = true)]
    pub mode_end: Option<usize>,
}

impl Flags {
    pub fn apply(&self, o: &mut RunOptions) {
        if let Some(v) = self.lambda_min {
            o.sweep.lambda_min = v;
        }
        if let Some(v) = self.lambda_max {
            o.sweep.lambda_max = v;
        }
        if let Some(v) = self.points {
            o.sweep.n_points = v;
        }
        if let Some(v) = self.scan {
            o.sweep.scan = match v {
                ScanArg::Adaptive => ScanPolicy::default(),
                ScanArg::Full => ScanPolicy::Full,
            };
        }
        if let Some(v) = self.window {
            o.window = v;
        }
        if let Some(v) = self.tol {
            o.tol = v;
        }
        o.r = self.r.or(o.r);
        o.out = self.out.clone().or(o.out.take());
        o.plot = self.plot.clone().or(o.plot.take());
        if let Some(v) = self.t_max {
            o.t_max = v;
        }
        if let Some(v) = self.steps {
            o.steps = v;
        }
        o.init_modes = self.init_modes.or(o.init_modes);
        if let Some(v) = self.mode_start {
            o.mode_start = v;
        }
        o.mode_end = self.mode_end.or(o.mode_end);
    }
}

/// Floats in reports and CSV: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_csv(out: &Option<PathBuf>, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(open_output(out)?);
    let csv_err = |e: csv::Error| Error::Io(io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt_float(*x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(out: &Option<PathBuf>, pairs: &[(&str, String)]) -> Result<()> {
    let mut w = open_output(out)?;
    for (k, v) in pairs {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(lambda, resolvent_norm, argmax_omega, sigma_min)` rows back from
/// a sweep CSV.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<[f64; 4]>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(io::Error::other(e)))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Io(io::Error::other(e)))?;
        let mut row = [0.0; 4];
        for (slot, field) in row.iter_mut().zip(rec.iter()) {
            *slot = field
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad number `{field}`", path.display())))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Log-log plot of a sweep with the fitted line over its window.
pub fn sweep_svg(result: &SweepResult, fit: &ExponentFit) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let xs: Vec<f64> = result.samples.iter().map(|s| s.lambda.log10()).collect();
    let ys: Vec<f64> = result.samples.iter().map(|s| s.norm.log10()).collect();
    let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let px = |x: f64| m + (x - x0) / span(x0, x1) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / span(y0, y1) * (h - 2.0 * m);
    let points: Vec<String> = xs.iter().zip(&ys).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
    let (l0, l1) = (fit.window.0.log10(), fit.window.1.log10());
    let ln10 = std::f64::consts::LN_10;
    let fy = |l: f64| (fit.intercept + fit.slope * l * ln10) / ln10;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<polyline fill="none" stroke="black" stroke-width="1" points="{m},{} {m},{} {},{}"/>"#,
        m,
        h - m,
        w - m,
        h - m
    )
    .unwrap();
    writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, points.join(" ")).unwrap();
    writeln!(
        s,
        r#"<polyline fill="none" stroke="crimson" stroke-width="1" stroke-dasharray="6,4" points="{:.2},{:.2} {:.2},{:.2}"/>"#,
        px(l0),
        py(fy(l0)),
        px(l1),
        py(fy(l1))
    )
    .unwrap();
    let text = |s: &mut String, x: f64, y: f64, anchor: &str, body: &str| {
        writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{body}</text>"#)
            .unwrap()
    };
    text(&mut s, w / 2.0, h - 15.0, "middle", "log10 lambda");
    text(&mut s, 15.0, h / 2.0, "middle", "log10 norm");
    text(&mut s, m, h - m + 18.0, "middle", &format!("{x0:.2}"));
    text(&mut s, w - m, h - m + 18.0, "middle", &format!("{x1:.2}"));
    text(&mut s, m - 6.0, h - m, "end", &format!("{y0:.2}"));
    text(&mut s, m - 6.0, m, "end", &format!("{y1:.2}"));
    text(&mut s, w - m, m - 20.0, "end", &format!("slope {:.4}, r2 {:.4}", fit.slope, fit.r_squared));
    s.push_str("</svg>\n");
    s
}

fn witness_indices(n: usize, count: usize) -> Vec<usize> {
    if count <= 1 || n == 1 {
        return vec![n - 1];
    }
    let mut idx: Vec<usize> = (0..count)
        .map(|k| ((n as f64).ln() * k as f64 / (count - 1) as f64).exp().round() as usize - 1)
        .map(|i| i.min(n - 1))
        .collect();
    idx.dedup();
    idx
}

fn run_hypotheses(cfg: &RunConfig) -> Result<()> {
    let h = verify_hypotheses(&cfg.system);
    let k = cfg.system.coupling();
    let v = cfg.system.spectrum().values();
    let at = |i: usize| fmt_float(v[i]);
    write_report(
        &cfg.options.out,
        &[
            ("alpha0", fmt_float(h.alpha0)),
            ("alpha0_omega", at(h.alpha0_at.index)),
            ("alpha1", fmt_float(h.alpha1)),
            ("alpha1_omega", at(h.alpha1_at.index)),
            ("alpha2", fmt_float(h.alpha2)),
            ("alpha2_omega", at(h.alpha2_at.index)),
            ("beta1", fmt_float(h.beta1_const)),
            ("beta1_omega", at(h.beta1_at.index)),
            ("beta2", fmt_float(h.beta2_const)),
            ("beta2_omega", at(h.beta2_at.index)),
            ("coercivity_lhs", fmt_float(k.alpha * k.gamma)),
            ("coercivity_rhs", fmt_float(k.beta * k.beta * h.alpha0)),
            ("coercive", h.coercive.to_string()),
            ("s", fmt_float(k.s())),
            ("warnings", h.warnings.len().to_string()),
        ],
    )
}

fn run_sweep(cfg: &RunConfig) -> Result<()> {
    let r = sweep(&cfg.system, &cfg.options.sweep)?;
    write_csv(
        &cfg.options.out,
        &["lambda", "resolvent_norm", "argmax_omega", "sigma_min"],
        r.samples.iter().map(|s| vec![s.lambda, s.norm, s.argmax_omega, s.sigma_min]),
    )
}

fn run_classify(cfg: &RunConfig) -> Result<()> {
    let o = &cfg.options;
    let params = ClassifyParams { sweep: o.sweep, window_fraction: o.window, tol: o.tol, ..ClassifyParams::default() };
    let r = sweep(&cfg.system, &params.sweep)?;
    let v = classify_sweep(&cfg.system, &r, &params)?;
    write_report(
        &o.out,
        &[
            ("verdict", v.verdict.name().to_string()),
            ("s", fmt_float(v.s)),
            ("delta", v.delta.map_or("none".to_string(), fmt_float)),
            ("fitted_slope", fmt_float(v.fitted_slope)),
            ("intercept", fmt_float(v.evidence.intercept)),
            ("r_squared", fmt_float(v.evidence.r_squared)),
            ("window_lo", fmt_float(v.evidence.window.0)),
            ("window_hi", fmt_float(v.evidence.window.1)),
            ("tolerance", fmt_float(v.tolerance)),
        ],
    )?;
    if let Some(p) = &o.plot {
        fs::write(p, sweep_svg(&r, &v.evidence))?;
    }
    Ok(())
}

fn run_witness(cfg: &RunConfig) -> Result<()> {
    let o = &cfg.options;
    let n = cfg.system.spectrum().len();
    let r = o.r.unwrap_or(2.0 * cfg.system.coupling().mu);
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParameter(format!("r must lie in (0, 1], got {r}")));
    }
    let elements = witness_sequence(&cfg.system, &witness_indices(n, o.sweep.n_points.max(1)))?;
    let report = report_from_elements(&cfg.system, r, &elements)?;
    write_csv(
        &o.out,
        &["omega", "lambda", "abs_a", "abs_c", "residual_norm", "scaled_value"],
        elements.iter().map(|e| vec![e.omega, e.lambda, e.a.norm(), e.c.norm(), e.residual_norm, e.scaled_residual(r)]),
    )?;
    let checks = crosscheck_elements(&cfg.system, &elements, o.sweep.scan)?;
    let held = checks.iter().filter(|c| c.holds).count();
    eprintln!("r={}", fmt_float(r));
    eprintln!("trend={}", report.trend.name());
    eprintln!("limit_estimate={}", fmt_float(report.limit_estimate));
    if let Some(p) = report.predicted_plateau {
        eprintln!("predicted_plateau={}", fmt_float(p));
    }
    eprintln!("lower_bound_holds={held}/{}", checks.len());
    Ok(())
}

fn run_evolve(cfg: &RunConfig) -> Result<()> {
    let o = &cfg.options;
    let n = cfg.system.spectrum().len();
    let k = o.init_modes.unwrap_or(n.min(16));
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("init modes must lie in 1..={n}, got {k}")));
    }
    if o.steps < 2 || !(o.t_max.is_finite() && o.t_max > 0.0) {
        return Err(Error::InvalidParameter(format!("need steps >= 2 and t_max > 0, got {} and {}", o.steps, o.t_max)));
    }
    let amp = C64::new(1.0 / (k as f64).sqrt(), 0.0);
    let zero = C64::new(0.0, 0.0);
    let modes = (0..n).map(|i| if i < k { CVec4::new(amp, zero, zero, zero) } else { CVec4::zeros() }).collect();
    let grid: Vec<f64> = (0..o.steps).map(|j| o.t_max * j as f64 / (o.steps - 1) as f64).collect();
    let traj = evolve(&cfg.system, &ModalState::new(modes), &grid)?;
    write_csv(
        &o.out,
        &["t", "energy_norm", "generator_norm"],
        traj.iter().map(|s| vec![s.t, s.energy_norm, s.generator_norm]),
    )
}

fn run_portrait(cfg: &RunConfig) -> Result<()> {
    let o = &cfg.options;
    let end = o.mode_end.unwrap_or(cfg.system.spectrum().len());
    let rows = spectral_portrait(&cfg.system, o.mode_start..end)?;
    write_csv(&o.out, &["omega", "re", "im"], rows.iter().map(|r| vec![r.omega, r.eigenvalue.re, r.eigenvalue.im]))?;
    if let Ok(fit) = portrait_slope(&rows) {
        eprintln!("branch_slope={}", fmt_float(fit.slope));
        eprintln!("branch_r_squared={}", fmt_float(fit.r_squared));
    }
    Ok(())
}

fn run_oracle_command(cfg: &RunConfig) -> Result<bool> {
    let r = run_oracle(&cfg.system, 20, &[1.0, 10.0], 0)?;
    let expm = r.expm_max_dev.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let mut pairs = vec![
        ("n_modes", r.n_modes.to_string()),
        ("lambdas", r.lambdas.len().to_string()),
        ("resolvent_max_rel_dev", fmt_float(r.resolvent_max_rel_dev)),
    ];
    let labels: Vec<String> = r.expm_max_dev.iter().map(|(t, _)| format!("expm_max_dev_t{t}")).collect();
    for (label, (_, d)) in labels.iter().zip(&r.expm_max_dev) {
        pairs.push((label.as_str(), fmt_float(*d)));
    }
    pairs.push(("eigen_max_rel_dev", fmt_float(r.eigen_max_rel_dev)));
    pairs.push(("max_deviation", fmt_float(expm.max(r.resolvent_max_rel_dev))));
    pairs.push(("result", if r.pass { "pass" } else { "fail" }.to_string()));
    write_report(&cfg.options.out, &pairs)?;
    Ok(r.pass)
}

/// Runs one command on a parsed config; returns the process exit code.
pub fn run(command: Command, cfg: &RunConfig) -> i32 {
    let outcome = match command {
        Command::Hypotheses => run_hypotheses(cfg).map(|_| true),
        Command::Sweep => run_sweep(cfg).map(|_| true),
        Command::Classify => run_classify(cfg).map(|_| true),
        Command::Witness => run_witness(cfg).map(|_| true),
        Command::Evolve => run_evolve(cfg).map(|_| true),
        Command::Portrait => run_portrait(cfg).map(|_| true),
        Command::Oracle => run_oracle_command(cfg),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => EXIT_NUMERICAL,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a pool installed earlier in the same process stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Full command-line entry point.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let prepared = configure_threads().and_then(|_| {
        let path = cli.flags.config.as_deref().ok_or_else(|| Error::Config("--config PATH is required".into()))?;
        let mut cfg = parse_config(path)?;
        cli.flags.apply(&mut cfg.options);
        Ok(cfg)
    });
    match prepared {
        Ok(cfg) => {
            for line in cfg.effective_config().lines() {
                eprintln!("# {line}");
            }
            run(cli.command, &cfg)
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
