//! Base spectra, power-law symbols and the per-mode generator blocks.
//!
//! Every operator in the coupled system (stiffnesses `A₁`, `A₂` and dampings
//! `B₁`, `B₂`) is a function of one self-adjoint base operator `A`, so the
//! generator splits into independent 4×4 blocks, one per eigenvalue `ω` of
//! `A`. Each block acts on energy coordinates
//! `(p, v, q, z) = (√a₁·u, v, √a₂·w, z)` in which the energy norm is the
//! Euclidean norm.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::linalg::{CVec4, C64};

/// Closed-form families of base spectra, plus a user-supplied list.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumKind {
    /// `-d²/dx²` on `(0, L)` with Dirichlet ends: `(kπ/L)²`.
    Dirichlet1d { length: f64 },
    /// `-Δ` on `(0, Lx) × (0, Ly)`: `π²(m²/Lx² + n²/Ly²)`.
    Dirichlet2dRectangle { lx: f64, ly: f64 },
    /// Hinged beam `d⁴/dx⁴`: `(kπ/L)⁴`.
    HingedPlate1d { length: f64 },
    /// Hinged rectangular plate `Δ²`: squares of the 2D Dirichlet values.
    HingedPlate2d { lx: f64, ly: f64 },
    CustomFile { path: PathBuf },
}

impl SpectrumKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpectrumKind::Dirichlet1d { .. } => "dirichlet_1d",
            SpectrumKind::Dirichlet2dRectangle { .. } => "dirichlet_2d_rectangle",
            SpectrumKind::HingedPlate1d { .. } => "hinged_plate_1d",
            SpectrumKind::HingedPlate2d { .. } => "hinged_plate_2d",
            SpectrumKind::CustomFile { .. } => "custom_file",
        }
    }
}

/// Eigenvalues `ω₁ ≤ ω₂ ≤ … ≤ ω_N` of the base operator.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseSpectrum {
    kind: SpectrumKind,
    values: Vec<f64>,
}

impl BaseSpectrum {
    /// Wraps an explicit list, sorting it if needed. All values must be
    /// positive and finite.
    pub fn from_values(kind: SpectrumKind, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if let Some(bad) = values.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "spectrum values must be positive and finite, found {bad}"
            )));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            warn!("spectrum values were not sorted; sorting");
            values.sort_by(f64::total_cmp);
        }
        Ok(BaseSpectrum { kind, values })
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_length(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")))
    }
}

fn dirichlet_1d(length: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| (k as f64 * PI / length).powi(2)).collect()
}

/// The `n` smallest values of `π²(m²/lx² + n²/ly²)`, `m, n ≥ 1`, with
/// multiplicity.
fn dirichlet_2d(lx: f64, ly: f64, n: usize) -> Vec<f64> {
    let kx = PI / lx;
    let ky = PI / ly;
    let count_below = |e: f64| -> usize {
        let mut total = 0usize;
        let mut m = 1usize;
        loop {
            let rest = e - (m as f64 * kx).powi(2);
            if rest < ky * ky {
                break;
            }
            total += (rest.sqrt() / ky).floor() as usize;
            if total >= n {
                break;
            }
            m += 1;
        }
        total
    };
    let mut hi = kx * kx + ky * ky;
    while count_below(hi) < n {
        hi *= 2.0;
    }
    let mut values = Vec::new();
    let mut m = 1usize;
    loop {
        let rest = hi - (m as f64 * kx).powi(2);
        if rest < ky * ky {
            break;
        }
        let n_max = (rest.sqrt() / ky).floor() as usize;
        for j in 1..=n_max {
            values.push((m as f64 * kx).powi(2) + (j as f64 * ky).powi(2));
        }
        m += 1;
    }
    values.sort_by(f64::total_cmp);
    values.truncate(n);
    values
}

/// Parses the plain-text spectrum format: one positive decimal per line,
/// blank lines and `#` comments ignored.
pub fn parse_spectrum_text(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::SpectrumFile {
            path: path.to_path_buf(),
            reason: format!("line {}: cannot parse {line:?} as a number", lineno + 1),
        })?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::SpectrumFile {
                path: path.to_path_buf(),
                reason: format!("line {}: value {value} is not positive", lineno + 1),
            });
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::SpectrumFile {
            path: path.to_path_buf(),
            reason: "no values".into(),
        });
    }
    Ok(values)
}

/// Generates the first `n_modes` eigenvalues of the requested kind. A custom
/// file contributes its values, truncated to the `n_modes` smallest.
pub fn build_spectrum(kind: SpectrumKind, n_modes: usize) -> Result<BaseSpectrum> {
    if n_modes == 0 {
        return Err(Error::InvalidParameter("mode count must be at least 1".into()));
    }
    let values = match &kind {
        SpectrumKind::Dirichlet1d { length } => {
            check_length("length", *length)?;
            dirichlet_1d(*length, n_modes)
        }
        SpectrumKind::HingedPlate1d { length } => {
            check_length("length", *length)?;
            dirichlet_1d(*length, n_modes).into_iter().map(|w| w * w).collect()
        }
        SpectrumKind::Dirichlet2dRectangle { lx, ly } => {
            check_length("lx", *lx)?;
            check_length("ly", *ly)?;
            dirichlet_2d(*lx, *ly, n_modes)
        }
        SpectrumKind::HingedPlate2d { lx, ly } => {
            check_length("lx", *lx)?;
            check_length("ly", *ly)?;
            dirichlet_2d(*lx, *ly, n_modes).into_iter().map(|w| w * w).collect()
        }
        SpectrumKind::CustomFile { path } => {
            let text = fs::read_to_string(path).map_err(|e| Error::SpectrumFile {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let mut values = parse_spectrum_text(&text, path)?;
            if values.windows(2).any(|w| w[0] > w[1]) {
                warn!("{}: values not sorted; sorting", path.display());
                values.sort_by(f64::total_cmp);
            }
            values.truncate(n_modes);
            values
        }
    };
    BaseSpectrum::from_values(kind, values)
}

/// `symbol(ω) = coef · ω^exp`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    pub coef: f64,
    pub exp: f64,
}

impl PowerLaw {
    pub fn new(coef: f64, exp: f64) -> Self {
        PowerLaw { coef, exp }
    }

    pub fn eval(&self, omega: f64) -> f64 {
        self.coef * omega.powf(self.exp)
    }

    /// `self(ω)^power` as a power law.
    pub fn pow(&self, power: f64) -> PowerLaw {
        PowerLaw::new(self.coef.powf(power), self.exp * power)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.coef.is_finite() && self.coef > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "symbol {name}: coefficient must be positive, got {}",
                self.coef
            )));
        }
        if !(0.0..=2.0).contains(&self.exp) {
            return Err(Error::InvalidParameter(format!(
                "symbol {name}: exponent must lie in [0, 2], got {}",
                self.exp
            )));
        }
        Ok(())
    }
}

/// Eigenvalues of `A₁, A₂, B₁, B₂` as functions of the base eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSymbols {
    pub a1: PowerLaw,
    pub a2: PowerLaw,
    pub b1: PowerLaw,
    pub b2: PowerLaw,
}

impl SpectralSymbols {
    /// `A₁ = A₂ = A`, `B₁ = A^μ`, `B₂ = A^θ`.
    pub fn fractional(mu: f64, theta: f64) -> Self {
        SpectralSymbols {
            a1: PowerLaw::new(1.0, 1.0),
            a2: PowerLaw::new(1.0, 1.0),
            b1: PowerLaw::new(1.0, mu),
            b2: PowerLaw::new(1.0, theta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.a1.validate("a1")?;
        self.a2.validate("a2")?;
        self.b1.validate("b1")?;
        self.b2.validate("b2")
    }
}

/// Coupling constants and fractional exponents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub theta: f64,
}

impl Coupling {
    pub fn new(alpha: f64, beta: f64, gamma: f64, mu: f64, theta: f64) -> Self {
        Coupling { alpha, beta, gamma, mu, theta }
    }

    /// `s = min(μ, θ)`.
    pub fn s(&self) -> f64 {
        self.mu.min(self.theta)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("gamma", self.gamma)?;
        if !self.beta.is_finite() || self.beta == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be a nonzero real constant, got {}",
                self.beta
            )));
        }
        for (name, x) in [("mu", self.mu), ("theta", self.theta)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {x}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CoercivityPolicy {
    #[default]
    Enforce,
    Allow,
}

/// The complete abstract system. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    coupling: Coupling,
    symbols: SpectralSymbols,
    spectrum: BaseSpectrum,
    hypotheses: HypothesisReport,
    policy: CoercivityPolicy,
}

impl SystemConfig {
    pub fn new(
        coupling: Coupling,
        symbols: SpectralSymbols,
        spectrum: BaseSpectrum,
        policy: CoercivityPolicy,
    ) -> Result<Self> {
        coupling.validate()?;
        symbols.validate()?;
        let hypotheses = hypotheses_for(&coupling, &symbols, &spectrum)?;
        if !hypotheses.coercive && policy == CoercivityPolicy::Enforce {
            return Err(Error::NotCoercive {
                lhs: coupling.alpha * coupling.gamma,
                rhs: coupling.beta * coupling.beta * hypotheses.alpha0,
            });
        }
        if !hypotheses.coercive {
            warn!("configuration is not coercive; dissipativity is not guaranteed");
        }
        Ok(SystemConfig { coupling, symbols, spectrum, hypotheses, policy })
    }

    /// Default fractional-power symbols with coercivity enforced.
    pub fn fractional(coupling: Coupling, spectrum: BaseSpectrum) -> Result<Self> {
        let symbols = SpectralSymbols::fractional(coupling.mu, coupling.theta);
        Self::new(coupling, symbols, spectrum, CoercivityPolicy::Enforce)
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn symbols(&self) -> &SpectralSymbols {
        &self.symbols
    }

    pub fn spectrum(&self) -> &BaseSpectrum {
        &self.spectrum
    }

    pub fn policy(&self) -> CoercivityPolicy {
        self.policy
    }

    pub fn is_coercive(&self) -> bool {
        self.hypotheses.coercive
    }

    /// Same system on a different base spectrum.
    pub fn with_spectrum(&self, spectrum: BaseSpectrum) -> Result<Self> {
        Self::new(self.coupling, self.symbols, spectrum, self.policy)
    }
}

/// Per-mode restriction of the generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeBlock {
    pub omega: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub matrix: Matrix4<f64>,
}

impl ModeBlock {
    /// Block from symbol values `[a1, a2, b1, b2]` on one mode.
    pub fn new(omega: f64, symbols: [f64; 4], alpha: f64, beta: f64, gamma: f64) -> Self {
        let [a1, a2, b1, b2] = symbols;
        let r1 = a1.sqrt();
        let r2 = a2.sqrt();
        #[rustfmt::skip]
        let matrix = Matrix4::new(
            0.0, r1,            0.0, 0.0,
            -r1, -alpha * b1,   0.0, -beta * b1,
            0.0, 0.0,           0.0, r2,
            0.0, -beta * b1,    -r2, -gamma * b2,
        );
        ModeBlock { omega, a1, a2, b1, b2, alpha, beta, gamma, matrix }
    }

    /// `Z ↦ M Z` on a complex energy-coordinate vector.
    pub fn apply(&self, z: &CVec4) -> CVec4 {
        self.matrix.map(|x| C64::new(x, 0.0)) * z
    }

    /// Coefficients `[c0, c1, c2, c3]` of `det(sI - M) = s⁴ + c3 s³ + c2 s² + c1 s + c0`.
    ///
    /// The block is the first-order form of `s² + sD + K` with
    /// `K = diag(a1, a2)` and `D = [[αb1, βb1], [βb1, γb2]]`.
    pub fn characteristic_coefficients(&self) -> [f64; 4] {
        let d11 = self.alpha * self.b1;
        let d22 = self.gamma * self.b2;
        // det D = b1(αγ b2 − β² b1), factored to avoid cancellation
        let det_d = self.b1 * (self.alpha * self.gamma * self.b2 - self.beta * self.beta * self.b1);
        [
            self.a1 * self.a2,
            d11 * self.a2 + d22 * self.a1,
            self.a1 + self.a2 + det_d,
            d11 + d22,
        ]
    }
}

pub fn mode_block(config: &SystemConfig, omega: f64) -> Result<ModeBlock> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let s = &config.symbols;
    let Coupling { alpha, beta, gamma, .. } = config.coupling;
    let (a1, a2, b1, b2) = (s.a1.eval(omega), s.a2.eval(omega), s.b1.eval(omega), s.b2.eval(omega));
    Ok(ModeBlock::new(omega, [a1, a2, b1, b2], alpha, beta, gamma))
}

/// Blocks for every listed mode, in spectrum order.
pub fn mode_blocks(config: &SystemConfig) -> Vec<ModeBlock> {
    config
        .spectrum
        .values()
        .iter()
        .map(|&w| mode_block(config, w).expect("spectrum values are positive"))
        .collect()
}

/// Extremal ratio over the listed modes with the mode index realizing it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioWitness {
    pub index: usize,
    pub ratio: f64,
}

/// Finite-spectrum verification of the standing hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    /// `max b1/b2`.
    pub alpha0: f64,
    /// `min b1/a1^μ`.
    pub alpha1: f64,
    /// `max b1/a1^μ`.
    pub alpha2: f64,
    /// `min b2/a2^θ`.
    pub beta1_const: f64,
    /// `max b2/a2^θ`.
    pub beta2_const: f64,
    pub coercive: bool,
    pub alpha0_at: RatioWitness,
    pub alpha1_at: RatioWitness,
    pub alpha2_at: RatioWitness,
    pub beta1_at: RatioWitness,
    pub beta2_at: RatioWitness,
    /// Extremes attained at the last listed mode; the true bound over the
    /// infinite spectrum may be larger (or not exist).
    pub warnings: Vec<String>,
}

fn extremes(values: impl Iterator<Item = f64>) -> (RatioWitness, RatioWitness) {
    let mut lo = RatioWitness { index: 0, ratio: f64::INFINITY };
    let mut hi = RatioWitness { index: 0, ratio: f64::NEG_INFINITY };
    for (index, ratio) in values.enumerate() {
        if ratio < lo.ratio {
            lo = RatioWitness { index, ratio };
        }
        if ratio > hi.ratio {
            hi = RatioWitness { index, ratio };
        }
    }
    (lo, hi)
}

fn hypotheses_for(coupling: &Coupling, symbols: &SpectralSymbols, spectrum: &BaseSpectrum) -> Result<HypothesisReport> {
    let w = spectrum.values();
    if w.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let (_, a0) = extremes(w.iter().map(|&x| symbols.b1.eval(x) / symbols.b2.eval(x)));
    let (a1, a2) = extremes(w.iter().map(|&x| symbols.b1.eval(x) / symbols.a1.eval(x).powf(coupling.mu)));
    let (b1, b2) = extremes(w.iter().map(|&x| symbols.b2.eval(x) / symbols.a2.eval(x).powf(coupling.theta)));

    let last = w.len() - 1;
    let mut warnings = Vec::new();
    // ties with earlier modes keep the earliest index, so a flat ratio never warns
    for (name, witness) in [("alpha0", a0), ("alpha2", a2), ("beta2", b2)] {
        if last > 0 && witness.index == last {
            warnings.push(format!("{name} attained at the last listed mode; the bound may be unbounded"));
        }
    }
    for (name, witness) in [("alpha1", a1), ("beta1", b1)] {
        if last > 0 && witness.index == last {
            warnings.push(format!("{name} attained at the last listed mode; the bound may decay to zero"));
        }
    }
    let coercive = coupling.alpha * coupling.gamma > coupling.beta * coupling.beta * a0.ratio;
    Ok(HypothesisReport {
        alpha0: a0.ratio,
        alpha1: a1.ratio,
        alpha2: a2.ratio,
        beta1_const: b1.ratio,
        beta2_const: b2.ratio,
        coercive,
        alpha0_at: a0,
        alpha1_at: a1,
        alpha2_at: a2,
        beta1_at: b1,
        beta2_at: b2,
        warnings,
    })
}

pub fn verify_hypotheses(config: &SystemConfig) -> HypothesisReport {
    for w in &config.hypotheses.warnings {
        warn!("{w}");
    }
    config.hypotheses.clone()
}

/// `Re⟨M Z, Z⟩ = −αb₁|v|² − 2βb₁·Re(v·z̄) − γb₂|z|²`.
pub fn dissipation_rate(block: &ModeBlock, z: &CVec4) -> f64 {
    let v = z[1];
    let zz = z[3];
    -block.alpha * block.b1 * v.norm_sqr()
        - 2.0 * block.beta * block.b1 * (v * zz.conj()).re
        - block.gamma * block.b2 * zz.norm_sqr()
}
