//! Explicit unit-norm states with small residual `(iλ − 𝒜)Z`.
//!
//! With `A₁ = A₂ = A`, `B₁ = A^μ`, `B₂ = A^θ` and `μ ≤ θ`, pick an
//! eigenvalue `ω` of `A`, set `λ = √ω` and look for
//! `Z = (a e, iλ a e, c e, iλ c e)`. Choosing `a = −(γ/β) ω^{θ−μ} c`
//! cancels the fourth residual component, leaving only
//! `i ω^{μ+1/2} (β − αγβ⁻¹ω^{θ−μ}) c` in the second slot. Normalizing
//! `‖Z‖ = 1` fixes
//! `c = ω^{μ−θ−1/2} / √(2(γ²β⁻² + ω^{2μ−2θ}))`, and the residual then grows
//! only like `ω^μ = λ^{2μ}`. So no resolvent bound `O(λ^{−r})` with
//! `r > 2μ` can hold.
//!
//! Closed forms are evaluated in log space; the energy-coordinate state is
//! materialized whenever its entries are finite.

use crate::error::{Error, Result};
use crate::linalg::{CVec4, C64};
use crate::resolvent_probe::{global_resolvent_norm, ScanPolicy};
use crate::spectral_model::{mode_block, SystemConfig};

const FORM_RTOL: f64 = 1e-12;

/// One element of the witness sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WitnessElement {
    /// Base eigenvalue the element is built on.
    pub omega: f64,
    /// Eigenvalue of `A = A₁ = A₂` on that mode (equals `omega` for the
    /// default unit symbols).
    pub eigenvalue: f64,
    /// `λ = √eigenvalue`.
    pub lambda: f64,
    pub a: C64,
    pub c: C64,
    pub ln_abs_a: f64,
    pub ln_abs_c: f64,
    /// `‖Z‖²` recomputed from the closed form of `a` and `c`.
    pub norm_squared: f64,
    /// `‖(iλ − 𝒜)Z‖`.
    pub residual_norm: f64,
    pub ln_residual: f64,
    /// `(√ω·a, iλ·a, √ω·c, iλ·c)` in energy coordinates.
    pub state: Option<CVec4>,
}

impl WitnessElement {
    /// The only nonzero residual component (second slot), closed form.
    pub fn residual_vector(&self, config: &SystemConfig) -> CVec4 {
        let k = config.coupling();
        let x = self.eigenvalue.powf(k.theta - k.mu);
        let factor = k.beta - k.alpha * k.gamma / k.beta * x;
        let second = C64::new(0.0, 1.0) * self.eigenvalue.powf(k.mu + 0.5) * factor * self.c;
        CVec4::new(C64::new(0.0, 0.0), second, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// `λ^{−r}·‖residual‖`.
    pub fn scaled_residual(&self, r: f64) -> f64 {
        (self.ln_residual - r * self.lambda.ln()).exp()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= FORM_RTOL * a.abs().max(b.abs()).max(1.0)
}

/// Checks `A₁ = A₂` and `B₁ = A₁^μ`, `B₂ = A₁^θ`, `μ ≤ θ`.
pub fn check_witness_form(config: &SystemConfig) -> Result<()> {
    let s = config.symbols();
    let k = config.coupling();
    if s.a1 != s.a2 {
        return Err(Error::NotWitnessForm(format!("a1 {:?} differs from a2 {:?}", s.a1, s.a2)));
    }
    for (name, symbol, power) in [("b1", s.b1, k.mu), ("b2", s.b2, k.theta)] {
        let want = s.a1.pow(power);
        if !(close(symbol.coef, want.coef) && close(symbol.exp, want.exp)) {
            return Err(Error::NotWitnessForm(format!(
                "{name} = {}·ω^{} is not a1^{power} = {}·ω^{}",
                symbol.coef, symbol.exp, want.coef, want.exp
            )));
        }
    }
    if k.mu > k.theta {
        return Err(Error::NotWitnessForm(format!("needs mu <= theta, got mu = {} > theta = {}", k.mu, k.theta)));
    }
    if !config.is_coercive() {
        return Err(Error::NotWitnessForm("configuration is not coercive".into()));
    }
    Ok(())
}

fn ln_add_exp(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// Builds the witness element on base eigenvalue `omega`.
pub fn witness_element(config: &SystemConfig, omega: f64) -> Result<WitnessElement> {
    check_witness_form(config)?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let k = config.coupling();
    let (alpha, beta, gamma, mu, theta) = (k.alpha, k.beta, k.gamma, k.mu, k.theta);
    let eig = config.symbols().a1.eval(omega);
    let ln_w = eig.ln();
    let lambda = eig.sqrt();

    // ln|c| = (μ−θ−½) ln ω − ½ ln 2 − ½ ln(γ²/β² + ω^{2μ−2θ})
    let ln_g2b2 = 2.0 * (gamma / beta).abs().ln();
    let ln_c = (mu - theta - 0.5) * ln_w - 0.5 * (2f64.ln() + ln_add_exp(ln_g2b2, 2.0 * (mu - theta) * ln_w));
    // a = −(γ/β) ω^{θ−μ} c
    let ln_a = (gamma / beta).abs().ln() + (theta - mu) * ln_w + ln_c;
    let c = C64::new(ln_c.exp(), 0.0);
    let a = C64::new(-(gamma / beta) * ((theta - mu) * ln_w).exp(), 0.0) * c;

    // ‖Z‖² = 2ω|a|² + 2ω|c|²
    let norm_squared = (2f64.ln() + ln_w + 2.0 * ln_a).exp() + (2f64.ln() + ln_w + 2.0 * ln_c).exp();

    // |β − αγβ⁻¹ω^{θ−μ}| · ω^{μ+½} · |c|
    let factor = (beta - alpha * gamma / beta * ((theta - mu) * ln_w).exp()).abs();
    if factor == 0.0 {
        return Err(Error::NotWitnessForm(format!("residual factor vanishes at omega = {omega}")));
    }
    let ln_residual = factor.ln() + (mu + 0.5) * ln_w + ln_c;

    let root = eig.sqrt();
    let i_lambda = C64::new(0.0, lambda);
    let state = CVec4::new(a * root, i_lambda * a, c * root, i_lambda * c);
    let state = state.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(state);

    Ok(WitnessElement {
        omega,
        eigenvalue: eig,
        lambda,
        a,
        c,
        ln_abs_a: ln_a,
        ln_abs_c: ln_c,
        norm_squared,
        residual_norm: ln_residual.exp(),
        ln_residual,
        state,
    })
}

/// Elements on the selected modes (0-based indices into the spectrum), in
/// increasing `ω`.
pub fn witness_sequence(config: &SystemConfig, mode_indices: &[usize]) -> Result<Vec<WitnessElement>> {
    let values = config.spectrum().values();
    let mut idx = mode_indices.to_vec();
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter()
        .map(|i| {
            let omega = *values.get(i).ok_or(Error::ModeIndex { index: i, len: values.len() })?;
            witness_element(config, omega)
        })
        .collect()
}

/// Large-`ω` limit of `λ^{−2μ}·‖residual‖`: `α/√2` when `μ < θ`,
/// `|β² − αγ|/√(2(γ² + β²))` when `μ = θ`.
pub fn plateau_limit(config: &SystemConfig) -> f64 {
    let k = config.coupling();
    if k.mu < k.theta {
        k.alpha / 2f64.sqrt()
    } else {
        (k.beta * k.beta - k.alpha * k.gamma).abs() / (2.0 * (k.gamma * k.gamma + k.beta * k.beta)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trend {
    Vanishing,
    Plateau,
    Diverging,
    Undetermined,
}

impl Trend {
    pub fn name(&self) -> &'static str {
        match self {
            Trend::Vanishing => "vanishing",
            Trend::Plateau => "plateau",
            Trend::Diverging => "diverging",
            Trend::Undetermined => "undetermined",
        }
    }
}

/// Relative band for a plateau.
pub const PLATEAU_BAND: f64 = 0.05;
/// Overall change required for a vanishing or diverging trend.
pub const TREND_FACTOR: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessReport {
    pub r: f64,
    /// `(ω, λ^{−r}·‖residual‖)`, increasing `ω`.
    pub points: Vec<(f64, f64)>,
    pub limit_estimate: f64,
    pub trend: Trend,
    /// [`plateau_limit`] when `r = 2μ`.
    pub predicted_plateau: Option<f64>,
}

/// Classifies a sequence of positive values. The tail is the second half
/// of the points (at least two).
pub fn classify_trend(values: &[f64]) -> Trend {
    if values.len() < 2 {
        return Trend::Undetermined;
    }
    let tail = &values[values.len() / 2..];
    let tail = if tail.len() < 2 { &values[values.len() - 2..] } else { tail };
    let tmax = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tmin = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let first = values[0];
    let last = values[values.len() - 1];
    if tmax <= (1.0 + PLATEAU_BAND) * tmin {
        Trend::Plateau
    } else if tail.windows(2).all(|w| w[1] < w[0]) && last < first / TREND_FACTOR {
        Trend::Vanishing
    } else if tail.windows(2).all(|w| w[1] > w[0]) && last > first * TREND_FACTOR {
        Trend::Diverging
    } else {
        Trend::Undetermined
    }
}

pub fn optimality_trend(config: &SystemConfig, r: f64, mode_indices: &[usize]) -> Result<WitnessReport> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParameter(format!("r must lie in (0, 1], got {r}")));
    }
    let seq = witness_sequence(config, mode_indices)?;
    report_from_elements(config, r, &seq)
}

/// Same as [`optimality_trend`] for elements built on arbitrary `ω`.
pub fn report_from_elements(config: &SystemConfig, r: f64, elements: &[WitnessElement]) -> Result<WitnessReport> {
    let points: Vec<(f64, f64)> = elements.iter().map(|e| (e.omega, e.scaled_residual(r))).collect();
    let values: Vec<f64> = points.iter().map(|p| p.1).collect();
    let limit_estimate = *values.last().ok_or_else(|| Error::InvalidParameter("no witness elements".into()))?;
    let mu = config.coupling().mu;
    let predicted_plateau = ((r - 2.0 * mu).abs() < 1e-12).then(|| plateau_limit(config));
    Ok(WitnessReport { r, points, limit_estimate, trend: classify_trend(&values), predicted_plateau })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrosscheckRow {
    pub omega: f64,
    pub lambda: f64,
    pub resolvent_norm: f64,
    /// `1/‖residual‖`, a lower bound for the resolvent norm since `‖Z‖ = 1`.
    pub lower_bound: f64,
    pub holds: bool,
}

/// Relative slack granted to the inequality for rounding in the SVD.
pub const CROSSCHECK_RTOL: f64 = 1e-9;

pub fn lower_bound_crosscheck(config: &SystemConfig, mode_indices: &[usize], scan: ScanPolicy) -> Result<Vec<CrosscheckRow>> {
    let seq = witness_sequence(config, mode_indices)?;
    crosscheck_elements(config, &seq, scan)
}

pub fn crosscheck_elements(config: &SystemConfig, elements: &[WitnessElement], scan: ScanPolicy) -> Result<Vec<CrosscheckRow>> {
    elements
        .iter()
        .map(|e| {
            let sample = global_resolvent_norm(config, e.lambda, scan)?;
            let lower_bound = (-e.ln_residual).exp();
            Ok(CrosscheckRow {
                omega: e.omega,
                lambda: e.lambda,
                resolvent_norm: sample.norm,
                lower_bound,
                holds: sample.norm * (1.0 + CROSSCHECK_RTOL) >= lower_bound,
            })
        })
        .collect()
}

/// `(iλ − M)Z` computed by applying the mode block to the materialized
/// state; independent of the closed-form residual.
pub fn applied_residual(config: &SystemConfig, element: &WitnessElement) -> Result<Option<CVec4>> {
    let Some(state) = element.state else {
        return Ok(None);
    };
    let block = mode_block(config, element.omega)?;
    Ok(Some(state * C64::new(0.0, element.lambda) - block.apply(&state)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_model::{
        build_spectrum, BaseSpectrum, CoercivityPolicy, Coupling, PowerLaw, SpectralSymbols, SpectrumKind,
    };
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cfg(alpha: f64, beta: f64, gamma: f64, mu: f64, theta: f64) -> SystemConfig {
        let spectrum = build_spectrum(SpectrumKind::Dirichlet1d { length: PI }, 200).unwrap();
        SystemConfig::fractional(Coupling::new(alpha, beta, gamma, mu, theta), spectrum).unwrap()
    }

    #[test]
    fn worked_element() {
        let c = cfg(1.0, 0.5, 1.0, 0.25, 0.25);
        let e = witness_element(&c, 1e4).unwrap();
        assert_relative_eq!(e.lambda, 100.0, max_relative = 1e-15);
        // |c|² = ω⁻¹ / (2(γ²β⁻² + 1)) = 1e-5
        assert_relative_eq!(e.c.norm(), 1e-5f64.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(e.a.re, -2.0 * e.c.re, max_relative = 1e-13);
        assert_relative_eq!(e.norm_squared, 1.0, epsilon = 1e-12);
        // 1.5 · 10³ · 10^{-2.5}
        assert_relative_eq!(e.residual_norm, 1.5 * 1e3 * 1e-5f64.sqrt(), max_relative = 1e-12);
        assert!((e.residual_norm - 4.7434).abs() < 1e-4);
        assert!((e.scaled_residual(0.5) - 0.47434).abs() < 1e-5);
    }

    #[test]
    fn unit_norm_from_coordinates() {
        for (mu, theta) in [(0.25, 0.25), (0.1, 0.9), (0.4, 0.5), (0.2, 1.0)] {
            let c = cfg(1.3, -0.6, 0.8, mu, theta);
            for omega in [1.0, 37.0, 1e4, 1e8, 1e12] {
                let e = witness_element(&c, omega).unwrap();
                let z = e.state.unwrap();
                assert!((z.norm() - 1.0).abs() < 1e-12, "omega {omega}: {}", z.norm());
                assert!((e.norm_squared - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_is_sparse_when_applied_directly() {
        let c = cfg(1.0, 0.5, 1.2, 0.2, 0.6);
        for omega in [1.0, 9.0, 144.0, 1e4, 1e6] {
            let e = witness_element(&c, omega).unwrap();
            let r = applied_residual(&c, &e).unwrap().unwrap();
            for k in [0, 2, 3] {
                assert!(r[k].norm() < 1e-12, "omega {omega}: component {k} = {}", r[k]);
            }
            let closed = e.residual_vector(&c);
            assert_relative_eq!(r[1].re, closed[1].re, epsilon = 1e-12 * e.residual_norm.max(1.0));
            assert_relative_eq!(r[1].im, closed[1].im, max_relative = 1e-11);
            assert_relative_eq!(r.norm(), e.residual_norm, max_relative = 1e-11);
        }
    }

    #[test]
    fn sequence_on_dirichlet_modes() {
        let c = cfg(1.0, 0.5, 1.0, 0.25, 0.5);
        let seq = witness_sequence(&c, &[4, 0, 2, 1, 3]).unwrap();
        let lambdas: Vec<f64> = seq.iter().map(|e| e.lambda).collect();
        for (l, want) in lambdas.iter().zip([1.0, 2.0, 3.0, 4.0, 5.0]) {
            assert_relative_eq!(*l, want, max_relative = 1e-14);
        }
        assert!(matches!(witness_sequence(&c, &[500]), Err(Error::ModeIndex { .. })));
    }

    #[test]
    fn residual_growth_exponent() {
        // residual ~ α/√2 · ω^μ for μ < θ
        let c = cfg(1.0, 0.5, 1.0, 0.2, 0.7);
        let omegas: Vec<f64> = (0..9).map(|k| 10f64.powi(6 + k)).collect();
        let res: Vec<f64> = omegas.iter().map(|&w| witness_element(&c, w).unwrap().residual_norm).collect();
        let fit = crate::resolvent_probe::fit_log_log(&omegas, &res).unwrap();
        assert!((fit.slope - 0.2).abs() < 0.01, "slope {}", fit.slope);
    }

    #[test]
    fn plateau_constants_match_direct_large_omega_evaluation() {
        // independent: apply the block to the materialized state at large ω
        let c = cfg(1.0, 0.5, 1.0, 0.25, 0.25);
        let e = witness_element(&c, 1e8).unwrap();
        let direct = applied_residual(&c, &e).unwrap().unwrap().norm() / e.state.unwrap().norm();
        assert_relative_eq!(direct * e.lambda.powf(-0.5), 0.75 / 2.5f64.sqrt(), max_relative = 1e-6);
        assert_relative_eq!(plateau_limit(&c), 0.4743416490252569, max_relative = 1e-14);

        let c = cfg(1.0, 0.5, 1.0, 0.2, 0.4);
        let e = witness_element(&c, 1e10).unwrap();
        assert!((e.scaled_residual(0.4) / plateau_limit(&c) - 1.0).abs() < 5e-3);
        assert_relative_eq!(plateau_limit(&c), 1.0 / 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn three_way_trend() {
        let c = cfg(1.0, 0.5, 1.0, 0.25, 0.25);
        let omegas = [1e4, 1e6, 1e8, 1e10, 1e12];
        let elems: Vec<_> = omegas.iter().map(|&w| witness_element(&c, w).unwrap()).collect();
        let at = report_from_elements(&c, 0.5, &elems).unwrap();
        assert_eq!(at.trend, Trend::Plateau);
        assert_eq!(at.predicted_plateau, Some(plateau_limit(&c)));
        let above = report_from_elements(&c, 0.6, &elems).unwrap();
        assert_eq!(above.trend, Trend::Vanishing);
        assert!(above.points.windows(2).all(|w| w[1].1 < w[0].1));
        let below = report_from_elements(&c, 0.3, &elems).unwrap();
        assert_eq!(below.trend, Trend::Diverging);
    }

    #[test]
    fn plateau_for_unequal_exponents() {
        let c = cfg(1.0, 0.5, 1.0, 0.2, 0.4);
        let omegas = [1e6, 1e8, 1e10, 1e12];
        let elems: Vec<_> = omegas.iter().map(|&w| witness_element(&c, w).unwrap()).collect();
        let rep = report_from_elements(&c, 0.4, &elems).unwrap();
        assert_eq!(rep.trend, Trend::Plateau);
        assert!((rep.limit_estimate - 1.0 / 2f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn beta_sign_does_not_change_residuals() {
        let p = cfg(1.0, 0.5, 1.0, 0.25, 0.5);
        let m = cfg(1.0, -0.5, 1.0, 0.25, 0.5);
        for omega in [4.0, 1e3, 1e7] {
            let ep = witness_element(&p, omega).unwrap();
            let em = witness_element(&m, omega).unwrap();
            assert_relative_eq!(ep.residual_norm, em.residual_norm, max_relative = 1e-14);
            assert_relative_eq!(ep.c.norm(), em.c.norm(), max_relative = 1e-14);
        }
    }

    #[test]
    fn form_requirements() {
        let spectrum = build_spectrum(SpectrumKind::Dirichlet1d { length: PI }, 10).unwrap();
        let reversed = SystemConfig::fractional(Coupling::new(1.0, 0.5, 1.0, 0.5, 0.25), spectrum.clone());
        // θ < μ with unit symbols has b1/b2 unbounded over the modes; allow it to construct
        let reversed = reversed.or_else(|_| {
            SystemConfig::new(
                Coupling::new(1.0, 0.1, 1.0, 0.5, 0.25),
                SpectralSymbols::fractional(0.5, 0.25),
                spectrum.clone(),
                CoercivityPolicy::Enforce,
            )
        });
        assert!(matches!(witness_element(&reversed.unwrap(), 4.0), Err(Error::NotWitnessForm(_))));

        let mut symbols = SpectralSymbols::fractional(0.25, 0.5);
        symbols.a2 = PowerLaw::new(1.0, 2.0);
        let mixed = SystemConfig::new(Coupling::new(1.0, 0.5, 1.0, 0.25, 0.5), symbols, spectrum.clone(), CoercivityPolicy::Enforce)
            .unwrap();
        assert!(matches!(witness_element(&mixed, 4.0), Err(Error::NotWitnessForm(_))));

        // squared Laplacian on both sides with matching fractional dampings is fine
        let plate = SpectralSymbols {
            a1: PowerLaw::new(1.0, 2.0),
            a2: PowerLaw::new(1.0, 2.0),
            b1: PowerLaw::new(1.0, 0.5),
            b2: PowerLaw::new(1.0, 1.0),
        };
        let plate = SystemConfig::new(Coupling::new(1.0, 0.5, 1.0, 0.25, 0.5), plate, spectrum, CoercivityPolicy::Enforce).unwrap();
        let e = witness_element(&plate, 3.0).unwrap();
        assert_relative_eq!(e.lambda, 3.0, max_relative = 1e-15);
        let r = applied_residual(&plate, &e).unwrap().unwrap();
        assert!(r[0].norm() < 1e-12 && r[2].norm() < 1e-12 && r[3].norm() < 1e-12);
    }

    #[test]
    fn vanishing_residual_factor_needs_noncoercive_config() {
        // αγ = β² ω^{μ−θ} at ω = 1 when αγ = β²
        let spectrum = BaseSpectrum::from_values(SpectrumKind::CustomFile { path: "x".into() }, vec![1.0]).unwrap();
        let coupling = Coupling::new(1.0, 1.0, 1.0, 0.25, 0.5);
        assert!(matches!(SystemConfig::fractional(coupling, spectrum.clone()), Err(Error::NotCoercive { .. })));
        let loose =
            SystemConfig::new(coupling, SpectralSymbols::fractional(0.25, 0.5), spectrum, CoercivityPolicy::Allow).unwrap();
        assert!(matches!(witness_element(&loose, 1.0), Err(Error::NotWitnessForm(_))));
    }

    #[test]
    fn crosscheck_lower_bound_holds() {
        let c = cfg(1.0, 0.5, 1.0, 0.25, 0.25);
        let rows = lower_bound_crosscheck(&c, &(0..200).step_by(7).collect::<Vec<_>>(), ScanPolicy::Full).unwrap();
        assert!(rows.iter().all(|r| r.holds));
        // λ = 100 ⇒ mode index 99
        let row = lower_bound_crosscheck(&c, &[99], ScanPolicy::default()).unwrap()[0];
        assert_relative_eq!(row.lambda, 100.0, max_relative = 1e-14);
        assert!(row.resolvent_norm <= 4.0 * row.lower_bound, "{row:?}");
    }

    #[test]
    fn trend_rules() {
        assert_eq!(classify_trend(&[1.0, 1.01, 1.02, 1.03]), Trend::Plateau);
        assert_eq!(classify_trend(&[1.0, 0.7, 0.5, 0.3]), Trend::Vanishing);
        assert_eq!(classify_trend(&[1.0, 1.5, 2.5, 4.0]), Trend::Diverging);
        assert_eq!(classify_trend(&[1.0, 3.0, 2.0, 1.5, 2.5]), Trend::Undetermined);
        assert_eq!(classify_trend(&[1.0]), Trend::Undetermined);
    }

    #[test]
    fn r_out_of_range() {
        let c = cfg(1.0, 0.5, 1.0, 0.25, 0.25);
        assert!(optimality_trend(&c, 0.0, &[1, 2, 3]).is_err());
        assert!(optimality_trend(&c, 1.2, &[1, 2, 3]).is_err());
    }
}
