//! Resolvent norms `‖(iλ − 𝒜)⁻¹‖` along the imaginary axis.
//!
//! The generator is block-diagonal in energy coordinates, so the resolvent
//! norm is the supremum over modes of `1/σ_min(iλI − M(ω))`. The decay rate
//! of that supremum in `λ` decides the regularity class: `O(λ⁻¹)` is
//! analytic, `O(λ^{-2s})` with `s = min(μ, θ) < 1/2` is Gevrey of order
//! `1/(2s)`.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{complexify, svd4, CMat4, C64};
use crate::spectral_model::{mode_block, Coupling, ModeBlock, SystemConfig};

/// Number of lowest modes every adaptive scan visits.
pub const LOW_MODES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScanPolicy {
    /// Modes with `ω ∈ [λ²/ratio, λ²·ratio]`, the lowest [`LOW_MODES`] modes,
    /// and a geometric subsample of the rest.
    Adaptive { ratio: f64 },
    /// Every listed mode.
    Full,
}

impl Default for ScanPolicy {
    fn default() -> Self {
        ScanPolicy::Adaptive { ratio: 100.0 }
    }
}

impl ScanPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ScanPolicy::Adaptive { .. } => "adaptive",
            ScanPolicy::Full => "full",
        }
    }
}

/// Mode indices visited at frequency `lambda`, ascending and unique.
pub fn scan_indices(values: &[f64], lambda: f64, scan: ScanPolicy) -> Vec<usize> {
    let n = values.len();
    match scan {
        ScanPolicy::Full => (0..n).collect(),
        ScanPolicy::Adaptive { ratio } => {
            let center = lambda * lambda;
            let lo = values.partition_point(|&w| w < center / ratio);
            let hi = values.partition_point(|&w| w <= center * ratio);
            let mut idx: Vec<usize> = (0..n.min(LOW_MODES)).chain(lo..hi).collect();
            for start in [LOW_MODES, hi] {
                let mut i = start.max(1);
                while i < n {
                    idx.push(i);
                    i *= 2;
                }
            }
            if n > 0 {
                idx.push(n - 1);
            }
            idx.sort_unstable();
            idx.dedup();
            idx
        }
    }
}

fn shifted(block: &ModeBlock, lambda: f64) -> CMat4 {
    CMat4::identity() * C64::new(0.0, lambda) - complexify(&block.matrix)
}

/// `(‖(iλ − M)⁻¹‖, σ_min(iλ − M))` for one block.
pub fn block_resolvent(block: &ModeBlock, lambda: f64) -> Result<(f64, f64)> {
    let svd = svd4(&shifted(block, lambda));
    let sigma_min = svd.sigma_min();
    if sigma_min.is_nan() || sigma_min <= 4.0 * f64::EPSILON * svd.sigma_max() {
        return Err(Error::Singular { lambda, omega: block.omega, sigma_min });
    }
    Ok((1.0 / sigma_min, sigma_min))
}

pub fn block_resolvent_norm(block: &ModeBlock, lambda: f64) -> Result<f64> {
    block_resolvent(block, lambda).map(|(norm, _)| norm)
}

/// One point of a resolvent sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolventSample {
    pub lambda: f64,
    pub norm: f64,
    pub argmax_omega: f64,
    pub sigma_min: f64,
}

/// Supremum of the block resolvent norms over the scanned modes. Ties keep
/// the smallest `ω`.
pub fn global_resolvent_norm(config: &SystemConfig, lambda: f64, scan: ScanPolicy) -> Result<ResolventSample> {
    let values = config.spectrum().values();
    let indices = scan_indices(values, lambda, scan);
    if indices.is_empty() {
        return Err(Error::EmptyScan(lambda));
    }
    let mut best: Option<ResolventSample> = None;
    for i in indices {
        let block = mode_block(config, values[i])?;
        let (norm, sigma_min) = block_resolvent(&block, lambda)?;
        if best.is_none_or(|b| norm > b.norm) {
            best = Some(ResolventSample { lambda, norm, argmax_omega: values[i], sigma_min });
        }
    }
    Ok(best.expect("scan set is nonempty"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepParams {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_points: usize,
    pub scan: ScanPolicy,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams { lambda_min: 1e2, lambda_max: 1e6, n_points: 97, scan: ScanPolicy::default() }
    }
}

/// Log-spaced grid with exact endpoints.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub coupling: Coupling,
    pub spectrum_kind: &'static str,
    pub n_modes: usize,
    pub grid: Vec<f64>,
    pub samples: Vec<ResolventSample>,
    pub scan: ScanPolicy,
}

/// Evaluates [`global_resolvent_norm`] on a log-spaced grid. Grid points run
/// in parallel; samples come back in grid order.
pub fn sweep(config: &SystemConfig, params: &SweepParams) -> Result<SweepResult> {
    let SweepParams { lambda_min, lambda_max, n_points, scan } = *params;
    if !(lambda_min > 0.0 && lambda_min < lambda_max && lambda_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"
        )));
    }
    if n_points < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 grid points, got {n_points}")));
    }
    if let ScanPolicy::Adaptive { ratio } = scan {
        if ratio.is_nan() || ratio <= 1.0 {
            return Err(Error::InvalidParameter(format!("adaptive scan ratio must exceed 1, got {ratio}")));
        }
    }
    let grid = log_grid(lambda_min, lambda_max, n_points);
    let samples = grid
        .par_iter()
        .map(|&lambda| global_resolvent_norm(config, lambda, scan))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        coupling: *config.coupling(),
        spectrum_kind: config.spectrum().kind().name(),
        n_modes: config.spectrum().len(),
        grid,
        samples,
        scan,
    })
}

/// Least-squares line through `(ln λ, ln ‖R‖)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Ordinary least squares of `ln y` against `ln x`. Needs at least 3
/// points.
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<ExponentFit> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return Err(Error::TooFewFitPoints(n));
    }
    let lx: Vec<f64> = xs[..n].iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys[..n].iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    let lo = xs[..n].iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit { slope, intercept, r_squared, window: (lo, hi), n_points: n })
}

/// Fits the decay exponent on the top `window_fraction` of the log-λ range.
pub fn fit_decay_exponent(sweep: &SweepResult, window_fraction: f64) -> Result<ExponentFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let (Some(first), Some(last)) = (sweep.grid.first(), sweep.grid.last()) else {
        return Err(Error::TooFewFitPoints(0));
    };
    let (a, b) = (first.ln(), last.ln());
    let cut = b - window_fraction * (b - a);
    let slack = 1e-12 * (b - a).abs().max(1.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = sweep
        .samples
        .iter()
        .filter(|s| s.lambda.ln() >= cut - slack)
        .map(|s| (s.lambda, s.norm))
        .unzip();
    fit_log_log(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Analytic,
    Gevrey,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Analytic => "Analytic",
            Verdict::Gevrey => "Gevrey",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyParams {
    pub sweep: SweepParams,
    pub window_fraction: f64,
    pub tol: f64,
    pub min_r_squared: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams { sweep: SweepParams::default(), window_fraction: 0.5, tol: 0.05, min_r_squared: 0.98 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityVerdict {
    pub verdict: Verdict,
    pub s: f64,
    /// `1/(2s)`, only for a Gevrey verdict.
    pub delta: Option<f64>,
    pub fitted_slope: f64,
    pub tolerance: f64,
    pub evidence: ExponentFit,
    pub distance_analytic: f64,
    /// `|slope + 2s|`, when `s < 1/2`.
    pub distance_gevrey: Option<f64>,
    /// `sup λ^{2s}·‖R(iλ)‖` over the sweep.
    pub scaled_sup: f64,
    /// Whether the spectrum reaches the fit window: the largest modal
    /// frequency is at least the window's upper end. Above the top mode a
    /// finite section always decays like `λ⁻¹`.
    pub resolved: bool,
}

/// Largest undamped modal frequency `max √a_j(ω)` of the listed spectrum.
pub fn top_frequency(config: &SystemConfig) -> f64 {
    let s = config.symbols();
    config
        .spectrum()
        .values()
        .iter()
        .map(|&w| s.a1.eval(w).max(s.a2.eval(w)).sqrt())
        .fold(0.0, f64::max)
}

/// Classification from an existing sweep.
pub fn classify_sweep(config: &SystemConfig, sweep: &SweepResult, params: &ClassifyParams) -> Result<RegularityVerdict> {
    let fit = fit_decay_exponent(sweep, params.window_fraction)?;
    let s = config.coupling().s();
    let tol = params.tol;
    let distance_analytic = (fit.slope + 1.0).abs();
    let distance_gevrey = (s < 0.5).then(|| (fit.slope + 2.0 * s).abs());

    let verdict = if fit.r_squared < params.min_r_squared {
        Verdict::Inconclusive
    } else {
        match distance_gevrey {
            Some(dg) if dg <= tol && dg < distance_analytic => Verdict::Gevrey,
            _ if distance_analytic <= tol => Verdict::Analytic,
            Some(dg) if dg <= tol => Verdict::Gevrey,
            _ => Verdict::Inconclusive,
        }
    };
    let scaled_sup = sweep
        .samples
        .iter()
        .map(|p| p.lambda.abs().powf(2.0 * s) * p.norm)
        .fold(0.0, f64::max);
    let resolved = top_frequency(config) >= fit.window.1;
    if !resolved {
        warn!(
            "fit window reaches lambda = {:.3e} but the highest modal frequency is {:.3e}; \
             the fitted slope describes the truncated spectrum only",
            fit.window.1,
            top_frequency(config)
        );
    }
    Ok(RegularityVerdict {
        verdict,
        s,
        delta: (verdict == Verdict::Gevrey).then(|| 1.0 / (2.0 * s)),
        fitted_slope: fit.slope,
        tolerance: tol,
        evidence: fit,
        distance_analytic,
        distance_gevrey,
        scaled_sup,
        resolved,
    })
}

/// Sweeps, fits and classifies.
pub fn classify(config: &SystemConfig, params: &ClassifyParams) -> Result<RegularityVerdict> {
    let result = sweep(config, &params.sweep)?;
    classify_sweep(config, &result, params)
}
