//! Per-mode semigroup action, block spectra and smoothing diagnostics.
//!
//! Each block exponential is exact up to rounding, so trajectories on a
//! user-supplied time grid involve no stepping error.

use log::warn;
use nalgebra::Matrix4;
use rayon::prelude::*;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{complexify, expm_pade, quartic_roots, spectral_norm, svd4, CMat4, CVec4, C64};
use crate::resolvent_probe::{fit_log_log, ExponentFit};
use crate::spectral_model::{mode_block, mode_blocks, ModeBlock, SystemConfig};

/// Eigenvector conditioning above which the Padé path is used.
pub const EIGEN_COND_LIMIT: f64 = 1e6;

/// Relative eigenpair residual accepted by the eigendecomposition path.
const EIGEN_RESIDUAL_RTOL: f64 = 1e-10;

/// Eigenvalues of the block, sorted by real part then imaginary part.
pub fn block_eigenvalues(block: &ModeBlock) -> [C64; 4] {
    let mut roots = quartic_roots(block.characteristic_coefficients());
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    roots
}

/// `t ↦ e^{tM}` for one block, prepared once and evaluated at many times.
#[derive(Clone, Debug)]
pub enum Propagator {
    Eigen(Box<Eigensystem>),
    Pade { matrix: Matrix4<f64> },
}

/// `M = V·diag(values)·V⁻¹`.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: [C64; 4],
    pub vectors: CMat4,
    pub inverse: CMat4,
}

impl Propagator {
    pub fn new(block: &ModeBlock) -> Self {
        eigen_propagator(block).unwrap_or(Propagator::Pade { matrix: block.matrix })
    }

    pub fn is_eigen(&self) -> bool {
        matches!(self, Propagator::Eigen(_))
    }

    /// `e^{tM}`; `t` is assumed nonnegative.
    pub fn at(&self, t: f64) -> Matrix4<f64> {
        if t == 0.0 {
            return Matrix4::identity();
        }
        match self {
            Propagator::Eigen(e) => {
                let mut scaled = e.vectors;
                for (k, s) in e.values.iter().enumerate() {
                    let e = (s * t).exp();
                    for r in 0..4 {
                        scaled[(r, k)] *= e;
                    }
                }
                (scaled * e.inverse).map(|z| z.re)
            }
            Propagator::Pade { matrix } => expm_pade(&(matrix * t)),
        }
    }
}

fn eigen_propagator(block: &ModeBlock) -> Option<Propagator> {
    let values = block_eigenvalues(block);
    let m = complexify(&block.matrix);
    let scale = spectral_norm(&m).max(f64::MIN_POSITIVE);
    let mut vectors = CMat4::zeros();
    for (k, s) in values.iter().enumerate() {
        let shifted = m - CMat4::identity() * *s;
        let svd = svd4(&shifted);
        if svd.sigma_min() > EIGEN_RESIDUAL_RTOL * scale {
            return None;
        }
        vectors.set_column(k, &svd.right.column(3));
    }
    if svd4(&vectors).condition_number() >= EIGEN_COND_LIMIT {
        return None;
    }
    let inverse = vectors.try_inverse()?;
    Some(Propagator::Eigen(Box::new(Eigensystem { values, vectors, inverse })))
}

/// `e^{tM}` for one block.
pub fn block_exponential(block: &ModeBlock, t: f64) -> Result<Matrix4<f64>> {
    check_time(t)?;
    Ok(Propagator::new(block).at(t))
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

fn apply_real(m: &Matrix4<f64>, z: &CVec4) -> CVec4 {
    complexify(m) * z
}

/// Per-mode `(p, v, q, z)` coefficients aligned with the spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalState {
    modes: Vec<CVec4>,
}

impl ModalState {
    pub fn new(modes: Vec<CVec4>) -> Self {
        ModalState { modes }
    }

    pub fn zeros(n_modes: usize) -> Self {
        ModalState { modes: vec![CVec4::zeros(); n_modes] }
    }

    /// Everything zero except mode `index`.
    pub fn single_mode(n_modes: usize, index: usize, z: CVec4) -> Result<Self> {
        if index >= n_modes {
            return Err(Error::ModeIndex { index, len: n_modes });
        }
        let mut s = Self::zeros(n_modes);
        s.modes[index] = z;
        Ok(s)
    }

    /// From `4N` coefficients ordered mode by mode.
    pub fn from_flat(values: &[C64]) -> Result<Self> {
        if !values.len().is_multiple_of(4) {
            return Err(Error::LengthMismatch(format!("{} coefficients is not a multiple of 4", values.len())));
        }
        Ok(ModalState { modes: values.chunks(4).map(CVec4::from_column_slice).collect() })
    }

    pub fn to_flat(&self) -> Vec<C64> {
        self.modes.iter().flat_map(|z| z.iter().copied()).collect()
    }

    pub fn modes(&self) -> &[CVec4] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.modes.iter().map(|z| z.norm_squared()).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub energy_norm: f64,
    /// `‖𝒜Z(t)‖` over the modes of the state.
    pub generator_norm: f64,
    /// Per-mode energy norms, when requested.
    pub per_mode: Option<Vec<f64>>,
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    for &t in t_grid {
        check_time(t)?;
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn check_state(config: &SystemConfig, state: &ModalState) -> Result<()> {
    let n = config.spectrum().len();
    if state.len() != n {
        return Err(Error::LengthMismatch(format!("state has {} modes, spectrum has {n}", state.len())));
    }
    Ok(())
}

/// Energy samples of `e^{t𝒜}Z₀` on `t_grid`.
pub fn evolve(config: &SystemConfig, initial: &ModalState, t_grid: &[f64]) -> Result<Vec<TrajectorySample>> {
    evolve_detailed(config, initial, t_grid, false)
}

pub fn evolve_detailed(
    config: &SystemConfig,
    initial: &ModalState,
    t_grid: &[f64],
    per_mode: bool,
) -> Result<Vec<TrajectorySample>> {
    check_state(config, initial)?;
    check_grid(t_grid)?;
    let blocks = mode_blocks(config);
    // per mode, per time: (|Z|², |MZ|²)
    let table: Vec<Vec<(f64, f64)>> = blocks
        .par_iter()
        .zip(initial.modes().par_iter())
        .map(|(block, z0)| {
            if z0.iter().all(|c| *c == C64::new(0.0, 0.0)) {
                return vec![(0.0, 0.0); t_grid.len()];
            }
            let prop = Propagator::new(block);
            t_grid
                .iter()
                .map(|&t| {
                    let z = apply_real(&prop.at(t), z0);
                    (z.norm_squared(), block.apply(&z).norm_squared())
                })
                .collect()
        })
        .collect();

    let samples: Vec<TrajectorySample> = t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let energy: f64 = table.iter().map(|row| row[j].0).sum();
            let generator: f64 = table.iter().map(|row| row[j].1).sum();
            TrajectorySample {
                t,
                energy_norm: energy.sqrt(),
                generator_norm: generator.sqrt(),
                per_mode: per_mode.then(|| table.iter().map(|row| row[j].0.sqrt()).collect()),
            }
        })
        .collect();
    for w in samples.windows(2) {
        if w[1].energy_norm > w[0].energy_norm * (1.0 + 1e-12) {
            warn!("energy increased from {} at t = {} to {} at t = {}", w[0].energy_norm, w[0].t, w[1].energy_norm, w[1].t);
        }
    }
    Ok(samples)
}

/// `e^{t𝒜}Z₀` mode by mode.
pub fn evolve_state(config: &SystemConfig, initial: &ModalState, t: f64) -> Result<ModalState> {
    check_state(config, initial)?;
    check_time(t)?;
    let modes = mode_blocks(config)
        .par_iter()
        .zip(initial.modes().par_iter())
        .map(|(block, z0)| apply_real(&Propagator::new(block).at(t), z0))
        .collect();
    Ok(ModalState::new(modes))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PortraitRow {
    pub mode: usize,
    pub omega: f64,
    pub eigenvalue: C64,
}

/// Block eigenvalues over a range of mode indices, four rows per mode.
pub fn spectral_portrait(config: &SystemConfig, modes: Range<usize>) -> Result<Vec<PortraitRow>> {
    let values = config.spectrum().values();
    if modes.is_empty() {
        return Err(Error::InvalidParameter(format!("empty mode range {}..{}", modes.start, modes.end)));
    }
    if modes.end > values.len() {
        return Err(Error::ModeIndex { index: modes.end - 1, len: values.len() });
    }
    let mut rows = Vec::with_capacity(4 * modes.len());
    for k in modes {
        let block = mode_block(config, values[k])?;
        rows.extend(block_eigenvalues(&block).iter().map(|&e| PortraitRow { mode: k, omega: values[k], eigenvalue: e }));
    }
    Ok(rows)
}

/// Log-log slope of `|Re|` against `|eigenvalue|` along the weakly damped
/// high-frequency branch: per mode, the eigenvalue of least `|Re|` among
/// those with modulus at least a tenth of the largest.
pub fn portrait_slope(rows: &[PortraitRow]) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.mode == b.mode) {
        let top = chunk.iter().map(|r| r.eigenvalue.norm()).fold(0.0, f64::max);
        let pick = chunk
            .iter()
            .filter(|r| r.eigenvalue.norm() >= 0.1 * top)
            .min_by(|a, b| a.eigenvalue.re.abs().total_cmp(&b.eigenvalue.re.abs()))
            .expect("the largest eigenvalue passes the filter");
        xs.push(pick.eigenvalue.norm());
        ys.push(pick.eigenvalue.re.abs());
    }
    fit_log_log(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingRow {
    pub t: f64,
    /// `sup` over modes of `‖M e^{tM}‖`.
    pub sup_norm: f64,
    pub argmax_omega: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingReport {
    pub rows: Vec<SmoothingRow>,
    /// Fit over the smaller half of the times (at least three).
    pub fit: Option<ExponentFit>,
}

pub fn smoothing_probe(config: &SystemConfig, t_list: &[f64]) -> Result<SmoothingReport> {
    if t_list.is_empty() {
        return Err(Error::InvalidParameter("no times given".into()));
    }
    if let Some(t) = t_list.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidParameter(format!("times must be positive, got {t}")));
    }
    let mut times = t_list.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let blocks = mode_blocks(config);
    let per_mode: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|block| {
            let prop = Propagator::new(block);
            let m = complexify(&block.matrix);
            times.iter().map(|&t| spectral_norm(&(m * complexify(&prop.at(t))))).collect()
        })
        .collect();
    let rows: Vec<SmoothingRow> = times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut best = SmoothingRow { t, sup_norm: f64::NEG_INFINITY, argmax_omega: f64::NAN };
            for (block, row) in blocks.iter().zip(&per_mode) {
                if row[j] > best.sup_norm {
                    best.sup_norm = row[j];
                    best.argmax_omega = block.omega;
                }
            }
            best
        })
        .collect();
    let n_fit = (rows.len() / 2).max(3);
    let fit = (rows.len() >= 3).then(|| {
        let head = &rows[..n_fit.min(rows.len())];
        let xs: Vec<f64> = head.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = head.iter().map(|r| r.sup_norm).collect();
        fit_log_log(&xs, &ys)
    });
    Ok(SmoothingReport { rows, fit: fit.transpose()? })
}
