//! Dense finite-section assembly of the generator, used to cross-check the
//! per-mode paths with general-purpose dense algorithms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evolution::{block_eigenvalues, evolve_state, ModalState};
use crate::linalg::C64;
use crate::resolvent_probe::{global_resolvent_norm, ScanPolicy};
use crate::spectral_model::{mode_blocks, BaseSpectrum, SystemConfig};

pub const MAX_DENSE_MODES: usize = 256;

/// Block-diagonal `4N × 4N` matrix of the first `N` mode blocks.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    config: SystemConfig,
    matrix: DMatrix<f64>,
}

impl DenseSystem {
    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 4
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The configuration restricted to the assembled modes.
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }
}

pub fn assemble_dense(config: &SystemConfig, n_modes: usize) -> Result<DenseSystem> {
    let len = config.spectrum().len();
    if n_modes == 0 || n_modes > MAX_DENSE_MODES || n_modes > len {
        return Err(Error::InvalidParameter(format!(
            "dense assembly needs 1 <= N <= min({MAX_DENSE_MODES}, {len}), got {n_modes}"
        )));
    }
    let spectrum = config.spectrum();
    let head = BaseSpectrum::from_values(spectrum.kind().clone(), spectrum.values()[..n_modes].to_vec())?;
    let config = config.with_spectrum(head)?;
    let mut matrix = DMatrix::zeros(4 * n_modes, 4 * n_modes);
    for (k, block) in mode_blocks(&config).iter().enumerate() {
        matrix.fixed_view_mut::<4, 4>(4 * k, 4 * k).copy_from(&block.matrix);
    }
    Ok(DenseSystem { config, matrix })
}

/// `1/σ_min(iλ − A)` from a full dense SVD.
pub fn dense_resolvent_norm(system: &DenseSystem, lambda: f64) -> Result<f64> {
    let n = system.matrix.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { C64::new(0.0, lambda) } else { C64::new(0.0, 0.0) };
        d - C64::new(system.matrix[(i, j)], 0.0)
    });
    let sv = shifted.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin.is_nan() || smin <= 4.0 * f64::EPSILON * smax {
        return Err(Error::Singular { lambda, omega: f64::NAN, sigma_min: smin });
    }
    Ok(1.0 / smin)
}

pub fn dense_eigenvalues(system: &DenseSystem) -> Vec<C64> {
    system.matrix.complex_eigenvalues().iter().copied().collect()
}

/// `e^{tA}` by the dense scaling-and-squaring routine.
pub fn dense_exponential(system: &DenseSystem, t: f64) -> Result<DMatrix<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok((&system.matrix * t).exp())
}

/// Largest entrywise deviation between the dense exponential applied to
/// `state` and the per-mode evolution.
pub fn dense_expm_check(system: &DenseSystem, t: f64, state: &ModalState) -> Result<f64> {
    let expm = dense_exponential(system, t)?;
    let flat = DVector::from_vec(state.to_flat());
    let dense = expm.map(|x| C64::new(x, 0.0)) * flat;
    let modal = evolve_state(&system.config, state, t)?.to_flat();
    Ok(dense.iter().zip(&modal).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// Largest distance from a dense eigenvalue to the nearest per-block
/// eigenvalue, relative to the largest eigenvalue modulus.
pub fn eigenvalue_mismatch(system: &DenseSystem) -> f64 {
    let blocks: Vec<C64> = mode_blocks(&system.config).iter().flat_map(block_eigenvalues).collect();
    let scale = blocks.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    dense_eigenvalues(system)
        .iter()
        .map(|d| blocks.iter().map(|b| (d - b).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        / scale
}

/// Tolerances used by [`run_oracle`].
pub const RESOLVENT_RTOL: f64 = 1e-10;
pub const EXPM_TOL: f64 = 1e-8;
pub const EIGEN_RTOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub n_modes: usize,
    pub lambdas: Vec<f64>,
    /// Largest relative gap between dense and per-mode resolvent norms.
    pub resolvent_max_rel_dev: f64,
    /// Largest entrywise gap of the exponential action, per time.
    pub expm_max_dev: Vec<(f64, f64)>,
    pub eigen_max_rel_dev: f64,
    pub pass: bool,
}

fn weyl(k: usize, seed: u64) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    ((k as f64 + 1.0) * PHI + (seed as f64) * std::f64::consts::FRAC_1_SQRT_2).fract()
}

/// Frequencies spread log-uniformly around the assembled band.
pub fn probe_lambdas(system: &DenseSystem, count: usize, seed: u64) -> Vec<f64> {
    let v = system.config.spectrum().values();
    let lo = (0.1 * v[0].sqrt()).ln();
    let hi = (10.0 * v[v.len() - 1].sqrt()).ln();
    (0..count).map(|k| (lo + weyl(k, seed) * (hi - lo)).exp()).collect()
}

/// Deterministic unit-norm state on the assembled modes.
pub fn probe_state(n_modes: usize, seed: u64) -> ModalState {
    let flat: Vec<C64> = (0..4 * n_modes)
        .map(|k| C64::new(weyl(2 * k, seed) - 0.5, weyl(2 * k + 1, seed) - 0.5))
        .collect();
    let norm = flat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ModalState::from_flat(&flat.iter().map(|z| z / norm).collect::<Vec<_>>()).expect("length is a multiple of 4")
}

/// Dense versus per-mode comparison on `min(64, N)` modes.
pub fn run_oracle(config: &SystemConfig, n_lambda: usize, times: &[f64], seed: u64) -> Result<OracleReport> {
    let n = config.spectrum().len().min(64);
    let system = assemble_dense(config, n)?;
    let lambdas = probe_lambdas(&system, n_lambda, seed);
    let mut resolvent_max_rel_dev: f64 = 0.0;
    for &l in &lambdas {
        let dense = dense_resolvent_norm(&system, l)?;
        let modal = global_resolvent_norm(&system.config, l, ScanPolicy::Full)?.norm;
        resolvent_max_rel_dev = resolvent_max_rel_dev.max((dense - modal).abs() / modal);
    }
    let state = probe_state(n, seed);
    let expm_max_dev = times
        .iter()
        .map(|&t| Ok((t, dense_expm_check(&system, t, &state)?)))
        .collect::<Result<Vec<_>>>()?;
    let eigen_max_rel_dev = eigenvalue_mismatch(&system);
    let pass = resolvent_max_rel_dev <= RESOLVENT_RTOL
        && expm_max_dev.iter().all(|(_, d)| *d <= EXPM_TOL)
        && eigen_max_rel_dev <= EIGEN_RTOL;
    Ok(OracleReport { n_modes: n, lambdas, resolvent_max_rel_dev, expm_max_dev, eigen_max_rel_dev, pass })
}
