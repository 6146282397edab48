//! Eigen-diagnostics: participation ratios, the power identity between
//! (-Δ_A)^{s/2} and -Δ_A, an embedded-eigenvalue detector, and the 1D gauge check.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{diag_real, hermitian_eigen, identity, max_abs_entry, op_norm, re, CMat, CVec, C64};
use crate::operators::{build_laplacian, build_magnetic_laplacian, frac_power_eig, HermitianOperator};
use crate::potentials::{gauge_function, VectorPotential};

pub const LOCALIZATION_THRESHOLD: f64 = 0.2;
pub const EMBEDDED_MIN_EIGENVALUE: f64 = 1e-6;

/// (Σ|u|²)² / (M Σ|u|⁴) over M entries.
pub fn participation_ratio(u: &CVec) -> f64 {
    let m = u.len() as f64;
    let s2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    let s4: f64 = u.iter().map(|z| z.norm_sqr().powi(2)).sum();
    if s4 == 0.0 {
        0.0
    } else {
        s2 * s2 / (m * s4)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub values: DVector<f64>,
    pub vectors: CMat,
    pub participation: Vec<f64>,
    /// Indices with participation ratio below the threshold.
    pub point_flags: Vec<usize>,
    pub threshold: f64,
    /// max_k ‖H u_k - λ_k u_k‖ / ‖H‖
    pub residual: f64,
    /// max entry of |U*U - I|
    pub orthonormality: f64,
}

impl SpectralDecomposition {
    /// Indices not flagged as localized.
    pub fn continuous(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|k| !self.point_flags.contains(k)).collect()
    }

    pub fn vector(&self, k: usize) -> CVec {
        self.vectors.column(k).into_owned()
    }
}

pub fn eigensystem(h: &HermitianOperator) -> SpectralDecomposition {
    eigensystem_with_threshold(h, LOCALIZATION_THRESHOLD)
}

pub fn eigensystem_with_threshold(h: &HermitianOperator, threshold: f64) -> SpectralDecomposition {
    let e = h.eigen();
    let n = e.values.len();
    let participation: Vec<f64> =
        (0..n).into_par_iter().map(|k| participation_ratio(&e.vectors.column(k).into_owned())).collect();
    let point_flags = (0..n).filter(|&k| participation[k] < threshold).collect();
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let hv = h.entries() * &e.vectors;
    let residual = (0..n)
        .map(|k| (hv.column(k) - e.vectors.column(k) * re(e.values[k])).norm())
        .fold(0.0, f64::max)
        / scale;
    let orthonormality = max_abs_entry(&(e.vectors.adjoint() * &e.vectors - identity(n)));
    SpectralDecomposition {
        values: e.values.clone(),
        vectors: e.vectors.clone(),
        participation,
        point_flags,
        threshold,
        residual,
        orthonormality,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerIdentityReport {
    pub s: f64,
    /// ‖(-Δ_A)u_k - μ_k^{2/s} u_k‖ per eigenpair (μ_k, u_k) of (-Δ_A)^{s/2}.
    pub defects: Vec<f64>,
    pub max_defect: f64,
    /// max_defect / ‖-Δ_A‖
    pub relative: f64,
}

/// Diagonalizes (-Δ_A)^{s/2} afresh and checks each eigenpair against -Δ_A
/// with the eigenvalue raised to 2/s.
pub fn power_identity_check(ha: &HermitianOperator, s: f64) -> Result<PowerIdentityReport> {
    crate::operators::check_order(s)?;
    let hs = frac_power_eig(ha, 0.5 * s)?;
    let (mu, u) = hermitian_eigen(hs.entries());
    let hu = ha.entries() * &u;
    let p = 2.0 / s;
    let defects: Vec<f64> = (0..mu.len())
        .map(|k| {
            let lam = mu[k].signum() * mu[k].abs().powf(p);
            (hu.column(k) - u.column(k) * re(lam)).norm()
        })
        .collect();
    let max_defect = defects.iter().fold(0.0_f64, |m, v| m.max(*v));
    Ok(PowerIdentityReport { s, relative: max_defect / ha.norm(), defects, max_defect })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedCandidate {
    pub index: usize,
    pub eigenvalue: f64,
    pub participation: f64,
}

/// Localized eigenvectors (participation below threshold) with eigenvalue above 1e-6.
pub fn embedded_eigenvalue_scan(decomp: &SpectralDecomposition) -> Vec<EmbeddedCandidate> {
    decomp
        .point_flags
        .iter()
        .filter(|&&k| decomp.values[k] > EMBEDDED_MIN_EIGENVALUE)
        .map(|&k| EmbeddedCandidate { index: k, eigenvalue: decomp.values[k], participation: decomp.participation[k] })
        .collect()
}

/// Diagonal potential D(1 - exp(-|x|²/w²)): a well around the origin on a
/// raised floor. It does not decay, so it lies outside the magnetic class.
pub fn raised_well(grid: &Grid, depth: f64, width: f64) -> Vec<f64> {
    grid.radius_sq().iter().map(|r2| depth * (1.0 - (-r2 / (width * width)).exp())).collect()
}

/// H + diag(w).
pub fn with_scalar_potential(h: &HermitianOperator, w: &[f64]) -> Result<HermitianOperator> {
    HermitianOperator::new(h.entries() + diag_real(w), format!("{} + scalar well", h.label()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    /// ‖U(-Δ_A)U* - (-Δ)‖ / ‖-Δ‖ on the whole grid.
    pub conjugation_defect: f64,
    /// Same, compressed to |ξ| ≤ band_cutoff.
    pub band_conjugation_defect: f64,
    /// max |λ_k(-Δ_A) - λ_k(-Δ)| over eigenvalues of -Δ up to band_cutoff².
    pub spectral_defect: f64,
    /// max |λ_k(-Δ_A) - λ_k(-Δ)| over the whole spectrum.
    pub full_spectral_defect: f64,
    pub band_cutoff: f64,
    pub compared_eigenvalues: usize,
}

/// Conjugates -Δ_A by U = diag(e^{-iG}), G = -∫₀^x A. On the grid the
/// identity holds for modes away from the Nyquist edge, so the report also
/// gives both defects restricted to the lower half of the band.
pub fn gauge_transform_check(grid: &Grid, a: &VectorPotential) -> Result<GaugeReport> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("gauge check is defined for n = 1 only".into()));
    }
    let g = gauge_function(grid, a)?;
    let ha = build_magnetic_laplacian(grid, a)?;
    let h0 = build_laplacian(grid);
    let u = CMat::from_diagonal(&CVec::from_iterator(g.len(), g.iter().map(|&v| C64::from_polar(1.0, -v))));
    let diff = &u * ha.entries() * u.adjoint() - h0.entries();
    let scale = h0.norm();
    let cutoff = 0.5 * grid.max_frequency();
    let mask: Vec<f64> =
        grid.freq_sq().iter().map(|k2| if k2.sqrt() <= cutoff + 1e-12 { 1.0 } else { 0.0 }).collect();
    let p = grid.real_multiplier_matrix(&mask);
    let band = &p * &diff * &p;
    let va = &ha.eigen().values;
    let v0 = &h0.eigen().values;
    let limit = cutoff * cutoff * (1.0 + 1e-12);
    let mut spectral_defect = 0.0_f64;
    let mut compared = 0;
    let mut full = 0.0_f64;
    for k in 0..va.len() {
        let d = (va[k] - v0[k]).abs();
        full = full.max(d);
        if v0[k] <= limit {
            spectral_defect = spectral_defect.max(d);
            compared += 1;
        }
    }
    Ok(GaugeReport {
        conjugation_defect: op_norm(&diff) / scale,
        band_conjugation_defect: op_norm(&band) / scale,
        spectral_defect,
        full_spectral_defect: full,
        band_cutoff: cutoff,
        compared_eigenvalues: compared,
    })
}
