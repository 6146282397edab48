//! Dense Hermitian operators on the grid: -Δ, -Δ_A, fractional powers and V_x.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{abs_pow, Grid};
use crate::linalg::{
    hermitian_eigen, hermiticity_residual, hermitize, identity, max_abs_entry, op_norm, re, scale_cols, scale_rows,
    spectral_reassemble, CMat, CVec, C64, I,
};
use crate::potentials::VectorPotential;

/// Relative Hermiticity tolerance for assembled operators.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues below this are rejected as genuinely negative.
pub const NEGATIVE_TOL: f64 = 1e-8;
/// Relative change allowed when the quadrature nodes are doubled.
pub const QUADRATURE_GATE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Eigen {
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal columns.
    pub vectors: CMat,
}

#[derive(Debug)]
pub struct HermitianOperator {
    entries: CMat,
    label: String,
    hermiticity: f64,
    eig: OnceLock<Eigen>,
}

impl Clone for HermitianOperator {
    fn clone(&self) -> Self {
        let eig = OnceLock::new();
        if let Some(e) = self.eig.get() {
            let _ = eig.set(e.clone());
        }
        Self { entries: self.entries.clone(), label: self.label.clone(), hermiticity: self.hermiticity, eig }
    }
}

impl HermitianOperator {
    /// Checks the Hermiticity residual against `HERMITIAN_TOL` relative to the
    /// Frobenius scale, then stores the symmetrized matrix.
    pub fn new(entries: CMat, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        let scale = entries.norm() / (entries.nrows().max(1) as f64).sqrt();
        let residual = hermiticity_residual(&entries);
        let rel = if scale > 0.0 { residual / scale } else { residual };
        if rel > HERMITIAN_TOL {
            return Err(Error::HermiticityViolation { label, residual: rel });
        }
        Ok(Self { entries: hermitize(&entries), label, hermiticity: rel, eig: OnceLock::new() })
    }

    /// Symmetrizes without a tolerance check; the measured residual is kept.
    pub fn hermitized(entries: CMat, label: impl Into<String>) -> Self {
        let scale = entries.norm() / (entries.nrows().max(1) as f64).sqrt();
        let residual = hermiticity_residual(&entries);
        let rel = if scale > 0.0 { residual / scale } else { residual };
        Self { entries: hermitize(&entries), label: label.into(), hermiticity: rel, eig: OnceLock::new() }
    }

    pub fn with_eigen(entries: CMat, label: impl Into<String>, eigen: Eigen) -> Result<Self> {
        let op = Self::new(entries, label)?;
        let _ = op.eig.set(eigen);
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Relative Hermiticity residual measured before symmetrization.
    pub fn hermiticity_residual(&self) -> f64 {
        self.hermiticity
    }

    pub fn eigen(&self) -> &Eigen {
        self.eig.get_or_init(|| {
            let (values, vectors) = hermitian_eigen(&self.entries);
            Eigen { values, vectors }
        })
    }

    pub fn has_eigen(&self) -> bool {
        self.eig.get().is_some()
    }

    /// Operator 2-norm from the spectrum.
    pub fn norm(&self) -> f64 {
        let v = &self.eigen().values;
        v[0].abs().max(v[v.len() - 1].abs())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().values[0]
    }

    pub fn apply(&self, u: &CVec) -> CVec {
        &self.entries * u
    }

    /// Solves (M - z) w = u by LU.
    pub fn shifted_solve(&self, z: C64, u: &CVec) -> Option<CVec> {
        let shifted = &self.entries - identity(self.dim()) * z;
        shifted.lu().solve(u)
    }

    /// ‖M - UΛU*‖ / ‖M‖ and ‖U*U - I‖ (max-entry norms).
    pub fn eigen_certificates(&self) -> (f64, f64) {
        let e = self.eigen();
        let back = spectral_reassemble(&e.values, &e.vectors, re);
        let scale = max_abs_entry(&self.entries).max(f64::MIN_POSITIVE);
        let recon = max_abs_entry(&(back - &self.entries)) / scale;
        let ortho = max_abs_entry(&(e.vectors.adjoint() * &e.vectors - identity(self.dim())));
        (recon, ortho)
    }
}

/// Log-substituted Gauss–Legendre rule for ∫₀^∞ f(τ) dτ on τ = e^t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureScheme {
    pub nodes: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self { nodes: 64, t_min: -23.0, t_max: 30.0 }
    }
}

impl QuadratureScheme {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || !(self.t_min < 0.0) || !(self.t_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadrature needs nodes >= 2 and t_min < 0 < t_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        Self { nodes: 2 * self.nodes, ..*self }
    }

    pub fn tau_min(&self) -> f64 {
        self.t_min.exp()
    }

    pub fn tau_max(&self) -> f64 {
        self.t_max.exp()
    }

    /// (τ_k, w_k) with ∫ f dτ ≈ Σ w_k f(τ_k) over [e^{t_min}, e^{t_max}].
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let rule = GaussLegendre::new(std::num::NonZeroUsize::new(self.nodes).expect("nodes >= 2"));
        let mut out = Vec::with_capacity(2 * self.nodes);
        for (a, b) in [(self.t_min, 0.0), (0.0, self.t_max)] {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, w) in rule.as_node_weight_pairs() {
                let t = mid + half * x;
                let tau = t.exp();
                out.push((tau, w * half * tau));
            }
        }
        out
    }
}

/// c(s) = sin(πs/2)/π.
pub fn coupling_constant_exact(s: f64) -> f64 {
    (0.5 * std::f64::consts::PI * s).sin() / std::f64::consts::PI
}

/// c(s) from 1/c(s) = ∫₀^∞ τ^{s/2-1}(τ+1)^{-1} dτ by the scheme, with the
/// two tails summed as convergent series.
pub fn coupling_constant(s: f64, scheme: &QuadratureScheme) -> Result<f64> {
    check_order(s)?;
    scheme.validate()?;
    let a = 0.5 * s;
    let body: f64 = scheme.nodes().iter().map(|&(tau, w)| w * tau.powf(a - 1.0) / (tau + 1.0)).sum();
    let mut left = 0.0;
    let mut right = 0.0;
    for k in 0..200 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        left += sign * ((kf + a) * scheme.t_min).exp() / (kf + a);
        right += sign * (-(kf + 1.0 - a) * scheme.t_max).exp() / (kf + 1.0 - a);
    }
    Ok(1.0 / (body + left + right))
}

pub fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("order s = {s} must lie in (0, 2)")))
    }
}

/// -Δ with its plane-wave eigendecomposition attached.
pub fn build_laplacian(grid: &Grid) -> HermitianOperator {
    let k2 = grid.freq_sq();
    let entries = grid.real_multiplier_matrix(&k2);
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| k2[a].total_cmp(&k2[b]).then(a.cmp(&b)));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| k2[k]));
    let mut vectors = CMat::zeros(grid.len(), grid.len());
    let mut e = CVec::zeros(grid.len());
    for (col, &k) in order.iter().enumerate() {
        e[k] = re(1.0);
        vectors.set_column(col, &grid.inverse(&e));
        e[k] = re(0.0);
    }
    HermitianOperator::with_eigen(entries, "-Laplacian", Eigen { values, vectors })
        .expect("Fourier multiplier is Hermitian")
}

/// H₀^{s/2} = (-Δ)^{s/2} as an exact Fourier multiplier.
pub fn free_fractional(grid: &Grid, s: f64) -> HermitianOperator {
    let sym = grid.symbol(s);
    let lap = build_laplacian(grid);
    let e = lap.eigen();
    let values = e.values.map(|v| abs_pow(v, s));
    HermitianOperator::with_eigen(
        grid.real_multiplier_matrix(&sym),
        format!("(-Laplacian)^({s}/2)"),
        Eigen { values, vectors: e.vectors.clone() },
    )
    .expect("Fourier multiplier is Hermitian")
}

/// Spectral ∂_axis as a dense matrix.
pub fn derivative_matrix(grid: &Grid, axis: usize) -> CMat {
    let mult: Vec<C64> = grid.freq_component(axis).iter().map(|&k| I * k).collect();
    grid.multiplier_matrix(&mult)
}

/// -Δ_A = Σ_j D_j* D_j with D_j = ∂_j + i A_j.
pub fn build_magnetic_laplacian(grid: &Grid, a: &VectorPotential) -> Result<HermitianOperator> {
    let dim = grid.len();
    let mut total = CMat::zeros(dim, dim);
    for (j, comp) in a.components.iter().enumerate() {
        let mut d = derivative_matrix(grid, j);
        for i in 0..dim {
            d[(i, i)] += I * comp[i];
        }
        total += d.adjoint() * &d;
    }
    HermitianOperator::new(total, "-Laplacian_A")
}

/// V₁ = -i(A·∇ + ∇·A) + |A|² as a dense matrix.
pub fn first_order_matrix(grid: &Grid, a: &VectorPotential) -> CMat {
    let dim = grid.len();
    let mut v = CMat::zeros(dim, dim);
    for (j, comp) in a.components.iter().enumerate() {
        let d = derivative_matrix(grid, j);
        let ad = scale_rows(comp, &d);
        let da = scale_cols(&d, comp);
        v -= (ad + da) * I;
    }
    for (i, m) in a.magnitude_sq().iter().enumerate() {
        v[(i, i)] += re(*m);
    }
    v
}

fn clamped_eigenvalues(h: &HermitianOperator) -> Result<DVector<f64>> {
    let e = h.eigen();
    let min = e.values[0];
    if min < -NEGATIVE_TOL {
        return Err(Error::NegativeSpectrum { min });
    }
    let top = e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(e.values.map(|v| if v < 1e-12 * top { 0.0 } else { v }))
}

/// U diag(λ^p) U* from the cached eigendecomposition. Eigenvalues below
/// 1e-12·‖H‖ are treated as exact zeros.
pub fn frac_power_eig(h: &HermitianOperator, p: f64) -> Result<HermitianOperator> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("exponent p = {p} must be positive")));
    }
    let vals = clamped_eigenvalues(h)?;
    let powered = vals.map(|v| if v == 0.0 { 0.0 } else { v.powf(p) });
    let vectors = h.eigen().vectors.clone();
    let entries = spectral_reassemble(&powered, &vectors, re);
    HermitianOperator::with_eigen(
        entries,
        format!("({})^{p}", h.label()),
        Eigen { values: powered, vectors },
    )
}

fn shifted_inverse(h: &CMat, tau: f64) -> CMat {
    let m = h + identity(h.nrows()) * re(tau);
    match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => m.lu().try_inverse().expect("tau + H is invertible for tau > 0"),
    }
}

fn balakrishnan_sum(h: &HermitianOperator, s: f64, scheme: &QuadratureScheme) -> CMat {
    let a = 0.5 * s;
    let dim = h.dim();
    let hm = h.entries();
    let id = identity(dim);
    // H(τ+H)^{-1} = I - τ(τ+H)^{-1}
    let term = |tau: f64| -> CMat { &id - shifted_inverse(hm, tau) * re(tau) };
    let parts: Vec<CMat> = scheme
        .nodes()
        .par_iter()
        .map(|&(tau, w)| term(tau) * re(w * tau.powf(a - 1.0)))
        .collect();
    let mut acc = CMat::zeros(dim, dim);
    for p in parts {
        acc += p;
    }
    // tails: f ~ τ^{s/2-1} near 0 and f ~ τ^{s/2-2} H near ∞
    let (lo, hi) = (scheme.tau_min(), scheme.tau_max());
    acc += term(lo) * re(lo.powf(a) / a);
    acc += term(hi) * re(hi.powf(a) / (1.0 - a));
    acc * re(coupling_constant_exact(s))
}

/// H^{s/2} = c(s) ∫₀^∞ τ^{s/2-1} H(τ+H)^{-1} dτ by the scheme. The result
/// is recomputed with doubled nodes and rejected if the two differ by more
/// than `QUADRATURE_GATE` relative.
pub fn frac_power_balakrishnan(h: &HermitianOperator, s: f64, scheme: &QuadratureScheme) -> Result<HermitianOperator> {
    check_order(s)?;
    scheme.validate()?;
    let coarse = balakrishnan_sum(h, s, scheme);
    let fine = balakrishnan_sum(h, s, &scheme.doubled());
    let scale = op_norm(&fine).max(f64::MIN_POSITIVE);
    let change = op_norm(&(&fine - &coarse)) / scale;
    if change > QUADRATURE_GATE {
        return Err(Error::QuadratureNotConverged { change });
    }
    Ok(HermitianOperator::hermitized(coarse, format!("({})^({s}/2) quadrature", h.label())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// (τ+H_A)^{-1} V₁ (τ+H₀)^{-1}
    MagneticFirst,
    /// (τ+H₀)^{-1} V₁ (τ+H_A)^{-1}
    FreeFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VxRoute {
    Difference,
    Integral(Ordering),
}

/// V_x = (-Δ_A)^{s/2} - (-Δ)^{s/2}.
///
/// The difference route uses the eigendecomposition of -Δ_A. The integral
/// route evaluates c(s) ∫ τ^{s/2} (τ+H)^{-1} V₁ (τ+H')^{-1} dτ with the
/// factors ordered as requested. The raw matrix is returned so that the two
/// orderings can be compared before any symmetrization.
pub fn perturbation_vx(
    grid: &Grid,
    a: &VectorPotential,
    s: f64,
    route: VxRoute,
    scheme: &QuadratureScheme,
) -> Result<CMat> {
    check_order(s)?;
    let dim = grid.len();
    if a.is_zero() {
        return Ok(CMat::zeros(dim, dim));
    }
    let ha = build_magnetic_laplacian(grid, a)?;
    match route {
        VxRoute::Difference => {
            let hs = frac_power_eig(&ha, 0.5 * s)?;
            Ok(hs.entries() - free_fractional(grid, s).entries())
        }
        VxRoute::Integral(order) => {
            scheme.validate()?;
            let v1 = first_order_matrix(grid, a);
            let k2 = grid.freq_sq();
            let half = 0.5 * s;
            let term = |tau: f64| -> CMat {
                let ra = shifted_inverse(ha.entries(), tau);
                let inv0: Vec<f64> = k2.iter().map(|k| 1.0 / (tau + k)).collect();
                let r0 = grid.real_multiplier_matrix(&inv0);
                match order {
                    Ordering::MagneticFirst => ra * &v1 * r0,
                    Ordering::FreeFirst => r0 * &v1 * ra,
                }
            };
            let parts: Vec<CMat> = scheme
                .nodes()
                .par_iter()
                .map(|&(tau, w)| term(tau) * re(w * tau.powf(half)))
                .collect();
            let mut acc = CMat::zeros(dim, dim);
            for p in parts {
                acc += p;
            }
            // near 0 the free zero mode gives τ^{s/2-1}; near ∞ the integrand is ~ τ^{s/2-2} V₁
            let (lo, hi) = (scheme.tau_min(), scheme.tau_max());
            acc += term(lo) * re(lo.powf(half + 1.0) / half);
            acc += term(hi) * re(hi.powf(half + 1.0) / (1.0 - half));
            Ok(acc * re(coupling_constant_exact(s)))
        }
    }
}

/// Norm of u ↦ ⟨x⟩^δ V_x u as a map H^{s,-σ} → H^{α,-σ}: the largest
/// singular value of ⟨x⟩^{-σ}(I-Δ)^{α/2}⟨x⟩^δ V_x (I-Δ)^{-s/2}⟨x⟩^σ.
pub fn weighted_vx_norm(grid: &Grid, vx: &CMat, s: f64, sigma: f64, delta: f64, alpha: f64) -> Result<f64> {
    if !(sigma > 0.5) || !(delta > 1.0) || !(alpha > 0.0 && alpha < s.min(1.0)) {
        return Err(Error::InvalidParameter(format!(
            "need sigma > 1/2, delta > 1, 0 < alpha < min(1, s); got sigma={sigma}, delta={delta}, alpha={alpha}, s={s}"
        )));
    }
    let k2 = grid.freq_sq();
    let out_mult: Vec<f64> = k2.iter().map(|k| (1.0 + k).powf(0.5 * alpha)).collect();
    let in_mult: Vec<f64> = k2.iter().map(|k| (1.0 + k).powf(-0.5 * s)).collect();
    let w_delta = grid.weight(delta);
    let w_minus = grid.weight(-sigma);
    let w_plus = grid.weight(sigma);
    let left = scale_rows(&w_minus, &(grid.real_multiplier_matrix(&out_mult)));
    let middle = scale_rows(&w_delta, vx);
    let right = scale_cols(&grid.real_multiplier_matrix(&in_mult), &w_plus);
    Ok(op_norm(&(left * middle * right)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{make_potential, PotentialFamily};
    use std::f64::consts::PI;

    fn sorted(v: &DVector<f64>) -> Vec<f64> {
        v.iter().copied().collect()
    }

    #[test]
    fn laplacian_spectrum_on_integer_lattice() {
        let g = Grid::new(1, 8, PI).unwrap();
        let lap = build_laplacian(&g);
        let expect = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0, 16.0];
        for (a, b) in sorted(&lap.eigen().values).iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let (recon, ortho) = lap.eigen_certificates();
        assert!(recon < 1e-12 && ortho < 1e-12);
        let ones = CVec::from_element(8, re(2.0));
        assert!(lap.apply(&ones).norm() < 1e-12);
    }

    #[test]
    fn magnetic_reduces_to_free_and_splits() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let zero = VectorPotential::zero(&g);
        let ha = build_magnetic_laplacian(&g, &zero).unwrap();
        let lap = build_laplacian(&g);
        assert!(max_abs_entry(&(ha.entries() - lap.entries())) < 1e-12);

        let a = make_potential(&g, &PotentialFamily::Gaussian { amplitudes: vec![0.5], width: 1.0 }).unwrap();
        let ha = build_magnetic_laplacian(&g, &a).unwrap();
        let split = lap.entries() + first_order_matrix(&g, &a);
        assert!(op_norm(&(ha.entries() - split)) <= 1e-9 * ha.norm());
        assert!(ha.min_eigenvalue() >= -NEGATIVE_TOL);
    }

    #[test]
    fn coupling_constant_matches_closed_form() {
        let scheme = QuadratureScheme::default();
        for s in [0.3, 1.0, 1.7] {
            let q = coupling_constant(s, &scheme).unwrap();
            assert!((q - coupling_constant_exact(s)).abs() < 1e-10, "s={s}");
        }
        let q1 = coupling_constant(1.0, &scheme).unwrap();
        let q2 = coupling_constant(1.0, &scheme.doubled()).unwrap();
        assert!((q1 - 1.0 / PI).abs() < 1e-12 && (q1 - q2).abs() < 1e-12);
    }

    #[test]
    fn eig_power_identities() {
        let g = Grid::new(1, 8, PI).unwrap();
        let lap = build_laplacian(&g);
        let half = frac_power_eig(&lap, 0.5).unwrap();
        let expect = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0];
        let (vals, _) = hermitian_eigen(half.entries());
        for (a, b) in vals.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = frac_power_eig(&lap, 1.0).unwrap();
        assert!(max_abs_entry(&(one.entries() - lap.entries())) < 1e-10 * lap.norm());
        let sq = half.entries() * half.entries();
        assert!(max_abs_entry(&(sq - lap.entries())) < 1e-9 * lap.norm());
    }

    #[test]
    fn rejects_negative_spectrum() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![re(-1.0), re(2.0)]));
        let h = HermitianOperator::new(m, "neg").unwrap();
        assert!(matches!(frac_power_eig(&h, 0.5), Err(Error::NegativeSpectrum { .. })));
    }

    #[test]
    fn balakrishnan_free_s1() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let lap = build_laplacian(&g);
        let quad = frac_power_balakrishnan(&lap, 1.0, &QuadratureScheme::default()).unwrap();
        let oracle = frac_power_eig(&lap, 0.5).unwrap();
        let d = op_norm(&(quad.entries() - oracle.entries())) / oracle.norm();
        assert!(d <= 1e-7, "defect {d}");
    }

    #[test]
    fn vx_vanishes_without_field() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let zero = VectorPotential::zero(&g);
        for route in [VxRoute::Difference, VxRoute::Integral(Ordering::FreeFirst)] {
            let v = perturbation_vx(&g, &zero, 1.0, route, &QuadratureScheme::default()).unwrap();
            assert_eq!(max_abs_entry(&v), 0.0);
        }
    }

    #[test]
    fn weighted_norm_parameter_checks() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let vx = CMat::zeros(16, 16);
        assert!(weighted_vx_norm(&g, &vx, 1.0, 0.4, 1.5, 0.5).is_err());
        assert_eq!(weighted_vx_norm(&g, &vx, 1.0, 1.0, 1.5, 0.5).unwrap(), 0.0);
    }
}
