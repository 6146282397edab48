//! Free and magnetic fractional resolvents and boundary values R₀^s(λ ± i0).
//!
//! The boundary value is computed on a zero-padded lattice (P·N points per
//! axis at the same spacing), which stands in for the free resolvent on the
//! infinite lattice. Its kernel restricted to box separations gives a
//! Toeplitz operator on the grid. The ε → 0 limit is taken with a Richardson
//! tableau on the ladder ε_k = ε₀ r^k.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{abs_pow, Grid, WeightedSpace};
use crate::linalg::{log_log_slope, op_norm, re, scale_cols, scale_rows, CMat, CVec, C64};
use crate::operators::HermitianOperator;

/// |symbol - z| below this counts as a hit on the spectrum.
pub const SINGULAR_TOL: f64 = 1e-13;
/// Distance from the cached spectrum required by the magnetic resolvent.
pub const SPECTRUM_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// λ + i0
    Plus,
    /// λ - i0
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// (|ξ|^s - z)^{-1} applied to u.
pub fn free_resolvent(grid: &Grid, s: f64, z: C64, u: &CVec) -> Result<CVec> {
    if u.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: u.len() });
    }
    let sym = grid.fractional_symbol(s, z);
    if sym.iter().any(|d| d.norm() < SINGULAR_TOL) {
        return Err(Error::SingularShift { z });
    }
    let inv: Vec<C64> = sym.iter().map(|d| d.inv()).collect();
    Ok(grid.apply_multiplier(&inv, u))
}

/// Dense matrix of (|ξ|^s - z)^{-1}.
pub fn free_resolvent_matrix(grid: &Grid, s: f64, z: C64) -> Result<CMat> {
    let sym = grid.fractional_symbol(s, z);
    if sym.iter().any(|d| d.norm() < SINGULAR_TOL) {
        return Err(Error::SingularShift { z });
    }
    let inv: Vec<C64> = sym.iter().map(|d| d.inv()).collect();
    Ok(grid.multiplier_matrix(&inv))
}

/// (H - z)^{-1} u by dense LU.
pub fn magnetic_fractional_resolvent(h: &HermitianOperator, z: C64, u: &CVec) -> Result<CVec> {
    if u.len() != h.dim() {
        return Err(Error::ShapeMismatch { expected: h.dim(), got: u.len() });
    }
    let vals = &h.eigen().values;
    if let Some(&closest) = vals.iter().min_by(|a, b| (re(**a) - z).norm().total_cmp(&(re(**b) - z).norm())) {
        if (re(closest) - z).norm() < SPECTRUM_MARGIN {
            return Err(Error::NearSpectrum { z, eigenvalue: closest });
        }
    }
    h.shifted_solve(z, u).ok_or(Error::NearSpectrum { z, eigenvalue: f64::NAN })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderParams {
    pub eps0: f64,
    pub ratio: f64,
    pub depth: usize,
    /// Highest Richardson level used; `depth - 1` is the full tableau.
    pub order: usize,
    /// Padding factor per axis; `None` picks 1024 in 1D and 16 in 2D.
    pub pad_factor: Option<usize>,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self { eps0: 0.1, ratio: 0.5, depth: 8, order: 7, pad_factor: None }
    }
}

impl LadderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) || !(self.ratio > 0.0 && self.ratio < 1.0) || self.depth < 2 {
            return Err(Error::InvalidParameter(format!(
                "ladder needs eps0 > 0, 0 < ratio < 1, depth >= 2; got {self:?}"
            )));
        }
        if let Some(p) = self.pad_factor {
            if !p.is_power_of_two() {
                return Err(Error::InvalidParameter(format!("pad factor {p} must be a power of two")));
            }
        }
        Ok(())
    }

    pub fn pad_for(&self, grid: &Grid) -> usize {
        self.pad_factor.unwrap_or(if grid.dim() == 1 { 1024 } else { 16 })
    }

    pub fn epsilons(&self) -> Vec<f64> {
        (0..self.depth).map(|k| self.eps0 * self.ratio.powi(k as i32)).collect()
    }
}

/// Kernel of R₀^s(λ ± i0) on box separations, with the ladder it came from.
#[derive(Debug, Clone)]
pub struct BoundaryResolvent {
    pub lambda: f64,
    pub branch: Branch,
    pub s: f64,
    /// ε values actually used (those above the resolution floor).
    pub eps: Vec<f64>,
    /// 2 × local shell gap of the padded lattice.
    pub floor: f64,
    pub pad_factor: usize,
    /// Raw kernels per ε, indexed by separation (m₀, m₁) ∈ [0, N)^n.
    pub raw: Vec<Vec<C64>>,
    /// Extrapolated kernel.
    pub kernel: Vec<C64>,
    /// ‖successive diagonal tableau entries‖ (max norm).
    pub diffs: Vec<f64>,
    points: usize,
    dim: usize,
}

/// Padded-lattice symbol |ξ|^s, FFT ordered, flattened with axis 0 slowest.
fn padded_symbol(grid: &Grid, s: f64, pad: usize) -> Vec<f64> {
    let m = grid.points() * pad;
    let scale = 2.0 * std::f64::consts::PI / (m as f64 * grid.spacing());
    let freq = |j: usize| {
        let k = if j < m / 2 { j as f64 } else { j as f64 - m as f64 };
        scale * k
    };
    if grid.dim() == 1 {
        (0..m).map(|j| abs_pow(freq(j).powi(2), s)).collect()
    } else {
        let mut out = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                out.push(abs_pow(freq(a).powi(2) + freq(b).powi(2), s));
            }
        }
        out
    }
}

/// Inverse FFT of 1/(symbol - z) on the padded lattice, restricted to box separations.
fn padded_kernel(grid: &Grid, sym: &[f64], pad: usize, z: C64) -> Vec<C64> {
    let n = grid.points();
    let m = n * pad;
    let mut planner = FftPlanner::<f64>::new();
    let plan = planner.plan_fft_inverse(m);
    let mut data: Vec<C64> = sym.iter().map(|&v| (re(v) - z).inv()).collect();
    let total = data.len() as f64;
    if grid.dim() == 1 {
        plan.process(&mut data);
        return data[..n].iter().map(|v| v / total).collect();
    }
    for row in data.chunks_mut(m) {
        plan.process(row);
    }
    // only the first n columns are needed after the row pass
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    let mut col = vec![C64::new(0.0, 0.0); m];
    for b in 0..n {
        for a in 0..m {
            col[a] = data[a * m + b];
        }
        plan.process(&mut col);
        for a in 0..n {
            out[a * n + b] = col[a] / total;
        }
    }
    out
}

impl BoundaryResolvent {
    pub fn new(grid: &Grid, s: f64, lambda: f64, branch: Branch, params: &LadderParams) -> Result<Self> {
        params.validate()?;
        let top = grid.symbol(s).into_iter().fold(0.0_f64, f64::max);
        if !(lambda > 0.0) || lambda > top {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} must lie in (0, {top}] for this grid"
            )));
        }
        let pad = params.pad_for(grid);
        let dxi = std::f64::consts::PI / (pad as f64 * grid.half_width());
        let gap = s * lambda.powf((s - 1.0) / s) * dxi;
        let floor = 2.0 * gap;
        let eps: Vec<f64> = params.epsilons().into_iter().filter(|&e| e >= floor).collect();
        if eps.len() < 2 {
            return Err(Error::NotConverging {
                lambda,
                detail: format!("fewer than two ladder terms above the resolution floor {floor:e}"),
            });
        }
        let sym = padded_symbol(grid, s, pad);
        let sign = branch.sign();
        let raw: Vec<Vec<C64>> = eps
            .par_iter()
            .map(|&e| padded_kernel(grid, &sym, pad, C64::new(lambda, sign * e)))
            .collect();
        let (kernel, diffs) = richardson(&raw, params.ratio, params.order);
        check_ladder(lambda, &kernel, &diffs)?;
        Ok(Self {
            lambda,
            branch,
            s,
            eps,
            floor,
            pad_factor: pad,
            raw,
            kernel,
            diffs,
            points: grid.points(),
            dim: grid.dim(),
        })
    }

    fn toeplitz(&self, kernel: &[C64]) -> CMat {
        let n = self.points;
        let len = n.pow(self.dim as u32);
        let split = |i: usize| if self.dim == 1 { (i, 0) } else { (i / n, i % n) };
        CMat::from_fn(len, len, |i, j| {
            let (a0, a1) = split(i);
            let (b0, b1) = split(j);
            let d0 = a0.abs_diff(b0);
            let d1 = a1.abs_diff(b1);
            kernel[if self.dim == 1 { d0 } else { d0 * n + d1 }]
        })
    }

    /// Box operator of the extrapolated boundary value.
    pub fn matrix(&self) -> CMat {
        self.toeplitz(&self.kernel)
    }

    /// Box operator of R₀^s(λ ± iε_k).
    pub fn matrix_at(&self, k: usize) -> CMat {
        self.toeplitz(&self.raw[k])
    }

    pub fn apply(&self, u: &CVec) -> CVec {
        self.matrix() * u
    }
}

/// Richardson tableau for errors in powers of ε with ε_{k+1} = r ε_k.
/// Returns the deepest diagonal entry and the max-norm differences between
/// successive diagonal entries.
pub fn richardson(raw: &[Vec<C64>], ratio: f64, order: usize) -> (Vec<C64>, Vec<f64>) {
    let mut prev: Vec<Vec<C64>> = Vec::new();
    let mut best: Vec<Vec<C64>> = Vec::new();
    for (k, g) in raw.iter().enumerate() {
        let mut row = vec![g.clone()];
        for p in 1..=k.min(order) {
            let rp = ratio.powi(p as i32);
            let next: Vec<C64> = row[p - 1]
                .iter()
                .zip(&prev[p - 1])
                .map(|(a, b)| (a - b * rp) / (1.0 - rp))
                .collect();
            row.push(next);
        }
        best.push(row.last().expect("row is nonempty").clone());
        prev = row;
    }
    let diffs = best
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        .collect();
    (best.pop().expect("ladder is nonempty"), diffs)
}

fn check_ladder(lambda: f64, kernel: &[C64], diffs: &[f64]) -> Result<()> {
    let scale = kernel.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let last = *diffs.last().unwrap_or(&0.0);
    if last <= 1e-10 * scale || diffs.len() < 4 {
        return Ok(());
    }
    let window = &diffs[diffs.len() - 4..];
    if window[3] < window[0] {
        Ok(())
    } else {
        Err(Error::NotConverging {
            lambda,
            detail: format!("extrapolation differences {window:?} do not decrease"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub lambda: f64,
    pub branch: Branch,
    pub sigma: f64,
    pub eps: Vec<f64>,
    /// ‖R₀^s(λ ± iε)u‖ in H^{s,-σ}.
    pub weighted_norms: Vec<f64>,
    /// L² → L² norm of R₀^s(λ ± iε) on the padded lattice.
    pub unweighted_norms: Vec<f64>,
    /// Weighted norm of the extrapolated boundary value.
    pub extrapolant: f64,
    /// extrapolant / ‖u‖_{L^{2,σ}}.
    pub constant: f64,
    pub floor: f64,
    pub pad_factor: usize,
    pub diffs: Vec<f64>,
}

impl AbsorptionReport {
    /// Largest weighted norm over the ladder divided by the extrapolant.
    pub fn boundedness_ratio(&self) -> f64 {
        self.weighted_norms.iter().fold(0.0_f64, |m, v| m.max(*v)) / self.extrapolant
    }

    pub fn unweighted_slope(&self) -> f64 {
        log_log_slope(&self.eps, &self.unweighted_norms)
    }
}

/// R₀^s(λ ± i0)u by limiting absorption, with the weighted and unweighted
/// norm histories along the ε-ladder.
pub fn limiting_absorption(
    grid: &Grid,
    s: f64,
    lambda: f64,
    branch: Branch,
    sigma: f64,
    u: &CVec,
    params: &LadderParams,
) -> Result<(CVec, AbsorptionReport)> {
    if !(sigma > 0.5) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must exceed 1/2")));
    }
    if u.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: u.len() });
    }
    let br = BoundaryResolvent::new(grid, s, lambda, branch, params)?;
    let out_space = WeightedSpace::hs(s, -sigma);
    let mut weighted_norms = Vec::with_capacity(br.eps.len());
    for k in 0..br.eps.len() {
        let w = br.matrix_at(k) * u;
        weighted_norms.push(grid.weighted_norm(&w, &out_space)?);
    }
    let sym = padded_symbol(grid, s, br.pad_factor);
    let unweighted_norms = br
        .eps
        .iter()
        .map(|&e| {
            let z = C64::new(lambda, branch.sign() * e);
            sym.iter().map(|&v| (re(v) - z).norm().recip()).fold(0.0, f64::max)
        })
        .collect();
    let w = br.apply(u);
    let extrapolant = grid.weighted_norm(&w, &out_space)?;
    let input = grid.weighted_norm(u, &WeightedSpace::l2(sigma))?;
    let report = AbsorptionReport {
        lambda,
        branch,
        sigma,
        eps: br.eps.clone(),
        weighted_norms,
        unweighted_norms,
        extrapolant,
        constant: extrapolant / input,
        floor: br.floor,
        pad_factor: br.pad_factor,
        diffs: br.diffs.clone(),
    };
    Ok((w, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub taus: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    /// -1 + (N - N₁)/2
    pub predicted: f64,
    pub weight_in: f64,
    pub weight_out: f64,
}

/// Norms of ⟨x⟩^{N₁}(τ - Δ)^{-1}⟨x⟩^{-N} over τ and their log-log slope.
pub fn weighted_free_resolvent_scaling(grid: &Grid, taus: &[f64], n_w: f64, n1_w: f64) -> Result<ScalingFit> {
    if !(0.0 <= n1_w && n1_w <= n_w) {
        return Err(Error::InvalidParameter(format!("need 0 <= N1 <= N, got N={n_w}, N1={n1_w}")));
    }
    if taus.len() < 2 || taus.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("need at least two positive tau values".into()));
    }
    let k2 = grid.freq_sq();
    let left = grid.weight(n1_w);
    let right = grid.weight(-n_w);
    let norms: Vec<f64> = taus
        .par_iter()
        .map(|&tau| {
            let inv: Vec<f64> = k2.iter().map(|k| 1.0 / (tau + k)).collect();
            let m = grid.real_multiplier_matrix(&inv);
            op_norm(&scale_cols(&scale_rows(&left, &m), &right))
        })
        .collect();
    Ok(ScalingFit {
        taus: taus.to_vec(),
        slope: log_log_slope(taus, &norms),
        norms,
        predicted: -1.0 + 0.5 * (n_w - n1_w),
        weight_in: n_w,
        weight_out: n1_w,
    })
}

/// Geometric set of `count` values spanning [lo, hi].
pub fn geometric_set(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let r = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| lo * r.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_entry};
    use crate::operators::build_laplacian;

    #[test]
    fn single_mode_is_scaled() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let mut mode = CVec::zeros(16);
        mode[3] = re(1.0);
        let u = g.inverse(&mode);
        let z = C64::new(0.3, 0.2);
        let w = free_resolvent(&g, 0.7, z, &u).unwrap();
        let d = g.fractional_symbol(0.7, z)[3];
        assert!((w - u * d.inv()).norm() < 1e-13);
    }

    #[test]
    fn laplacian_at_i_matches_dense_solve() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let lap = build_laplacian(&g);
        let u = CVec::from_fn(32, |i, _| C64::new((i as f64 * 0.3).sin(), 0.1));
        let w = free_resolvent(&g, 2.0, C64::new(0.0, 1.0), &u).unwrap();
        let dense = (lap.entries() - identity(32) * C64::new(0.0, 1.0)).lu().solve(&u).unwrap();
        assert!((w - dense).norm() < 1e-11 * u.norm());
    }

    #[test]
    fn zero_shift_hits_zero_mode() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let u = CVec::zeros(16);
        assert!(matches!(free_resolvent(&g, 1.0, re(0.0), &u), Err(Error::SingularShift { .. })));
    }

    #[test]
    fn tableau_is_exact_on_polynomials() {
        // g(ε) = 1 + 2ε - 3ε² has limit 1
        let eps: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let raw: Vec<Vec<C64>> = eps.iter().map(|e| vec![re(1.0 + 2.0 * e - 3.0 * e * e)]).collect();
        let (g, diffs) = richardson(&raw, 0.5, 4);
        assert!((g[0] - re(1.0)).norm() < 1e-13);
        assert_eq!(diffs.len(), 4);
    }

    #[test]
    fn unweighted_scaling_is_inverse_tau() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let taus = geometric_set(1.0, 1000.0, 6);
        let fit = weighted_free_resolvent_scaling(&g, &taus, 0.0, 0.0).unwrap();
        for (t, n) in fit.taus.iter().zip(&fit.norms) {
            assert!((n * t - 1.0).abs() < 1e-10);
        }
        assert!((fit.slope + 1.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_kernel_is_symmetric_toeplitz() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let br = BoundaryResolvent::new(&g, 1.0, 1.0, Branch::Plus, &LadderParams::default()).unwrap();
        let m = br.matrix();
        assert!(max_abs_entry(&(m.transpose() - &m)) == 0.0);
        assert!(br.eps.len() >= 2 && br.floor > 0.0);
    }
}
