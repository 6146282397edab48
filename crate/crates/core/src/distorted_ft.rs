//! Energy shells of the mode lattice, the exceptional-set scan, and the
//! distorted Fourier transforms F_±^A u = F((I + V_x R₀^s(λ ± i0))^{-1} u)
//! evaluated shell by shell.

use nalgebra::{Dyn, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{identity, min_singular, scale_cols, scale_rows, CMat, CVec, C64};
use crate::resolvent::{BoundaryResolvent, Branch, LadderParams};

pub const SHELL_TOL: f64 = 1e-9;
pub const EXCEPTIONAL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub lambda: f64,
    /// Flat mode indices (FFT order) with |ξ|^s = λ.
    pub modes: Vec<usize>,
}

impl Shell {
    /// Zero and single-mode (Nyquist corner) shells have no continuum analog.
    pub fn is_degenerate(&self) -> bool {
        self.lambda == 0.0 || self.modes.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellDecomposition {
    pub s: f64,
    pub shells: Vec<Shell>,
}

impl ShellDecomposition {
    pub fn interior(&self) -> impl Iterator<Item = &Shell> {
        self.shells.iter().filter(|sh| !sh.is_degenerate())
    }
}

/// Groups modes by |ξ|^s, merging values within `SHELL_TOL` (relative).
pub fn shell_decompose(grid: &Grid, s: f64) -> Result<ShellDecomposition> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("order s = {s} must be positive")));
    }
    let sym = grid.symbol(s);
    let mut order: Vec<usize> = (0..sym.len()).collect();
    order.sort_by(|&a, &b| sym[a].total_cmp(&sym[b]).then(a.cmp(&b)));
    let mut shells: Vec<Shell> = Vec::new();
    for idx in order {
        let v = sym[idx];
        match shells.last_mut() {
            Some(sh) if (v - sh.lambda).abs() <= SHELL_TOL * v.max(1.0) => sh.modes.push(idx),
            _ => shells.push(Shell { lambda: v, modes: vec![idx] }),
        }
    }
    Ok(ShellDecomposition { s, shells })
}

/// I + V_x R₀^s(λ ± i0) conjugated by ⟨x⟩^σ.
fn weighted_system(grid: &Grid, vx: &CMat, br: &BoundaryResolvent, sigma: f64) -> CMat {
    let m = identity(grid.len()) + vx * br.matrix();
    scale_cols(&scale_rows(&grid.weight(sigma), &m), &grid.weight(-sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalScan {
    pub lambdas: Vec<f64>,
    /// Smallest singular value per λ; `None` where the boundary value did not converge.
    pub sigma_min: Vec<Option<f64>>,
    pub flagged: Vec<f64>,
    pub missing: Vec<f64>,
    pub threshold: f64,
}

pub fn exceptional_scan(
    grid: &Grid,
    vx: &CMat,
    s: f64,
    sigma: f64,
    lambdas: &[f64],
    branch: Branch,
    params: &LadderParams,
) -> Result<ExceptionalScan> {
    let results: Vec<Result<Option<f64>>> = lambdas
        .par_iter()
        .map(|&lam| match BoundaryResolvent::new(grid, s, lam, branch, params) {
            Ok(br) => Ok(Some(min_singular(&weighted_system(grid, vx, &br, sigma)))),
            Err(Error::NotConverging { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let sigma_min = results.into_iter().collect::<Result<Vec<_>>>()?;
    let flagged = lambdas
        .iter()
        .zip(&sigma_min)
        .filter(|(_, v)| matches!(v, Some(x) if *x < EXCEPTIONAL_THRESHOLD))
        .map(|(l, _)| *l)
        .collect();
    let missing = lambdas.iter().zip(&sigma_min).filter(|(_, v)| v.is_none()).map(|(l, _)| *l).collect();
    Ok(ExceptionalScan { lambdas: lambdas.to_vec(), sigma_min, flagged, missing, threshold: EXCEPTIONAL_THRESHOLD })
}

struct ShellSolver {
    shell: Shell,
    lu: LU<C64, Dyn, Dyn>,
    sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSummary {
    pub lambda: f64,
    pub multiplicity: usize,
    pub sigma_min: f64,
    pub exceptional: bool,
}

/// F_±^A on a grid, with one factorized system per interior shell.
pub struct DistortedFt {
    grid: Grid,
    sigma: f64,
    pub branch: Branch,
    solvers: Vec<ShellSolver>,
}

/// A function on the mode lattice; entries outside the included shells are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunction {
    pub values: CVec,
    pub included: Vec<bool>,
}

impl ModeFunction {
    /// ‖(self - other)‖ over included modes.
    pub fn distance_to(&self, other: &CVec) -> f64 {
        self.values
            .iter()
            .zip(other.iter())
            .zip(&self.included)
            .filter(|(_, inc)| **inc)
            .map(|((a, b), _)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl DistortedFt {
    pub fn new(grid: &Grid, vx: &CMat, s: f64, sigma: f64, branch: Branch, params: &LadderParams) -> Result<Self> {
        let shells = shell_decompose(grid, s)?;
        Self::for_shells(grid, vx, s, sigma, branch, params, shells.interior().cloned().collect())
    }

    pub fn for_shells(
        grid: &Grid,
        vx: &CMat,
        s: f64,
        sigma: f64,
        branch: Branch,
        params: &LadderParams,
        shells: Vec<Shell>,
    ) -> Result<Self> {
        if vx.nrows() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: vx.nrows() });
        }
        let solvers: Vec<Result<ShellSolver>> = shells
            .into_par_iter()
            .map(|shell| {
                let br = BoundaryResolvent::new(grid, s, shell.lambda, branch, params)?;
                let m = weighted_system(grid, vx, &br, sigma);
                let sigma_min = min_singular(&m);
                Ok(ShellSolver { shell, lu: m.lu(), sigma_min })
            })
            .collect();
        Ok(Self { grid: grid.clone(), sigma, branch, solvers: solvers.into_iter().collect::<Result<_>>()? })
    }

    pub fn summary(&self) -> Vec<ShellSummary> {
        self.solvers
            .iter()
            .map(|sv| ShellSummary {
                lambda: sv.shell.lambda,
                multiplicity: sv.shell.modes.len(),
                sigma_min: sv.sigma_min,
                exceptional: sv.sigma_min < EXCEPTIONAL_THRESHOLD,
            })
            .collect()
    }

    pub fn shells(&self) -> impl Iterator<Item = &Shell> {
        self.solvers.iter().map(|s| &s.shell)
    }

    /// Mask of modes covered by the included shells.
    pub fn included(&self) -> Vec<bool> {
        let mut inc = vec![false; self.grid.len()];
        for sv in &self.solvers {
            for &m in &sv.shell.modes {
                inc[m] = true;
            }
        }
        inc
    }

    pub fn transform(&self, u: &CVec) -> Result<ModeFunction> {
        if u.len() != self.grid.len() {
            return Err(Error::ShapeMismatch { expected: self.grid.len(), got: u.len() });
        }
        let plain = self.grid.forward(u);
        let total = u.norm_squared();
        let wu = scale_rows(&self.grid.weight(self.sigma), &CMat::from_column_slice(u.len(), 1, u.as_slice()));
        let w_inv = self.grid.weight(-self.sigma);
        let parts: Vec<Result<Vec<(usize, C64)>>> = self
            .solvers
            .par_iter()
            .map(|sv| {
                let mass: f64 = sv.shell.modes.iter().map(|&m| plain[m].norm_sqr()).sum();
                if sv.sigma_min < EXCEPTIONAL_THRESHOLD && mass > 1e-20 * total {
                    return Err(Error::ExceptionalShell { lambda: sv.shell.lambda, sigma_min: sv.sigma_min });
                }
                let y = sv.lu.solve(&wu).ok_or(Error::ExceptionalShell {
                    lambda: sv.shell.lambda,
                    sigma_min: sv.sigma_min,
                })?;
                let w = CVec::from_iterator(u.len(), y.column(0).iter().zip(&w_inv).map(|(v, s)| v * *s));
                let fw = self.grid.forward(&w);
                Ok(sv.shell.modes.iter().map(|&m| (m, fw[m])).collect())
            })
            .collect();
        let mut values = CVec::zeros(u.len());
        for part in parts {
            for (m, v) in part? {
                values[m] = v;
            }
        }
        Ok(ModeFunction { values, included: self.included() })
    }

    /// Per-shell ‖F^A e^{itH}u - e^{itλ} F^A u‖ restricted to the shell, given
    /// F^A u and F^A e^{itH}u.
    pub fn intertwining_defects(&self, fu: &ModeFunction, fhu: &ModeFunction, t: f64) -> Vec<(f64, f64)> {
        self.solvers
            .iter()
            .map(|sv| {
                let phase = C64::from_polar(1.0, t * sv.shell.lambda);
                let d: f64 = sv
                    .shell
                    .modes
                    .iter()
                    .map(|&m| (fhu.values[m] - phase * fu.values[m]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                (sv.shell.lambda, d)
            })
            .collect()
    }
}

/// One-shot F_±^A u over all interior shells.
pub fn distorted_transform(
    grid: &Grid,
    vx: &CMat,
    s: f64,
    sigma: f64,
    u: &CVec,
    branch: Branch,
    params: &LadderParams,
) -> Result<ModeFunction> {
    DistortedFt::new(grid, vx, s, sigma, branch, params)?.transform(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_dim_shells() {
        let g = Grid::new(1, 8, PI).unwrap();
        let d = shell_decompose(&g, 1.0).unwrap();
        let lams: Vec<f64> = d.shells.iter().map(|s| s.lambda).collect();
        let mult: Vec<usize> = d.shells.iter().map(|s| s.modes.len()).collect();
        assert_eq!(mult, vec![1, 2, 2, 2, 1]);
        for (a, b) in lams.iter().zip([0.0, 1.0, 2.0, 3.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.interior().count(), 3);
    }

    #[test]
    fn two_dim_shells_by_lattice_norm() {
        let g = Grid::new(2, 8, PI).unwrap();
        let d = shell_decompose(&g, 2.0).unwrap();
        let k2: Vec<i64> = d.shells.iter().map(|s| s.lambda.round() as i64).collect();
        assert_eq!(&k2[..6], &[0, 1, 2, 4, 5, 8]);
        let total: usize = d.shells.iter().map(|s| s.modes.len()).sum();
        assert_eq!(total, 64);
        let mut seen = [false; 64];
        for sh in &d.shells {
            for &m in &sh.modes {
                assert!(!seen[m]);
                seen[m] = true;
            }
        }
    }

    #[test]
    fn order_does_not_change_index_sets() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let a = shell_decompose(&g, 1.0).unwrap();
        let b = shell_decompose(&g, 2.0).unwrap();
        let sets = |d: &ShellDecomposition| d.shells.iter().map(|s| s.modes.clone()).collect::<Vec<_>>();
        assert_eq!(sets(&a), sets(&b));
    }

    #[test]
    fn zero_perturbation_is_plain_dft() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let vx = CMat::zeros(16, 16);
        let u = CVec::from_fn(16, |i, _| C64::new((i as f64).sin(), 0.3 * (i as f64).cos()));
        let f = distorted_transform(&g, &vx, 1.0, 1.0, &u, Branch::Minus, &LadderParams::default()).unwrap();
        assert!(f.distance_to(&g.forward(&u)) < 1e-12);
        let scan = exceptional_scan(&g, &vx, 1.0, 1.0, &[0.5, 1.0, 2.0], Branch::Plus, &LadderParams::default())
            .unwrap();
        for v in scan.sigma_min {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(scan.flagged.is_empty());
    }
}
