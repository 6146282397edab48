//! Magnetic vector potentials and a numerical check of their decay rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{c, fit_line, re, CVec, C64, I};

/// Boundary-layer bound on |A| for the torus to stand in for R^n.
pub const BOUNDARY_LIMIT: f64 = 1e-10;
pub const CERT_RESIDUAL_LIMIT: f64 = 0.05;

/// Cutoff radius of the polynomial family as a fraction of L.
const CUTOFF_RADIUS: f64 = 0.875;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialFamily {
    Zero,
    /// A_j = a_j exp(-|x|²/w²)
    Gaussian { amplitudes: Vec<f64>, width: f64 },
    /// A_j = a_j ⟨x⟩^{-β₀} χ(|x|) with a Fermi cutoff χ
    PolynomialDecay { amplitudes: Vec<f64>, beta0: f64 },
    /// A_j = a_j ∂_j exp(-|x|²/w²); zero mean, so pure gauge on the torus in 1D
    GaussianDerivative { amplitudes: Vec<f64>, width: f64 },
    CustomSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    #[serde(rename = "C")]
    pub constant: f64,
    pub beta: f64,
    pub residual: f64,
    /// Whether β > n + 2 and the residual is within tolerance.
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorPotential {
    pub components: Vec<Vec<f64>>,
    pub family: PotentialFamily,
    pub certified: Option<DecayCertificate>,
}

impl VectorPotential {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            components: vec![vec![0.0; grid.len()]; grid.dim()],
            family: PotentialFamily::Zero,
            certified: None,
        }
    }

    pub fn from_samples(grid: &Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "{} components for a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        for comp in &components {
            if comp.len() != grid.len() {
                return Err(Error::ShapeMismatch { expected: grid.len(), got: comp.len() });
            }
            if comp.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite potential sample".into()));
            }
        }
        let a = Self { components, family: PotentialFamily::CustomSamples, certified: None };
        check_boundary(grid, &a)?;
        Ok(a)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// |A|² at every node.
    pub fn magnitude_sq(&self) -> Vec<f64> {
        let len = self.components[0].len();
        (0..len).map(|i| self.components.iter().map(|c| c[i] * c[i]).sum()).collect()
    }
}

fn amplitudes_for(grid: &Grid, amps: &[f64]) -> Result<()> {
    if amps.len() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "expected {} amplitudes, got {}",
            grid.dim(),
            amps.len()
        )));
    }
    if amps.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter("non-finite amplitude".into()));
    }
    Ok(())
}

pub fn make_potential(grid: &Grid, family: &PotentialFamily) -> Result<VectorPotential> {
    let r2 = grid.radius_sq();
    let components: Vec<Vec<f64>> = match family {
        PotentialFamily::Zero => return Ok(VectorPotential::zero(grid)),
        PotentialFamily::Gaussian { amplitudes, width } => {
            amplitudes_for(grid, amplitudes)?;
            positive("width", *width)?;
            let env: Vec<f64> = r2.iter().map(|&r| (-r / (width * width)).exp()).collect();
            amplitudes.iter().map(|&a| env.iter().map(|e| a * e).collect()).collect()
        }
        PotentialFamily::GaussianDerivative { amplitudes, width } => {
            amplitudes_for(grid, amplitudes)?;
            positive("width", *width)?;
            let w2 = width * width;
            amplitudes
                .iter()
                .enumerate()
                .map(|(j, &a)| {
                    let xj = grid.node_component(j);
                    r2.iter().zip(&xj).map(|(&r, &x)| a * (-2.0 * x / w2) * (-r / w2).exp()).collect()
                })
                .collect()
        }
        PotentialFamily::PolynomialDecay { amplitudes, beta0 } => {
            amplitudes_for(grid, amplitudes)?;
            positive("beta0", *beta0)?;
            let (rc, delta) = cutoff_params(grid, amplitudes, *beta0);
            let env: Vec<f64> = r2
                .iter()
                .map(|&r| {
                    let chi = 1.0 / (1.0 + ((r.sqrt() - rc) / delta).exp());
                    (1.0 + r).powf(-0.5 * beta0) * chi
                })
                .collect();
            amplitudes.iter().map(|&a| env.iter().map(|e| a * e).collect()).collect()
        }
        PotentialFamily::CustomSamples => {
            return Err(Error::InvalidParameter(
                "custom samples are loaded with VectorPotential::from_samples".into(),
            ))
        }
    };
    let a = VectorPotential { components, family: family.clone(), certified: None };
    check_boundary(grid, &a)?;
    Ok(a)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

/// Cutoff radius and Fermi width so that the envelope is ≲ 1e-12 on every
/// boundary-adjacent node, i.e. for |x| ≥ L - h.
fn cutoff_params(grid: &Grid, amps: &[f64], beta0: f64) -> (f64, f64) {
    let l = grid.half_width();
    let edge = l - grid.spacing();
    let rc = (CUTOFF_RADIUS * l).min(l - 3.0 * grid.spacing());
    let amax = amps.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let at_edge = amax * (1.0 + edge * edge).powf(-0.5 * beta0);
    let decades = (at_edge / 1e-12).ln().max(4.0);
    (rc, (edge - rc) / decades)
}

/// Largest |A| over the nodes adjacent to the periodic boundary.
pub fn boundary_max(grid: &Grid, a: &VectorPotential) -> f64 {
    let n = grid.points();
    let edge = |m: usize| m <= 1 || m == n - 1;
    (0..grid.len())
        .filter(|&i| {
            let m = grid.unflatten(i);
            edge(m[0]) || (grid.dim() == 2 && edge(m[1]))
        })
        .map(|i| a.magnitude_sq()[i].sqrt())
        .fold(0.0, f64::max)
}

fn check_boundary(grid: &Grid, a: &VectorPotential) -> Result<()> {
    let max = boundary_max(grid, a);
    if max > BOUNDARY_LIMIT {
        return Err(Error::BoundaryNotSmall { max, limit: BOUNDARY_LIMIT });
    }
    Ok(())
}

/// Real-valued spectral derivative along `axis`; the Nyquist mode is dropped.
pub fn spectral_derivative(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let nyq = -(grid.points() as i64) / 2;
    let mult: Vec<C64> = (0..grid.len())
        .map(|i| {
            if grid.wavenumbers(i)[axis] == nyq {
                re(0.0)
            } else {
                I * grid.frequency(i)[axis]
            }
        })
        .collect();
    let u = CVec::from_iterator(f.len(), f.iter().map(|&v| re(v)));
    grid.apply_multiplier(&mult, &u).iter().map(|z| z.re).collect()
}

/// |A| + |∇A| + |∇∇A| at every node.
pub fn decay_profile(grid: &Grid, a: &VectorPotential) -> Vec<f64> {
    let n = grid.dim();
    let len = grid.len();
    let mut mag = vec![0.0; len];
    let mut grad = vec![0.0; len];
    let mut hess = vec![0.0; len];
    for comp in &a.components {
        for i in 0..len {
            mag[i] += comp[i] * comp[i];
        }
        for k in 0..n {
            let dk = spectral_derivative(grid, comp, k);
            for i in 0..len {
                grad[i] += dk[i] * dk[i];
            }
            for l in 0..n {
                let dkl = spectral_derivative(grid, &dk, l);
                for i in 0..len {
                    hess[i] += dkl[i] * dkl[i];
                }
            }
        }
    }
    (0..len).map(|i| mag[i].sqrt() + grad[i].sqrt() + hess[i].sqrt()).collect()
}

/// Band-limited interpolation of a real grid function onto the 2N grid.
fn refine(grid: &Grid, f: &[f64]) -> Result<(Grid, Vec<f64>)> {
    let fine = Grid::with_cap(grid.dim(), 2 * grid.points(), grid.half_width(), usize::MAX)?;
    let coarse_hat = grid.forward(&CVec::from_iterator(f.len(), f.iter().map(|&v| re(v))));
    let n = grid.points() as i64;
    let scale = 2f64.powi(grid.dim() as i32).sqrt();
    let mut fine_hat = CVec::zeros(fine.len());
    let nf = fine.points() as i64;
    let slot = |k: i64| ((k + nf) % nf) as usize;
    for i in 0..grid.len() {
        let k = grid.wavenumbers(i);
        let val = coarse_hat[i] * scale;
        // split Nyquist coefficients symmetrically between ±N/2
        let targets0: Vec<(i64, f64)> =
            if k[0] == -n / 2 { vec![(k[0], 0.5), (-k[0], 0.5)] } else { vec![(k[0], 1.0)] };
        let targets1: Vec<(i64, f64)> = if grid.dim() == 2 && k[1] == -n / 2 {
            vec![(k[1], 0.5), (-k[1], 0.5)]
        } else {
            vec![(k[1], 1.0)]
        };
        for &(a, wa) in &targets0 {
            for &(b, wb) in &targets1 {
                let idx = if grid.dim() == 1 { slot(a) } else { slot(a) * fine.points() + slot(b) };
                fine_hat[idx] += val * (wa * wb);
            }
        }
    }
    let out = fine.inverse(&fine_hat).iter().map(|z| z.re).collect();
    Ok((fine, out))
}

/// Fit |A| + |∇A| + |∇∇A| ≤ C⟨x⟩^{-β} over radii in [L/4, 3L/4].
///
/// β is the least-squares slope of log profile against log⟨x⟩ over the
/// window nodes above the noise floor. C is the smallest constant for which
/// the bound holds at those nodes. The residual measures how far the bound is
/// exceeded between nodes, on the band-limited interpolant at spacing h/2.
pub fn certify_decay(grid: &Grid, a: &VectorPotential) -> Result<DecayCertificate> {
    let profile = decay_profile(grid, a);
    let peak = profile.iter().fold(0.0_f64, |m, v| m.max(*v));
    if peak < 1e-14 {
        return Err(Error::FitUnstable("profile below 1e-14 everywhere".into()));
    }
    let floor = 1e-12 * peak;
    let l = grid.half_width();
    let in_window = |r2: f64, f: f64| {
        let r = r2.sqrt();
        (0.25 * l..=0.75 * l).contains(&r) && f > floor
    };
    let r2 = grid.radius_sq();
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (i, &f) in profile.iter().enumerate() {
        if in_window(r2[i], f) {
            lx.push(0.5 * (1.0 + r2[i]).ln());
            ly.push(f.ln());
        }
    }
    let distinct = {
        let mut v: Vec<i64> = lx.iter().map(|x| (x * 1e9) as i64).collect();
        v.sort();
        v.dedup();
        v.len()
    };
    if distinct < 3 {
        return Err(Error::FitUnstable(format!(
            "only {distinct} distinct radii above the noise floor in the fit window"
        )));
    }
    let beta = -fit_line(&lx, &ly).0;
    let log_c = lx.iter().zip(&ly).map(|(x, y)| y + beta * x).fold(f64::NEG_INFINITY, f64::max);
    let constant = log_c.exp();

    let mut fine_a = Vec::with_capacity(a.components.len());
    let mut fine_grid = None;
    for comp in &a.components {
        let (g, v) = refine(grid, comp)?;
        fine_a.push(v);
        fine_grid = Some(g);
    }
    let fine_grid = fine_grid.expect("at least one component");
    let fine_pot = VectorPotential { components: fine_a, family: PotentialFamily::CustomSamples, certified: None };
    let fine_profile = decay_profile(&fine_grid, &fine_pot);
    let fine_r2 = fine_grid.radius_sq();
    let mut residual = 0.0_f64;
    for (i, &f) in fine_profile.iter().enumerate() {
        if in_window(fine_r2[i], f) {
            let ratio = (f.ln() + beta * 0.5 * (1.0 + fine_r2[i]).ln() - log_c).exp();
            residual = residual.max(ratio - 1.0);
        }
    }
    let n = grid.dim() as f64;
    Ok(DecayCertificate {
        constant,
        beta,
        residual,
        admissible: beta > n + 2.0 && residual <= CERT_RESIDUAL_LIMIT,
    })
}

/// Side conditions on (β, δ, α) appearing in the weighted bound for V_x.
/// Reported as diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideConditions {
    pub beta_lower: f64,
    pub beta_upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

pub fn side_conditions(beta: f64, n: usize, delta: f64, alpha: f64) -> SideConditions {
    let n = n as f64;
    let beta_lower = 2.0 + delta - 0.5 * n;
    let beta_upper = 2.0 * delta + 2.0 + 2.0 * alpha - n;
    SideConditions { beta_lower, beta_upper, lower_holds: beta >= beta_lower, upper_holds: beta < beta_upper }
}

/// V₁u = -iA·∇u - i∇·(Au) + |A|²u with spectral derivatives.
pub fn first_order_potential_apply(grid: &Grid, a: &VectorPotential, u: &CVec) -> Result<CVec> {
    if u.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: u.len() });
    }
    let mag = a.magnitude_sq();
    let mut out = CVec::from_iterator(u.len(), u.iter().zip(&mag).map(|(z, m)| z * m));
    for (j, comp) in a.components.iter().enumerate() {
        let mult: Vec<C64> = grid.freq_component(j).iter().map(|&k| c(0.0, k)).collect();
        let du = grid.apply_multiplier(&mult, u);
        let au = CVec::from_iterator(u.len(), u.iter().zip(comp).map(|(z, aj)| z * aj));
        let dau = grid.apply_multiplier(&mult, &au);
        for i in 0..u.len() {
            out[i] -= I * (du[i] * comp[i] + dau[i]);
        }
    }
    Ok(out)
}

/// G(x) = -∫₀^x A(y) dy by spectral antiderivative (n = 1, zero-mean A).
pub fn gauge_function(grid: &Grid, a: &VectorPotential) -> Result<Vec<f64>> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("gauge function is defined for n = 1 only".into()));
    }
    let comp = &a.components[0];
    let flux = grid.spacing() * comp.iter().sum::<f64>();
    if flux.abs() > 1e-8 {
        return Err(Error::FluxObstruction { flux });
    }
    let nyq = -(grid.points() as i64) / 2;
    let mult: Vec<C64> = (0..grid.len())
        .map(|i| {
            let k = grid.wavenumbers(i)[0];
            if k == 0 || k == nyq {
                re(0.0)
            } else {
                C64::new(0.0, -1.0 / grid.frequency(i)[0])
            }
        })
        .collect();
    let u = CVec::from_iterator(comp.len(), comp.iter().map(|&v| re(v)));
    let prim: Vec<f64> = grid.apply_multiplier(&mult, &u).iter().map(|z| z.re).collect();
    let origin = grid.points() / 2;
    Ok(prim.iter().map(|p| -(p - prim[origin])).collect())
}
