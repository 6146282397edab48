//! Periodic pseudospectral lattice on [-L, L)^n with a unitary DFT.
//!
//! Nodes are x_j = -L + j h with h = 2L/N. Frequencies are stored in FFT
//! order, ξ_m = π k(m)/L with k(m) = m for m < N/2 and m - N otherwise.
//! The transform is (F u)_k = N^{-n/2} Σ_j u_j exp(-i ξ_k·x_j), which differs
//! from the raw FFT by the phase (-1)^{k_1+...+k_n}.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{re, CMat, CVec, C64};

pub const DEFAULT_NODE_CAP: usize = 4096;

/// Fraction of the half-width beyond which data is considered too close to the wrap.
pub const SUPPORT_MARGIN: f64 = 0.8;

#[derive(Clone)]
pub struct Grid {
    n: usize,
    points: usize,
    half_width: f64,
    h: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("N", &self.points)
            .field("L", &self.half_width)
            .field("h", &self.h)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
}

impl Grid {
    pub fn new(n: usize, points: usize, half_width: f64) -> Result<Self> {
        Self::with_cap(n, points, half_width, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(n: usize, points: usize, half_width: f64, cap: usize) -> Result<Self> {
        if !(n == 1 || n == 2) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{1, 2}}")));
        }
        if !points.is_power_of_two() || points < 8 {
            return Err(Error::InvalidGrid(format!(
                "N = {points} must be a power of two and at least 8"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("L = {half_width} must be positive")));
        }
        let nodes = points.pow(n as u32);
        if nodes > cap {
            return Err(Error::MemoryCap { nodes, cap });
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            points,
            half_width,
            h: 2.0 * half_width / points as f64,
            fwd: planner.plan_fft_forward(points),
            inv: planner.plan_fft_inverse(points),
        })
    }

    pub fn params(&self) -> GridParams {
        GridParams { n: self.n, points: self.points, half_width: self.half_width }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Total node count N^n.
    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume h^n.
    pub fn cell(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    pub fn max_frequency(&self) -> f64 {
        std::f64::consts::PI * self.points as f64 / (2.0 * self.half_width)
    }

    pub fn axis_nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| -self.half_width + j as f64 * self.h).collect()
    }

    /// Signed integer wavenumber for FFT index m.
    pub fn wavenumber(&self, m: usize) -> i64 {
        if m < self.points / 2 {
            m as i64
        } else {
            m as i64 - self.points as i64
        }
    }

    pub fn axis_frequencies(&self) -> Vec<f64> {
        let scale = std::f64::consts::PI / self.half_width;
        (0..self.points).map(|m| scale * self.wavenumber(m) as f64).collect()
    }

    /// Multi-index of a flat index, axis 0 slowest.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.n == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    /// Coordinates of node `idx` (unused trailing entries are 0).
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let m = self.unflatten(idx);
        let x = |j: usize| -self.half_width + j as f64 * self.h;
        if self.n == 1 {
            [x(m[0]), 0.0]
        } else {
            [x(m[0]), x(m[1])]
        }
    }

    /// Frequency vector of flat mode index `idx`.
    pub fn frequency(&self, idx: usize) -> [f64; 2] {
        let m = self.unflatten(idx);
        let scale = std::f64::consts::PI / self.half_width;
        let k = |j: usize| scale * self.wavenumber(j) as f64;
        if self.n == 1 {
            [k(m[0]), 0.0]
        } else {
            [k(m[0]), k(m[1])]
        }
    }

    /// Integer wavenumbers of flat mode index `idx`.
    pub fn wavenumbers(&self, idx: usize) -> [i64; 2] {
        let m = self.unflatten(idx);
        if self.n == 1 {
            [self.wavenumber(m[0]), 0]
        } else {
            [self.wavenumber(m[0]), self.wavenumber(m[1])]
        }
    }

    /// |x|^2 at every node.
    pub fn radius_sq(&self) -> Vec<f64> {
        (0..self.len()).map(|i| {
            let x = self.node(i);
            x[0] * x[0] + x[1] * x[1]
        }).collect()
    }

    /// |ξ|^2 at every mode.
    pub fn freq_sq(&self) -> Vec<f64> {
        (0..self.len()).map(|i| {
            let k = self.frequency(i);
            k[0] * k[0] + k[1] * k[1]
        }).collect()
    }

    /// ⟨x⟩^σ = (1 + |x|^2)^{σ/2} at every node.
    pub fn weight(&self, sigma: f64) -> Vec<f64> {
        self.radius_sq().into_iter().map(|r2| (1.0 + r2).powf(0.5 * sigma)).collect()
    }

    /// Component j of the frequency at every mode.
    pub fn freq_component(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.frequency(i)[axis]).collect()
    }

    /// Component j of the node coordinate at every node.
    pub fn node_component(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)[axis]).collect()
    }

    fn fft_axes(&self, data: &mut [C64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let n = self.points;
        if self.n == 1 {
            plan.process(data);
            return;
        }
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    fn phase(&self, idx: usize) -> f64 {
        let m = self.unflatten(idx);
        if (m[0] + m[1]).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Unitary forward transform.
    pub fn forward(&self, u: &CVec) -> CVec {
        let mut data = u.as_slice().to_vec();
        self.fft_axes(&mut data, false);
        let scale = (self.len() as f64).sqrt().recip();
        for (i, v) in data.iter_mut().enumerate() {
            *v *= scale * self.phase(i);
        }
        CVec::from_vec(data)
    }

    /// Unitary inverse transform.
    pub fn inverse(&self, uh: &CVec) -> CVec {
        let scale = (self.len() as f64).sqrt().recip();
        let mut data: Vec<C64> = uh.iter().enumerate().map(|(i, v)| v * (scale * self.phase(i))).collect();
        self.fft_axes(&mut data, true);
        CVec::from_vec(data)
    }

    /// F^{-1} diag(m) F u.
    pub fn apply_multiplier(&self, mult: &[C64], u: &CVec) -> CVec {
        let mut data = u.as_slice().to_vec();
        self.fft_axes(&mut data, false);
        let scale = (self.len() as f64).recip();
        for (v, m) in data.iter_mut().zip(mult) {
            *v *= m * scale;
        }
        self.fft_axes(&mut data, true);
        CVec::from_vec(data)
    }

    pub fn apply_real_multiplier(&self, mult: &[f64], u: &CVec) -> CVec {
        let m: Vec<C64> = mult.iter().map(|&x| re(x)).collect();
        self.apply_multiplier(&m, u)
    }

    /// Dense node-basis matrix of the Fourier multiplier `mult`.
    pub fn multiplier_matrix(&self, mult: &[C64]) -> CMat {
        let mut kernel = mult.to_vec();
        self.fft_axes(&mut kernel, true);
        let scale = (self.len() as f64).recip();
        let n = self.points;
        let dim = self.len();
        CMat::from_fn(dim, dim, |i, j| {
            let a = self.unflatten(i);
            let b = self.unflatten(j);
            let d0 = (a[0] + n - b[0]) % n;
            let d1 = (a[1] + n - b[1]) % n;
            let k = if self.n == 1 { d0 } else { d0 * n + d1 };
            kernel[k] * scale
        })
    }

    pub fn real_multiplier_matrix(&self, mult: &[f64]) -> CMat {
        let m: Vec<C64> = mult.iter().map(|&x| re(x)).collect();
        self.multiplier_matrix(&m)
    }

    /// Dense unitary DFT matrix (rows are modes, columns nodes).
    pub fn dft_matrix(&self) -> CMat {
        let dim = self.len();
        let mut m = CMat::zeros(dim, dim);
        let mut e = CVec::zeros(dim);
        for j in 0..dim {
            e[j] = re(1.0);
            m.set_column(j, &self.forward(&e));
            e[j] = re(0.0);
        }
        m
    }

    /// Symbol |ξ|^s - z over the mode lattice.
    pub fn fractional_symbol(&self, s: f64, z: C64) -> Vec<C64> {
        self.freq_sq().into_iter().map(|k2| re(abs_pow(k2, s)) - z).collect()
    }

    /// |ξ|^s over the mode lattice.
    pub fn symbol(&self, s: f64) -> Vec<f64> {
        self.freq_sq().into_iter().map(|k2| abs_pow(k2, s)).collect()
    }

    /// Discrete L² norm h^{n/2} ‖u‖_2.
    pub fn l2_norm(&self, u: &CVec) -> f64 {
        self.cell().sqrt() * u.norm()
    }

    pub fn weighted_norm(&self, u: &CVec, space: &WeightedSpace) -> Result<f64> {
        if u.len() != self.len() {
            return Err(Error::ShapeMismatch { expected: self.len(), got: u.len() });
        }
        let v = match space.kind {
            SpaceKind::L2Sigma => u.clone(),
            SpaceKind::HsSigma => {
                if space.s < 0.0 {
                    return Err(Error::InvalidParameter(format!("smoothness {} < 0", space.s)));
                }
                let mult: Vec<f64> = self.freq_sq().into_iter().map(|k2| (1.0 + k2).powf(0.5 * space.s)).collect();
                self.apply_real_multiplier(&mult, u)
            }
        };
        let w = self.weight(space.sigma);
        let sum: f64 = v.iter().zip(&w).map(|(z, wi)| (z.norm() * wi).powi(2)).sum();
        Ok(self.cell().sqrt() * sum.sqrt())
    }

    /// Fraction of ‖u‖² carried by nodes with some |x_j| > 0.8 L.
    pub fn mass_near_boundary(&self, u: &CVec) -> f64 {
        let total = u.norm_squared();
        if total == 0.0 {
            return 0.0;
        }
        let cut = SUPPORT_MARGIN * self.half_width;
        let outside: f64 = (0..self.len())
            .filter(|&i| {
                let x = self.node(i);
                x[0].abs() > cut || x[1].abs() > cut
            })
            .map(|i| u[i].norm_sqr())
            .sum();
        outside / total
    }
}

/// (|ξ|²)^{s/2} with 0^s = 0.
#[inline]
pub fn abs_pow(k2: f64, s: f64) -> f64 {
    if k2 == 0.0 {
        0.0
    } else {
        k2.powf(0.5 * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    L2Sigma,
    HsSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpace {
    pub sigma: f64,
    pub s: f64,
    pub kind: SpaceKind,
}

impl WeightedSpace {
    pub fn l2(sigma: f64) -> Self {
        Self { sigma, s: 0.0, kind: SpaceKind::L2Sigma }
    }

    pub fn hs(s: f64, sigma: f64) -> Self {
        Self { sigma, s, kind: SpaceKind::HsSigma }
    }
}
