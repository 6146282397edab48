//! Propagators, wave operators (direct and by Cook's integral), the
//! scattering matrix and the checks built on them.

use gauss_quad::GaussLegendre;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distorted_ft::DistortedFt;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{identity, lowdin, op_norm, orthonormal_columns, CMat, CVec, C64};
use crate::operators::HermitianOperator;

/// t ↦ e^{-itH}.
#[derive(Debug, Clone)]
pub enum Propagator {
    Spectral { values: DVector<f64>, vectors: CMat },
    Fourier { grid: Grid, symbol: Vec<f64> },
}

impl Propagator {
    pub fn from_operator(h: &HermitianOperator) -> Self {
        let e = h.eigen();
        Propagator::Spectral { values: e.values.clone(), vectors: e.vectors.clone() }
    }

    /// e^{-it|ξ|^s} as an exact Fourier multiplier.
    pub fn free(grid: &Grid, s: f64) -> Self {
        Propagator::Fourier { grid: grid.clone(), symbol: grid.symbol(s) }
    }

    /// Largest |eigenvalue|.
    pub fn spectral_radius(&self) -> f64 {
        match self {
            Propagator::Spectral { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Propagator::Fourier { symbol, .. } => symbol.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// e^{-itH} u.
    pub fn propagate(&self, t: f64, u: &CVec) -> CVec {
        match self {
            Propagator::Spectral { values, vectors } => {
                let mut c = vectors.adjoint() * u;
                for (k, z) in c.iter_mut().enumerate() {
                    *z *= C64::from_polar(1.0, -t * values[k]);
                }
                vectors * c
            }
            Propagator::Fourier { grid, symbol } => {
                let m: Vec<C64> = symbol.iter().map(|&l| C64::from_polar(1.0, -t * l)).collect();
                grid.apply_multiplier(&m, u)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// t → +∞
    Plus,
    /// t → -∞
    Minus,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }
}

/// e^{itH} e^{-itH₀} u at t = ±T.
pub fn wave_operator_direct(h: &Propagator, h0: &Propagator, u: &CVec, direction: Direction, t_max: f64) -> CVec {
    let t = direction.sign() * t_max;
    h.propagate(-t, &h0.propagate(t, u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CookLog {
    /// Panel end times |t|.
    pub times: Vec<f64>,
    /// ‖V_x e^{-itH₀}u‖ at each panel end.
    pub integrand: Vec<f64>,
    /// ‖W^{(T)}u - W^{(T/2)}u‖ from the partial sums.
    pub truncation_error: f64,
    /// ‖W^{(T)}u‖ difference between 8- and 6-point panel rules.
    pub quadrature_error: f64,
    pub tail_monotone: bool,
}

#[derive(Debug, Clone)]
pub struct CookResult {
    pub w: CVec,
    pub log: CookLog,
}

/// Whether the last quarter of `values` is non-increasing up to `floor`.
pub fn tail_monotone(values: &[f64], floor: f64) -> bool {
    let q = (values.len() / 4).max(2).min(values.len());
    values[values.len() - q..].windows(2).all(|w| w[1] <= w[0] + floor)
}

/// W^{(T)}u = u ± i∫ e^{itH} V_x e^{-itH₀}u dt over [0, T] or [-T, 0], with
/// Gauss–Legendre panels of width `dt`. No decay gate is applied; see
/// [`wave_operator_cook`].
pub fn cook_integral(
    h: &Propagator,
    h0: &Propagator,
    vx: &CMat,
    u: &CVec,
    direction: Direction,
    t_max: f64,
    dt: f64,
) -> Result<CookResult> {
    if !(t_max > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("need T > 0 and dt > 0, got T={t_max}, dt={dt}")));
    }
    let panels = (t_max / dt).round().max(1.0) as usize;
    let width = t_max / panels as f64;
    let sgn = direction.sign();
    let rule8 = GaussLegendre::new(std::num::NonZeroUsize::new(8).expect("nonzero"));
    let rule6 = GaussLegendre::new(std::num::NonZeroUsize::new(6).expect("nonzero"));
    let integrand = |tt: f64| -> CVec {
        let t = sgn * tt;
        h.propagate(-t, &(vx * h0.propagate(t, u)))
    };
    let panel = |p: usize, rule: &GaussLegendre| -> CVec {
        let (a, b) = (p as f64 * width, (p + 1) as f64 * width);
        let mut acc = CVec::zeros(u.len());
        for &(x, w) in rule.as_node_weight_pairs() {
            acc += integrand(0.5 * (b - a) * x + 0.5 * (a + b)) * C64::new(0.5 * (b - a) * w, 0.0);
        }
        acc
    };
    let pieces: Vec<(CVec, CVec, f64)> = (0..panels)
        .into_par_iter()
        .map(|p| {
            let end = (p + 1) as f64 * width;
            let g = (vx * h0.propagate(sgn * end, u)).norm();
            (panel(p, &rule8), panel(p, &rule6), g)
        })
        .collect();
    let factor = C64::new(0.0, sgn);
    let mut acc8 = CVec::zeros(u.len());
    let mut acc6 = CVec::zeros(u.len());
    let mut half = None;
    let mut times = Vec::with_capacity(panels);
    let mut norms = Vec::with_capacity(panels);
    for (p, (a8, a6, g)) in pieces.into_iter().enumerate() {
        acc8 += a8;
        acc6 += a6;
        if 2 * (p + 1) == panels {
            half = Some(acc8.clone());
        }
        times.push((p + 1) as f64 * width);
        norms.push(g);
    }
    let w = u + &acc8 * factor;
    let truncation_error = match half {
        Some(hh) => (&acc8 - hh).norm(),
        None => f64::NAN,
    };
    let quadrature_error = (&acc8 - &acc6).norm();
    // V_x is a difference of two operators, so its round-off scales with ‖H₀‖
    let floor = 1e-13 * (vx.norm() + h0.spectral_radius()) * u.norm();
    let tail = tail_monotone(&norms, floor);
    Ok(CookResult {
        w,
        log: CookLog { times, integrand: norms, truncation_error, quadrature_error, tail_monotone: tail },
    })
}

/// Cook's integral with the decay gate: the logged integrand must not grow
/// over the final quarter of [0, T].
pub fn wave_operator_cook(
    h: &Propagator,
    h0: &Propagator,
    vx: &CMat,
    u: &CVec,
    direction: Direction,
    t_max: f64,
    dt: f64,
) -> Result<CookResult> {
    let r = cook_integral(h, h0, vx, u, direction, t_max, dt)?;
    if !r.log.tail_monotone {
        return Err(Error::TailNotDecaying { t_max });
    }
    Ok(r)
}

/// L / (2 v_max) with group speed s|ξ|^{s-1} maximized over the band edges.
pub fn time_cap(s: f64, band: (f64, f64), half_width: f64) -> f64 {
    let v = |k: f64| s * k.powf(s - 1.0);
    half_width / (2.0 * v(band.0).max(v(band.1)))
}

/// Gaussian packets exp(-|x-c|²/(2w²) ± i k x₁), Löwdin-orthonormalized.
/// Returns the basis and the condition number of its Gram matrix.
pub fn packet_basis(grid: &Grid, centers: &[f64], momenta: &[f64], width: f64) -> (CMat, f64) {
    let x0 = grid.node_component(0);
    let x1 = if grid.dim() == 2 { grid.node_component(1) } else { vec![0.0; grid.len()] };
    let mut cols = Vec::new();
    for &k in momenta {
        for &c in centers {
            for sg in [1.0, -1.0] {
                let v: Vec<C64> = (0..grid.len())
                    .map(|i| {
                        let r2 = (x0[i] - c).powi(2) + x1[i].powi(2);
                        C64::from_polar((-r2 / (2.0 * width * width)).exp(), sg * k * x0[i])
                    })
                    .collect();
                cols.push(CVec::from_vec(v));
            }
        }
    }
    let b = CMat::from_columns(&cols);
    lowdin(&b)
}

/// Columns W^{(T)} b_k for every basis column.
pub fn wave_operator_columns(h: &Propagator, h0: &Propagator, basis: &CMat, direction: Direction, t_max: f64) -> CMat {
    let cols: Vec<CVec> = (0..basis.ncols())
        .into_par_iter()
        .map(|k| wave_operator_direct(h, h0, &basis.column(k).into_owned(), direction, t_max))
        .collect();
    CMat::from_columns(&cols)
}

/// S_{jk} = ⟨W_+ b_j, W_- b_k⟩.
pub fn scattering_matrix(w_plus: &CMat, w_minus: &CMat) -> CMat {
    w_plus.adjoint() * w_minus
}

/// (‖S*S - I‖, ‖SS* - I‖).
pub fn unitarity_defects(s: &CMat) -> (f64, f64) {
    let id = identity(s.nrows());
    (op_norm(&(s.adjoint() * s - &id)), op_norm(&(s * s.adjoint() - id)))
}

/// Largest |S_{jk}| over pairs with different labels.
pub fn off_shell_leakage(s: &CMat, labels: &[usize]) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..s.nrows() {
        for k in 0..s.ncols() {
            if labels[j] != labels[k] {
                worst = worst.max(s[(j, k)].norm());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwReport {
    /// ‖F_-^A W_- b - F b‖ / ‖b‖ per basis vector.
    pub defects: Vec<f64>,
    pub max: f64,
}

/// Compares F_∓^A applied to the wave-operator columns with the plain DFT of the basis.
pub fn verify_fw_relation(w_cols: &CMat, dft: &DistortedFt, basis: &CMat, grid: &Grid) -> Result<FwReport> {
    let defects = (0..basis.ncols())
        .map(|k| {
            let b = basis.column(k).into_owned();
            let fw = dft.transform(&w_cols.column(k).into_owned())?;
            Ok(fw.distance_to(&grid.forward(&b)) / b.norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = defects.iter().fold(0.0_f64, |m, v| m.max(*v));
    Ok(FwReport { defects, max })
}

/// Principal angles (radians, ascending) between two column spans.
pub fn principal_angles(a: &CMat, b: &CMat) -> Vec<f64> {
    let qa = orthonormal_columns(a);
    let qb = orthonormal_columns(b);
    let sv = (qa.adjoint() * qb).singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// max |⟨e, q⟩| over the given vectors e and an orthonormal basis q of span(a).
pub fn overlap_with(a: &CMat, vectors: &[CVec]) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    let q = orthonormal_columns(a);
    vectors.iter().map(|e| (q.adjoint() * e).norm() / e.norm()).fold(0.0, f64::max)
}

/// Parameters of a band-limited scattering experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSetup {
    pub s: f64,
    pub t_max: f64,
    pub dt: f64,
    /// |ξ| range of the packet momenta; its endpoints are the packet momenta.
    pub band: (f64, f64),
    pub centers: Vec<f64>,
    pub width: f64,
    /// Weight exponent of the distorted transform.
    pub sigma: f64,
    /// Times at which the intertwining relation is checked.
    pub intertwine_times: Vec<f64>,
    /// Additional T values for the convergence table (T itself is always included).
    pub t_ladder: Vec<f64>,
}

impl ScatteringSetup {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        crate::operators::check_order(self.s)?;
        if !(self.t_max > 0.0) || !(self.dt > 0.0) || !(self.width > 0.0) {
            return Err(Error::InvalidParameter("T, dt and packet width must be positive".into()));
        }
        let (lo, hi) = self.band;
        if !(lo > 0.0 && hi >= lo && hi < grid.max_frequency()) {
            return Err(Error::InvalidParameter(format!(
                "band ({lo}, {hi}) must satisfy 0 < lo <= hi < {}",
                grid.max_frequency()
            )));
        }
        if self.centers.is_empty() {
            return Err(Error::InvalidParameter("at least one packet center is required".into()));
        }
        let cap = time_cap(self.s, self.band, grid.half_width());
        if self.t_max > cap * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "T = {} exceeds the wrap-around cap L/(2 v_max) = {cap:.3}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn momenta(&self) -> Vec<f64> {
        if self.band.0 == self.band.1 {
            vec![self.band.0]
        } else {
            vec![self.band.0, self.band.1]
        }
    }

    /// Momentum index of each basis column, in `packet_basis` order.
    pub fn labels(&self) -> Vec<usize> {
        let per = 2 * self.centers.len();
        (0..self.momenta().len() * per).map(|k| k / per).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: f64,
    /// max_k |‖W_±^{(T)}b_k‖ - 1| by Cook's integral.
    pub isometry_defect: f64,
    /// max ‖e^{itH}W^{(T)}b - W^{(T)}e^{itH₀}b‖.
    pub intertwine_defect: f64,
    /// max ‖F_-^A W_-^{(T)}b - F b‖.
    pub fw_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CookSummary {
    pub direction: Direction,
    pub column: usize,
    pub truncation_error: f64,
    pub direct_truncation_error: f64,
    pub quadrature_error: f64,
    /// ‖W_cook - W_direct‖
    pub route_gap: f64,
    pub tail_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub setup: ScatteringSetup,
    pub time_cap: f64,
    pub basis_size: usize,
    pub basis_condition: f64,
    pub convergence: Vec<ConvergenceRow>,
    pub cook: Vec<CookSummary>,
    /// Panel end times and max over columns of ‖V_x e^{∓itH₀}b‖.
    pub integrand_times: Vec<f64>,
    pub integrand_max: Vec<f64>,
    pub isometry_defect: f64,
    pub intertwining: Vec<(f64, f64)>,
    pub s_matrix: Vec<Vec<C64>>,
    pub s_star_s: f64,
    pub s_s_star: f64,
    pub off_shell_leakage: f64,
    pub fw: FwReport,
    pub fw_half: FwReport,
    pub principal_angles: Vec<f64>,
    pub point_eigenvalues: Vec<f64>,
    pub point_overlap: f64,
    pub exceptional_shells: Vec<f64>,
}

impl ScatteringReport {
    pub fn max_route_excess(&self) -> f64 {
        self.cook
            .iter()
            .map(|c| c.route_gap / (2.0 * (c.truncation_error + c.direct_truncation_error)).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn tail_monotone(&self) -> bool {
        self.cook.iter().all(|c| c.tail_monotone)
    }
}

fn intertwine_defect(h: &Propagator, h0: &Propagator, basis: &CMat, w: &CMat, dir: Direction, t_max: f64, t: f64) -> f64 {
    (0..basis.ncols())
        .into_par_iter()
        .map(|k| {
            let b = basis.column(k).into_owned();
            let left = h.propagate(-t, &w.column(k).into_owned());
            let right = wave_operator_direct(h, h0, &h0.propagate(-t, &b), dir, t_max);
            (left - right).norm() / b.norm()
        })
        .reduce(|| 0.0, f64::max)
}

/// Runs the full wave-operator / scattering-matrix / distorted-transform
/// comparison on a packet basis. `hs` is (-Δ_A)^{s/2}; `vx` its difference
/// from the free operator.
pub fn scattering_report(
    grid: &Grid,
    hs: &HermitianOperator,
    vx: &CMat,
    setup: &ScatteringSetup,
    params: &crate::resolvent::LadderParams,
    point_threshold: f64,
) -> Result<ScatteringReport> {
    setup.validate(grid)?;
    let h = Propagator::from_operator(hs);
    let h0 = Propagator::free(grid, setup.s);
    let (basis, cond) = packet_basis(grid, &setup.centers, &setup.momenta(), setup.width);
    let t_max = setup.t_max;
    let dft = DistortedFt::new(grid, vx, setup.s, setup.sigma, crate::resolvent::Branch::Minus, params)?;
    let exceptional_shells = dft.summary().iter().filter(|s| s.exceptional).map(|s| s.lambda).collect();

    let mut ts: Vec<f64> = setup.t_ladder.iter().copied().filter(|&t| t > 0.0 && t < t_max).collect();
    ts.push(t_max);
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let mut convergence = Vec::new();
    let mut final_cook = None;
    for &t in &ts {
        let mut isometry = 0.0_f64;
        let mut intertwine = 0.0_f64;
        let mut cooks = Vec::new();
        let mut directs = Vec::new();
        for dir in [Direction::Plus, Direction::Minus] {
            let cook: Vec<CookResult> = (0..basis.ncols())
                .map(|k| cook_integral(&h, &h0, vx, &basis.column(k).into_owned(), dir, t, setup.dt))
                .collect::<Result<_>>()?;
            for c in &cook {
                isometry = isometry.max((c.w.norm() - 1.0).abs());
            }
            let direct = wave_operator_columns(&h, &h0, &basis, dir, t);
            for &tt in &setup.intertwine_times {
                intertwine = intertwine.max(intertwine_defect(&h, &h0, &basis, &direct, dir, t, tt));
            }
            cooks.push(cook);
            directs.push(direct);
        }
        let fw = verify_fw_relation(&directs[1], &dft, &basis, grid)?;
        convergence.push(ConvergenceRow { t, isometry_defect: isometry, intertwine_defect: intertwine, fw_defect: fw.max });
        if t == t_max {
            final_cook = Some((cooks, directs, isometry, fw));
        }
    }
    let (cooks, directs, isometry_defect, fw) = final_cook.expect("T is in the ladder");

    let mut cook_summary = Vec::new();
    let mut integrand_max: Vec<f64> = Vec::new();
    let mut integrand_times = Vec::new();
    for (d, dir) in [Direction::Plus, Direction::Minus].into_iter().enumerate() {
        let half = wave_operator_columns(&h, &h0, &basis, dir, 0.5 * t_max);
        for (k, c) in cooks[d].iter().enumerate() {
            let direct = directs[d].column(k).into_owned();
            if integrand_max.is_empty() {
                integrand_times = c.log.times.clone();
                integrand_max = vec![0.0; c.log.integrand.len()];
            }
            for (m, v) in integrand_max.iter_mut().zip(&c.log.integrand) {
                *m = m.max(*v);
            }
            cook_summary.push(CookSummary {
                direction: dir,
                column: k,
                truncation_error: c.log.truncation_error,
                direct_truncation_error: (&direct - half.column(k)).norm(),
                quadrature_error: c.log.quadrature_error,
                route_gap: (&c.w - direct).norm(),
                tail_monotone: c.log.tail_monotone,
            });
        }
    }

    let fw_half = verify_fw_relation(&wave_operator_columns(&h, &h0, &basis, Direction::Minus, 0.5 * t_max), &dft, &basis, grid)?;
    let intertwining = setup
        .intertwine_times
        .iter()
        .map(|&tt| {
            let d = [Direction::Plus, Direction::Minus]
                .into_iter()
                .enumerate()
                .map(|(i, dir)| intertwine_defect(&h, &h0, &basis, &directs[i], dir, t_max, tt))
                .fold(0.0, f64::max);
            (tt, d)
        })
        .collect();

    let s = scattering_matrix(&directs[0], &directs[1]);
    let (s_star_s, s_s_star) = unitarity_defects(&s);
    let leakage = off_shell_leakage(&s, &setup.labels());

    let decomp = crate::spectral::eigensystem_with_threshold(hs, point_threshold);
    let point_vectors: Vec<CVec> = decomp.point_flags.iter().map(|&k| decomp.vector(k)).collect();
    let point_overlap = overlap_with(&directs[0], &point_vectors).max(overlap_with(&directs[1], &point_vectors));

    Ok(ScatteringReport {
        setup: setup.clone(),
        time_cap: time_cap(setup.s, setup.band, grid.half_width()),
        basis_size: basis.ncols(),
        basis_condition: cond,
        convergence,
        cook: cook_summary,
        integrand_times,
        integrand_max,
        isometry_defect,
        intertwining,
        s_matrix: (0..s.nrows()).map(|j| s.row(j).iter().copied().collect()).collect(),
        s_star_s,
        s_s_star,
        off_shell_leakage: leakage,
        fw,
        fw_half,
        principal_angles: principal_angles(&directs[0], &directs[1]),
        point_eigenvalues: decomp.point_flags.iter().map(|&k| decomp.values[k]).collect(),
        point_overlap,
        exceptional_shells,
    })
}
