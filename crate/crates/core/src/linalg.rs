//! Dense complex linear algebra helpers shared by the operator modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Smallest singular value.
pub fn min_singular(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().min()
}

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// max |M - M*| over entries.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * re(0.5)
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMat) -> (DVector<f64>, CMat) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// U diag(f(λ)) U*.
pub fn spectral_reassemble(values: &DVector<f64>, vectors: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let mut scaled = vectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(values[k]);
    }
    scaled * vectors.adjoint()
}

pub fn diag_real(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&x| re(x))))
}

/// Row scaling diag(d) * M.
pub fn scale_rows(d: &[f64], m: &CMat) -> CMat {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= re(d[i]);
    }
    out
}

/// Column scaling M * diag(d).
pub fn scale_cols(m: &CMat, d: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= re(d[j]);
    }
    out
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Least-squares line y = slope*x + intercept.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of log(y) against log(x).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).0
}

/// Orthonormal basis of the column span via thin QR.
pub fn orthonormal_columns(m: &CMat) -> CMat {
    m.clone().qr().q()
}

/// Löwdin (symmetric) orthonormalization: B (B*B)^{-1/2}.
pub fn lowdin(b: &CMat) -> (CMat, f64) {
    let gram = b.adjoint() * b;
    let (vals, vecs) = hermitian_eigen(&hermitize(&gram));
    let cond = vals[vals.len() - 1] / vals[0];
    let inv_sqrt = spectral_reassemble(&vals, &vecs, |v| re(1.0 / v.sqrt()));
    (b * inv_sqrt, cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reassembles() {
        let m = CMat::from_fn(5, 5, |i, j| {
            
            c((i + 2 * j) as f64 * 0.3, (i as f64 - j as f64) * 0.1)
        });
        let h = hermitize(&m);
        let (vals, vecs) = hermitian_eigen(&h);
        for k in 1..vals.len() {
            assert!(vals[k] >= vals[k - 1]);
        }
        let back = spectral_reassemble(&vals, &vecs, re);
        assert!(max_abs_entry(&(back - &h)) < 1e-12);
    }

    #[test]
    fn fit_line_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 0.5).collect();
        let (m, b) = fit_line(&x, &y);
        assert!((m + 2.0).abs() < 1e-14 && (b - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lowdin_is_orthonormal() {
        let b = CMat::from_fn(6, 3, |i, j| c(((i * j) as f64).cos() + (i == j) as u8 as f64, 0.2 * j as f64));
        let (q, cond) = lowdin(&b);
        assert!(cond >= 1.0);
        let g = q.adjoint() * &q;
        assert!(max_abs_entry(&(g - identity(3))) < 1e-12);
    }
}
