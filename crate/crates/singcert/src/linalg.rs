//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

pub fn expm(a: &Mat) -> Mat {
    a.clone().exp()
}

/// Frechet derivative of the matrix exponential at `x` in direction `y`.
pub fn dexpm(x: &Mat, y: &Mat) -> Mat {
    let d = x.nrows();
    let mut big = Mat::zeros(2 * d, 2 * d);
    big.view_mut((0, 0), (d, d)).copy_from(x);
    big.view_mut((d, d), (d, d)).copy_from(x);
    big.view_mut((0, d), (d, d)).copy_from(y);
    let e = big.exp();
    e.view((0, d), (d, d)).into_owned()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Frobenius pairing `trace(p^T a)`.
pub fn pair(p: &Mat, a: &Mat) -> f64 {
    p.iter().zip(a.iter()).map(|(x, y)| x * y).sum()
}

pub fn singular_values(a: &Mat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Numerical rank with the relative cutoff `rtol * sigma_max`.
pub fn rank(a: &Mat, rtol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => s.iter().filter(|&&v| v > rtol * smax).count(),
    }
}

/// Stack flattened matrices as the columns of a single matrix.
pub fn stack_columns(items: &[Mat]) -> Mat {
    if items.is_empty() {
        return Mat::zeros(0, 0);
    }
    let len = items[0].len();
    let mut out = Mat::zeros(len, items.len());
    for (j, it) in items.iter().enumerate() {
        for (i, v) in it.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Orthonormal basis of the null space of `a`, rank decided relative to the
/// largest singular value.
pub fn null_space(a: &Mat, rtol: f64) -> Mat {
    let ncols = a.ncols();
    if a.nrows() == 0 {
        return Mat::identity(ncols, ncols);
    }
    // Pad with zero rows so the thin SVD exposes the full right factor.
    let rows = a.nrows().max(ncols);
    let mut padded = Mat::zeros(rows, ncols);
    padded.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let keep: Vec<usize> = (0..ncols)
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= rtol * smax)
        .collect();
    let mut out = Mat::zeros(ncols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        for k in 0..ncols {
            out[(k, j)] = vt[(i, k)];
        }
    }
    out
}

/// Least-squares solve through the SVD pseudo-inverse.
pub fn lstsq(a: &Mat, b: &Vector) -> Vector {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    svd.solve(b, RANK_RTOL * smax.max(f64::MIN_POSITIVE))
        .expect("svd with both factors")
}

pub fn pinv(a: &Mat) -> Mat {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    svd.pseudo_inverse(RANK_RTOL * smax.max(f64::MIN_POSITIVE))
        .expect("nonnegative tolerance")
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in increasing order.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn condition_number(a: &Mat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Three-point Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss3_unit() -> [(f64, f64); 3] {
    let r = (0.6_f64).sqrt();
    [
        (0.5 * (1.0 - r), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 * (1.0 + r), 5.0 / 18.0),
    ]
}
