//! Galerkin eigenvalue oracle for coercivity on the constraint space.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::second_variation::problem::SecondVariationProblem;
use crate::second_variation::report::{CoercivityMethod, CoercivityReport, Refinement, Verdict};

/// Dense quadratic form `J(y) = 1/2 y^T Q y` on `y = (init, w_1 .. w_K)`,
/// `w_k` in `R^m` the value on piece `k`.
#[derive(Clone, Debug)]
pub struct GalerkinForm {
    pub pieces: usize,
    pub init_dim: usize,
    pub q: Mat,
    /// Diagonal of the Gram matrix of `|init|^2 + |w|_{L^2}^2`.
    pub gram: Vector,
    /// Rows express the terminal constraint.
    pub constraint: Mat,
}

impl GalerkinForm {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn value(&self, y: &Vector) -> f64 {
        0.5 * y.dot(&(&self.q * y))
    }

    pub fn constraint_residual(&self, y: &Vector) -> f64 {
        linalg::max_abs_vec(&(&self.constraint * y))
    }

    /// Coefficient vector of piecewise-constant `w` with zero initial part.
    pub fn embed(&self, w: &[Vector]) -> Vector {
        let m = w[0].len();
        let mut y = Vector::zeros(self.dim());
        for (k, wk) in w.iter().enumerate() {
            y.rows_mut(self.init_dim + k * m, m).copy_from(wk);
        }
        y
    }
}

/// Minimum of `J(y) / |y|^2` over the constraint kernel with its kernel
/// dimension and the numerical rank of the constraint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RestrictedSpectrum {
    pub min_eigenvalue: f64,
    pub kernel_dim: usize,
    pub constraint_rank: usize,
}

/// Assembles the Galerkin form with `k` pieces per channel.
pub fn assemble_galerkin(problem: &SecondVariationProblem, k: usize) -> Result<GalerkinForm> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one piece".into()));
    }
    let (n, m) = (problem.n, problem.m);
    let e0 = problem.initial_map();
    let d0 = e0.ncols();
    let dim = d0 + m * k;
    let h = problem.horizon / k as f64;
    let gauss = linalg::gauss3_unit();

    // per-piece integrals of Z, a, C and of a(t) int_{t_k}^t Z
    let pieces: Vec<(Mat, Mat, Mat, Mat)> = (0..k)
        .into_par_iter()
        .map(|p| -> Result<_> {
            let t0 = p as f64 * h;
            let mut gz = Mat::zeros(n, m);
            let mut ga = Mat::zeros(m, n);
            let mut gc = Mat::zeros(m, m);
            let mut gs = Mat::zeros(m, m);
            for &(x, wx) in &gauss {
                let tau = t0 + x * h;
                let s = problem.eval(tau)?;
                gz += &s.z * (wx * h);
                ga += &s.a * (wx * h);
                gc += &s.c * (wx * h);
                let mut inner = Mat::zeros(n, m);
                for &(y, wy) in &gauss {
                    inner += problem.eval(t0 + y * (tau - t0))?.z * (wy * (tau - t0));
                }
                gs += &s.a * inner * (wx * h);
            }
            Ok((gz, ga, gc, gs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut q = Mat::zeros(dim, dim);
    if d0 > 0 && problem.rho != 0.0 {
        let block = e0.transpose() * problem.omega_projector() * &e0 * problem.rho;
        add_block(&mut q, 0, 0, &block);
    }
    for (p, (_, ga, gc, gs)) in pieces.iter().enumerate() {
        let row = d0 + p * m;
        if d0 > 0 {
            let b = ga * &e0;
            add_block(&mut q, row, 0, &b);
            add_block(&mut q, 0, row, &b.transpose());
        }
        for (l, (gz, ..)) in pieces.iter().enumerate().take(p) {
            let col = d0 + l * m;
            let b = ga * gz;
            add_block(&mut q, row, col, &b);
            add_block(&mut q, col, row, &b.transpose());
        }
        let diag = gs + gs.transpose() + gc;
        add_block(&mut q, row, row, &diag);
    }
    let q = linalg::symmetrize(&q);

    let mut gram = Vector::from_element(dim, h);
    gram.rows_mut(0, d0).fill(1.0);

    // zeta(T) = E0 y0 + sum_k G_k w_k, restricted to the complement of the
    // admissible terminal subspace
    let mut end = Mat::zeros(n, dim);
    end.view_mut((0, 0), (n, d0)).copy_from(&e0);
    for (p, (gz, ..)) in pieces.iter().enumerate() {
        end.view_mut((0, d0 + p * m), (n, m)).copy_from(gz);
    }
    let constraint = match &problem.terminal {
        None => end,
        Some(basis) => {
            let complement = linalg::null_space(&basis.transpose(), linalg::RANK_RTOL);
            complement.transpose() * end
        }
    };
    Ok(GalerkinForm { pieces: k, init_dim: d0, q, gram, constraint })
}

fn add_block(q: &mut Mat, row: usize, col: usize, b: &Mat) {
    let mut v = q.view_mut((row, col), b.shape());
    v += b;
}

/// Generalized minimum eigenvalue on the constraint kernel.
pub fn restricted_spectrum(form: &GalerkinForm) -> Result<RestrictedSpectrum> {
    // whiten by the Gram diagonal: y = D^{-1/2} z
    let inv_sqrt = form.gram.map(|g| 1.0 / g.sqrt());
    let (basis, constraint_rank) = if form.constraint.nrows() == 0 {
        (Mat::identity(form.dim(), form.dim()), 0)
    } else {
        let white = Mat::from_fn(form.constraint.nrows(), form.dim(), |i, j| form.constraint[(i, j)] * inv_sqrt[j]);
        (linalg::null_space(&white, linalg::RANK_RTOL), linalg::rank(&white, linalg::RANK_RTOL))
    };
    if basis.ncols() == 0 {
        return Err(Error::Structure("constraint kernel is trivial".into()));
    }
    let scaled_q = Mat::from_fn(form.dim(), form.dim(), |i, j| 0.5 * form.q[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let restricted = basis.transpose() * scaled_q * &basis;
    let eig = linalg::sym_eigenvalues(&restricted);
    Ok(RestrictedSpectrum { min_eigenvalue: eig[0], kernel_dim: basis.ncols(), constraint_rank })
}

/// Coercivity on the constraint space by Galerkin margins at `K`, `2K`, `4K`.
pub fn galerkin_coercivity(problem: &SecondVariationProblem, k: usize) -> Result<CoercivityReport> {
    if k < 4 {
        return Err(Error::InvalidArgument("Galerkin needs K >= 4".into()));
    }
    let scale = problem.scale(64)?;
    let floor = 1e-4 * scale.max(f64::MIN_POSITIVE);
    let levels = [k, 2 * k, 4 * k];
    let refinements = levels
        .par_iter()
        .map(|&kk| {
            let form = assemble_galerkin(problem, kk)?;
            let spec = restricted_spectrum(&form)?;
            Ok(Refinement {
                k: kk,
                margin: spec.min_eigenvalue,
                kernel_dim: spec.kernel_dim,
                constraint_rank: spec.constraint_rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let margins: Vec<f64> = refinements.iter().map(|r| r.margin).collect();
    let last = margins[2];
    // first-order extrapolation of the refinement trend
    let extrapolated = last - (margins[1] - last).max(0.0);
    let coercive = margins.iter().all(|&v| v >= floor) && extrapolated >= floor;
    Ok(CoercivityReport {
        method: CoercivityMethod::Galerkin,
        verdict: if coercive { Verdict::Coercive } else { Verdict::NotCoercive },
        margin: last,
        floor,
        rho: problem.rho,
        initial: problem.initial,
        refinements,
        rho_sweep: Vec::new(),
        det_trace: Vec::new(),
    })
}
