//! Matrix Lie-algebra primitives: commutators, bracket closure, frame coordinates.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector, RANK_RTOL};
use crate::model_core::words::BracketWord;

/// Elements of the structure algebras are plain `d x d` matrices.
pub type LieAlgebraElement = Mat;

pub fn commutator(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "commutator of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}

/// Commutator for operands already known to be conformant.
pub(crate) fn br(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

#[derive(Clone, Debug)]
pub struct Closure {
    pub basis: Vec<Mat>,
    pub words: Vec<BracketWord>,
}

impl Closure {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

fn independent_of(basis: &[Mat], cand: &Mat) -> bool {
    if linalg::max_abs(cand) == 0.0 {
        return false;
    }
    let mut all = basis.to_vec();
    all.push(cand.clone());
    linalg::rank(&linalg::stack_columns(&all), RANK_RTOL) > basis.len()
}

/// Breadth-first bracket closure. Generators come first (indexed `1..`),
/// then right-nested brackets `[g_i, X]` level by level.
pub fn lie_closure(generators: &[Mat]) -> Result<Closure> {
    if generators.is_empty() {
        return Err(Error::InvalidArgument("empty generator list".into()));
    }
    let shape = generators[0].shape();
    if generators.iter().any(|g| g.shape() != shape) {
        return Err(Error::DimensionMismatch("generators of different sizes".into()));
    }
    let mut basis: Vec<Mat> = Vec::new();
    let mut words = Vec::new();
    let mut level: Vec<usize> = Vec::new();
    for (i, g) in generators.iter().enumerate() {
        if independent_of(&basis, g) {
            basis.push(g.clone());
            words.push(BracketWord::field(i + 1));
            level.push(basis.len() - 1);
        }
    }
    let cap = shape.0 * shape.1;
    while !level.is_empty() && basis.len() < cap {
        let mut next = Vec::new();
        for (i, g) in generators.iter().enumerate() {
            for &k in &level {
                let c = br(g, &basis[k]);
                if independent_of(&basis, &c) {
                    words.push(BracketWord::bracket(BracketWord::field(i + 1), words[k].clone()));
                    basis.push(c);
                    next.push(basis.len() - 1);
                }
            }
        }
        level = next;
    }
    Ok(Closure { basis, words })
}

/// Coordinates of matrices with respect to a fixed linearly independent frame.
#[derive(Clone, Debug)]
pub struct FrameCoords {
    frame: Vec<Mat>,
    pinv: Mat,
    gram_inv: Mat,
}

impl FrameCoords {
    pub fn new(frame: Vec<Mat>) -> Result<Self> {
        let stacked = linalg::stack_columns(&frame);
        if linalg::rank(&stacked, RANK_RTOL) != frame.len() {
            return Err(Error::Structure("frame elements are linearly dependent".into()));
        }
        let pinv = linalg::pinv(&stacked);
        let gram = stacked.transpose() * &stacked;
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Structure("singular frame Gram matrix".into()))?;
        Ok(Self { frame, pinv, gram_inv })
    }

    pub fn frame(&self) -> &[Mat] {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    /// Least-squares coordinates of `a` in the frame.
    pub fn coords(&self, a: &Mat) -> Vector {
        let v = Vector::from_iterator(a.len(), a.iter().copied());
        &self.pinv * v
    }

    pub fn compose(&self, c: &Vector) -> Mat {
        let mut out = Mat::zeros(self.frame[0].nrows(), self.frame[0].ncols());
        for (k, f) in self.frame.iter().enumerate() {
            out += f * c[k];
        }
        out
    }

    /// Distance of `a` from the span of the frame (max norm).
    pub fn span_residual(&self, a: &Mat) -> f64 {
        linalg::max_abs(&(a - self.compose(&self.coords(a))))
    }

    /// Values of a covector on the frame elements.
    pub fn covector_values(&self, p: &Mat) -> Vector {
        Vector::from_iterator(self.frame.len(), self.frame.iter().map(|f| linalg::pair(p, f)))
    }

    /// The unique covector matrix in the span of the frame taking the given
    /// values on the frame elements.
    pub fn covector_from_values(&self, vals: &Vector) -> Mat {
        self.compose(&(&self.gram_inv * vals))
    }
}

/// Span residual of `a` with respect to an arbitrary list of matrices.
pub fn span_residual(span: &[Mat], a: &Mat) -> f64 {
    if span.is_empty() {
        return linalg::max_abs(a);
    }
    let stacked = linalg::stack_columns(span);
    let v = Vector::from_iterator(a.len(), a.iter().copied());
    let c = linalg::lstsq(&stacked, &v);
    linalg::max_abs_vec(&(stacked * c - v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, i: usize, j: usize) -> Mat {
        let mut m = Mat::zeros(d, d);
        m[(i, j)] = 1.0;
        m
    }

    #[test]
    fn commutator_rejects_mismatch() {
        assert!(commutator(&Mat::zeros(2, 2), &Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn so3_closure_from_two_rotations() {
        let a = e(3, 1, 0) - e(3, 0, 1);
        let b = e(3, 2, 0) - e(3, 0, 2);
        let c = lie_closure(&[a.clone(), b]).unwrap();
        assert_eq!(c.dim(), 3);
        assert_eq!(c.words[2].to_string(), "[1,2]");
        let again = lie_closure(&c.basis).unwrap();
        assert_eq!(again.dim(), 3);
        assert_eq!(lie_closure(&[a]).unwrap().dim(), 1);
    }

    #[test]
    fn covector_round_trip() {
        let frame = vec![e(3, 1, 0) - e(3, 0, 1), e(3, 2, 0) - e(3, 0, 2), e(3, 2, 1) - e(3, 1, 2)];
        let fc = FrameCoords::new(frame).unwrap();
        let vals = Vector::from_vec(vec![0.3, -1.0, 2.0]);
        let p = fc.covector_from_values(&vals);
        assert!((fc.covector_values(&p) - vals).amax() < 1e-14);
    }
}
