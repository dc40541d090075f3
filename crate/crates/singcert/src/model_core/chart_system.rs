//! Generic backend: polynomial vector fields on a coordinate patch of R^n.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector, RANK_RTOL};
use crate::model_core::words::BracketWord;

/// Step of the central differences used when no exact Jacobian is available.
pub const FD_STEP: f64 = 1e-5;

pub trait VectorField: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &Vector) -> Vector;

    fn jacobian(&self, x: &Vector) -> Mat {
        fd_jacobian(self, x, FD_STEP)
    }

    fn exact_jacobian(&self) -> bool {
        false
    }
}

pub fn fd_jacobian<F: VectorField + ?Sized>(f: &F, x: &Vector, h: f64) -> Mat {
    let n = x.len();
    let mut jac = Mat::zeros(f.dim(), n);
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        jac.set_column(k, &((f.eval(&xp) - f.eval(&xm)) / (2.0 * h)));
    }
    jac
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub pow: Vec<u32>,
}

/// Each component is a sum of monomials `coef * prod x_k^pow_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialField {
    pub components: Vec<Vec<Monomial>>,
}

impl PolynomialField {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.components.len() != n {
            return Err(Error::Config(format!(
                "polynomial field has {} components, expected {n}",
                self.components.len()
            )));
        }
        for comp in &self.components {
            for mono in comp {
                if mono.pow.len() != n {
                    return Err(Error::Config(format!("monomial exponent length {} != {n}", mono.pow.len())));
                }
            }
        }
        Ok(())
    }
}

fn monomial_value(pow: &[u32], x: &Vector) -> f64 {
    pow.iter().enumerate().map(|(k, &e)| x[k].powi(e as i32)).product()
}

impl VectorField for PolynomialField {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            self.components.len(),
            self.components
                .iter()
                .map(|c| c.iter().map(|m| m.coef * monomial_value(&m.pow, x)).sum::<f64>()),
        )
    }

    fn jacobian(&self, x: &Vector) -> Mat {
        let n = x.len();
        let mut jac = Mat::zeros(self.components.len(), n);
        for (i, comp) in self.components.iter().enumerate() {
            for mono in comp {
                for k in 0..n {
                    let e = mono.pow[k];
                    if e == 0 {
                        continue;
                    }
                    let mut pw = mono.pow.clone();
                    pw[k] -= 1;
                    jac[(i, k)] += mono.coef * e as f64 * monomial_value(&pw, x);
                }
            }
        }
        jac
    }

    fn exact_jacobian(&self) -> bool {
        true
    }
}

/// `[a, b] = Db a - Da b`, matching the matrix commutator on left-invariant fields.
#[derive(Clone, Debug)]
pub struct BracketField {
    pub a: Arc<dyn VectorField>,
    pub b: Arc<dyn VectorField>,
}

impl VectorField for BracketField {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval(&self, x: &Vector) -> Vector {
        self.b.jacobian(x) * self.a.eval(x) - self.a.jacobian(x) * self.b.eval(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolution {
    Exact,
    UserSupplied,
    FiniteDifference { h: f64, error_estimate: f64 },
}

#[derive(Clone, Debug)]
pub struct ChartSystem {
    pub n: usize,
    /// `f_0, f_1, ..., f_m`.
    pub fields: Vec<Arc<dyn VectorField>>,
    pub brackets: BTreeMap<BracketWord, Arc<dyn VectorField>>,
}

impl ChartSystem {
    pub fn new(
        n: usize,
        fields: Vec<Arc<dyn VectorField>>,
        brackets: BTreeMap<BracketWord, Arc<dyn VectorField>>,
    ) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::InvalidArgument("need a drift and at least one controlled field".into()));
        }
        if fields.iter().chain(brackets.values()).any(|f| f.dim() != n) {
            return Err(Error::DimensionMismatch("field dimension differs from n".into()));
        }
        let m = fields.len() - 1;
        for w in brackets.keys() {
            if w.max_index() > m {
                return Err(Error::UnresolvedWord(w.to_string()));
            }
        }
        Ok(Self { n, fields, brackets })
    }

    pub fn m(&self) -> usize {
        self.fields.len() - 1
    }

    /// Vector field for a word: user entries first, then nested brackets of
    /// the resolved sub-words.
    pub fn field_for(&self, word: &BracketWord) -> Result<Arc<dyn VectorField>> {
        if let Some(f) = self.brackets.get(word) {
            return Ok(f.clone());
        }
        match word {
            BracketWord::Field(i) => self
                .fields
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::UnresolvedWord(word.to_string())),
            BracketWord::Bracket(a, b) => Ok(Arc::new(BracketField {
                a: self.field_for(a)?,
                b: self.field_for(b)?,
            })),
        }
    }

    /// A bracket value is exact when both operands carry exact Jacobians.
    fn is_exact(&self, word: &BracketWord) -> Result<bool> {
        if self.brackets.contains_key(word) {
            return Ok(true);
        }
        match word {
            BracketWord::Field(_) => Ok(true),
            BracketWord::Bracket(a, b) => {
                Ok(self.field_for(a)?.exact_jacobian() && self.field_for(b)?.exact_jacobian())
            }
        }
    }

    /// Value of the bracket field at `x` and how it was obtained.
    pub fn bracket_value(&self, x: &Vector, word: &BracketWord) -> Result<(Vector, Resolution)> {
        let f = self.field_for(word)?;
        let v = f.eval(x);
        if self.brackets.contains_key(word) {
            return Ok((v, Resolution::UserSupplied));
        }
        if self.is_exact(word)? {
            return Ok((v, Resolution::Exact));
        }
        // Richardson-style estimate: repeat the evaluation with doubled steps.
        let coarse = match word {
            BracketWord::Bracket(a, b) => {
                let fa = self.field_for(a)?;
                let fb = self.field_for(b)?;
                let h2 = 2.0 * FD_STEP;
                let ja = if fa.exact_jacobian() { fa.jacobian(x) } else { fd_jacobian(fa.as_ref(), x, h2) };
                let jb = if fb.exact_jacobian() { fb.jacobian(x) } else { fd_jacobian(fb.as_ref(), x, h2) };
                jb * fa.eval(x) - ja * fb.eval(x)
            }
            BracketWord::Field(_) => v.clone(),
        };
        let err = linalg::max_abs_vec(&(&v - coarse)) / 3.0;
        Ok((v, Resolution::FiniteDifference { h: FD_STEP, error_estimate: err }))
    }

    /// Greedy bracket closure of the controlled fields evaluated at `x`, up
    /// to words of the given depth.
    pub fn closure_at(&self, x: &Vector, max_depth: usize) -> Result<(Vec<BracketWord>, Vec<Vector>)> {
        let m = self.m();
        let mut words: Vec<BracketWord> = Vec::new();
        let mut values: Vec<Vector> = Vec::new();
        let mut level: Vec<BracketWord> = Vec::new();
        let accept = |w: BracketWord, v: Vector, words: &mut Vec<BracketWord>, values: &mut Vec<Vector>| -> bool {
            if linalg::max_abs_vec(&v) == 0.0 {
                return false;
            }
            let mut cols = values.clone();
            cols.push(v.clone());
            let mat = Mat::from_columns(&cols);
            if linalg::rank(&mat, RANK_RTOL) > values.len() {
                words.push(w);
                values.push(v);
                true
            } else {
                false
            }
        };
        for i in 1..=m {
            let w = BracketWord::field(i);
            let (v, _) = self.bracket_value(x, &w)?;
            if accept(w.clone(), v, &mut words, &mut values) {
                level.push(w);
            }
        }
        let mut depth = 1;
        while !level.is_empty() && depth < max_depth && values.len() < self.n {
            let mut next = Vec::new();
            for i in 1..=m {
                for w in &level {
                    let cand = BracketWord::bracket(BracketWord::field(i), w.clone());
                    let (v, _) = self.bracket_value(x, &cand)?;
                    if accept(cand.clone(), v, &mut words, &mut values) {
                        next.push(cand);
                    }
                }
            }
            level = next;
            depth += 1;
        }
        Ok((words, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(coef: f64, pow: &[u32]) -> Monomial {
        Monomial { coef, pow: pow.to_vec() }
    }

    /// Heisenberg-type system on R^3: f1 = d/dx, f2 = d/dy + x d/dz.
    fn heisenberg() -> ChartSystem {
        let f0 = PolynomialField { components: vec![vec![], vec![], vec![]] };
        let f1 = PolynomialField { components: vec![vec![mono(1.0, &[0, 0, 0])], vec![], vec![]] };
        let f2 = PolynomialField {
            components: vec![vec![], vec![mono(1.0, &[0, 0, 0])], vec![mono(1.0, &[1, 0, 0])]],
        };
        ChartSystem::new(3, vec![Arc::new(f0), Arc::new(f1), Arc::new(f2)], BTreeMap::new()).unwrap()
    }

    #[test]
    fn polynomial_jacobian_is_exact() {
        let f = PolynomialField { components: vec![vec![mono(2.0, &[2, 1])], vec![mono(-1.0, &[0, 3])]] };
        let x = Vector::from_vec(vec![0.3, -0.7]);
        let fd = fd_jacobian(&f, &x, 1e-6);
        assert!((fd - f.jacobian(&x)).amax() < 1e-8);
    }

    #[test]
    fn first_order_bracket_is_exact() {
        let s = heisenberg();
        let x = Vector::from_vec(vec![0.2, 0.1, -0.4]);
        let (v, res) = s.bracket_value(&x, &BracketWord::pair(1, 2)).unwrap();
        assert_eq!(res, Resolution::Exact);
        assert!((v - Vector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn nested_bracket_uses_finite_differences() {
        let s = heisenberg();
        let x = Vector::from_vec(vec![0.2, 0.1, -0.4]);
        let (v, res) = s.bracket_value(&x, &BracketWord::triple(1, 1, 2)).unwrap();
        assert!(matches!(res, Resolution::FiniteDifference { .. }));
        assert!(v.amax() < 1e-8);
    }

    #[test]
    fn closure_of_heisenberg_has_dimension_three() {
        let s = heisenberg();
        let (words, _) = s.closure_at(&Vector::zeros(3), 4).unwrap();
        assert_eq!(words.len(), 3);
    }
}
