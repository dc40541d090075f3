//! Matrix-group systems and the generalized Dubins family on the space forms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, RANK_RTOL};
use crate::model_core::algebra::{self, br, lie_closure, Closure, FrameCoords};
use crate::model_core::words::BracketWord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceForm {
    Euclidean,
    Sphere,
    Hyperbolic,
}

impl SpaceForm {
    pub fn epsilon(self) -> i32 {
        match self {
            SpaceForm::Euclidean => 0,
            SpaceForm::Sphere => 1,
            SpaceForm::Hyperbolic => -1,
        }
    }

    pub fn all() -> [SpaceForm; 3] {
        [SpaceForm::Euclidean, SpaceForm::Sphere, SpaceForm::Hyperbolic]
    }
}

impl fmt::Display for SpaceForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpaceForm::Euclidean => "euclidean",
            SpaceForm::Sphere => "sphere",
            SpaceForm::Hyperbolic => "hyperbolic",
        };
        f.write_str(s)
    }
}

impl FromStr for SpaceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(SpaceForm::Euclidean),
            "sphere" => Ok(SpaceForm::Sphere),
            "hyperbolic" => Ok(SpaceForm::Hyperbolic),
            other => Err(Error::InvalidArgument(format!("unknown space form {other:?}"))),
        }
    }
}

/// Left-invariant control-affine system `g' = g (A_0 + sum u_i A_i)`.
#[derive(Clone, Debug)]
pub struct MatrixGroupSystem {
    pub space_form: SpaceForm,
    /// Dimension `N` of the underlying space form.
    pub n_space: usize,
    /// Ambient matrix size `N + 1`.
    pub d: usize,
    pub drift: Mat,
    pub controlled: Vec<Mat>,
    pub epsilon: i32,
    pub lie_closure_basis: Vec<Mat>,
    pub lie_closure_words: Vec<BracketWord>,
    pub bracket_table: BTreeMap<BracketWord, Mat>,
    frame: FrameCoords,
}

fn unit(d: usize, i: usize, j: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    m[(i, j)] = 1.0;
    m
}

/// Membership residual in the algebra `[[0, -eps a^T], [a, U]]`, `U` antisymmetric.
pub fn membership_residual(space: SpaceForm, a: &Mat) -> f64 {
    let d = a.nrows();
    let eps = space.epsilon() as f64;
    let mut r = a[(0, 0)].abs();
    for j in 1..d {
        r = r.max((a[(0, j)] + eps * a[(j, 0)]).abs());
        for k in 1..d {
            r = r.max((a[(j, k)] + a[(k, j)]).abs());
        }
    }
    r
}

/// Bilinear form preserved by the compact and Lorentz groups.
fn metric(space: SpaceForm, d: usize) -> Mat {
    let mut j = Mat::identity(d, d);
    if space == SpaceForm::Hyperbolic {
        j[(0, 0)] = -1.0;
    }
    j
}

/// Residual of `g` against the group's defining equations.
pub fn group_residual(space: SpaceForm, g: &Mat) -> f64 {
    let d = g.nrows();
    match space {
        SpaceForm::Euclidean => {
            let mut r = (g[(0, 0)] - 1.0).abs();
            for j in 1..d {
                r = r.max(g[(0, j)].abs());
            }
            let rot = g.view((1, 1), (d - 1, d - 1)).into_owned();
            r.max(linalg::max_abs(&(rot.transpose() * &rot - Mat::identity(d - 1, d - 1))))
        }
        _ => {
            let j = metric(space, d);
            linalg::max_abs(&(g.transpose() * &j * g - j))
        }
    }
}

fn newton_schulz(mut x: Mat, j: &Mat) -> Mat {
    let d = x.nrows();
    let eye = Mat::identity(d, d);
    for _ in 0..8 {
        let e = j * x.transpose() * j * &x;
        if linalg::max_abs(&(&e - &eye)) < 1e-15 {
            break;
        }
        x = &x * (&eye * 3.0 - e) * 0.5;
    }
    x
}

/// Pull a near-group matrix back onto the group.
pub fn project_to_group(space: SpaceForm, g: &Mat) -> Mat {
    let d = g.nrows();
    match space {
        SpaceForm::Euclidean => {
            let mut out = g.clone();
            out[(0, 0)] = 1.0;
            for j in 1..d {
                out[(0, j)] = 0.0;
            }
            let rot = newton_schulz(g.view((1, 1), (d - 1, d - 1)).into_owned(), &Mat::identity(d - 1, d - 1));
            out.view_mut((1, 1), (d - 1, d - 1)).copy_from(&rot);
            out
        }
        _ => newton_schulz(g.clone(), &metric(space, d)),
    }
}

impl MatrixGroupSystem {
    /// Generic constructor; the standard frame is the closure basis of the
    /// controlled generators completed by `[A_0, A_i]` and `A_0`.
    pub fn new(space_form: SpaceForm, drift: Mat, controlled: Vec<Mat>) -> Result<Self> {
        let d = drift.nrows();
        if d < 2 || controlled.is_empty() {
            return Err(Error::InvalidArgument("need a drift and at least one controlled field".into()));
        }
        for a in controlled.iter().chain(std::iter::once(&drift)) {
            if a.shape() != (d, d) {
                return Err(Error::DimensionMismatch("generator size differs from drift".into()));
            }
        }
        let stacked = linalg::stack_columns(&controlled);
        if linalg::rank(&stacked, RANK_RTOL) != controlled.len() {
            return Err(Error::Structure("controlled generators are linearly dependent".into()));
        }
        let Closure { basis, words } = lie_closure(&controlled)?;
        let mut frame = basis.clone();
        for a in &controlled {
            frame.push(br(&drift, a));
        }
        frame.push(drift.clone());
        let frame = FrameCoords::new(frame)?;
        let mut sys = MatrixGroupSystem {
            space_form,
            n_space: d - 1,
            d,
            drift,
            controlled,
            epsilon: space_form.epsilon(),
            lie_closure_basis: basis,
            lie_closure_words: words,
            bracket_table: BTreeMap::new(),
            frame,
        };
        sys.populate_bracket_table();
        Ok(sys)
    }

    pub fn m(&self) -> usize {
        self.controlled.len()
    }

    /// Dimension of the Lie algebra generated by the controlled fields.
    pub fn r(&self) -> usize {
        self.lie_closure_basis.len()
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.frame.dim()
    }

    /// Standard frame `f_1..f_n`: closure basis, then `[A_0, A_i]`, then `A_0`.
    pub fn frame(&self) -> &FrameCoords {
        &self.frame
    }

    /// Generator by index, `0` being the drift.
    pub fn generator(&self, i: usize) -> Option<&Mat> {
        if i == 0 {
            Some(&self.drift)
        } else {
            self.controlled.get(i - 1)
        }
    }

    pub fn element(&self, word: &BracketWord) -> Result<Mat> {
        if let Some(m) = self.bracket_table.get(word) {
            return Ok(m.clone());
        }
        match word {
            BracketWord::Field(i) => self
                .generator(*i)
                .cloned()
                .ok_or_else(|| Error::UnresolvedWord(word.to_string())),
            BracketWord::Bracket(a, b) => Ok(br(&self.element(a)?, &self.element(b)?)),
        }
    }

    fn populate_bracket_table(&mut self) {
        let m = self.m();
        let mut table = BTreeMap::new();
        for i in 0..=m {
            table.insert(BracketWord::field(i), self.generator(i).unwrap().clone());
        }
        for i in 0..=m {
            for j in 0..=m {
                let w = BracketWord::pair(i, j);
                let v = br(&table[&BracketWord::field(i)], &table[&BracketWord::field(j)]);
                table.insert(w, v);
            }
        }
        for i in 0..=m {
            for j in 0..=m {
                for k in 0..=m {
                    let w = BracketWord::triple(i, j, k);
                    let v = br(&table[&BracketWord::field(i)], &table[&BracketWord::pair(j, k)]);
                    table.insert(w, v);
                }
            }
        }
        self.bracket_table = table;
    }

    pub fn membership_residual(&self, a: &Mat) -> f64 {
        membership_residual(self.space_form, a)
    }

    pub fn group_residual(&self, g: &Mat) -> f64 {
        group_residual(self.space_form, g)
    }

    pub fn project(&self, g: &Mat) -> Mat {
        project_to_group(self.space_form, g)
    }

    /// Same controlled generators with the drift multiplied by `sign`.
    pub fn with_drift_scaled(&self, sign: f64) -> Result<Self> {
        MatrixGroupSystem::new(self.space_form, &self.drift * sign, self.controlled.clone())
    }

    /// Tangent basis (left-trivialized) of the boundary manifolds `N_0`, `N_f`:
    /// the derived algebra `span{[A_i, A_j]}`.
    pub fn boundary_tangent_basis(&self) -> Vec<Mat> {
        let m = self.m();
        let mut out: Vec<Mat> = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let c = br(&self.controlled[i], &self.controlled[j]);
                let mut all = out.clone();
                all.push(c.clone());
                if linalg::rank(&linalg::stack_columns(&all), RANK_RTOL) > out.len() {
                    out.push(c);
                }
            }
        }
        out
    }
}

/// The Dubins system on the space form with `N >= 3`.
pub fn build_dubins_system(space_form: SpaceForm, n_space: usize) -> Result<MatrixGroupSystem> {
    if n_space < 3 {
        return Err(Error::InvalidArgument(format!("Dubins family needs N >= 3, got {n_space}")));
    }
    let d = n_space + 1;
    let eps = space_form.epsilon() as f64;
    let mut a0 = unit(d, 1, 0);
    a0[(0, 1)] = -eps;
    let controlled = (1..n_space)
        .map(|j| unit(d, j + 1, 1) - unit(d, 1, j + 1))
        .collect();
    MatrixGroupSystem::new(space_form, a0, controlled)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub max_residual: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PropertyReport {
    pub space_form: SpaceForm,
    pub n_space: usize,
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when the six listed properties hold literally.
    pub fn all_passed(&self) -> bool {
        ["i", "ii", "iii", "iv", "v", "vi"]
            .iter()
            .all(|n| self.get(n).map(|c| c.passed).unwrap_or(false))
    }
}

/// Checks the six structure properties by exact matrix arithmetic. Property
/// (v) is also reported modulo the controlled Lie algebra, where it holds on
/// every space form.
pub fn verify_structure_properties(sys: &MatrixGroupSystem) -> PropertyReport {
    let tol = 1e-12;
    let n = sys.n_space;
    let m = sys.m();
    let a = &sys.controlled;
    let a0 = &sys.drift;
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, res: f64, detail: String| {
        checks.push(PropertyCheck { name: name.into(), passed, max_residual: res, detail });
    };

    // (i) generated algebra is so(N), 2-step generating, dimension N(N-1)/2.
    let r_expected = n * (n - 1) / 2;
    let mut two_step = a.clone();
    for i in 0..m {
        for j in (i + 1)..m {
            two_step.push(br(&a[i], &a[j]));
        }
    }
    let r_two = linalg::rank(&linalg::stack_columns(&two_step), RANK_RTOL);
    let mut res_i = 0.0_f64;
    for b in &sys.lie_closure_basis {
        // block form: zero first row and column, antisymmetric remainder
        let mut r = 0.0_f64;
        for k in 0..sys.d {
            r = r.max(b[(0, k)].abs()).max(b[(k, 0)].abs());
        }
        r = r.max(linalg::max_abs(&(b + b.transpose())));
        res_i = res_i.max(r);
    }
    push(
        "i",
        sys.r() == r_expected && r_two == r_expected && res_i <= tol,
        res_i,
        format!("R = {} (expected {r_expected}), two-step rank {r_two}", sys.r()),
    );

    // (ii) derived subalgebra of dimension (N-1)(N-2)/2, closed under brackets.
    let derived = sys.boundary_tangent_basis();
    let dim_expected = (n - 1) * (n - 2) / 2;
    let mut res_ii = 0.0_f64;
    for x in &derived {
        for y in &derived {
            res_ii = res_ii.max(algebra::span_residual(&derived, &br(x, y)));
        }
    }
    push(
        "ii",
        derived.len() == dim_expected && res_ii <= tol,
        res_ii,
        format!("dim span [A_i,A_j] = {} (expected {dim_expected})", derived.len()),
    );

    // (iii) {A_0, [A_0,A_i], A_i, [A_i,A_j]} is a basis of the group algebra.
    let mut listed = vec![a0.clone()];
    for ai in a {
        listed.push(br(a0, ai));
    }
    listed.extend(a.iter().cloned());
    listed.extend(derived.iter().cloned());
    let n_state = n * (n + 1) / 2;
    let rank_iii = linalg::rank(&linalg::stack_columns(&listed), RANK_RTOL);
    let res_iii = listed.iter().map(|x| sys.membership_residual(x)).fold(0.0, f64::max);
    push(
        "iii",
        listed.len() == n_state && rank_iii == n_state && res_iii <= tol,
        res_iii,
        format!("{} elements, rank {rank_iii}, algebra dimension {n_state}", listed.len()),
    );

    // (iv) [A_i,[A_i,A_0]] = -A_0 and [A_i,[A_j,A_0]] = 0 for i != j.
    let mut res_iv = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            let v = br(&a[i], &br(&a[j], a0));
            let target = if i == j { -a0.clone() } else { Mat::zeros(sys.d, sys.d) };
            res_iv = res_iv.max(linalg::max_abs(&(v - target)));
        }
    }
    push("iv", res_iv <= tol, res_iv, String::new());

    // (v) {A_0, A_0i} mutually commute.
    let mut group_v = vec![a0.clone()];
    for ai in a {
        group_v.push(br(a0, ai));
    }
    let mut res_v = 0.0_f64;
    let mut res_v_mod = 0.0_f64;
    for x in &group_v {
        for y in &group_v {
            let c = br(x, y);
            res_v = res_v.max(linalg::max_abs(&c));
            res_v_mod = res_v_mod.max(algebra::span_residual(&sys.lie_closure_basis, &c));
        }
    }
    push(
        "v",
        res_v <= tol,
        res_v,
        if res_v <= tol {
            String::new()
        } else {
            format!("[A_0, A_0i] = -eps A_i with eps = {}", sys.epsilon)
        },
    );
    push("v_mod_lie", res_v_mod <= tol, res_v_mod, "commutators lie in Lie(f)".into());

    // (vi) A_0 commutes with every [A_i,A_j].
    let res_vi = derived.iter().map(|x| linalg::max_abs(&br(a0, x))).fold(0.0, f64::max);
    push("vi", res_vi <= tol, res_vi, String::new());

    PropertyReport { space_form: sys.space_form, n_space: n, checks }
}
