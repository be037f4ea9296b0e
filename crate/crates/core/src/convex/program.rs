use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// `sum_i c_i x_i + constant` with sparse coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self::new(vec![(i, 1.0)], 0.0)
    }

    pub fn add(&mut self, i: usize, c: f64) -> &mut Self {
        if c != 0.0 {
            self.terms.push((i, c));
        }
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    pub(crate) fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }

    fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.iter().all(|t| t.1.is_finite())
    }
}

/// Convex quadratic `x_S^T P x_S + q^T x_S + r` over a sorted support `S`.
///
/// `P` is positive semidefinite; this is checked when the form is built from
/// an explicit matrix and holds structurally for sums of squares.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub(crate) support: Vec<usize>,
    pub(crate) p: DMatrix<f64>,
    pub(crate) q: Vec<f64>,
    pub(crate) r: f64,
}

fn merged_support<'a>(forms: impl Iterator<Item = &'a LinearForm>) -> Vec<usize> {
    let mut s: Vec<usize> = forms.flat_map(|f| f.terms.iter().map(|t| t.0)).collect();
    s.sort_unstable();
    s.dedup();
    s
}

fn local_index(support: &[usize], i: usize) -> usize {
    support.binary_search(&i).expect("index in support")
}

impl QuadraticForm {
    /// `sum_j l_j(x)^2 + linear(x)`.
    pub fn sum_of_squares(squares: &[LinearForm], linear: &LinearForm) -> Self {
        let support = merged_support(squares.iter().chain(std::iter::once(linear)));
        let d = support.len();
        let mut p = DMatrix::zeros(d, d);
        let mut q = vec![0.0; d];
        let mut r = linear.constant;
        let mut local = vec![0.0; d];
        for form in squares {
            let idx: Vec<usize> = form.terms.iter().map(|t| local_index(&support, t.0)).collect();
            local.iter_mut().for_each(|v| *v = 0.0);
            for (&li, &(_, c)) in idx.iter().zip(&form.terms) {
                local[li] += c;
            }
            let mut nz: Vec<usize> = idx.clone();
            nz.sort_unstable();
            nz.dedup();
            for &a in &nz {
                for &b in &nz {
                    p[(a, b)] += local[a] * local[b];
                }
                q[a] += 2.0 * form.constant * local[a];
            }
            r += form.constant * form.constant;
        }
        for &(i, c) in &linear.terms {
            q[local_index(&support, i)] += c;
        }
        Self { support, p, q, r }
    }

    /// Build from an explicit symmetric PSD matrix over `support`.
    pub fn from_matrix(support: Vec<usize>, p: DMatrix<f64>, q: Vec<f64>, r: f64) -> Result<Self> {
        let d = support.len();
        if p.shape() != (d, d) || q.len() != d {
            return Err(Error::Program("quadratic form dimensions disagree".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Program("quadratic support must be strictly increasing".into()));
        }
        let asym = (&p - p.transpose()).abs().max();
        let scale = p.abs().max().max(1.0);
        if asym > 1e-12 * scale {
            return Err(Error::Program("quadratic matrix is not symmetric".into()));
        }
        if d > 0 {
            let eig = SymmetricEigen::new(p.clone());
            let min = eig.eigenvalues.min();
            if min < -1e-10 * scale {
                return Err(Error::Program(format!(
                    "quadratic matrix is not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(Self { support, p, q, r })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let xs: Vec<f64> = self.support.iter().map(|&i| x[i]).collect();
        let d = xs.len();
        let mut v = self.r;
        for a in 0..d {
            let mut row = 0.0;
            for b in 0..d {
                row += self.p[(a, b)] * xs[b];
            }
            v += xs[a] * row + self.q[a] * xs[a];
        }
        v
    }

    /// Gradient restricted to the support.
    pub fn local_gradient(&self, x: &[f64]) -> Vec<f64> {
        let xs: Vec<f64> = self.support.iter().map(|&i| x[i]).collect();
        let d = xs.len();
        (0..d)
            .map(|a| 2.0 * (0..d).map(|b| self.p[(a, b)] * xs[b]).sum::<f64>() + self.q[a])
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.r.is_finite() && self.q.iter().all(|v| v.is_finite()) && self.p.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `q(x) <= 0`
    Quadratic(QuadraticForm),
    /// `a(x) <= 0`
    Affine(LinearForm),
    /// `a(x) = 0`
    Equality(LinearForm),
    /// `lower <= x[var] <= upper`; either side may be infinite.
    Bounds { var: usize, lower: f64, upper: f64 },
    /// `|| (l_1(x), ..., l_k(x)) || <= bound(x)`
    Cone { terms: Vec<LinearForm>, bound: LinearForm },
}

impl Constraint {
    /// Violation measure: positive when infeasible, zero or negative inside.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Quadratic(q) => q.eval(x),
            Constraint::Affine(a) => a.eval(x),
            Constraint::Equality(a) => a.eval(x).abs(),
            Constraint::Bounds { var, lower, upper } => (lower - x[*var]).max(x[*var] - upper),
            Constraint::Cone { terms, bound } => {
                let n = terms.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
                n - bound.eval(x)
            }
        }
    }
}

/// A concave objective term (maximized).
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveTerm {
    /// `weight * ln(1 + arg(x))`, `weight >= 0`.
    Log { weight: f64, arg: LinearForm },
    Affine(LinearForm),
    /// `-weight * sum_j l_j(x)^2`, `weight >= 0`.
    NegSquares { weight: f64, forms: Vec<LinearForm> },
}

impl ObjectiveTerm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ObjectiveTerm::Log { weight, arg } => {
                let a = 1.0 + arg.eval(x);
                if a > 0.0 {
                    weight * a.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ObjectiveTerm::Affine(a) => a.eval(x),
            ObjectiveTerm::NegSquares { weight, forms } => {
                -weight * forms.iter().map(|f| f.eval(x).powi(2)).sum::<f64>()
            }
        }
    }
}

/// Maximize a concave objective over convex constraints on `x in R^dim`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: Vec<ObjectiveTerm>,
    pub constraints: Vec<Constraint>,
    pub warm_start: Option<Vec<f64>>,
}

impl ConvexProgram {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn maximize(&mut self, term: ObjectiveTerm) -> &mut Self {
        self.objective.push(term);
        self
    }

    pub fn subject_to(&mut self, c: Constraint) -> &mut Self {
        self.constraints.push(c);
        self
    }

    pub fn with_warm_start(mut self, x: Vec<f64>) -> Self {
        self.warm_start = Some(x);
        self
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|t| t.eval(x)).sum()
    }

    /// Largest constraint violation at `x` (0 when every constraint holds).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max)
    }

    /// Analytic gradient of the objective.
    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for term in &self.objective {
            match term {
                ObjectiveTerm::Log { weight, arg } => {
                    let s = weight / (1.0 + arg.eval(x));
                    for &(i, c) in &arg.terms {
                        g[i] += s * c;
                    }
                }
                ObjectiveTerm::Affine(a) => {
                    for &(i, c) in &a.terms {
                        g[i] += c;
                    }
                }
                ObjectiveTerm::NegSquares { weight, forms } => {
                    for f in forms {
                        let v = f.eval(x);
                        for &(i, c) in &f.terms {
                            g[i] -= 2.0 * weight * v * c;
                        }
                    }
                }
            }
        }
        g
    }

    /// Analytic gradient of constraint `idx`'s defining function (for
    /// equalities the signed affine form, for bounds `x[var]`).
    pub fn constraint_gradient(&self, idx: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        match &self.constraints[idx] {
            Constraint::Quadratic(q) => {
                for (li, v) in q.local_gradient(x).into_iter().enumerate() {
                    g[q.support[li]] += v;
                }
            }
            Constraint::Affine(a) | Constraint::Equality(a) => {
                for &(i, c) in &a.terms {
                    g[i] += c;
                }
            }
            Constraint::Bounds { var, .. } => g[*var] = 1.0,
            Constraint::Cone { terms, bound } => {
                let vals: Vec<f64> = terms.iter().map(|t| t.eval(x)).collect();
                let n = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    for (t, v) in terms.iter().zip(&vals) {
                        for &(i, c) in &t.terms {
                            g[i] += v / n * c;
                        }
                    }
                }
                for &(i, c) in &bound.terms {
                    g[i] -= c;
                }
            }
        }
        g
    }

    /// Defining-function value of constraint `idx` (see [`Self::constraint_gradient`]).
    pub fn constraint_value(&self, idx: usize, x: &[f64]) -> f64 {
        match &self.constraints[idx] {
            Constraint::Equality(a) => a.eval(x),
            Constraint::Bounds { var, .. } => x[*var],
            other => other.violation(x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |i: Option<usize>| -> Result<()> {
            match i {
                Some(i) if i >= self.dim => Err(Error::Program(format!(
                    "variable index {i} out of range for dimension {}",
                    self.dim
                ))),
                _ => Ok(()),
            }
        };
        if self.dim == 0 {
            return Err(Error::Program("program has no variables".into()));
        }
        for t in &self.objective {
            match t {
                ObjectiveTerm::Log { weight, arg } => {
                    if !(*weight >= 0.0) || !arg.is_finite() {
                        return Err(Error::Program("log term needs finite data and weight >= 0".into()));
                    }
                    check(arg.max_index())?;
                }
                ObjectiveTerm::Affine(a) => {
                    if !a.is_finite() {
                        return Err(Error::Program("non-finite affine objective".into()));
                    }
                    check(a.max_index())?;
                }
                ObjectiveTerm::NegSquares { weight, forms } => {
                    if !(*weight >= 0.0) || forms.iter().any(|f| !f.is_finite()) {
                        return Err(Error::Program("square term needs finite data and weight >= 0".into()));
                    }
                    for f in forms {
                        check(f.max_index())?;
                    }
                }
            }
        }
        for c in &self.constraints {
            match c {
                Constraint::Quadratic(q) => {
                    if !q.is_finite() {
                        return Err(Error::Program("non-finite quadratic constraint".into()));
                    }
                    check(q.support.last().copied())?;
                }
                Constraint::Affine(a) | Constraint::Equality(a) => {
                    if !a.is_finite() {
                        return Err(Error::Program("non-finite affine constraint".into()));
                    }
                    check(a.max_index())?;
                }
                Constraint::Bounds { var, lower, upper } => {
                    check(Some(*var))?;
                    if lower.is_nan() || upper.is_nan() || lower >= upper {
                        return Err(Error::Program(format!("empty bounds [{lower}, {upper}] on x{var}")));
                    }
                }
                Constraint::Cone { terms, bound } => {
                    if !bound.is_finite() || terms.iter().any(|t| !t.is_finite()) {
                        return Err(Error::Program("non-finite cone constraint".into()));
                    }
                    check(bound.max_index())?;
                    for t in terms {
                        check(t.max_index())?;
                    }
                }
            }
        }
        if let Some(w) = &self.warm_start {
            if w.len() != self.dim || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Program("warm start has wrong length or non-finite entries".into()));
            }
        }
        Ok(())
    }

    /// Plain-text listing of the program, one line per term.
    pub fn to_listing(&self) -> String {
        fn lin(f: &LinearForm) -> String {
            let mut s = String::new();
            for &(i, c) in &f.terms {
                let _ = write!(s, "{c:+.6e}*x{i} ");
            }
            let _ = write!(s, "{:+.6e}", f.constant);
            s
        }
        let mut out = String::new();
        let _ = writeln!(out, "maximize  (dim = {})", self.dim);
        for t in &self.objective {
            let _ = match t {
                ObjectiveTerm::Log { weight, arg } => writeln!(out, "  {weight:.6e} * ln(1 + {})", lin(arg)),
                ObjectiveTerm::Affine(a) => writeln!(out, "  {}", lin(a)),
                ObjectiveTerm::NegSquares { weight, forms } => {
                    let parts: Vec<String> = forms.iter().map(|f| format!("({})^2", lin(f))).collect();
                    writeln!(out, "  -{weight:.6e} * [{}]", parts.join(" + "))
                }
            };
        }
        let _ = writeln!(out, "subject to");
        for c in &self.constraints {
            let _ = match c {
                Constraint::Quadratic(q) => {
                    let mut s = String::new();
                    for a in 0..q.support.len() {
                        for b in 0..q.support.len() {
                            let v = q.p[(a, b)];
                            if v != 0.0 {
                                let _ = write!(s, "{v:+.6e}*x{}*x{} ", q.support[a], q.support[b]);
                            }
                        }
                        if q.q[a] != 0.0 {
                            let _ = write!(s, "{:+.6e}*x{} ", q.q[a], q.support[a]);
                        }
                    }
                    writeln!(out, "  quad: {s}{:+.6e} <= 0", q.r)
                }
                Constraint::Affine(a) => writeln!(out, "  lin: {} <= 0", lin(a)),
                Constraint::Equality(a) => writeln!(out, "  eq: {} = 0", lin(a)),
                Constraint::Bounds { var, lower, upper } => writeln!(out, "  box: {lower} <= x{var} <= {upper}"),
                Constraint::Cone { terms, bound } => {
                    let parts: Vec<String> = terms.iter().map(lin).collect();
                    writeln!(out, "  cone: ||[{}]|| <= {}", parts.join("; "), lin(bound))
                }
            };
        }
        out
    }
}
