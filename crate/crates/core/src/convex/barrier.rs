//! Primal log-barrier interior-point method.
//!
//! Each centering step is a damped Newton iteration on
//! `t * (-objective) - sum ln(-f_i)`, with the Newton system solved by a
//! dense Cholesky factorization. Equality constraints are eliminated through
//! the Schur complement. A phase-one problem with one extra slack variable
//! supplies a strictly feasible start when the caller's point is not one.

use serde::{Deserialize, Serialize};

use super::program::{Constraint, ConvexProgram, ObjectiveTerm};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Stop once the barrier gap surrogate `theta / t` is below this.
    pub tolerance: f64,
    pub initial_mu: f64,
    /// Multiplier applied to `mu = 1 / t` between stages.
    pub mu_factor: f64,
    pub max_newton_per_stage: usize,
    pub max_stages: usize,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tolerance: f64,
    /// Looser centering for stages whose gap is still above `tolerance`.
    pub intermediate_newton_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            initial_mu: 1.0,
            mu_factor: 0.2,
            max_newton_per_stage: 80,
            max_stages: 60,
            newton_tolerance: 1e-9,
            intermediate_newton_tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub x_star: Vec<f64>,
    pub objective_value: f64,
    /// Max of relative stationarity, gap surrogate and equality residual.
    pub kkt_residual: f64,
    /// Newton steps over both phases.
    pub iterations: usize,
    pub phase_one_iterations: usize,
    /// Gap surrogate `theta / t` after each phase-two stage.
    pub gap_history: Vec<f64>,
    pub used_warm_start: bool,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// The main-phase barrier function at `x` with its derivatives, exactly as
/// the Newton iteration sees them. Meant for diagnostics and tests.
#[derive(Clone, Debug)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Full symmetric Hessian, row-major `dim x dim`.
    pub hessian: Vec<f64>,
}

/// `None` when `x` is outside the barrier's domain.
pub fn barrier_eval(program: &ConvexProgram, x: &[f64], t: f64) -> Result<Option<BarrierEval>> {
    program.validate()?;
    if x.len() != program.dim {
        return Err(crate::error::Error::Shape(format!(
            "point has {} entries, program has {}",
            x.len(),
            program.dim
        )));
    }
    let bar = Barrier::build(program, false);
    let Some(value) = bar.value(x, t) else {
        return Ok(None);
    };
    let n = bar.n;
    let mut gradient = vec![0.0; n];
    let mut hessian = vec![0.0; n * n];
    bar.derivatives(x, t, &mut gradient, &mut hessian);
    for i in 0..n {
        for j in 0..i {
            hessian[j * n + i] = hessian[i * n + j];
        }
    }
    Ok(Some(BarrierEval {
        value,
        gradient,
        hessian,
    }))
}

pub fn solve(program: &ConvexProgram, tolerance: f64) -> Result<SolveOutcome> {
    solve_with(
        program,
        &SolverSettings {
            tolerance,
            ..Default::default()
        },
    )
}

pub fn solve_with(program: &ConvexProgram, settings: &SolverSettings) -> Result<SolveOutcome> {
    program.validate()?;
    let n = program.dim;
    let eq = Equalities::new(program);
    let main = Barrier::build(program, false);

    let mut starts: Vec<(Vec<f64>, bool)> = Vec::new();
    if let Some(w) = &program.warm_start {
        starts.push((w.clone(), true));
    }
    starts.push((vec![0.0; n], false));

    let mut iterations = 0;
    let mut phase_one_iterations = 0;
    let mut status = SolveStatus::Infeasible;
    let mut best = starts[0].0.clone();
    for (x0, warm) in starts {
        let Some(x0) = eq.project(x0) else {
            status = SolveStatus::NumericalFailure;
            continue;
        };
        let start = if main.strictly_feasible(&x0) {
            Some(x0)
        } else {
            let p1 = Barrier::build(program, true);
            let mut z = x0;
            z.push(p1.initial_slack(&z));
            let (res, iters) = phase_one(&p1, &eq, z, settings);
            iterations += iters;
            phase_one_iterations += iters;
            match res {
                PhaseOne::Feasible(mut z) => {
                    z.truncate(n);
                    Some(z)
                }
                PhaseOne::Infeasible(mut z) => {
                    z.truncate(n);
                    best = z;
                    status = SolveStatus::Infeasible;
                    None
                }
                PhaseOne::Failure(mut z) => {
                    z.truncate(n);
                    best = z;
                    status = SolveStatus::NumericalFailure;
                    None
                }
            }
        };
        if let Some(x) = start {
            let mut out = phase_two(program, &main, &eq, x, settings);
            out.iterations += iterations;
            out.phase_one_iterations = phase_one_iterations;
            out.used_warm_start = warm;
            return Ok(out);
        }
    }
    Ok(SolveOutcome {
        status,
        objective_value: program.objective_value(&best),
        x_star: best,
        kkt_residual: f64::INFINITY,
        iterations,
        phase_one_iterations,
        gap_history: Vec::new(),
        used_warm_start: false,
    })
}

/// `f(x) = x_S^T P x_S + q^T x_S + r <= 0`; `p` is empty for affine items.
#[derive(Clone, Debug)]
struct Ineq {
    support: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
    r: f64,
}

impl Ineq {
    fn affine(pairs: &[(usize, f64)], r: f64) -> Self {
        let mut support: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        support.sort_unstable();
        support.dedup();
        let mut q = vec![0.0; support.len()];
        for &(i, c) in pairs {
            q[support.binary_search(&i).unwrap()] += c;
        }
        Self {
            support,
            p: Vec::new(),
            q,
            r,
        }
    }

    /// Append `coef * x[var]` where `var` exceeds every index in the support.
    fn with_trailing(mut self, var: usize, coef: f64) -> Self {
        let d = self.support.len();
        if !self.p.is_empty() {
            let mut p = vec![0.0; (d + 1) * (d + 1)];
            for a in 0..d {
                p[a * (d + 1)..a * (d + 1) + d].copy_from_slice(&self.p[a * d..a * d + d]);
            }
            self.p = p;
        }
        self.support.push(var);
        self.q.push(coef);
        self
    }

    fn gather(&self, x: &[f64], xs: &mut Vec<f64>) {
        xs.clear();
        xs.extend(self.support.iter().map(|&i| x[i]));
    }

    fn value(&self, xs: &[f64]) -> f64 {
        let d = xs.len();
        let mut v = self.r + dot(&self.q, xs);
        if !self.p.is_empty() {
            for a in 0..d {
                v += xs[a] * dot(&self.p[a * d..a * d + d], xs);
            }
        }
        v
    }

    fn gradient(&self, xs: &[f64], g: &mut Vec<f64>) {
        let d = xs.len();
        g.clear();
        g.extend_from_slice(&self.q);
        if !self.p.is_empty() {
            for a in 0..d {
                g[a] += 2.0 * dot(&self.p[a * d..a * d + d], xs);
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Cone {
    support: Vec<usize>,
    /// `k x d` row-major coefficients of the norm arguments.
    rows: Vec<f64>,
    consts: Vec<f64>,
    bound: Vec<f64>,
    bound_c: f64,
}

impl Cone {
    fn build(terms: &[super::LinearForm], bound: &super::LinearForm, slack: Option<usize>) -> Self {
        let mut support: Vec<usize> = terms
            .iter()
            .chain(std::iter::once(bound))
            .flat_map(|f| f.terms.iter().map(|t| t.0))
            .collect();
        if let Some(s) = slack {
            support.push(s);
        }
        support.sort_unstable();
        support.dedup();
        let d = support.len();
        let pos = |i: usize| support.binary_search(&i).unwrap();
        let mut rows = vec![0.0; terms.len() * d];
        for (j, t) in terms.iter().enumerate() {
            for &(i, c) in &t.terms {
                rows[j * d + pos(i)] += c;
            }
        }
        let mut b = vec![0.0; d];
        for &(i, c) in &bound.terms {
            b[pos(i)] += c;
        }
        if let Some(s) = slack {
            b[pos(s)] += 1.0;
        }
        Self {
            consts: terms.iter().map(|t| t.constant).collect(),
            bound_c: bound.constant,
            rows,
            bound: b,
            support,
        }
    }

    fn k(&self) -> usize {
        self.consts.len()
    }

    /// `(bound, bound^2 - ||t||^2)`
    fn values(&self, xs: &[f64], tv: &mut Vec<f64>) -> (f64, f64) {
        let d = xs.len();
        tv.clear();
        for j in 0..self.k() {
            tv.push(dot(&self.rows[j * d..j * d + d], xs) + self.consts[j]);
        }
        let b = dot(&self.bound, xs) + self.bound_c;
        (b, b * b - dot(tv, tv))
    }
}

#[derive(Clone, Debug)]
struct LogTerm {
    support: Vec<usize>,
    coef: Vec<f64>,
    c: f64,
    weight: f64,
}

/// Minimization form of a program: `t * phi_0(x) + sum barrier terms`.
struct Barrier {
    n: usize,
    ineqs: Vec<Ineq>,
    cones: Vec<Cone>,
    logs: Vec<LogTerm>,
    /// Dense linear part of `phi_0`.
    lin: Vec<f64>,
    /// Convex quadratic part of `phi_0`.
    quad: Option<Ineq>,
    theta: f64,
}

impl Barrier {
    fn build(program: &ConvexProgram, phase_one: bool) -> Self {
        let n0 = program.dim;
        let n = if phase_one { n0 + 1 } else { n0 };
        let slack = phase_one.then_some(n0);
        let shift = |it: Ineq| match slack {
            Some(s) => it.with_trailing(s, -1.0),
            None => it,
        };
        let mut ineqs = Vec::new();
        let mut cones = Vec::new();
        for c in &program.constraints {
            match c {
                Constraint::Quadratic(q) => {
                    let d = q.support.len();
                    let p = q.p.transpose().as_slice().to_vec();
                    debug_assert_eq!(p.len(), d * d);
                    let it = Ineq {
                        support: q.support.clone(),
                        p,
                        q: q.q.clone(),
                        r: q.r,
                    };
                    ineqs.push(shift(it));
                }
                Constraint::Affine(a) => ineqs.push(shift(Ineq::affine(&a.terms, a.constant))),
                Constraint::Bounds { var, lower, upper } => {
                    if lower.is_finite() {
                        ineqs.push(shift(Ineq::affine(&[(*var, -1.0)], *lower)));
                    }
                    if upper.is_finite() {
                        ineqs.push(shift(Ineq::affine(&[(*var, 1.0)], -*upper)));
                    }
                }
                Constraint::Cone { terms, bound } => cones.push(Cone::build(terms, bound, slack)),
                Constraint::Equality(_) => {}
            }
        }
        let mut lin = vec![0.0; n];
        let mut logs = Vec::new();
        let mut quad = None;
        if let Some(s) = slack {
            // minimize s subject to s >= -1, and keep log arguments positive.
            lin[s] = 1.0;
            ineqs.push(Ineq::affine(&[(s, -1.0)], -1.0));
            for t in &program.objective {
                if let ObjectiveTerm::Log { arg, .. } = t {
                    let neg: Vec<(usize, f64)> = arg.terms.iter().map(|&(i, c)| (i, -c)).collect();
                    ineqs.push(shift(Ineq::affine(&neg, -1.0 - arg.constant)));
                }
            }
        } else {
            let mut squares = Vec::new();
            for t in &program.objective {
                match t {
                    ObjectiveTerm::Log { weight, arg } => {
                        let it = Ineq::affine(&arg.terms, arg.constant);
                        logs.push(LogTerm {
                            support: it.support,
                            coef: it.q,
                            c: arg.constant,
                            weight: *weight,
                        });
                    }
                    ObjectiveTerm::Affine(a) => {
                        for &(i, c) in &a.terms {
                            lin[i] -= c;
                        }
                    }
                    ObjectiveTerm::NegSquares { weight, forms } => {
                        let w = weight.sqrt();
                        squares.extend(forms.iter().map(|f| f.scaled(w)));
                    }
                }
            }
            if !squares.is_empty() {
                let q = super::QuadraticForm::sum_of_squares(&squares, &super::LinearForm::default());
                let d = q.support.len();
                quad = Some(Ineq {
                    support: q.support.clone(),
                    p: q.p.transpose().as_slice().to_vec(),
                    q: q.q.clone(),
                    r: q.r,
                });
                debug_assert_eq!(quad.as_ref().unwrap().p.len(), d * d);
            }
        }
        let theta = ineqs.len() as f64 + 2.0 * cones.len() as f64;
        Self {
            n,
            ineqs,
            cones,
            logs,
            lin,
            quad,
            theta,
        }
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.value(x, 1.0).is_some()
    }

    /// Phase-one slack that makes `z = (x, s)` strictly feasible.
    fn initial_slack(&self, x: &[f64]) -> f64 {
        let mut z = x.to_vec();
        z.push(0.0);
        let mut xs = Vec::new();
        let mut tv = Vec::new();
        let mut worst: f64 = -1.0;
        for it in &self.ineqs {
            it.gather(&z, &mut xs);
            worst = worst.max(it.value(&xs));
        }
        for c in &self.cones {
            let xs: Vec<f64> = c.support.iter().map(|&i| z[i]).collect();
            let (b, _) = c.values(&xs, &mut tv);
            let nt = dot(&tv, &tv).sqrt();
            worst = worst.max(nt - b);
        }
        let scale = worst.abs().max(1.0);
        worst + 0.1 * scale + 1.0
    }

    /// Barrier objective value, or `None` outside the domain.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut xs = Vec::new();
        let mut tv = Vec::new();
        let mut v = t * dot(&self.lin, x);
        if let Some(q) = &self.quad {
            q.gather(x, &mut xs);
            v += t * q.value(&xs);
        }
        for l in &self.logs {
            let a = 1.0 + l.c + l.support.iter().zip(&l.coef).map(|(&i, c)| c * x[i]).sum::<f64>();
            if !(a > 0.0) {
                return None;
            }
            v -= t * l.weight * a.ln();
        }
        for it in &self.ineqs {
            it.gather(x, &mut xs);
            let f = it.value(&xs);
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        for c in &self.cones {
            xs.clear();
            xs.extend(c.support.iter().map(|&i| x[i]));
            let (b, s) = c.values(&xs, &mut tv);
            if !(b > 0.0 && s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        v.is_finite().then_some(v)
    }

    /// Gradient and lower-triangular Hessian (row-major `n x n`).
    fn derivatives(&self, x: &[f64], t: f64, g: &mut [f64], h: &mut [f64]) {
        let n = self.n;
        g.iter_mut().zip(&self.lin).for_each(|(gi, li)| *gi = t * li);
        h.iter_mut().for_each(|v| *v = 0.0);
        let mut xs = Vec::new();
        let mut gl = Vec::new();
        let mut tv = Vec::new();

        if let Some(q) = &self.quad {
            q.gather(x, &mut xs);
            q.gradient(&xs, &mut gl);
            scatter_grad(g, &q.support, &gl, t);
            scatter_matrix(h, n, &q.support, &q.p, 2.0 * t);
        }
        for l in &self.logs {
            let a = 1.0 + l.c + l.support.iter().zip(&l.coef).map(|(&i, c)| c * x[i]).sum::<f64>();
            scatter_grad(g, &l.support, &l.coef, -t * l.weight / a);
            scatter_outer(h, n, &l.support, &l.coef, t * l.weight / (a * a));
        }
        for it in &self.ineqs {
            it.gather(x, &mut xs);
            let f = it.value(&xs);
            it.gradient(&xs, &mut gl);
            let inv = 1.0 / (-f);
            scatter_grad(g, &it.support, &gl, inv);
            scatter_outer(h, n, &it.support, &gl, inv * inv);
            if !it.p.is_empty() {
                scatter_matrix(h, n, &it.support, &it.p, 2.0 * inv);
            }
        }
        for c in &self.cones {
            xs.clear();
            xs.extend(c.support.iter().map(|&i| x[i]));
            let d = xs.len();
            let (b, s) = c.values(&xs, &mut tv);
            // grad s = 2 b grad b - 2 sum t_j grad t_j
            let mut gs: Vec<f64> = c.bound.iter().map(|v| 2.0 * b * v).collect();
            for j in 0..c.k() {
                let row = &c.rows[j * d..j * d + d];
                for a in 0..d {
                    gs[a] -= 2.0 * tv[j] * row[a];
                }
            }
            scatter_grad(g, &c.support, &gs, -1.0 / s);
            scatter_outer(h, n, &c.support, &gs, 1.0 / (s * s));
            // - hess(s) / s, with hess(s) = 2 bb^T - 2 sum r_j r_j^T
            scatter_outer(h, n, &c.support, &c.bound, -2.0 / s);
            for j in 0..c.k() {
                scatter_outer(h, n, &c.support, &c.rows[j * d..j * d + d], 2.0 / s);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ca, cb) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    // independent accumulators let the loop vectorize
    let mut acc = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn scatter_grad(g: &mut [f64], support: &[usize], v: &[f64], s: f64) {
    for (&i, &vi) in support.iter().zip(v) {
        g[i] += s * vi;
    }
}

fn scatter_outer(h: &mut [f64], n: usize, support: &[usize], v: &[f64], s: f64) {
    for (a, &ia) in support.iter().enumerate() {
        let sa = s * v[a];
        if sa == 0.0 {
            continue;
        }
        let row = &mut h[ia * n..];
        for (b, &ib) in support[..=a].iter().enumerate() {
            row[ib] += sa * v[b];
        }
    }
}

fn scatter_matrix(h: &mut [f64], n: usize, support: &[usize], p: &[f64], s: f64) {
    let d = support.len();
    for (a, &ia) in support.iter().enumerate() {
        let row = &mut h[ia * n..];
        let pa = &p[a * d..a * d + d];
        for (b, &ib) in support[..=a].iter().enumerate() {
            row[ib] += s * pa[b];
        }
    }
}

/// In-place Cholesky of the lower triangle of a row-major matrix.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let (before, rest) = a.split_at_mut(j * n);
        let row_j = &mut rest[..n];
        for k in 0..j {
            let row_k = &before[k * n..k * n + k];
            let s = dot(&row_j[..k], row_k);
            row_j[k] = (row_j[k] - s) / before[k * n + k];
        }
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        row_j[j] = d.sqrt();
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = (b[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let xi = b[i];
        for k in 0..i {
            b[k] -= l[i * n + k] * xi;
        }
    }
}

/// Factor `h` (lower triangle), regularizing the diagonal if needed.
fn factor(h: &[f64], n: usize, work: &mut Vec<f64>) -> bool {
    let max_diag = (0..n).map(|i| h[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut delta = 0.0;
    for attempt in 0..8 {
        work.clear();
        work.extend_from_slice(h);
        if delta > 0.0 {
            for i in 0..n {
                work[i * n + i] += delta;
            }
        }
        if cholesky(work, n) {
            return true;
        }
        delta = max_diag * 1e-14 * 100f64.powi(attempt);
    }
    false
}

/// Dense equality block `A x = b` extracted from the program.
struct Equalities {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Equalities {
    fn new(program: &ConvexProgram) -> Self {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for c in &program.constraints {
            if let Constraint::Equality(a) = c {
                let mut r = vec![0.0; program.dim];
                for &(i, v) in &a.terms {
                    r[i] += v;
                }
                rows.push(r);
                rhs.push(-a.constant);
            }
        }
        Self { rows, rhs }
    }

    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, b)| (dot(r, &x[..r.len()]) - b).abs())
            .fold(0.0, f64::max)
    }

    fn gram(&self) -> Option<Vec<f64>> {
        let m = self.rows.len();
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                g[i * m + j] = dot(&self.rows[i], &self.rows[j]);
            }
        }
        cholesky(&mut g, m).then_some(g)
    }

    /// Least-norm correction onto `A x = b`.
    fn project(&self, mut x: Vec<f64>) -> Option<Vec<f64>> {
        if self.is_empty() {
            return Some(x);
        }
        let m = self.rows.len();
        let l = self.gram()?;
        let mut r: Vec<f64> = self.rows.iter().zip(&self.rhs).map(|(a, b)| dot(a, &x) - b).collect();
        cholesky_solve(&l, m, &mut r);
        for (a, y) in self.rows.iter().zip(&r) {
            for (xi, ai) in x.iter_mut().zip(a) {
                *xi -= y * ai;
            }
        }
        Some(x)
    }

    /// Remove the row-space component of `v` (first `rows[0].len()` entries).
    fn project_out(&self, v: &mut [f64]) {
        if self.is_empty() {
            return;
        }
        let m = self.rows.len();
        let Some(l) = self.gram() else { return };
        let mut y: Vec<f64> = self.rows.iter().map(|a| dot(a, v)).collect();
        cholesky_solve(&l, m, &mut y);
        for (a, yi) in self.rows.iter().zip(&y) {
            for (vi, ai) in v.iter_mut().zip(a) {
                *vi -= yi * ai;
            }
        }
    }
}

enum Centering {
    Converged,
    IterationLimit,
    Failure,
}

struct Newton<'a> {
    bar: &'a Barrier,
    g: Vec<f64>,
    h: Vec<f64>,
    l: Vec<f64>,
    dx: Vec<f64>,
    /// Equality rows padded to the barrier dimension.
    arows: Vec<Vec<f64>>,
}

impl<'a> Newton<'a> {
    fn new(bar: &'a Barrier, eq: &'a Equalities) -> Self {
        let n = bar.n;
        let arows = eq
            .rows
            .iter()
            .map(|r| {
                let mut p = r.clone();
                p.resize(n, 0.0);
                p
            })
            .collect();
        Self {
            bar,
            g: vec![0.0; n],
            h: vec![0.0; n * n],
            l: Vec::with_capacity(n * n),
            dx: vec![0.0; n],
            arows,
        }
    }

    /// Newton direction into `self.dx`; returns the squared decrement.
    fn direction(&mut self, x: &[f64], t: f64) -> Option<f64> {
        let n = self.bar.n;
        self.bar.derivatives(x, t, &mut self.g, &mut self.h);
        if !self.g.iter().all(|v| v.is_finite()) {
            return None;
        }
        if !factor(&self.h, n, &mut self.l) {
            return None;
        }
        self.dx.iter_mut().zip(&self.g).for_each(|(d, g)| *d = -g);
        cholesky_solve(&self.l, n, &mut self.dx);
        if !self.arows.is_empty() {
            // dx = -H^-1 (g + A^T nu), with A dx = 0.
            let m = self.arows.len();
            let hinv_at: Vec<Vec<f64>> = self
                .arows
                .iter()
                .map(|a| {
                    let mut v = a.clone();
                    cholesky_solve(&self.l, n, &mut v);
                    v
                })
                .collect();
            let mut s = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..=i {
                    s[i * m + j] = dot(&self.arows[i], &hinv_at[j]);
                }
            }
            if !cholesky(&mut s, m) {
                return None;
            }
            let mut nu: Vec<f64> = self.arows.iter().map(|a| dot(a, &self.dx)).collect();
            cholesky_solve(&s, m, &mut nu);
            for (v, nui) in hinv_at.iter().zip(&nu) {
                for (d, vi) in self.dx.iter_mut().zip(v) {
                    *d -= nui * vi;
                }
            }
        }
        let lambda2 = -dot(&self.g, &self.dx);
        lambda2.is_finite().then_some(lambda2.max(0.0))
    }

    /// Damped Newton centering at `t`. With `stop_below = Some(i)` the loop
    /// also ends as soon as `x[i]` turns negative (phase one).
    fn center(
        &mut self,
        x: &mut Vec<f64>,
        t: f64,
        settings: &SolverSettings,
        iters: &mut usize,
        stop_below: Option<usize>,
        tol: f64,
    ) -> Centering {
        let Some(mut f) = self.bar.value(x, t) else {
            return Centering::Failure;
        };
        let mut trial = vec![0.0; x.len()];
        for _ in 0..settings.max_newton_per_stage {
            let Some(lambda2) = self.direction(x, t) else {
                return Centering::Failure;
            };
            if lambda2 / 2.0 <= tol {
                return Centering::Converged;
            }
            *iters += 1;
            let slope = -lambda2;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for ((ti, xi), di) in trial.iter_mut().zip(x.iter()).zip(&self.dx) {
                    *ti = xi + step * di;
                }
                if let Some(fn_) = self.bar.value(&trial, t) {
                    let slack = 1e-13 * f.abs().max(1.0);
                    if fn_ <= f + 0.01 * step * slope + slack || (step == 1.0 && lambda2 <= 0.1) {
                        f = fn_;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // The decrement is at rounding level; treat the point as centered.
                if lambda2 <= 1e-6 * f.abs().max(1.0) {
                    return Centering::Converged;
                }
                return Centering::Failure;
            }
            std::mem::swap(x, &mut trial);
            if stop_below.is_some_and(|i| x[i] < 0.0) {
                return Centering::Converged;
            }
        }
        Centering::IterationLimit
    }
}

enum PhaseOne {
    Feasible(Vec<f64>),
    Infeasible(Vec<f64>),
    Failure(Vec<f64>),
}

fn phase_one(bar: &Barrier, eq: &Equalities, mut z: Vec<f64>, settings: &SolverSettings) -> (PhaseOne, usize) {
    let s = bar.n - 1;
    let mut newton = Newton::new(bar, eq);
    let mut iters = 0;
    // Start where the barrier's pull on the slack is well below one.
    let mut t = 10.0 * bar.theta.max(1.0) / settings.initial_mu;
    for _ in 0..settings.max_stages {
        match newton.center(&mut z, t, settings, &mut iters, Some(s), settings.intermediate_newton_tolerance) {
            Centering::Failure => {
                return if z[s] < 0.0 {
                    (PhaseOne::Feasible(z), iters)
                } else {
                    (PhaseOne::Failure(z), iters)
                }
            }
            Centering::Converged | Centering::IterationLimit => {}
        }
        if z[s] < 0.0 {
            return (PhaseOne::Feasible(z), iters);
        }
        let gap = bar.theta / t;
        if z[s] - gap > 0.0 || gap < 1e-13 {
            return (PhaseOne::Infeasible(z), iters);
        }
        t /= settings.mu_factor;
    }
    (PhaseOne::Infeasible(z), iters)
}

fn phase_two(
    program: &ConvexProgram,
    bar: &Barrier,
    eq: &Equalities,
    mut x: Vec<f64>,
    settings: &SolverSettings,
) -> SolveOutcome {
    let mut newton = Newton::new(bar, eq);
    let mut iters = 0;
    let mut t = 1.0 / settings.initial_mu;
    let mut gaps = Vec::new();
    let mut status = SolveStatus::IterationLimit;
    for _ in 0..settings.max_stages {
        let tol = if bar.theta / t <= settings.tolerance {
            settings.newton_tolerance
        } else {
            settings.intermediate_newton_tolerance
        };
        match newton.center(&mut x, t, settings, &mut iters, None, tol) {
            Centering::Converged => {}
            Centering::IterationLimit => {}
            Centering::Failure => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        }
        let gap = bar.theta / t;
        gaps.push(gap);
        if gap <= settings.tolerance {
            status = SolveStatus::Optimal;
            break;
        }
        t /= settings.mu_factor;
    }
    // A failure after reaching a tiny gap is still a usable optimum.
    if status == SolveStatus::NumericalFailure {
        if let Some(&g) = gaps.last() {
            if g <= settings.tolerance * 100.0 {
                status = SolveStatus::Optimal;
            }
        }
    }

    let obj = program.objective_value(&x);
    let mut grad = vec![0.0; bar.n];
    let mut hess = vec![0.0; bar.n * bar.n];
    bar.derivatives(&x, t, &mut grad, &mut hess);
    eq.project_out(&mut grad);
    let obj_grad = program.objective_gradient(&x);
    let gscale = obj_grad.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let stationarity = grad.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / t / gscale;
    let gap = bar.theta / t / obj.abs().max(1.0);
    let kkt = stationarity.max(gap).max(eq.residual(&x));
    SolveOutcome {
        status,
        x_star: x,
        objective_value: obj,
        kkt_residual: kkt,
        iterations: iters,
        phase_one_iterations: 0,
        gap_history: gaps,
        used_warm_start: false,
    }
}
