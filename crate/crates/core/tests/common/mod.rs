//! Oracles and generators shared by the integration and acceptance tests.
//! Nothing here calls the optimizer; the references are built from the raw
//! channel entries.

#![allow(dead_code)]

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use rand::Rng;
use star_ris::channel::{CVector, ChannelSet, C64};
use star_ris::config::SystemConfig;
use star_ris::convex::{Constraint, ConvexProgram, LinearForm, ObjectiveTerm, QuadraticForm};
use star_ris::system_model::{Beamformer, StarRisProfile};

pub fn noise_watts(cfg: &SystemConfig) -> f64 {
    let dbm = cfg.noise_density_dbm + 10.0 * cfg.bandwidth_hz.log10();
    10f64.powf((dbm - 30.0) / 10.0)
}

fn watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `z[m] = conj(h[m]) + sum_n phi[n] conj(g[n]) H[n][m]`, entry by entry.
/// Assumes unit cascade gain and no extra cascade pathloss.
fn loop_effective(h: &CVector, g: &CVector, bs_ris: &star_ris::channel::CMatrix, phi: &CVector) -> Vec<C64> {
    let (n_el, m_ant) = (bs_ris.nrows(), bs_ris.ncols());
    let mut z = vec![C64::new(0.0, 0.0); m_ant];
    for m in 0..m_ant {
        let mut acc = h[m].conj();
        for n in 0..n_el {
            acc += phi[n] * g[n].conj() * bs_ris[(n, m)];
        }
        z[m] = acc;
    }
    z
}

fn loop_gain(z: &[C64], w: &Beamformer, col: usize) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (m, zm) in z.iter().enumerate() {
        acc += zm * w.w[(m, col)];
    }
    acc.norm_sqr()
}

pub fn loop_secondary_sinrs(w: &Beamformer, p: &StarRisProfile, ch: &ChannelSet, cfg: &SystemConfig) -> Vec<f64> {
    let noise = noise_watts(cfg);
    let k_users = ch.h.len();
    let mut out = Vec::new();
    for k in 0..k_users {
        let z = loop_effective(&ch.h[k], &ch.g[k], &ch.bs_ris, &p.phi_r);
        let mut interference = 0.0;
        for i in 0..k_users {
            if i != k {
                interference += loop_gain(&z, w, i);
            }
        }
        out.push(loop_gain(&z, w, k) / (interference + noise));
    }
    out
}

pub fn loop_primary_sinr(w: &Beamformer, p: &StarRisProfile, ch: &ChannelSet, cfg: &SystemConfig) -> f64 {
    let z = loop_effective(&ch.h0, &ch.g0, &ch.bs_ris, &p.phi_t);
    let mut interference = 0.0;
    for k in 0..w.w.ncols() {
        interference += loop_gain(&z, w, k);
    }
    watts(cfg.primary_rx_power_dbm) / (interference + noise_watts(cfg))
}

pub fn loop_spectral_efficiency(w: &Beamformer, p: &StarRisProfile, ch: &ChannelSet, cfg: &SystemConfig) -> f64 {
    let mut se = 0.0;
    for s in loop_secondary_sinrs(w, p, ch, cfg) {
        se += (1.0 + s).log2();
    }
    se
}

pub fn random_beamformer<R: Rng>(m: usize, k: usize, scale: f64, rng: &mut R) -> Beamformer {
    let mut w = Beamformer::zeros(m, k);
    for v in w.w.iter_mut() {
        *v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
    }
    w
}

pub fn random_profile<R: Rng>(n: usize, rng: &mut R) -> StarRisProfile {
    let tau = std::f64::consts::TAU;
    let beta: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let th_t: Vec<f64> = (0..n).map(|_| tau * rng.random::<f64>()).collect();
    let th_r: Vec<f64> = (0..n).map(|_| tau * rng.random::<f64>()).collect();
    let beta_r: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    StarRisProfile::from_polar(&beta, &th_t, &beta_r, &th_r)
}

/// One-sided sign test: probability of at least this many positive
/// differences under a fair coin. Zero differences are dropped.
pub fn sign_test_p(diffs: &[f64]) -> f64 {
    let n = diffs.iter().filter(|d| **d != 0.0).count();
    let k = diffs.iter().filter(|d| **d > 0.0).count();
    let mut pmf = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += pmf;
        }
        pmf *= (n - i) as f64 / (i + 1) as f64;
    }
    tail.min(1.0)
}

/// `max |a^H w|^2` over `||w||^2 <= p`, `|b^H w|^2 <= c`. The optimum lies in
/// span{a, b}; along `b` the component is capped by the interference limit.
pub fn single_user_gain(a: &[C64], b: &[C64], p: f64, c: f64) -> f64 {
    let na2: f64 = a.iter().map(|v| v.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if nb == 0.0 || na2 == 0.0 {
        return p * na2;
    }
    let proj: C64 = b.iter().zip(a).map(|(bi, ai)| bi.conj() * ai).sum();
    let a1 = proj.norm() / nb;
    let a2 = (na2 - a1 * a1).max(0.0).sqrt();
    let s_max = c.sqrt() / nb;
    if p.sqrt() * a1 / na2.sqrt() <= s_max {
        return p * na2;
    }
    let s = s_max.min(p.sqrt());
    let t = (p - s * s).max(0.0).sqrt();
    (a1 * s + a2 * t).powi(2)
}

pub const PHASES: usize = 180;
pub const AMPLITUDES: usize = 21;

#[derive(Clone, Debug)]
pub struct GridOptimum {
    /// Best spectral efficiency found on the grid.
    pub best_se: f64,
    /// Certified upper bound on the grid optimum.
    pub upper_se: f64,
    pub nodes: usize,
    /// Grid indices of the best point, `(theta_r, theta_t, amplitude)` per element.
    pub best_point: Vec<usize>,
    /// The search ran to completion rather than stopping at the node cap.
    pub complete: bool,
}

#[derive(Clone)]
struct Node {
    ub: f64,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.ub == o.ub
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        self.ub.total_cmp(&o.ub)
    }
}

/// Single-user STAR-RIS problem over the grid: every element takes a reflect
/// phase and a transmit phase on a 2 degree grid and a reflect amplitude on a
/// 0.05 grid (transmit amplitude fills the rest of the unit energy). The
/// beamformer is optimal in closed form for each grid point. Exhaustive
/// enumeration is done by branch and bound with disk bounds on the
/// effective channels, so the returned optimum is the grid optimum up to
/// `rel_tol` on the channel gain.
pub struct StarGrid<'a> {
    ch: &'a ChannelSet,
    p: f64,
    allowed: f64,
    noise: f64,
    rows_r: Vec<Vec<C64>>,
    rows_t: Vec<Vec<C64>>,
    norm_r: Vec<f64>,
    norm_t: Vec<f64>,
}

fn step_rad() -> f64 {
    (360.0 / PHASES as f64).to_radians()
}

impl<'a> StarGrid<'a> {
    pub fn new(cfg: &SystemConfig, ch: &'a ChannelSet) -> Self {
        assert_eq!(ch.h.len(), 1, "single-user oracle");
        let n_el = ch.bs_ris.nrows();
        let m = ch.bs_ris.ncols();
        // rows of conj(g) H, i.e. the cascaded channel for unit cascade gain
        let row = |g: &CVector, n: usize| -> Vec<C64> { (0..m).map(|j| g[n].conj() * ch.bs_ris[(n, j)]).collect() };
        let rows_r: Vec<Vec<C64>> = (0..n_el).map(|n| row(&ch.g[0], n)).collect();
        let rows_t: Vec<Vec<C64>> = (0..n_el).map(|n| row(&ch.g0, n)).collect();
        let nrm = |v: &Vec<C64>| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let budget = watts(cfg.primary_rx_power_dbm) / 10f64.powf(cfg.min_primary_sinr_db / 10.0);
        Self {
            ch,
            p: watts(cfg.max_power_dbm),
            allowed: budget - noise_watts(cfg),
            noise: noise_watts(cfg),
            norm_r: rows_r.iter().map(nrm).collect(),
            norm_t: rows_t.iter().map(nrm).collect(),
            rows_r,
            rows_t,
        }
    }

    fn dims(&self) -> usize {
        3 * self.rows_r.len()
    }

    fn counts(&self) -> Vec<usize> {
        (0..self.dims()).map(|d| if d % 3 == 2 { AMPLITUDES } else { PHASES }).collect()
    }

    /// Disk (center, radius) containing `amp * e^{j phase}` over a box.
    fn disk(amp_lo: f64, amp_hi: f64, ph_lo: usize, ph_hi: usize) -> (C64, f64) {
        let s = step_rad();
        let mid_phase = 0.5 * (ph_lo + ph_hi) as f64 * s;
        let width = (ph_hi - ph_lo) as f64 * s;
        let mid_amp = 0.5 * (amp_lo + amp_hi);
        let radius = 0.5 * (amp_hi - amp_lo) + amp_hi * 2.0 * (width / 4.0).sin();
        (C64::from_polar(mid_amp, mid_phase), radius)
    }

    /// Upper bound on the channel gain over the box; exact on a single point.
    fn bound(&self, lo: &[usize], hi: &[usize]) -> f64 {
        let m = self.rows_r[0].len();
        let mut a: Vec<C64> = self.ch.h[0].iter().map(|v| v.conj()).collect();
        let mut b: Vec<C64> = self.ch.h0.iter().map(|v| v.conj()).collect();
        let (mut ra, mut rb) = (0.0, 0.0);
        for n in 0..self.rows_r.len() {
            let (r_lo, r_hi) = (0.05 * lo[3 * n + 2] as f64, 0.05 * hi[3 * n + 2] as f64);
            let (t_lo, t_hi) = ((1.0 - r_hi * r_hi).max(0.0).sqrt(), (1.0 - r_lo * r_lo).max(0.0).sqrt());
            let (cr, rr) = Self::disk(r_lo, r_hi, lo[3 * n], hi[3 * n]);
            let (ct, rt) = Self::disk(t_lo, t_hi, lo[3 * n + 1], hi[3 * n + 1]);
            for j in 0..m {
                a[j] += cr * self.rows_r[n][j];
                b[j] += ct * self.rows_t[n][j];
            }
            ra += rr * self.norm_r[n];
            rb += rt * self.norm_t[n];
        }
        // gains are z w, so the vectors in a^H w form are conj(z)
        let a: Vec<C64> = a.iter().map(|v| v.conj()).collect();
        let b: Vec<C64> = b.iter().map(|v| v.conj()).collect();
        let sp = self.p.sqrt();
        let c = (self.allowed.sqrt() + rb * sp).powi(2);
        (single_user_gain(&a, &b, self.p, c).sqrt() + ra * sp).powi(2)
    }

    fn se(&self, gain: f64) -> f64 {
        (1.0 + gain / self.noise).log2()
    }

    /// Spectral efficiency at one grid point with the optimal beamformer.
    pub fn solve_box(&self, idx: &[usize]) -> f64 {
        self.se(self.bound(idx, idx))
    }

    /// Reflect/transmit coefficients of a grid point.
    pub fn point(&self, idx: &[usize]) -> (Vec<C64>, Vec<C64>) {
        let s = step_rad();
        let mut r = Vec::new();
        let mut t = Vec::new();
        for n in 0..self.rows_r.len() {
            let a = 0.05 * idx[3 * n + 2] as f64;
            r.push(C64::from_polar(a, idx[3 * n] as f64 * s));
            t.push(C64::from_polar((1.0 - a * a).max(0.0).sqrt(), idx[3 * n + 1] as f64 * s));
        }
        (r, t)
    }

    /// Exhaustive search for the grid optimum, pruning boxes whose bound is
    /// within `rel_tol` of the incumbent or below `floor_se`. With a floor
    /// the result certifies only whether the optimum exceeds the floor.
    pub fn solve(&self, rel_tol: f64, floor_se: f64, max_nodes: usize) -> GridOptimum {
        let floor = (2f64.powf(floor_se) - 1.0) * self.noise;
        let counts = self.counts();
        let lo0 = vec![0; self.dims()];
        let hi0: Vec<usize> = counts.iter().map(|c| c - 1).collect();
        let mid = |lo: &[usize], hi: &[usize]| -> Vec<usize> { lo.iter().zip(hi).map(|(l, h)| (l + h) / 2).collect() };
        let mut best_point = mid(&lo0, &hi0);
        let mut best = self.bound(&best_point, &best_point);
        let mut heap = BinaryHeap::new();
        heap.push(Node { ub: self.bound(&lo0, &hi0), lo: lo0, hi: hi0 });
        let mut nodes = 0;
        let prune = |ub: f64, best: f64| ub <= (best * (1.0 + rel_tol)).max(floor);
        while let Some(node) = heap.pop() {
            if prune(node.ub, best) {
                heap.clear();
                break;
            }
            if nodes >= max_nodes {
                heap.push(node);
                break;
            }
            nodes += 1;
            // split the dimension with the largest fraction of its range left
            let d = (0..node.lo.len())
                .max_by(|&i, &j| {
                    let fi = (node.hi[i] - node.lo[i]) as f64 / counts[i] as f64;
                    let fj = (node.hi[j] - node.lo[j]) as f64 / counts[j] as f64;
                    fi.total_cmp(&fj)
                })
                .unwrap();
            let cut = (node.lo[d] + node.hi[d]) / 2;
            for (l, h) in [(node.lo[d], cut), (cut + 1, node.hi[d])] {
                let mut lo = node.lo.clone();
                let mut hi = node.hi.clone();
                lo[d] = l;
                hi[d] = h;
                let m = mid(&lo, &hi);
                let v = self.bound(&m, &m);
                if v > best {
                    best = v;
                    best_point = m;
                }
                let ub = self.bound(&lo, &hi);
                if !prune(ub, best) {
                    heap.push(Node { ub, lo, hi });
                }
            }
        }
        let complete = heap.is_empty();
        let upper = heap.peek().map_or((best * (1.0 + rel_tol)).max(floor), |n| n.ub.max(best));
        GridOptimum {
            best_se: self.se(best),
            upper_se: self.se(upper),
            nodes,
            best_point,
            complete,
        }
    }
}

fn random_form<R: Rng>(rng: &mut R, dim: usize) -> LinearForm {
    let k = rng.random_range(1..=dim);
    let terms = (0..k)
        .map(|_| (rng.random_range(0..dim), rng.random_range(-2.0..2.0)))
        .collect();
    LinearForm::new(terms, rng.random_range(-1.0..1.0))
}

/// A random program of every term and constraint kind, shifted so that `x`
/// is strictly inside every constraint and log domain.
pub fn random_program_around<R: Rng>(rng: &mut R, x: &[f64]) -> ConvexProgram {
    let dim = x.len();
    let mut arg = random_form(rng, dim);
    arg.constant += 0.5 - arg.eval(x).min(0.0);
    let mut sq = QuadraticForm::sum_of_squares(
        &[random_form(rng, dim), random_form(rng, dim)],
        &random_form(rng, dim),
    );
    let shift = sq.eval(x) + rng.random_range(0.2..2.0);
    let support = sq.support().to_vec();
    let (pm, q, r) = quadratic_parts(&sq, x);
    sq = QuadraticForm::from_matrix(support, pm, q, r - shift).unwrap();
    let mut lin = random_form(rng, dim);
    lin.constant -= lin.eval(x) + rng.random_range(0.2..2.0);
    let terms = vec![random_form(rng, dim), random_form(rng, dim)];
    let mut bound = random_form(rng, dim);
    let norm = terms.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
    bound.constant += norm - bound.eval(x) + rng.random_range(0.2..2.0);
    let mut p = ConvexProgram::new(dim);
    p.maximize(ObjectiveTerm::Log { weight: rng.random_range(0.1..3.0), arg })
        .maximize(ObjectiveTerm::Affine(random_form(rng, dim)))
        .maximize(ObjectiveTerm::NegSquares {
            weight: rng.random_range(0.0..2.0),
            forms: vec![random_form(rng, dim), random_form(rng, dim)],
        })
        .subject_to(Constraint::Quadratic(sq))
        .subject_to(Constraint::Affine(lin))
        .subject_to(Constraint::Cone { terms, bound })
        .subject_to(Constraint::Bounds { var: 0, lower: x[0] - 1.0, upper: x[0] + 1.0 });
    p
}

/// Recover `(P, q, r)` of a quadratic on its support by probing values.
fn quadratic_parts(q: &QuadraticForm, x: &[f64]) -> (nalgebra::DMatrix<f64>, Vec<f64>, f64) {
    let s = q.support();
    let d = s.len();
    let mut z = x.to_vec();
    for &i in s {
        z[i] = 0.0;
    }
    let r = q.eval(&z);
    let mut q_lin = vec![0.0; d];
    let mut diag = vec![0.0; d];
    for a in 0..d {
        z[s[a]] = 1.0;
        let fp = q.eval(&z);
        z[s[a]] = -1.0;
        let fm = q.eval(&z);
        z[s[a]] = 0.0;
        q_lin[a] = 0.5 * (fp - fm);
        diag[a] = 0.5 * (fp + fm) - r;
    }
    let mut p = nalgebra::DMatrix::zeros(d, d);
    for a in 0..d {
        p[(a, a)] = diag[a];
        for b in 0..a {
            z[s[a]] = 1.0;
            z[s[b]] = 1.0;
            let f = q.eval(&z);
            z[s[a]] = 0.0;
            z[s[b]] = 0.0;
            let v = 0.5 * (f - r - q_lin[a] - q_lin[b] - diag[a] - diag[b]);
            p[(a, b)] = v;
            p[(b, a)] = v;
        }
    }
    (p, q_lin, r)
}
