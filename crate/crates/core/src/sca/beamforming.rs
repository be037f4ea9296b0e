//! Beamforming block: `(W, eta, zeta)` for fixed STAR-RIS coefficients.
//!
//! Every `w_k` is searched in the span of the conjugated effective channels
//! (all users plus the primary receiver). A component orthogonal to that span
//! changes no received signal and only spends power, so the restriction loses
//! nothing and shrinks the program to at most `K + 1` complex entries per user.

use std::f64::consts::LN_2;

use crate::channel::{CMatrix, CVector, ChannelSet, C64};
use crate::config::SystemConfig;
use crate::convex::{
    solve, ComplexAffine, Constraint, ConvexProgram, LinearForm, ObjectiveTerm, QuadraticForm,
    SolveStatus,
};
use crate::error::{Error, Result};
use crate::system_model::{effective_channels, Beamformer, EffectiveChannels, StarRisProfile};

use super::SubproblemState;

/// Slacks at or below this (in noise units) cannot seed the Taylor bound.
pub const DEGENERATE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BeamformingUpdate {
    pub beamformer: Beamformer,
    pub eta: Vec<f64>,
    /// Interference-plus-noise slacks in watts.
    pub zeta: Vec<f64>,
    /// Surrogate objective in bits/s/Hz.
    pub inner_value: f64,
    pub status: SolveStatus,
    pub newton_steps: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct BeamLayout {
    /// Orthonormal columns spanning the conjugated effective channels.
    pub basis: CMatrix,
    pub eta_index: Vec<Option<usize>>,
    pub zeta_index: Vec<Option<usize>>,
    /// Normalized channel rows `b_j = z_j U sqrt(P) / sigma`; last is primary.
    pub rows: Vec<CVector>,
    pub dim: usize,
}

impl BeamLayout {
    fn width(&self) -> usize {
        self.basis.ncols()
    }

    fn c_offset(&self, k: usize) -> usize {
        2 * self.width() * k
    }
}

/// Modified Gram-Schmidt on the conjugates of `rows`, dropping dependent ones.
pub(crate) fn span_basis(rows: &[&CVector]) -> CMatrix {
    let m = rows.first().map_or(0, |r| r.len());
    let scale = rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut cols: Vec<CVector> = Vec::new();
    for r in rows {
        let mut v = r.map(|z| z.conj());
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * scale && nv > 0.0 {
            cols.push(v / C64::from(nv));
        }
    }
    if cols.is_empty() {
        return CMatrix::zeros(m, 0);
    }
    CMatrix::from_columns(&cols)
}

fn gain(row: &CVector, offset: usize) -> ComplexAffine {
    let mut f = ComplexAffine::default();
    for (j, &b) in row.iter().enumerate() {
        f.push(offset + 2 * j, b);
    }
    f
}

pub(crate) fn build_beamforming_program(
    w: &Beamformer,
    eff: &EffectiveChannels,
    state: &SubproblemState,
    cfg: &SystemConfig,
) -> Result<(ConvexProgram, BeamLayout)> {
    let k_users = eff.z_r.len();
    if w.w.ncols() != k_users || state.eta.len() != k_users || state.zeta.len() != k_users {
        return Err(Error::Shape("beamforming subproblem inputs disagree in size".into()));
    }
    let noise = cfg.noise_power();
    let budget = cfg.interference_budget() / noise - 1.0;
    if !(budget > 0.0) {
        return Err(Error::SubproblemInfeasible(
            "interference budget is below the primary noise floor".into(),
        ));
    }
    let zeta_hat: Vec<f64> = state.zeta.iter().map(|z| z / noise).collect();
    let active: Vec<bool> = state.eta.iter().map(|&e| e > 0.0).collect();
    for k in 0..k_users {
        if active[k] && (state.eta[k] <= DEGENERATE_SLACK || zeta_hat[k] <= DEGENERATE_SLACK) {
            return Err(Error::DegenerateSlack {
                user: k,
                eta: state.eta[k],
                zeta: zeta_hat[k],
            });
        }
    }

    let mut all: Vec<&CVector> = eff.z_r.iter().collect();
    all.push(&eff.z_t0);
    let basis = span_basis(&all);
    let d = basis.ncols();
    let amp = (cfg.max_power() / noise).sqrt();
    let rows: Vec<CVector> = all
        .iter()
        .map(|z| (basis.transpose() * *z) * C64::from(amp))
        .collect();

    let mut next = 2 * d * k_users;
    let mut eta_index = vec![None; k_users];
    let mut zeta_index = vec![None; k_users];
    for k in 0..k_users {
        if active[k] {
            eta_index[k] = Some(next);
            zeta_index[k] = Some(next + 1);
            next += 2;
        }
    }
    let layout = BeamLayout {
        basis,
        eta_index,
        zeta_index,
        rows,
        dim: next.max(1),
    };
    let mut p = ConvexProgram::new(layout.dim);

    for k in 0..k_users {
        let (Some(ei), Some(zi)) = (layout.eta_index[k], layout.zeta_index[k]) else {
            continue;
        };
        let (eta0, zeta0) = (state.eta[k], zeta_hat[k]);
        p.maximize(ObjectiveTerm::Log {
            weight: 1.0 / LN_2,
            arg: LinearForm::new(vec![(ei, eta0)], 0.0),
        });
        // sqrt(eta zeta) <= Re(b_k c_k), with the concave left side bounded by
        // its tangent at the expansion point; divided through by sqrt(eta0 zeta0)
        let g = 1.0 / (eta0 * zeta0).sqrt();
        let mut taylor = gain(&layout.rows[k], layout.c_offset(k)).real_part().scaled(-g);
        taylor.add(ei, 0.5);
        taylor.add(zi, 0.5);
        p.subject_to(Constraint::Affine(taylor));
        // sum_{i != k} |b_k c_i|^2 + 1 <= zeta, divided by zeta0
        let s = zeta0.sqrt().recip();
        let squares: Vec<LinearForm> = (0..k_users)
            .filter(|&i| i != k)
            .flat_map(|i| gain(&layout.rows[k], layout.c_offset(i)).parts())
            .map(|f| f.scaled(s))
            .collect();
        let linear = LinearForm::new(vec![(zi, -1.0)], 1.0 / zeta0);
        p.subject_to(Constraint::Quadratic(QuadraticForm::sum_of_squares(&squares, &linear)));
        for v in [ei, zi] {
            p.subject_to(Constraint::Bounds {
                var: v,
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
    }

    let s = budget.sqrt().recip();
    let squares: Vec<LinearForm> = (0..k_users)
        .flat_map(|k| gain(&layout.rows[k_users], layout.c_offset(k)).parts())
        .map(|f| f.scaled(s))
        .collect();
    p.subject_to(Constraint::Quadratic(QuadraticForm::sum_of_squares(
        &squares,
        &LinearForm::constant(-1.0),
    )));
    let power: Vec<LinearForm> = (0..2 * d * k_users).map(LinearForm::var).collect();
    if !power.is_empty() {
        p.subject_to(Constraint::Quadratic(QuadraticForm::sum_of_squares(
            &power,
            &LinearForm::constant(-1.0),
        )));
    }

    // warm start: previous W projected onto the span, phases aligned
    let sqrt_p = cfg.max_power().sqrt();
    let mut x0 = vec![0.0; layout.dim];
    for k in 0..k_users {
        let mut c = layout.basis.adjoint() * w.column(k) / C64::from(sqrt_p);
        let g = layout.rows[k].dot(&c);
        if g.norm() > 0.0 {
            c *= C64::from_polar(1.0, -g.arg());
        }
        let o = layout.c_offset(k);
        for (j, z) in c.iter().enumerate() {
            x0[o + 2 * j] = z.re;
            x0[o + 2 * j + 1] = z.im;
        }
        if let (Some(ei), Some(zi)) = (layout.eta_index[k], layout.zeta_index[k]) {
            x0[ei] = 0.98;
            x0[zi] = 1.02;
        }
    }
    Ok((p.with_warm_start(x0), layout))
}

/// One convexified beamforming solve around `w` for fixed `profile`.
///
/// Users with `eta_k = 0` are pinned: they get no rate term and no Taylor
/// constraint, but their beams still count as interference.
pub fn solve_beamforming_subproblem(
    w: &Beamformer,
    profile: &StarRisProfile,
    state: &SubproblemState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<BeamformingUpdate> {
    let eff = effective_channels(channels, profile);
    let (program, layout) = build_beamforming_program(w, &eff, state, cfg)?;
    let out = solve(&program, cfg.solver_tolerance)?;
    if out.status == SolveStatus::Infeasible {
        return Err(Error::SubproblemInfeasible("beamforming subproblem has no interior".into()));
    }
    let k_users = channels.num_users();
    let d = layout.width();
    let sqrt_p = cfg.max_power().sqrt();
    let x = &out.x_star;
    let mut wm = CMatrix::zeros(channels.num_antennas(), k_users);
    for k in 0..k_users {
        let o = layout.c_offset(k);
        let mut c = CVector::from_iterator(d, (0..d).map(|j| C64::new(x[o + 2 * j], x[o + 2 * j + 1])));
        let g = layout.rows[k].dot(&c);
        if g.norm() > 0.0 {
            c *= C64::from_polar(1.0, -g.arg());
        }
        wm.set_column(k, &(&layout.basis * c * C64::from(sqrt_p)));
    }
    let eta = (0..k_users)
        .map(|k| layout.eta_index[k].map_or(0.0, |i| state.eta[k] * x[i]))
        .collect();
    let zeta = (0..k_users)
        .map(|k| layout.zeta_index[k].map_or(state.zeta[k], |i| state.zeta[k] * x[i]))
        .collect();
    Ok(BeamformingUpdate {
        beamformer: Beamformer { w: wm },
        eta,
        zeta,
        inner_value: out.objective_value,
        status: out.status,
        newton_steps: out.iterations,
    })
}
